#pragma once

#include <map>
#include <unordered_map>
#include <vector>

#include "hecgcn/dataset.hpp"
#include "hecgcn/parallel.hpp"
#include "hecgcn/tensor.hpp"

namespace hecgcn {

enum class Split { kVal, kTest };

struct EvalReport {
  std::map<int, double> hr;      // n -> hit ratio
  std::map<int, double> ndcg;    // n -> normalized DCG
  std::unordered_map<int32_t, int32_t> per_user_rank;  // 1-based
  int num_eval_users = 0;
};

// Rank of `positive` among all items not in `exclude` (sorted ascending),
// under full inner-product scoring. Ties break toward the smaller item id,
// which keeps ranking deterministic.
template <typename S>
int32_t rank_items(const Tensor<S>& e_bar_user, const Tensor<S>& e_bar_item, int32_t u,
                   const std::vector<int32_t>& exclude, int32_t positive) {
  if (u < 0 || u >= e_bar_user.rows) {
    throw std::out_of_range("rank_items: user id " + std::to_string(u));
  }
  if (positive < 0 || positive >= e_bar_item.rows) {
    throw std::out_of_range("rank_items: item id " + std::to_string(positive));
  }
  const S* uv = e_bar_user.row(u);
  const int d = e_bar_user.cols;
  const S pos_score = dot(uv, e_bar_item.row(positive), d);
  int32_t better = 0;
  size_t ex = 0;
  for (int32_t i = 0; i < e_bar_item.rows; ++i) {
    while (ex < exclude.size() && exclude[ex] < i) ++ex;
    if (ex < exclude.size() && exclude[ex] == i) continue;
    if (i == positive) continue;
    const S s = dot(uv, e_bar_item.row(i), d);
    if (s > pos_score || (s == pos_score && i < positive)) ++better;
  }
  return better + 1;
}

// Leave-one-out evaluation over all eval users: HR@n and NDCG@n for each
// requested cutoff. Candidates exclude only the user's target-behavior
// training items. User-parallel; aggregation runs in user order.
template <typename S>
EvalReport evaluate(const Tensor<S>& e_bar_user, const Tensor<S>& e_bar_item,
                    const InteractionDataset& ds, Split split, const std::vector<int>& ns) {
  const auto& positives = split == Split::kTest ? ds.test_positive() : ds.val_positive();
  const auto& users = ds.eval_users();
  if (users.empty() || positives.empty()) {
    throw std::runtime_error("evaluate: no evaluation users");
  }
  const int target = ds.target_behavior();
  std::vector<int32_t> ranks(users.size(), 0);
  parallel_for(static_cast<int64_t>(users.size()), 8, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const int32_t u = users[idx];
      ranks[idx] = rank_items(e_bar_user, e_bar_item, u, ds.user_items(target, u),
                              positives.at(u));
    }
  });

  EvalReport report;
  report.num_eval_users = static_cast<int>(users.size());
  for (size_t idx = 0; idx < users.size(); ++idx) report.per_user_rank[users[idx]] = ranks[idx];
  for (int n : ns) {
    double hits = 0, gain = 0;
    for (int32_t r : ranks) {
      if (r <= n) {
        hits += 1.0;
        gain += 1.0 / std::log2(static_cast<double>(r) + 1.0);
      }
    }
    report.hr[n] = hits / static_cast<double>(users.size());
    report.ndcg[n] = gain / static_cast<double>(users.size());
  }
  return report;
}

// JSON / CSV emitters live in src/evaluator.cpp.
std::string report_to_json(const EvalReport& report, const std::string& split_name);
void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& split_name);
void write_per_user_csv(const std::string& path, const EvalReport& report);

}  // namespace hecgcn
