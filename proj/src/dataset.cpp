#include "hecgcn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hecgcn {

std::vector<RawInteraction> load_behavior_file(const std::string& path,
                                               const std::string& behavior) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open behavior file '" + path + "' for behavior '" +
                             behavior + "'");
  }
  std::vector<RawInteraction> records;
  std::unordered_map<std::string, int> per_user_count;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab1 = line.find('\t');
    if (tab1 == std::string::npos || tab1 == 0) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected `user<TAB>item`");
    }
    size_t tab2 = line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) tab2 = line.size();
    if (tab2 == tab1 + 1) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty item token");
    }
    RawInteraction rec;
    rec.user_token = line.substr(0, tab1);
    rec.item_token = line.substr(tab1 + 1, tab2 - tab1 - 1);
    rec.order_index = per_user_count[rec.user_token]++;
    records.push_back(std::move(rec));
  }
  return records;
}

InteractionDataset build_dataset(
    const std::vector<std::pair<std::string, std::vector<RawInteraction>>>& raw,
    const std::string& target, int min_target_interactions) {
  if (raw.empty()) throw std::invalid_argument("build_dataset: no behaviors given");
  if (raw.back().first != target) {
    throw std::invalid_argument("build_dataset: target behavior '" + target +
                                "' must be the last entry of the cascade");
  }
  if (raw.back().second.empty()) {
    throw std::invalid_argument("build_dataset: target behavior '" + target + "' is empty");
  }
  if (min_target_interactions < 3) {
    // both a test and a validation item must exist alongside one train item
    throw std::invalid_argument("build_dataset: min_target_interactions must be >= 3");
  }

  InteractionDataset ds;
  const int K = static_cast<int>(raw.size());
  std::unordered_map<std::string, int32_t> user_ids;
  std::unordered_map<std::string, int32_t> item_ids;

  // IDs by first appearance across behaviors in declared order.
  for (const auto& [name, records] : raw) {
    ds.behaviors_.push_back(name);
    for (const auto& rec : records) {
      if (rec.user_token.empty() || rec.item_token.empty()) {
        throw std::invalid_argument("build_dataset: empty token in behavior '" + name + "'");
      }
      if (user_ids.emplace(rec.user_token, static_cast<int32_t>(user_ids.size())).second) {
        ds.user_tokens_.push_back(rec.user_token);
      }
      if (item_ids.emplace(rec.item_token, static_cast<int32_t>(item_ids.size())).second) {
        ds.item_tokens_.push_back(rec.item_token);
      }
    }
  }
  ds.num_users_ = static_cast<int32_t>(user_ids.size());
  ds.num_items_ = static_cast<int32_t>(item_ids.size());
  ds.train_edges_.resize(K);

  // Dedup within each behavior keeping the earliest occurrence, in file order.
  auto dedup = [&](const std::vector<RawInteraction>& records) {
    std::vector<std::pair<int32_t, int32_t>> edges;
    std::unordered_set<int64_t> seen;
    edges.reserve(records.size());
    for (const auto& rec : records) {
      const int32_t u = user_ids.at(rec.user_token);
      const int32_t i = item_ids.at(rec.item_token);
      const int64_t key = static_cast<int64_t>(u) * ds.num_items_ + i;
      if (seen.insert(key).second) edges.emplace_back(u, i);
    }
    return edges;
  };

  for (int k = 0; k + 1 < K; ++k) ds.train_edges_[k] = dedup(raw[k].second);

  // Leave-one-out split on the target behavior.
  const auto target_edges = dedup(raw.back().second);
  std::vector<std::vector<int32_t>> history(ds.num_users_);
  for (const auto& [u, i] : target_edges) history[u].push_back(i);
  std::vector<char> held_val(ds.num_users_, 0);
  for (int32_t u = 0; u < ds.num_users_; ++u) {
    const auto& h = history[u];
    if (static_cast<int>(h.size()) >= min_target_interactions) {
      ds.test_positive_[u] = h.back();
      ds.val_positive_[u] = h[h.size() - 2];
      held_val[u] = 1;
      ds.eval_users_.push_back(u);
    }
  }
  for (const auto& [u, i] : target_edges) {
    if (held_val[u] && (i == ds.test_positive_.at(u) || i == ds.val_positive_.at(u))) continue;
    ds.train_edges_[K - 1].emplace_back(u, i);
  }
  std::sort(ds.eval_users_.begin(), ds.eval_users_.end());

  ds.user_items_.resize(K);
  for (int k = 0; k < K; ++k) {
    ds.user_items_[k].resize(ds.num_users_);
    for (const auto& [u, i] : ds.train_edges_[k]) ds.user_items_[k][u].push_back(i);
    for (auto& items : ds.user_items_[k]) std::sort(items.begin(), items.end());
  }
  return ds;
}

bool InteractionDataset::has_train_edge(int k, int32_t u, int32_t i) const {
  const auto& items = user_items_.at(k).at(u);
  return std::binary_search(items.begin(), items.end(), i);
}

std::vector<BprTriple> sample_bpr_triples(const InteractionDataset& ds, int k, int batch,
                                          Rng& rng) {
  const auto& edges = ds.train_edges(k);
  if (edges.empty()) {
    throw std::invalid_argument("sample_bpr_triples: behavior " + std::to_string(k) +
                                " has no train edges");
  }
  const int64_t n_items = ds.num_items();
  const int64_t max_rejections = n_items * 10;
  std::vector<BprTriple> triples;
  triples.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    const auto& [u, i] = edges[rng.below(edges.size())];
    int32_t j = -1;
    for (int64_t attempt = 0;; ++attempt) {
      if (attempt >= max_rejections) {
        throw std::runtime_error("sample_bpr_triples: no negative available for user " +
                                 std::to_string(u) + " in behavior " + std::to_string(k));
      }
      const int32_t cand = static_cast<int32_t>(rng.below(static_cast<uint64_t>(n_items)));
      if (!ds.has_train_edge(k, u, cand)) {
        j = cand;
        break;
      }
    }
    triples.push_back(BprTriple{k, u, i, j});
  }
  return triples;
}

}  // namespace hecgcn
