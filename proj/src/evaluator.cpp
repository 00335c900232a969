#include "hecgcn/evaluator.hpp"

#include <fstream>

#include "json.hpp"

namespace hecgcn {

std::string report_to_json(const EvalReport& report, const std::string& split_name) {
  nlohmann::ordered_json j;
  j["split"] = split_name;
  for (const auto& [n, v] : report.hr) j["hr"][std::to_string(n)] = v;
  for (const auto& [n, v] : report.ndcg) j["ndcg"][std::to_string(n)] = v;
  j["num_eval_users"] = report.num_eval_users;
  return j.dump(2);
}

void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& split_name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to '" + path + "'");
  out << report_to_json(report, split_name) << "\n";
}

void write_per_user_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write per-user ranks to '" + path + "'");
  out << "user,rank\n";
  std::vector<std::pair<int32_t, int32_t>> rows(report.per_user_rank.begin(),
                                                report.per_user_rank.end());
  std::sort(rows.begin(), rows.end());
  for (const auto& [u, r] : rows) out << u << "," << r << "\n";
}

}  // namespace hecgcn
