#include "hecgcn/synthetic.hpp"

#include <fstream>

#include "json.hpp"

namespace hecgcn {

std::string write_dataset_files(
    const std::vector<std::pair<std::string, std::vector<RawInteraction>>>& raw,
    const std::string& dir) {
  nlohmann::ordered_json manifest;
  manifest["behaviors"] = nlohmann::ordered_json::array();
  for (const auto& [name, recs] : raw) {
    const std::string file = name + ".txt";
    std::ofstream out(dir + "/" + file);
    if (!out) throw std::runtime_error("cannot write behavior file in '" + dir + "'");
    for (const auto& r : recs) out << r.user_token << "\t" << r.item_token << "\n";
    manifest["behaviors"].push_back({{"name", name}, {"path", file}});
  }
  const std::string path = dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset manifest in '" + dir + "'");
  out << manifest.dump(2) << "\n";
  return path;
}

}  // namespace hecgcn
