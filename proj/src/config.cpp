#include "hecgcn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hecgcn {

namespace {

std::string dirname_of(const std::string& path) {
  const size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  const auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  size_t b = 0, e = s.size();
  while (b < e && issp(s[b])) ++b;
  while (e > b && issp(s[e - 1])) --e;
  return s.substr(b, e - b);
}

struct ConfigValue {
  enum Kind { kInt, kFloat, kBool, kString, kArray } kind = kString;
  int64_t i = 0;
  double f = 0;
  bool b = false;
  std::string s;
  std::vector<ConfigValue> arr;

  int64_t as_int(const std::string& key) const {
    if (kind == kInt) return i;
    throw std::invalid_argument("config key '" + key + "' expects an integer");
  }
  double as_double(const std::string& key) const {
    if (kind == kInt) return static_cast<double>(i);
    if (kind == kFloat) return f;
    throw std::invalid_argument("config key '" + key + "' expects a number");
  }
  bool as_bool(const std::string& key) const {
    if (kind == kBool) return b;
    throw std::invalid_argument("config key '" + key + "' expects true/false");
  }
  std::string as_string(const std::string& key) const {
    if (kind == kString) return s;
    throw std::invalid_argument("config key '" + key + "' expects a string");
  }
  std::vector<ConfigValue> as_array() const {
    if (kind == kArray) return arr;
    return {*this};  // scalar promotes to a one-element array
  }
};

ConfigValue parse_scalar(const std::string& raw) {
  ConfigValue v;
  const std::string t = trim(raw);
  if (t.empty()) throw std::invalid_argument("config: empty value");
  if (t == "true" || t == "false") {
    v.kind = ConfigValue::kBool;
    v.b = (t == "true");
    return v;
  }
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
    v.kind = ConfigValue::kString;
    v.s = t.substr(1, t.size() - 2);
    return v;
  }
  // number?
  const bool floaty = t.find_first_of(".eE") != std::string::npos &&
                      t.find_first_not_of("+-0123456789.eE") == std::string::npos;
  if (t.find_first_not_of("+-0123456789") == std::string::npos) {
    int64_t iv = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), iv);
    if (res.ec == std::errc() && res.ptr == t.data() + t.size()) {
      v.kind = ConfigValue::kInt;
      v.i = iv;
      return v;
    }
  }
  if (floaty) {
    try {
      size_t used = 0;
      const double fv = std::stod(t, &used);
      if (used == t.size()) {
        v.kind = ConfigValue::kFloat;
        v.f = fv;
        return v;
      }
    } catch (const std::exception&) {
    }
  }
  v.kind = ConfigValue::kString;  // bare word
  v.s = t;
  return v;
}

ConfigValue parse_value(const std::string& raw) {
  const std::string t = trim(raw);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw std::invalid_argument("config: unterminated array: " + t);
    ConfigValue v;
    v.kind = ConfigValue::kArray;
    std::string inner = t.substr(1, t.size() - 2);
    std::string item;
    std::istringstream ss(inner);
    while (std::getline(ss, item, ',')) {
      if (trim(item).empty()) continue;
      v.arr.push_back(parse_scalar(item));
    }
    return v;
  }
  return parse_scalar(t);
}

// Flat TOML subset: comments, [sections] as dotted prefixes, key = value.
std::vector<std::pair<std::string, ConfigValue>> parse_toml(const std::string& text,
                                                            const std::string& origin) {
  std::vector<std::pair<std::string, ConfigValue>> entries;
  std::istringstream in(text);
  std::string line, prefix;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments outside quotes
    bool quoted = false;
    for (size_t p = 0; p < line.size(); ++p) {
      if (line[p] == '"') quoted = !quoted;
      if (line[p] == '#' && !quoted) {
        line = line.substr(0, p);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": bad section header");
      }
      prefix = trim(line.substr(1, line.size() - 2));
      if (!prefix.empty()) prefix += ".";
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    entries.emplace_back(prefix + key, parse_value(line.substr(eq + 1)));
  }
  return entries;
}

void apply_entry(TrainConfig& cfg, const std::string& key, const ConfigValue& v) {
  auto as_int = [&](int& dst) { dst = static_cast<int>(v.as_int(key)); };
  if (key == "d") as_int(cfg.d);
  else if (key == "layers") as_int(cfg.layers);
  else if (key == "hyperedges") as_int(cfg.hyperedges);
  else if (key == "batch_size") as_int(cfg.batch_size);
  else if (key == "max_epochs") as_int(cfg.max_epochs);
  else if (key == "patience") as_int(cfg.patience);
  else if (key == "min_target_interactions") as_int(cfg.min_target_interactions);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(v.as_int(key));
  else if (key == "lr") cfg.lr = v.as_double(key);
  else if (key == "beta") cfg.beta = v.as_double(key);
  else if (key == "alpha") cfg.alpha = v.as_double(key);
  else if (key == "lambda1") cfg.lambda1 = v.as_double(key);
  else if (key == "lambda2") cfg.lambda2 = v.as_double(key);
  else if (key == "lambda3") cfg.lambda3 = v.as_double(key);
  else if (key == "tau") cfg.tau = v.as_double(key);
  else if (key == "hyper_output_weight") cfg.hyper_output_weight = v.as_double(key);
  else if (key == "negative_pool_mode") {
    const std::string s = v.as_string(key);
    if (s == "in_batch") cfg.negative_pool_mode = PoolMode::kInBatch;
    else if (s == "full") cfg.negative_pool_mode = PoolMode::kFull;
    else throw std::invalid_argument("config key 'negative_pool_mode' must be in_batch or full");
  } else if (key == "eval_ns") {
    cfg.eval_ns.clear();
    for (const auto& e : v.as_array()) cfg.eval_ns.push_back(static_cast<int>(e.as_int(key)));
  } else if (key == "ablate") {
    for (const auto& e : v.as_array()) cfg.ablation.set(e.as_string(key));
  } else {
    bool is_flag = false;
    for (const auto& name : AblationFlags::names()) {
      if (key == name) {
        if (v.as_bool(key)) cfg.ablation.set(name);
        is_flag = true;
        break;
      }
    }
    if (!is_flag) throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

nlohmann::ordered_json config_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["d"] = cfg.d;
  j["layers"] = cfg.layers;
  j["hyperedges"] = cfg.hyperedges;
  j["lr"] = cfg.lr;
  j["beta"] = cfg.beta;
  j["alpha"] = cfg.alpha;
  j["lambda1"] = cfg.lambda1;
  j["lambda2"] = cfg.lambda2;
  j["lambda3"] = cfg.lambda3;
  j["tau"] = cfg.tau;
  j["hyper_output_weight"] = cfg.hyper_output_weight;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["min_target_interactions"] = cfg.min_target_interactions;
  j["negative_pool_mode"] = cfg.negative_pool_mode == PoolMode::kFull ? "full" : "in_batch";
  j["eval_ns"] = cfg.eval_ns;
  j["ablate"] = cfg.ablation.active();
  return j;
}

void apply_config_json(TrainConfig& cfg, const nlohmann::json& j) {
  for (const auto& [key, val] : j.items()) {
    ConfigValue v;
    if (val.is_boolean()) {
      v.kind = ConfigValue::kBool;
      v.b = val.get<bool>();
    } else if (val.is_number_integer() || val.is_number_unsigned()) {
      v.kind = ConfigValue::kInt;
      v.i = val.get<int64_t>();
    } else if (val.is_number_float()) {
      v.kind = ConfigValue::kFloat;
      v.f = val.get<double>();
    } else if (val.is_string()) {
      v.kind = ConfigValue::kString;
      v.s = val.get<std::string>();
    } else if (val.is_array()) {
      v.kind = ConfigValue::kArray;
      for (const auto& e : val) {
        ConfigValue item;
        if (e.is_string()) {
          item.kind = ConfigValue::kString;
          item.s = e.get<std::string>();
        } else {
          item.kind = ConfigValue::kInt;
          item.i = e.get<int64_t>();
        }
        v.arr.push_back(std::move(item));
      }
    } else {
      throw std::invalid_argument("unsupported JSON value for config key '" + key + "'");
    }
    apply_entry(cfg, key, v);
  }
}

}  // namespace

DataManifest load_data_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("dataset manifest '" + path + "': " + e.what());
  }
  if (!j.contains("behaviors") || !j["behaviors"].is_array() || j["behaviors"].empty()) {
    throw std::runtime_error("dataset manifest '" + path + "' needs a non-empty behaviors array");
  }
  DataManifest m;
  m.path = path;
  const std::string base = dirname_of(path);
  for (const auto& b : j["behaviors"]) {
    const std::string name = b.at("name").get<std::string>();
    std::string file = b.at("path").get<std::string>();
    if (!file.empty() && file.front() != '/') file = base + "/" + file;
    m.behaviors.emplace_back(name, file);
  }
  return m;
}

InteractionDataset load_dataset(const DataManifest& manifest, int min_target_interactions) {
  std::vector<std::pair<std::string, std::vector<RawInteraction>>> raw;
  for (const auto& [name, file] : manifest.behaviors) {
    raw.emplace_back(name, load_behavior_file(file, name));
  }
  return build_dataset(raw, manifest.behaviors.back().first, min_target_interactions);
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  const std::string text = read_file(path);
  const size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    // a run manifest: reuse its resolved config block
    const auto j = nlohmann::json::parse(text);
    apply_config_json(cfg, j.contains("config") ? j["config"] : j);
    return;
  }
  for (const auto& [key, value] : parse_toml(text, path)) apply_entry(cfg, key, value);
}

void apply_config_override(TrainConfig& cfg, const std::string& key_equals_value) {
  const size_t eq = key_equals_value.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set expects key=value, got '" + key_equals_value + "'");
  }
  const std::string key = trim(key_equals_value.substr(0, eq));
  std::string raw = trim(key_equals_value.substr(eq + 1));
  // comma lists stand in for TOML arrays on the command line
  if (raw.find(',') != std::string::npos && raw.front() != '[') raw = "[" + raw + "]";
  apply_entry(cfg, key, parse_value(raw));
}

uint64_t config_hash(const TrainConfig& cfg, const InteractionDataset& ds) {
  std::ostringstream ss;
  ss << config_json(cfg).dump();
  ss << "|data:";
  for (int k = 0; k < ds.num_behaviors(); ++k) {
    // fold the edges themselves so same-shaped datasets still separate
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& [u, i] : ds.train_edges(k)) {
      h = (h ^ static_cast<uint64_t>(u)) * 0x100000001B3ull;
      h = (h ^ static_cast<uint64_t>(i)) * 0x100000001B3ull;
    }
    ss << ds.behaviors()[k] << ":" << ds.train_edges(k).size() << ":" << h << ";";
  }
  ss << "M=" << ds.num_users() << ";N=" << ds.num_items() << ";eval=" << ds.eval_users().size();
  return fnv1a(ss.str());
}

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

void write_run_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["run_id"] = m.run_id;
  j["data_manifest"] = m.data_manifest;
  j["out_dir"] = m.out_dir;
  j["config"] = config_json(m.config);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

RunManifest load_run_manifest(const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  RunManifest m;
  m.run_id = j.value("run_id", "");
  m.data_manifest = j.at("data_manifest").get<std::string>();
  m.out_dir = j.value("out_dir", "");
  apply_config_json(m.config, j.at("config"));
  return m;
}

}  // namespace hecgcn
