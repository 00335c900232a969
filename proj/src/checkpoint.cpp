#include "hecgcn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace hecgcn {

namespace {

constexpr char kMagic[4] = {'H', 'E', 'C', 'G'};

template <typename T>
void write_raw(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor<float>& t) {
  write_raw<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_raw<uint64_t>(out, static_cast<uint64_t>(t.rows));
  write_raw<uint64_t>(out, static_cast<uint64_t>(t.cols));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
}

Tensor<float> scalar(double v) {
  Tensor<float> t(1, 1);
  t.at(0, 0) = static_cast<float>(v);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 4);
  write_raw<uint32_t>(out, kCheckpointVersion);
  write_raw<uint64_t>(out, state.config_hash);
  state.params.visit(
      [&](const std::string& name, const Tensor<float>& t) { write_tensor(out, name, t); });
  for (const auto& [name, slot] : state.adam.slots) {
    write_tensor(out, "adam.m." + name, slot.m);
    write_tensor(out, "adam.v." + name, slot.v);
  }
  write_tensor(out, "adam.step", scalar(static_cast<double>(state.adam.step)));
  write_tensor(out, "train.epochs_completed", scalar(state.epochs_completed));
  write_tensor(out, "train.best_epoch", scalar(state.best_epoch));
  write_tensor(out, "train.best_hr10", scalar(state.best_hr10));
  state.best_params.visit([&](const std::string& name, const Tensor<float>& t) {
    write_tensor(out, "best." + name, t);
  });
  if (!out) throw std::runtime_error("write failure on checkpoint '" + path + "'");
}

CheckpointState load_checkpoint(const std::string& path, uint64_t expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("'" + path + "' is not a checkpoint (bad magic)");
  }
  const uint32_t version = read_raw<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint '" + path + "' has unsupported version " +
                             std::to_string(version));
  }
  const uint64_t hash = read_raw<uint64_t>(in);
  if (expected_hash != 0 && hash != expected_hash) {
    throw std::runtime_error(
        "checkpoint '" + path + "' was produced under a different config/dataset (hash " +
        std::to_string(hash) + ", expected " + std::to_string(expected_hash) + ")");
  }

  std::map<std::string, Tensor<float>> tensors;
  while (true) {
    uint32_t name_len;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.eof()) break;
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = read_raw<uint64_t>(in);
    const auto cols = read_raw<uint64_t>(in);
    Tensor<float> t(static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
    tensors.emplace(std::move(name), std::move(t));
  }

  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw std::runtime_error("checkpoint '" + path + "' is missing tensor '" + name + "'");
    }
    Tensor<float> t = std::move(it->second);
    tensors.erase(it);
    return t;
  };

  CheckpointState state;
  state.config_hash = hash;
  state.params.user_emb = take("user_emb");
  state.params.item_emb = take("item_emb");
  for (int k = 0;; ++k) {
    const std::string un = "hyper_proj_user." + std::to_string(k);
    if (tensors.find(un) == tensors.end()) break;
    state.params.hyper_proj_user.push_back(take(un));
    state.params.hyper_proj_item.push_back(take("hyper_proj_item." + std::to_string(k)));
  }
  state.adam = AdamState<float>::init(state.params);
  for (auto& [name, slot] : state.adam.slots) {
    slot.m = take("adam.m." + name);
    slot.v = take("adam.v." + name);
  }
  state.adam.step = static_cast<int64_t>(take("adam.step").at(0, 0));
  state.epochs_completed = static_cast<int>(take("train.epochs_completed").at(0, 0));
  state.best_epoch = static_cast<int>(take("train.best_epoch").at(0, 0));
  state.best_hr10 = static_cast<double>(take("train.best_hr10").at(0, 0));
  state.best_params.user_emb = take("best.user_emb");
  state.best_params.item_emb = take("best.item_emb");
  for (size_t k = 0; k < state.params.hyper_proj_user.size(); ++k) {
    state.best_params.hyper_proj_user.push_back(take("best.hyper_proj_user." + std::to_string(k)));
    state.best_params.hyper_proj_item.push_back(take("best.hyper_proj_item." + std::to_string(k)));
  }
  return state;
}

}  // namespace hecgcn
