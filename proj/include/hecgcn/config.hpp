#pragma once

#include <string>
#include <vector>

#include "hecgcn/trainer.hpp"

namespace hecgcn {

// Dataset manifest: behavior names in cascade order with their files, last
// entry the target behavior. Paths resolve relative to the manifest.
struct DataManifest {
  std::vector<std::pair<std::string, std::string>> behaviors;  // (name, resolved path)
  std::string path;
};

DataManifest load_data_manifest(const std::string& path);
InteractionDataset load_dataset(const DataManifest& manifest, int min_target_interactions);

// Applies a config file on top of defaults. TOML (flat `key = value`,
// optional [sections] joined with dots) or a previous run's manifest.json;
// unknown keys raise naming the key.
void apply_config_file(TrainConfig& cfg, const std::string& path);

// One `--set key=value` override; value syntax matches the TOML scalar forms,
// with comma lists for array keys.
void apply_config_override(TrainConfig& cfg, const std::string& key_equals_value);

// FNV-1a over the canonical config string and the dataset fingerprint; ties
// a checkpoint to the exact setup that produced it.
uint64_t config_hash(const TrainConfig& cfg, const InteractionDataset& ds);

std::string config_to_json(const TrainConfig& cfg);

struct RunManifest {
  std::string run_id;
  std::string data_manifest;
  std::string out_dir;
  TrainConfig config;
};

void write_run_manifest(const std::string& path, const RunManifest& m);
RunManifest load_run_manifest(const std::string& path);

}  // namespace hecgcn
