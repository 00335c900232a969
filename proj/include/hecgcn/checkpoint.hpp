#pragma once

#include <cstdint>
#include <string>

#include "hecgcn/trainer.hpp"

namespace hecgcn {

// Little-endian binary checkpoint:
//   "HECG" | version u32 | config hash u64 |
//   repeated { name_len u32, name, rows u64, cols u64, f32 payload } to EOF.
// Captures parameters, Adam moments and the model-selection state, so a
// resumed run replays the uninterrupted trajectory bit for bit.
struct CheckpointState {
  ModelParams<float> params;
  AdamState<float> adam;
  int epochs_completed = 0;
  ModelParams<float> best_params;
  int best_epoch = 0;
  double best_hr10 = -1.0;
  uint64_t config_hash = 0;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const CheckpointState& state);

// Throws on bad magic or version. When expected_hash is nonzero, a different
// stored hash is an error (checkpoint belongs to another config/dataset).
CheckpointState load_checkpoint(const std::string& path, uint64_t expected_hash = 0);

}  // namespace hecgcn
