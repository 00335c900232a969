#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hecgcn/rng.hpp"

namespace hecgcn {

// One line of a behavior file. order_index is the 0-based position within
// that user's history for the behavior the record came from.
struct RawInteraction {
  std::string user_token;
  std::string item_token;
  int order_index = 0;
};

struct BprTriple {
  int behavior = 0;
  int32_t user = 0;
  int32_t pos_item = 0;
  int32_t neg_item = 0;
};

// ID-mapped multi-behavior interactions with a leave-one-out split on the
// target behavior (the last one in cascade order). Immutable after build.
class InteractionDataset {
 public:
  int32_t num_users() const { return num_users_; }
  int32_t num_items() const { return num_items_; }
  int num_behaviors() const { return static_cast<int>(behaviors_.size()); }
  const std::vector<std::string>& behaviors() const { return behaviors_; }
  int target_behavior() const { return num_behaviors() - 1; }

  const std::vector<std::pair<int32_t, int32_t>>& train_edges(int k) const {
    return train_edges_.at(k);
  }
  const std::unordered_map<int32_t, int32_t>& val_positive() const { return val_positive_; }
  const std::unordered_map<int32_t, int32_t>& test_positive() const { return test_positive_; }
  const std::vector<int32_t>& eval_users() const { return eval_users_; }  // sorted ascending

  // Sorted item list of one user under one behavior (train edges only).
  const std::vector<int32_t>& user_items(int k, int32_t u) const {
    return user_items_.at(k).at(u);
  }
  bool has_train_edge(int k, int32_t u, int32_t i) const;

  const std::string& user_token(int32_t id) const { return user_tokens_.at(id); }
  const std::string& item_token(int32_t id) const { return item_tokens_.at(id); }

  friend InteractionDataset build_dataset(
      const std::vector<std::pair<std::string, std::vector<RawInteraction>>>& raw,
      const std::string& target, int min_target_interactions);

 private:
  int32_t num_users_ = 0;
  int32_t num_items_ = 0;
  std::vector<std::string> behaviors_;
  std::vector<std::vector<std::pair<int32_t, int32_t>>> train_edges_;
  std::unordered_map<int32_t, int32_t> val_positive_;
  std::unordered_map<int32_t, int32_t> test_positive_;
  std::vector<int32_t> eval_users_;
  std::vector<std::vector<std::vector<int32_t>>> user_items_;  // [k][u] sorted
  std::vector<std::string> user_tokens_;
  std::vector<std::string> item_tokens_;
};

// Parses one behavior file: UTF-8 text, one `user<TAB>item` per line (an
// optional third column is ignored). Records keep file order; order_index is
// assigned per user in encounter order. A malformed line raises with its
// line number; an empty file yields an empty list.
std::vector<RawInteraction> load_behavior_file(const std::string& path,
                                               const std::string& behavior);

// Builds ID maps, deduplicates and splits. `raw` lists behaviors in cascade
// order; `target` must name the last entry. Users with at least
// `min_target_interactions` distinct target items give their last item to
// test and the one before to validation; everyone else trains on everything
// and is excluded from evaluation.
InteractionDataset build_dataset(
    const std::vector<std::pair<std::string, std::vector<RawInteraction>>>& raw,
    const std::string& target, int min_target_interactions = 3);

// Uniformly samples `batch` (user, pos, neg) triples from behavior k's train
// edges. Negatives are redrawn while they collide with a train edge; a user
// with no legal negative raises after 10*N rejections.
std::vector<BprTriple> sample_bpr_triples(const InteractionDataset& ds, int k, int batch,
                                          Rng& rng);

}  // namespace hecgcn
