#pragma once

#include <string>
#include <vector>

#include "hecgcn/dataset.hpp"
#include "hecgcn/trainer.hpp"

namespace hecgcn {

// ---- gradient-check toy ----
// A fixed 6-user / 8-item / 2-behavior problem, small enough for exhaustive
// finite differences yet exercising every stage (cascade, hypergraph,
// attention, all loss terms).

template <typename S>
struct GradCheckToy {
  InteractionDataset ds;
  GraphSet<S> graphs;
  ModelParams<S> params;
  TrainConfig cfg;
  StepBatches batches;
};

inline std::vector<std::pair<std::string, std::vector<RawInteraction>>> toy_interactions() {
  auto lines = [](std::initializer_list<std::pair<int, int>> edges) {
    std::vector<RawInteraction> recs;
    std::unordered_map<std::string, int> count;
    for (const auto& [u, i] : edges) {
      RawInteraction r;
      r.user_token = "u" + std::to_string(u);
      r.item_token = "i" + std::to_string(i);
      r.order_index = count[r.user_token]++;
      recs.push_back(std::move(r));
    }
    return recs;
  };
  // aux covers broadly; target gives each user >= 3 items so the split exists
  std::vector<std::pair<std::string, std::vector<RawInteraction>>> raw;
  raw.emplace_back("view", lines({{0, 0}, {0, 1}, {0, 4}, {1, 1}, {1, 2}, {1, 5}, {2, 2},
                                  {2, 3}, {2, 6}, {3, 0}, {3, 3}, {3, 7}, {4, 4}, {4, 5},
                                  {4, 1}, {5, 6}, {5, 7}, {5, 0}}));
  raw.emplace_back("buy", lines({{0, 0}, {0, 1}, {0, 4}, {1, 1}, {1, 2}, {1, 5}, {2, 2},
                                 {2, 3}, {2, 6}, {3, 0}, {3, 3}, {3, 7}, {4, 4}, {4, 5},
                                 {4, 2}, {5, 6}, {5, 0}, {5, 3}}));
  return raw;
}

template <typename S>
ModelParams<S> make_desk_scale_params(int num_users, int num_items, int d, int num_hyperedges,
                                      int num_behaviors, uint64_t seed, double emb_scale,
                                      double proj_scale);

template <typename S>
GradCheckToy<S> make_gradcheck_toy(uint64_t seed = 7) {
  GradCheckToy<S> toy;
  toy.ds = build_dataset(toy_interactions(), "buy", 3);
  toy.graphs = GraphSet<S>::build(toy.ds);
  toy.cfg.d = 4;
  toy.cfg.layers = 2;
  toy.cfg.hyperedges = 3;
  toy.cfg.alpha = 0.5;
  toy.cfg.lambda1 = 1.0;
  toy.cfg.lambda2 = 1.0;
  toy.cfg.lambda3 = 1.0;
  toy.cfg.beta = 1e-3;
  toy.cfg.tau = 0.2;
  toy.cfg.batch_size = 4;
  toy.cfg.seed = seed;
  toy.params = make_desk_scale_params<S>(toy.ds.num_users(), toy.ds.num_items(), toy.cfg.d,
                                         toy.cfg.hyperedges, toy.ds.num_behaviors(), seed, 0.25,
                                         0.1);
  Rng rng(mix_seed(seed, 0x70Full));
  std::vector<std::vector<BprTriple>> triples;
  for (int k = 0; k < toy.ds.num_behaviors(); ++k) {
    triples.push_back(sample_bpr_triples(toy.ds, k, toy.cfg.batch_size, rng));
  }
  toy.batches = StepBatches::from_triples(triples);
  return toy;
}

// ---- planted block dataset ----
// Users come in groups with disjoint item blocks. Target histories live in
// the user's block; auxiliary behaviors cover the training prefix plus the
// held-out validation item, which makes the planted optimum recoverable.

struct PlantedSpec {
  int num_users = 20;
  int num_items = 30;
  int num_groups = 4;
  int target_per_user = 6;  // >= 3: train all but two, then val, then test
  int num_aux = 2;          // auxiliary behaviors before the target
};

inline std::vector<std::pair<std::string, std::vector<RawInteraction>>> make_planted_interactions(
    const PlantedSpec& spec, uint64_t seed) {
  const int block = spec.num_items / spec.num_groups;
  if (spec.target_per_user < 3 || spec.target_per_user > block) {
    throw std::invalid_argument("planted: target_per_user must fit the item block");
  }
  Rng rng(mix_seed(seed, 0x9A17ull));

  // per user: a shuffled subset of the group's items
  std::vector<std::vector<int>> target_items(spec.num_users);
  for (int u = 0; u < spec.num_users; ++u) {
    const int g = u % spec.num_groups;
    const int lo = g * block;
    const int hi = (g == spec.num_groups - 1) ? spec.num_items : lo + block;
    std::vector<int> pool;
    for (int i = lo; i < hi; ++i) pool.push_back(i);
    for (size_t i = pool.size(); i > 1; --i) {
      std::swap(pool[i - 1], pool[rng.below(i)]);
    }
    pool.resize(spec.target_per_user);
    target_items[u] = std::move(pool);
  }

  auto push = [](std::vector<RawInteraction>& recs, std::unordered_map<std::string, int>& count,
                 int u, int i) {
    RawInteraction r;
    r.user_token = "u" + std::to_string(u);
    r.item_token = "i" + std::to_string(i);
    r.order_index = count[r.user_token]++;
    recs.push_back(std::move(r));
  };

  std::vector<std::pair<std::string, std::vector<RawInteraction>>> raw;
  for (int a = 0; a < spec.num_aux; ++a) {
    std::vector<RawInteraction> recs;
    std::unordered_map<std::string, int> count;
    for (int u = 0; u < spec.num_users; ++u) {
      // aux = training prefix + validation item (everything but the test item)
      for (int idx = 0; idx + 1 < spec.target_per_user; ++idx) {
        push(recs, count, u, target_items[u][idx]);
      }
    }
    raw.emplace_back("aux" + std::to_string(a), std::move(recs));
  }
  std::vector<RawInteraction> target;
  std::unordered_map<std::string, int> count;
  for (int u = 0; u < spec.num_users; ++u) {
    for (int i : target_items[u]) push(target, count, u, i);
  }
  raw.emplace_back("target", std::move(target));
  return raw;
}

inline InteractionDataset make_planted_dataset(const PlantedSpec& spec, uint64_t seed) {
  return build_dataset(make_planted_interactions(spec, seed), "target", 3);
}

// Init for desk-scale problems. Plain Glorot tables explode here: with tens
// of rows the table bound is large, the hypergraph output is cubic in the
// embedding scale, and the cascade compounds the excess per behavior. Real
// catalogs (M in the tens of thousands) do not need this because the table
// bound already shrinks with M.
template <typename S>
ModelParams<S> make_desk_scale_params(int num_users, int num_items, int d, int num_hyperedges,
                                      int num_behaviors, uint64_t seed,
                                      double emb_scale = 0.25, double proj_scale = 0.1) {
  auto params =
      ModelParams<S>::init(num_users, num_items, d, num_hyperedges, num_behaviors, seed);
  for (auto& v : params.user_emb.data) v *= static_cast<S>(emb_scale);
  for (auto& v : params.item_emb.data) v *= static_cast<S>(emb_scale);
  for (auto& w : params.hyper_proj_user) {
    for (auto& v : w.data) v *= static_cast<S>(proj_scale);
  }
  for (auto& w : params.hyper_proj_item) {
    for (auto& v : w.data) v *= static_cast<S>(proj_scale);
  }
  return params;
}

// Writes behavior files plus a dataset manifest into `dir` (which must
// exist); returns the manifest path.
std::string write_dataset_files(
    const std::vector<std::pair<std::string, std::vector<RawInteraction>>>& raw,
    const std::string& dir);

}  // namespace hecgcn
