#pragma once

#include <cmath>
#include <set>
#include <tuple>

#include "hecgcn/csr.hpp"
#include "hecgcn/dataset.hpp"

namespace hecgcn {

// Degree-normalized bipartite adjacency for one behavior (or the union of
// all behaviors). Entry (u, i) holds 1/sqrt(d_u * d_i); both orientations are
// stored so forward and backward propagation are row-major scans, and their
// values are bitwise-equal by construction.
template <typename S>
struct NormalizedBipartiteGraph {
  int32_t num_users = 0;
  int32_t num_items = 0;
  CsrMatrix<S> user_to_item;  // M x N
  CsrMatrix<S> item_to_user;  // N x M, exact transpose
};

// Edges must be deduplicated; ids outside [0,M) x [0,N) raise. Nodes without
// edges get all-zero rows (1/sqrt(0) is taken as 0: isolated nodes neither
// emit nor receive).
template <typename S>
NormalizedBipartiteGraph<S> build_graph(const std::vector<std::pair<int32_t, int32_t>>& edges,
                                        int32_t num_users, int32_t num_items) {
  std::vector<int64_t> deg_u(num_users, 0), deg_i(num_items, 0);
  for (const auto& [u, i] : edges) {
    if (u < 0 || u >= num_users || i < 0 || i >= num_items) {
      throw std::out_of_range("build_graph: edge (" + std::to_string(u) + "," +
                              std::to_string(i) + ") outside " + std::to_string(num_users) +
                              "x" + std::to_string(num_items));
    }
    deg_u[u]++;
    deg_i[i]++;
  }
  std::vector<std::tuple<int32_t, int32_t, S>> fwd, bwd;
  fwd.reserve(edges.size());
  bwd.reserve(edges.size());
  for (const auto& [u, i] : edges) {
    // computed once in double, stored identically in both orientations
    const S v = static_cast<S>(1.0 / std::sqrt(static_cast<double>(deg_u[u]) *
                                               static_cast<double>(deg_i[i])));
    fwd.emplace_back(u, i, v);
    bwd.emplace_back(i, u, v);
  }
  NormalizedBipartiteGraph<S> g;
  g.num_users = num_users;
  g.num_items = num_items;
  g.user_to_item = csr_from_triples(num_users, num_items, std::move(fwd));
  g.item_to_user = csr_from_triples(num_items, num_users, std::move(bwd));
  return g;
}

// Union of all behaviors' train edges (validation/test stay out), then
// normalized like any single-behavior graph.
template <typename S>
NormalizedBipartiteGraph<S> build_global_graph(const InteractionDataset& ds) {
  std::set<std::pair<int32_t, int32_t>> uni;
  for (int k = 0; k < ds.num_behaviors(); ++k) {
    for (const auto& e : ds.train_edges(k)) uni.insert(e);
  }
  std::vector<std::pair<int32_t, int32_t>> edges(uni.begin(), uni.end());
  return build_graph<S>(edges, ds.num_users(), ds.num_items());
}

}  // namespace hecgcn
