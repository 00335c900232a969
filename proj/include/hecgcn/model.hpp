#pragma once

#include <string>
#include <vector>

#include "hecgcn/autodiff.hpp"
#include "hecgcn/graph.hpp"
#include "hecgcn/rng.hpp"

namespace hecgcn {

using ad::kNoNode;
using ad::NodeId;

// Stage switches mirroring the model's published variants.
struct AblationFlags {
  bool no_global = false;
  bool no_hyper = false;
  bool no_stop = false;
  bool no_cascading = false;
  bool no_mutual = false;
  bool no_cl_intra = false;
  bool no_cl_cross = false;
  bool no_cl_all = false;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n = {"no_global",  "no_hyper",    "no_stop",
                                               "no_cascading", "no_mutual", "no_cl_intra",
                                               "no_cl_cross", "no_cl_all"};
    return n;
  }

  void set(const std::string& name) {
    if (name == "no_global") no_global = true;
    else if (name == "no_hyper") no_hyper = true;
    else if (name == "no_stop") no_stop = true;
    else if (name == "no_cascading") no_cascading = true;
    else if (name == "no_mutual") no_mutual = true;
    else if (name == "no_cl_intra") no_cl_intra = true;
    else if (name == "no_cl_cross") no_cl_cross = true;
    else if (name == "no_cl_all") no_cl_all = true;
    else throw std::invalid_argument("unknown ablation '" + name + "'");
  }

  std::vector<std::string> active() const {
    std::vector<std::string> out;
    const bool flags[] = {no_global, no_hyper,    no_stop,     no_cascading,
                          no_mutual, no_cl_intra, no_cl_cross, no_cl_all};
    for (size_t i = 0; i < names().size(); ++i) {
      if (flags[i]) out.push_back(names()[i]);
    }
    return out;
  }

  // Contrastive terms that touch hypergraph embeddings vanish with the
  // hypergraph; cross-behavior terms vanish without the global graph.
  bool cl_cross_gb_enabled() const { return !(no_cl_cross || no_cl_all || no_global); }
  bool cl_cross_gh_enabled() const { return cl_cross_gb_enabled() && !no_hyper; }
  bool cl_intra_enabled() const { return !(no_cl_intra || no_cl_all || no_hyper); }
};

// All trainable state: the layer-0 embedding tables and one hyperedge
// projection pair per behavior.
template <typename S>
struct ModelParams {
  Tensor<S> user_emb;                       // M x d
  Tensor<S> item_emb;                       // N x d
  std::vector<Tensor<S>> hyper_proj_user;   // K of d x S
  std::vector<Tensor<S>> hyper_proj_item;   // K of d x S

  int dim() const { return user_emb.cols; }
  int num_behaviors() const { return static_cast<int>(hyper_proj_user.size()); }

  static ModelParams init(int num_users, int num_items, int d, int num_hyperedges,
                          int num_behaviors, uint64_t seed) {
    ModelParams p;
    p.user_emb = xavier_uniform<S>(num_users, d, mix_seed(seed, 1));
    p.item_emb = xavier_uniform<S>(num_items, d, mix_seed(seed, 2));
    for (int k = 0; k < num_behaviors; ++k) {
      p.hyper_proj_user.push_back(
          xavier_uniform<S>(d, num_hyperedges, mix_seed(seed, 100 + 2 * k)));
      p.hyper_proj_item.push_back(
          xavier_uniform<S>(d, num_hyperedges, mix_seed(seed, 101 + 2 * k)));
    }
    return p;
  }

  // Visits every tensor with a stable name, in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn) {
    fn(std::string("user_emb"), user_emb);
    fn(std::string("item_emb"), item_emb);
    for (size_t k = 0; k < hyper_proj_user.size(); ++k) {
      fn("hyper_proj_user." + std::to_string(k), hyper_proj_user[k]);
      fn("hyper_proj_item." + std::to_string(k), hyper_proj_item[k]);
    }
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<ModelParams*>(this)->visit([&](const std::string& n, Tensor<S>& t) {
      fn(n, static_cast<const Tensor<S>&>(t));
    });
  }
};

template <typename S>
struct GraphSet {
  NormalizedBipartiteGraph<S> global;
  std::vector<NormalizedBipartiteGraph<S>> behavior;

  static GraphSet build(const InteractionDataset& ds) {
    GraphSet g;
    g.global = build_global_graph<S>(ds);
    for (int k = 0; k < ds.num_behaviors(); ++k) {
      g.behavior.push_back(build_graph<S>(ds.train_edges(k), ds.num_users(), ds.num_items()));
    }
    return g;
  }
};

struct ModelSettings {
  int layers = 2;
  // Diagnostic weight on the hypergraph output inside the integration sum.
  // 1 is the published model; 0 drops the term exactly (same tape as no_hyper
  // on the prediction path while the branch itself stays live).
  double hyper_output_weight = 1.0;
  AblationFlags ablation;
};

// Per-behavior tape handles for every embedding family the model produces.
// e_h entries are kNoNode when the hypergraph branch is off.
struct ForwardOutputs {
  NodeId user_leaf = kNoNode, item_leaf = kNoNode;
  std::vector<NodeId> proj_user_leaf, proj_item_leaf;
  NodeId e_g_user = kNoNode, e_g_item = kNoNode;
  std::vector<NodeId> e_b_user, e_b_item;
  std::vector<NodeId> e_h_user, e_h_item;
  std::vector<NodeId> e_int_user, e_int_item;
  std::vector<NodeId> e_bar_user, e_bar_item;
  int num_behaviors() const { return static_cast<int>(e_b_user.size()); }
};

// L rounds of symmetric-normalized propagation; output is the unweighted sum
// of layers 0..L.
template <typename S>
std::pair<NodeId, NodeId> propagate_layers(ad::Tape<S>& tape,
                                           const NormalizedBipartiteGraph<S>& g, NodeId user0,
                                           NodeId item0, int layers) {
  if (layers < 1) throw std::invalid_argument("propagate_layers: need at least one layer");
  std::vector<NodeId> us{user0}, is{item0};
  for (int l = 1; l <= layers; ++l) {
    us.push_back(tape.spmm(&g.user_to_item, &g.item_to_user, is[l - 1]));
    is.push_back(tape.spmm(&g.item_to_user, &g.user_to_item, us[l - 1]));
  }
  return {tape.add_n(us), tape.add_n(is)};
}

template <typename S>
std::pair<NodeId, NodeId> global_propagate(ad::Tape<S>& tape,
                                           const NormalizedBipartiteGraph<S>& g, NodeId user0,
                                           NodeId item0, int layers) {
  return propagate_layers(tape, g, user0, item0, layers);
}

// Same kernel as the global pass, run on one behavior's graph with the
// cascade initialization chosen by the caller.
template <typename S>
std::pair<NodeId, NodeId> behavior_propagate(ad::Tape<S>& tape,
                                             const NormalizedBipartiteGraph<S>& g,
                                             NodeId init_user, NodeId init_item, int layers) {
  return propagate_layers(tape, g, init_user, init_item, layers);
}

// H = stop(e_b) * W. The stop detaches the embedding input; W stays live.
template <typename S>
NodeId hyperedge_project(ad::Tape<S>& tape, NodeId e_b, NodeId w, bool stop_input = true) {
  const NodeId feat = stop_input ? tape.stop_gradient(e_b) : e_b;
  return tape.matmul(feat, w);
}

// e_h = H * (H^T * stop(e_b)); the n x n dependency matrix never exists.
template <typename S>
NodeId hypergraph_convolve(ad::Tape<S>& tape, NodeId h, NodeId e_b, bool stop_input = true) {
  const NodeId feat = stop_input ? tape.stop_gradient(e_b) : e_b;
  const NodeId proj = tape.matmul(h, feat, /*trans_a=*/true);  // S x d
  return tape.matmul(h, proj);
}

// Element-wise sum of the behavior's three sources. e_h may be kNoNode.
template <typename S>
NodeId integrate_behavior(ad::Tape<S>& tape, NodeId e_b, NodeId e_h, NodeId e_prev,
                          double hyper_output_weight = 1.0) {
  if (e_h == kNoNode || hyper_output_weight == 0.0) return tape.add(e_b, e_prev);
  if (hyper_output_weight == 1.0) return tape.add_n({e_b, e_h, e_prev});
  return tape.add_n({e_b, tape.scale(e_h, static_cast<S>(hyper_output_weight)), e_prev});
}

// Per-node attention over the K behavior embeddings, logits scaled by
// 1/sqrt(d). attn_out (optional) receives the K weight nodes (n x K each).
template <typename S>
std::vector<NodeId> mutual_enhance(ad::Tape<S>& tape, const std::vector<NodeId>& e_int, int d,
                                   std::vector<NodeId>* attn_out = nullptr) {
  if (e_int.empty()) throw std::invalid_argument("mutual_enhance: need at least one behavior");
  const int k_count = static_cast<int>(e_int.size());
  const S ts = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<NodeId> out;
  out.reserve(e_int.size());
  for (int k = 0; k < k_count; ++k) {
    std::vector<NodeId> logit_cols;
    logit_cols.reserve(e_int.size());
    for (int j = 0; j < k_count; ++j) {
      logit_cols.push_back(tape.row_sum(tape.hadamard(e_int[k], e_int[j])));
    }
    const NodeId weights = tape.row_softmax(tape.hstack(logit_cols), ts);
    if (attn_out != nullptr) attn_out->push_back(weights);
    std::vector<NodeId> terms;
    terms.reserve(e_int.size());
    for (int j = 0; j < k_count; ++j) {
      terms.push_back(tape.scale_rows(e_int[j], tape.slice_col(weights, j)));
    }
    out.push_back(tape.add_n(terms));
  }
  return out;
}

template <typename S>
NodeId final_embed(ad::Tape<S>& tape, NodeId e_tilde, NodeId e_g) {
  return tape.add(e_tilde, e_g);
}

// Inner-product score of one (user, item) pair under one behavior's final
// embeddings. Ranking uses the target behavior's tables.
template <typename S>
S score(const ad::Tape<S>& tape, NodeId e_bar_user, NodeId e_bar_item, int32_t u, int32_t i) {
  const Tensor<S>& eu = tape.value(e_bar_user);
  const Tensor<S>& ei = tape.value(e_bar_item);
  if (u < 0 || u >= eu.rows) throw std::out_of_range("score: user id " + std::to_string(u));
  if (i < 0 || i >= ei.rows) throw std::out_of_range("score: item id " + std::to_string(i));
  return dot(eu.row(u), ei.row(i), eu.cols);
}

// Batched pairwise scores: out[b] = <e_bar_user[users[b]], e_bar_item[items[b]]>
template <typename S>
NodeId pairwise_scores(ad::Tape<S>& tape, NodeId e_bar_user, NodeId e_bar_item,
                       std::vector<int32_t> users, std::vector<int32_t> items) {
  const NodeId gu = tape.gather_rows(e_bar_user, std::move(users));
  const NodeId gi = tape.gather_rows(e_bar_item, std::move(items));
  return tape.row_sum(tape.hadamard(gu, gi));
}

// The full forward pass: global propagation, cascaded per-behavior
// propagation with the hypergraph branch, integration, mutual enhancement
// and final embeddings.
template <typename S>
ForwardOutputs forward(ad::Tape<S>& tape, const ModelParams<S>& params,
                       const GraphSet<S>& graphs, const ModelSettings& ms) {
  const AblationFlags& fl = ms.ablation;
  const int K = static_cast<int>(graphs.behavior.size());
  if (K == 0) throw std::invalid_argument("forward: no behavior graphs");
  if (params.num_behaviors() < K) throw std::invalid_argument("forward: params cover fewer behaviors than graphs");

  ForwardOutputs out;
  out.user_leaf = tape.leaf(&params.user_emb, true, "user_emb");
  out.item_leaf = tape.leaf(&params.item_emb, true, "item_emb");
  out.proj_user_leaf.assign(K, kNoNode);
  out.proj_item_leaf.assign(K, kNoNode);

  if (fl.no_global) {
    out.e_g_user = out.user_leaf;
    out.e_g_item = out.item_leaf;
  } else {
    std::tie(out.e_g_user, out.e_g_item) =
        global_propagate(tape, graphs.global, out.user_leaf, out.item_leaf, ms.layers);
  }

  NodeId prev_user = out.e_g_user;
  NodeId prev_item = out.e_g_item;
  const bool use_stop = !fl.no_stop;
  for (int k = 0; k < K; ++k) {
    const NodeId init_user = fl.no_cascading ? out.e_g_user : prev_user;
    const NodeId init_item = fl.no_cascading ? out.e_g_item : prev_item;
    auto [eb_u, eb_i] =
        behavior_propagate(tape, graphs.behavior[k], init_user, init_item, ms.layers);
    out.e_b_user.push_back(eb_u);
    out.e_b_item.push_back(eb_i);

    NodeId eh_u = kNoNode, eh_i = kNoNode;
    if (!fl.no_hyper) {
      out.proj_user_leaf[k] =
          tape.leaf(&params.hyper_proj_user[k], true, "hyper_proj_user." + std::to_string(k));
      out.proj_item_leaf[k] =
          tape.leaf(&params.hyper_proj_item[k], true, "hyper_proj_item." + std::to_string(k));
      const NodeId hu = hyperedge_project(tape, eb_u, out.proj_user_leaf[k], use_stop);
      const NodeId hi = hyperedge_project(tape, eb_i, out.proj_item_leaf[k], use_stop);
      eh_u = hypergraph_convolve(tape, hu, eb_u, use_stop);
      eh_i = hypergraph_convolve(tape, hi, eb_i, use_stop);
    }
    out.e_h_user.push_back(eh_u);
    out.e_h_item.push_back(eh_i);

    const NodeId int_u = integrate_behavior(tape, eb_u, eh_u, init_user, ms.hyper_output_weight);
    const NodeId int_i = integrate_behavior(tape, eb_i, eh_i, init_item, ms.hyper_output_weight);
    out.e_int_user.push_back(int_u);
    out.e_int_item.push_back(int_i);
    prev_user = int_u;
    prev_item = int_i;
  }

  std::vector<NodeId> tilde_user, tilde_item;
  if (fl.no_mutual) {
    tilde_user = out.e_int_user;
    tilde_item = out.e_int_item;
  } else {
    tilde_user = mutual_enhance(tape, out.e_int_user, params.dim());
    tilde_item = mutual_enhance(tape, out.e_int_item, params.dim());
  }
  for (int k = 0; k < K; ++k) {
    out.e_bar_user.push_back(final_embed(tape, tilde_user[k], out.e_g_user));
    out.e_bar_item.push_back(final_embed(tape, tilde_item[k], out.e_g_item));
  }
  return out;
}

}  // namespace hecgcn
