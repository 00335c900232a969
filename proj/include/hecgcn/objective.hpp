#pragma once

#include <numeric>
#include <vector>

#include "hecgcn/model.hpp"

namespace hecgcn {

enum class PoolMode { kInBatch, kFull };

template <typename S>
struct LossWeights {
  S alpha = S(0.1);
  S lambda1 = S(1);
  S lambda2 = S(1);
  S lambda3 = S(1);
  S beta = S(1e-3);
  S tau = S(0.1);
};

// Pairwise ranking loss: sum of -log sigmoid(pos - neg) over the batch.
template <typename S>
NodeId bpr_loss(ad::Tape<S>& tape, NodeId pos_scores, NodeId neg_scores) {
  const Tensor<S>& p = tape.value(pos_scores);
  const Tensor<S>& n = tape.value(neg_scores);
  if (p.rows != n.rows || p.cols != n.cols) {
    throw std::invalid_argument("bpr_loss: score batches differ (" + p.shape_str() + " vs " +
                                n.shape_str() + ")");
  }
  return tape.scale(tape.reduce_sum(tape.log_sigmoid(tape.sub(pos_scores, neg_scores))), S(-1));
}

// Temperature-scaled contrastive loss. The similarity is the cosine of
// L2-normalized rows; row b's positive is pool row positive_ids[b], and the
// whole pool is its denominator.
template <typename S>
NodeId info_nce(ad::Tape<S>& tape, NodeId anchor, NodeId pool,
                std::vector<int32_t> positive_ids, S tau) {
  if (tau <= S(0)) throw std::invalid_argument("info_nce: tau must be positive");
  const Tensor<S>& va = tape.value(anchor);
  const Tensor<S>& vp = tape.value(pool);
  if (va.rows < 1) throw std::invalid_argument("info_nce: empty anchor batch");
  if (vp.rows < va.rows) throw std::invalid_argument("info_nce: pool smaller than batch");
  if (static_cast<int>(positive_ids.size()) != va.rows) {
    throw std::invalid_argument("info_nce: need one positive per anchor");
  }
  const NodeId an = tape.row_l2_normalize(anchor);
  const NodeId pn = tape.row_l2_normalize(pool);
  const NodeId scaled = tape.scale(tape.matmul(an, pn, false, /*trans_b=*/true), S(1) / tau);
  const NodeId lse = tape.row_logsumexp(scaled);
  const NodeId pos = tape.row_pick(scaled, std::move(positive_ids));
  return tape.reduce_sum(tape.sub(lse, pos));
}

struct InterBehaviorLoss {
  NodeId gb = kNoNode;  // global vs interaction-graph embeddings
  NodeId gh = kNoNode;  // global vs hypergraph embeddings
};

namespace detail {

// Anchor rows vs one embedding family, both sides, summed over behaviors.
template <typename S>
NodeId aligned_nce_sum(ad::Tape<S>& tape, NodeId anchor_user, NodeId anchor_item,
                       const std::vector<NodeId>& fam_user, const std::vector<NodeId>& fam_item,
                       const std::vector<int32_t>& users, const std::vector<int32_t>& items,
                       S tau, PoolMode mode) {
  const NodeId au = tape.gather_rows(anchor_user, users);
  const NodeId ai = tape.gather_rows(anchor_item, items);
  std::vector<int32_t> diag_u(users.size()), diag_i(items.size());
  std::iota(diag_u.begin(), diag_u.end(), 0);
  std::iota(diag_i.begin(), diag_i.end(), 0);
  std::vector<NodeId> terms;
  for (size_t k = 0; k < fam_user.size(); ++k) {
    if (mode == PoolMode::kInBatch) {
      terms.push_back(info_nce(tape, au, tape.gather_rows(fam_user[k], users), diag_u, tau));
      terms.push_back(info_nce(tape, ai, tape.gather_rows(fam_item[k], items), diag_i, tau));
    } else {
      terms.push_back(info_nce(tape, au, fam_user[k], users, tau));
      terms.push_back(info_nce(tape, ai, fam_item[k], items, tau));
    }
  }
  return tape.add_n(terms);
}

}  // namespace detail

// Cross-behavior consistency: global embeddings anchor each behavior's
// interaction-graph embeddings (gb) and hypergraph embeddings (gh) on both
// sides. gh is kNoNode when the hypergraph branch is off.
template <typename S>
InterBehaviorLoss inter_behavior_loss(ad::Tape<S>& tape, const ForwardOutputs& fwd,
                                      const std::vector<int32_t>& users,
                                      const std::vector<int32_t>& items, S tau,
                                      PoolMode mode = PoolMode::kInBatch) {
  InterBehaviorLoss out;
  out.gb = detail::aligned_nce_sum(tape, fwd.e_g_user, fwd.e_g_item, fwd.e_b_user, fwd.e_b_item,
                                   users, items, tau, mode);
  if (!fwd.e_h_user.empty() && fwd.e_h_user[0] != kNoNode) {
    out.gh = detail::aligned_nce_sum(tape, fwd.e_g_user, fwd.e_g_item, fwd.e_h_user,
                                     fwd.e_h_item, users, items, tau, mode);
  }
  return out;
}

// Within-behavior consistency: each behavior's interaction-graph embeddings
// anchor its own hypergraph embeddings, both sides, summed over behaviors.
template <typename S>
NodeId intra_behavior_loss(ad::Tape<S>& tape, const ForwardOutputs& fwd,
                           const std::vector<int32_t>& users,
                           const std::vector<int32_t>& items, S tau,
                           PoolMode mode = PoolMode::kInBatch) {
  if (fwd.e_h_user.empty() || fwd.e_h_user[0] == kNoNode) {
    throw std::logic_error("intra_behavior_loss: hypergraph branch is disabled");
  }
  std::vector<int32_t> diag_u(users.size()), diag_i(items.size());
  std::iota(diag_u.begin(), diag_u.end(), 0);
  std::iota(diag_i.begin(), diag_i.end(), 0);
  std::vector<NodeId> terms;
  for (int k = 0; k < fwd.num_behaviors(); ++k) {
    const NodeId au = tape.gather_rows(fwd.e_b_user[k], users);
    const NodeId ai = tape.gather_rows(fwd.e_b_item[k], items);
    if (mode == PoolMode::kInBatch) {
      terms.push_back(info_nce(tape, au, tape.gather_rows(fwd.e_h_user[k], users), diag_u, tau));
      terms.push_back(info_nce(tape, ai, tape.gather_rows(fwd.e_h_item[k], items), diag_i, tau));
    } else {
      terms.push_back(info_nce(tape, au, fwd.e_h_user[k], users, tau));
      terms.push_back(info_nce(tape, ai, fwd.e_h_item[k], items, tau));
    }
  }
  return tape.add_n(terms);
}

// What the L2 penalty covers this step: embedding tables restricted to the
// rows the batch touched, projection matrices in full.
struct RegTerms {
  std::vector<std::pair<NodeId, std::vector<int32_t>>> tables;
  std::vector<NodeId> full;
};

template <typename S>
NodeId l2_penalty(ad::Tape<S>& tape, const RegTerms& reg) {
  std::vector<NodeId> parts;
  for (const auto& [leaf, rows] : reg.tables) {
    if (rows.empty()) continue;
    const NodeId g = tape.gather_rows(leaf, rows);
    parts.push_back(tape.reduce_sum(tape.hadamard(g, g)));
  }
  for (NodeId leaf : reg.full) {
    if (leaf == kNoNode) continue;
    parts.push_back(tape.reduce_sum(tape.hadamard(leaf, leaf)));
  }
  if (parts.empty()) throw std::logic_error("l2_penalty: nothing to regularize");
  return tape.add_n(parts);
}

// L = sum_k L_k + alpha * (l1*gb + l2*gh + l3*bh) + beta * ||theta||^2.
// Zero-coefficient or absent terms are left out of the tape entirely, so an
// alpha=0 build is bit-identical to a BPR-only build.
template <typename S>
NodeId total_loss(ad::Tape<S>& tape, const std::vector<NodeId>& bpr_per_behavior, NodeId l_gb,
                  NodeId l_gh, NodeId l_bh, const LossWeights<S>& w, const RegTerms& reg) {
  if (bpr_per_behavior.empty()) throw std::invalid_argument("total_loss: no BPR terms");
  std::vector<NodeId> terms;
  terms.push_back(tape.add_n(bpr_per_behavior));
  if (w.alpha != S(0)) {
    std::vector<NodeId> cl;
    if (l_gb != kNoNode && w.lambda1 != S(0)) cl.push_back(tape.scale(l_gb, w.lambda1));
    if (l_gh != kNoNode && w.lambda2 != S(0)) cl.push_back(tape.scale(l_gh, w.lambda2));
    if (l_bh != kNoNode && w.lambda3 != S(0)) cl.push_back(tape.scale(l_bh, w.lambda3));
    if (!cl.empty()) terms.push_back(tape.scale(tape.add_n(cl), w.alpha));
  }
  if (w.beta != S(0) && !(reg.tables.empty() && reg.full.empty())) {
    terms.push_back(tape.scale(l2_penalty(tape, reg), w.beta));
  }
  return terms.size() == 1 ? terms[0] : tape.add_n(terms);
}

}  // namespace hecgcn
