#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "hecgcn/evaluator.hpp"
#include "hecgcn/objective.hpp"

namespace hecgcn {

struct TrainConfig {
  int d = 64;
  int layers = 2;
  int hyperedges = 32;
  double lr = 5e-4;
  double beta = 1e-3;  // L2 coefficient
  double alpha = 0.1;  // consistency-loss coefficient
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double tau = 0.1;
  double hyper_output_weight = 1.0;
  int batch_size = 1024;
  int max_epochs = 200;
  int patience = 10;
  uint64_t seed = 42;
  int min_target_interactions = 3;
  PoolMode negative_pool_mode = PoolMode::kInBatch;
  std::vector<int> eval_ns = {10};
  AblationFlags ablation;

  void validate() const {
    if (d <= 0 || layers <= 0 || hyperedges <= 0) {
      throw std::invalid_argument("config: d, layers and hyperedges must be positive");
    }
    if (batch_size <= 0 || max_epochs <= 0 || patience < 1) {
      throw std::invalid_argument("config: batch_size/max_epochs must be positive, patience >= 1");
    }
    if (tau <= 0) throw std::invalid_argument("config: tau must be positive");
    if (lr < 0 || beta < 0 || alpha < 0 || lambda1 < 0 || lambda2 < 0 || lambda3 < 0) {
      throw std::invalid_argument("config: rates and loss coefficients must be non-negative");
    }
    if (alpha > 0 && std::abs(lambda1 + lambda2 + lambda3 - 3.0) > 1e-9) {
      std::cerr << "warning: lambda1+lambda2+lambda3 = " << (lambda1 + lambda2 + lambda3)
                << " (the reference grid keeps the sum at 3)\n";
    }
  }

  ModelSettings model_settings() const {
    ModelSettings ms;
    ms.layers = layers;
    ms.hyper_output_weight = hyper_output_weight;
    ms.ablation = ablation;
    return ms;
  }

  template <typename S>
  LossWeights<S> weights() const {
    LossWeights<S> w;
    w.alpha = static_cast<S>(alpha);
    w.lambda1 = static_cast<S>(lambda1);
    w.lambda2 = static_cast<S>(lambda2);
    w.lambda3 = static_cast<S>(lambda3);
    w.beta = static_cast<S>(beta);
    w.tau = static_cast<S>(tau);
    return w;
  }
};

// ---- Adam ----

template <typename S>
struct AdamParamState {
  Tensor<S> m, v;
};

template <typename S>
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<std::pair<std::string, AdamParamState<S>>> slots;  // params.visit order
  int64_t step = 0;

  static AdamState init(const ModelParams<S>& params) {
    AdamState st;
    params.visit([&](const std::string& name, const Tensor<S>& t) {
      st.slots.emplace_back(name, AdamParamState<S>{Tensor<S>(t.rows, t.cols),
                                                    Tensor<S>(t.rows, t.cols)});
    });
    return st;
  }

  AdamParamState<S>& slot(const std::string& name) {
    for (auto& [n, s] : slots) {
      if (n == name) return s;
    }
    throw std::logic_error("AdamState: no slot named '" + name + "'");
  }
};

// Bias-corrected Adam on a set of rows (moments on other rows stay untouched).
template <typename S>
void adam_step_rows(Tensor<S>& param, const Tensor<S>& grad, const std::vector<int32_t>& rows,
                    AdamParamState<S>& st, S lr, int64_t step) {
  const S b1 = static_cast<S>(AdamState<S>::kBeta1);
  const S b2 = static_cast<S>(AdamState<S>::kBeta2);
  const S eps = static_cast<S>(AdamState<S>::kEps);
  const S c1 = S(1) / static_cast<S>(1.0 - std::pow(AdamState<S>::kBeta1, static_cast<double>(step)));
  const S c2 = S(1) / static_cast<S>(1.0 - std::pow(AdamState<S>::kBeta2, static_cast<double>(step)));
  for (int32_t r : rows) {
    S* p = param.row(r);
    const S* g = grad.row(r);
    S* m = st.m.row(r);
    S* v = st.v.row(r);
    for (int c = 0; c < param.cols; ++c) {
      m[c] = b1 * m[c] + (S(1) - b1) * g[c];
      v[c] = b2 * v[c] + (S(1) - b2) * g[c] * g[c];
      p[c] -= lr * (m[c] * c1) / (std::sqrt(v[c] * c2) + eps);
    }
  }
}

template <typename S>
void adam_step_dense(Tensor<S>& param, const Tensor<S>& grad, AdamParamState<S>& st, S lr,
                     int64_t step) {
  std::vector<int32_t> all(param.rows);
  std::iota(all.begin(), all.end(), 0);
  adam_step_rows(param, grad, all, st, lr, step);
}

template <typename S>
std::vector<int32_t> nonzero_rows(const Tensor<S>& grad) {
  std::vector<int32_t> rows;
  for (int r = 0; r < grad.rows; ++r) {
    const S* g = grad.row(r);
    for (int c = 0; c < grad.cols; ++c) {
      if (g[c] != S(0)) {
        rows.push_back(r);
        break;
      }
    }
  }
  return rows;
}

// ---- one optimization step ----

struct StepBatches {
  // per behavior: users, positive items, negative items (equal lengths)
  std::vector<std::vector<int32_t>> users, pos_items, neg_items;

  static StepBatches from_triples(const std::vector<std::vector<BprTriple>>& per_behavior) {
    StepBatches b;
    for (const auto& triples : per_behavior) {
      std::vector<int32_t> u, p, n;
      u.reserve(triples.size());
      for (const auto& t : triples) {
        u.push_back(t.user);
        p.push_back(t.pos_item);
        n.push_back(t.neg_item);
      }
      b.users.push_back(std::move(u));
      b.pos_items.push_back(std::move(p));
      b.neg_items.push_back(std::move(n));
    }
    return b;
  }
};

struct StepLoss {
  NodeId total = kNoNode;
  std::vector<NodeId> bpr;
  NodeId gb = kNoNode, gh = kNoNode, bh = kNoNode;
  ForwardOutputs fwd;
};

namespace detail {

inline std::vector<int32_t> sorted_unique(std::vector<int32_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

// Builds one training step's loss graph on the tape: forward pass, one BPR
// term per behavior, the enabled consistency terms on the target behavior's
// batch, and the L2 penalty over touched rows. Shared by the trainer and the
// gradient-check harness so both exercise the same graph.
template <typename S>
StepLoss build_step_loss(ad::Tape<S>& tape, const ModelParams<S>& params,
                         const GraphSet<S>& graphs, const StepBatches& batches,
                         const TrainConfig& cfg) {
  const int K = static_cast<int>(graphs.behavior.size());
  if (static_cast<int>(batches.users.size()) != K) {
    throw std::invalid_argument("build_step_loss: need one batch per behavior");
  }
  StepLoss out;
  out.fwd = forward(tape, params, graphs, cfg.model_settings());
  const LossWeights<S> w = cfg.weights<S>();

  for (int k = 0; k < K; ++k) {
    const NodeId pos = pairwise_scores(tape, out.fwd.e_bar_user[k], out.fwd.e_bar_item[k],
                                       batches.users[k], batches.pos_items[k]);
    const NodeId neg = pairwise_scores(tape, out.fwd.e_bar_user[k], out.fwd.e_bar_item[k],
                                       batches.users[k], batches.neg_items[k]);
    out.bpr.push_back(bpr_loss(tape, pos, neg));
  }

  const AblationFlags& fl = cfg.ablation;
  if (w.alpha != S(0)) {
    const auto& cl_users = batches.users[K - 1];
    const auto& cl_items = batches.pos_items[K - 1];
    if (fl.cl_cross_gb_enabled()) {
      const InterBehaviorLoss inter = inter_behavior_loss(tape, out.fwd, cl_users, cl_items,
                                                          w.tau, cfg.negative_pool_mode);
      out.gb = inter.gb;
      if (fl.cl_cross_gh_enabled()) out.gh = inter.gh;
    }
    if (fl.cl_intra_enabled()) {
      out.bh = intra_behavior_loss(tape, out.fwd, cl_users, cl_items, w.tau,
                                   cfg.negative_pool_mode);
    }
  }

  RegTerms reg;
  if (w.beta != S(0)) {
    std::vector<int32_t> touched_users, touched_items;
    for (int k = 0; k < K; ++k) {
      touched_users.insert(touched_users.end(), batches.users[k].begin(),
                           batches.users[k].end());
      touched_items.insert(touched_items.end(), batches.pos_items[k].begin(),
                           batches.pos_items[k].end());
      touched_items.insert(touched_items.end(), batches.neg_items[k].begin(),
                           batches.neg_items[k].end());
    }
    reg.tables.emplace_back(out.fwd.user_leaf, detail::sorted_unique(std::move(touched_users)));
    reg.tables.emplace_back(out.fwd.item_leaf, detail::sorted_unique(std::move(touched_items)));
    for (int k = 0; k < K; ++k) {
      if (out.fwd.proj_user_leaf[k] != kNoNode) reg.full.push_back(out.fwd.proj_user_leaf[k]);
      if (out.fwd.proj_item_leaf[k] != kNoNode) reg.full.push_back(out.fwd.proj_item_leaf[k]);
    }
  }
  out.total = total_loss(tape, out.bpr, out.gb, out.gh, out.bh, w, reg);
  return out;
}

struct EpochReport {
  double bpr = 0, gb = 0, gh = 0, bh = 0, total = 0;
  int steps = 0;
};

// Applies one Adam update from the tape's leaf gradients. Embedding tables
// update lazily on rows with nonzero gradient; projections update densely.
template <typename S>
void apply_adam(ModelParams<S>& params, ad::Tape<S>& tape, AdamState<S>& adam, S lr) {
  adam.step += 1;
  params.visit([&](const std::string& name, Tensor<S>& t) {
    const NodeId leaf = tape.find_leaf(&t);
    if (leaf == kNoNode || !tape.has_grad(leaf)) return;
    const Tensor<S>& g = tape.grad(leaf);
    auto& slot = adam.slot(name);
    if (name == "user_emb" || name == "item_emb") {
      adam_step_rows(t, g, nonzero_rows(g), slot, lr, adam.step);
    } else {
      adam_step_dense(t, g, slot, lr, adam.step);
    }
  });
}

template <typename S>
EpochReport train_epoch(ModelParams<S>& params, const GraphSet<S>& graphs,
                        const InteractionDataset& ds, const TrainConfig& cfg,
                        AdamState<S>& adam, int epoch) {
  const int K = ds.num_behaviors();
  const int64_t target_edges = static_cast<int64_t>(ds.train_edges(K - 1).size());
  const int steps = static_cast<int>((target_edges + cfg.batch_size - 1) / cfg.batch_size);
  Rng rng(mix_seed(cfg.seed, 0xE70C000ull + static_cast<uint64_t>(epoch)));

  EpochReport report;
  report.steps = steps;
  for (int step = 0; step < steps; ++step) {
    std::vector<std::vector<BprTriple>> triples;
    triples.reserve(K);
    for (int k = 0; k < K; ++k) triples.push_back(sample_bpr_triples(ds, k, cfg.batch_size, rng));

    ad::Tape<S> tape;
    const StepLoss loss = build_step_loss(tape, params, graphs, StepBatches::from_triples(triples), cfg);
    const double total = static_cast<double>(tape.value(loss.total).at(0, 0));
    double bpr_sum = 0;
    for (NodeId b : loss.bpr) bpr_sum += static_cast<double>(tape.value(b).at(0, 0));
    const double gb = loss.gb == kNoNode ? 0 : static_cast<double>(tape.value(loss.gb).at(0, 0));
    const double gh = loss.gh == kNoNode ? 0 : static_cast<double>(tape.value(loss.gh).at(0, 0));
    const double bh = loss.bh == kNoNode ? 0 : static_cast<double>(tape.value(loss.bh).at(0, 0));
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "train_epoch: non-finite loss at epoch " << epoch << " step " << step
          << " (bpr=" << bpr_sum << " gb=" << gb << " gh=" << gh << " bh=" << bh << ")";
      throw std::runtime_error(msg.str());
    }
    tape.backward(loss.total);
    apply_adam(params, tape, adam, static_cast<S>(cfg.lr));

    report.total += total;
    report.bpr += bpr_sum;
    report.gb += gb;
    report.gh += gh;
    report.bh += bh;
  }
  report.total /= steps;
  report.bpr /= steps;
  report.gb /= steps;
  report.gh /= steps;
  report.bh /= steps;
  return report;
}

// Final per-behavior embeddings from a gradient-free forward pass.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> target_embeddings(const ModelParams<S>& params,
                                                  const GraphSet<S>& graphs,
                                                  const ModelSettings& ms) {
  ad::TapeOptions opts;
  opts.grad_enabled = false;
  ad::Tape<S> tape(opts);
  const ForwardOutputs fwd = forward(tape, params, graphs, ms);
  const int K = fwd.num_behaviors();
  return {tape.value(fwd.e_bar_user[K - 1]), tape.value(fwd.e_bar_item[K - 1])};
}

struct HistoryRow {
  int epoch = 0;  // 1-based
  double loss_bpr = 0, loss_gb = 0, loss_gh = 0, loss_bh = 0;
  double val_hr10 = 0, val_ndcg10 = 0;
};

template <typename S>
struct FitResult {
  ModelParams<S> best_params;
  int best_epoch = 0;       // 1-based epoch that produced best_params
  double best_hr10 = 0;
  std::vector<HistoryRow> history;
  int epochs_run = 0;
};

// Per-epoch validation metric; injectable so model-selection logic can be
// tested with a mock. Returns (HR@10, NDCG@10).
template <typename S>
using ValMetricFn = std::function<std::pair<double, double>(const ModelParams<S>&, int epoch)>;

// Joint training with early stopping on validation HR@10. Optionally resumes
// from a prior state: pass the loaded Adam state and the number of epochs
// already completed; fresh runs pass start_epoch = 0.
template <typename S>
FitResult<S> fit(ModelParams<S>& params, const GraphSet<S>& graphs, const InteractionDataset& ds,
                 const TrainConfig& cfg, AdamState<S>& adam, int start_epoch = 0,
                 ValMetricFn<S> val_metric = {}, const FitResult<S>* resume_best = nullptr) {
  cfg.validate();
  if (ds.eval_users().empty()) throw std::runtime_error("fit: dataset has no evaluation users");
  if (!val_metric) {
    val_metric = [&](const ModelParams<S>& p, int) {
      const auto [eu, ei] = target_embeddings(p, graphs, cfg.model_settings());
      const EvalReport r = evaluate(eu, ei, ds, Split::kVal, {10});
      return std::make_pair(r.hr.at(10), r.ndcg.at(10));
    };
  }

  FitResult<S> result;
  if (resume_best != nullptr) {
    result.best_params = resume_best->best_params;
    result.best_epoch = resume_best->best_epoch;
    result.best_hr10 = resume_best->best_hr10;
  } else {
    result.best_hr10 = -1.0;
  }
  int since_improvement = 0;
  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    const EpochReport ep = train_epoch(params, graphs, ds, cfg, adam, epoch);
    const auto [hr10, ndcg10] = val_metric(params, epoch);
    HistoryRow row;
    row.epoch = epoch + 1;
    row.loss_bpr = ep.bpr;
    row.loss_gb = ep.gb;
    row.loss_gh = ep.gh;
    row.loss_bh = ep.bh;
    row.val_hr10 = hr10;
    row.val_ndcg10 = ndcg10;
    result.history.push_back(row);
    result.epochs_run = epoch + 1;
    if (hr10 > result.best_hr10) {
      result.best_hr10 = hr10;
      result.best_epoch = epoch + 1;
      result.best_params = params;
      since_improvement = 0;
    } else {
      ++since_improvement;
      if (since_improvement >= cfg.patience) break;
    }
  }
  if (result.best_epoch == 0) result.best_params = params;
  return result;
}

}  // namespace hecgcn
