#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hecgcn/csr.hpp"
#include "hecgcn/tensor.hpp"

namespace hecgcn::ad {

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Op : uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kAddN,
  kSub,
  kHadamard,
  kScale,
  kMatmul,
  kSpmm,
  kGatherRows,
  kRowPick,
  kRowSoftmax,
  kRowL2Normalize,
  kRowLogSumExp,
  kRowSum,
  kScaleRows,
  kHStack,
  kSliceCol,
  kExp,
  kLog,
  kLogSigmoid,
  kReduceSum,
  kStopGradient,
  kNone,  // sentinel for hooks
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kAddN: return "add_n";
    case Op::kSub: return "sub";
    case Op::kHadamard: return "hadamard";
    case Op::kScale: return "scale";
    case Op::kMatmul: return "matmul";
    case Op::kSpmm: return "spmm";
    case Op::kGatherRows: return "gather_rows";
    case Op::kRowPick: return "row_pick";
    case Op::kRowSoftmax: return "row_softmax";
    case Op::kRowL2Normalize: return "row_l2_normalize";
    case Op::kRowLogSumExp: return "row_logsumexp";
    case Op::kRowSum: return "row_sum";
    case Op::kScaleRows: return "scale_rows";
    case Op::kHStack: return "hstack";
    case Op::kSliceCol: return "slice_col";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kLogSigmoid: return "log_sigmoid";
    case Op::kReduceSum: return "reduce_sum";
    case Op::kStopGradient: return "stop_gradient";
    case Op::kNone: return "none";
  }
  return "?";
}

// kNone when unrecognized
inline Op op_from_name(std::string_view name) {
  for (int i = 0; i < static_cast<int>(Op::kNone); ++i) {
    const Op op = static_cast<Op>(i);
    if (name == op_name(op)) return op;
  }
  return Op::kNone;
}

struct TapeOptions {
  bool grad_enabled = true;
  // Test hooks for negative controls in the gradient checker:
  // stop_gradient's backward becomes a pass-through,
  bool break_stop_gradient = false;
  // and the named op's backward contributes nothing.
  Op drop_backward_for = Op::kNone;
};

// Reverse-mode tape. Forward ops append nodes in topological order; backward
// sweeps them in reverse. One tape serves one training step (single writer);
// independent tapes may run concurrently.
template <typename S>
class Tape {
 public:
  explicit Tape(TapeOptions opts = {}) : opts_(opts) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----

  // References external storage; `values` must outlive the tape.
  NodeId leaf(const Tensor<S>* values, bool requires_grad, std::string name = {}) {
    Node n;
    n.external = values;
    n.op = Op::kLeaf;
    n.requires_grad = requires_grad && opts_.grad_enabled;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    leaf_index_.emplace(static_cast<const void*>(values), id);
    return id;
  }

  NodeId constant(Tensor<S> v) {
    Node n;
    n.owned = std::move(v);
    n.op = Op::kConstant;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  // ---- elementwise / linear ----

  NodeId add(NodeId a, NodeId b) { return add_n({a, b}); }

  NodeId add_n(std::vector<NodeId> xs) {
    if (xs.empty()) throw std::invalid_argument("add_n: no inputs");
    const Tensor<S>& first = value(xs[0]);
    Tensor<S> out = first;
    for (size_t i = 1; i < xs.size(); ++i) {
      const Tensor<S>& v = value(xs[i]);
      check_same_shape(first, v, "add");
      for (size_t j = 0; j < out.size(); ++j) out.data[j] += v.data[j];
    }
    return push(std::move(out), xs.size() == 2 ? Op::kAdd : Op::kAddN, xs,
                [xs](Tape& t, const Tensor<S>& g) {
                  for (NodeId p : xs) t.accumulate(p, g);
                });
  }

  NodeId sub(NodeId a, NodeId b) {
    const Tensor<S>& va = value(a);
    const Tensor<S>& vb = value(b);
    check_same_shape(va, vb, "sub");
    Tensor<S> out = va;
    for (size_t j = 0; j < out.size(); ++j) out.data[j] -= vb.data[j];
    return push(std::move(out), Op::kSub, {a, b}, [a, b](Tape& t, const Tensor<S>& g) {
      t.accumulate(a, g);
      if (t.wants_grad(b)) {
        Tensor<S>& gb = t.grad_slot(b);
        for (size_t j = 0; j < g.size(); ++j) gb.data[j] -= g.data[j];
      }
    });
  }

  NodeId hadamard(NodeId a, NodeId b) {
    const Tensor<S>& va = value(a);
    const Tensor<S>& vb = value(b);
    check_same_shape(va, vb, "hadamard");
    Tensor<S> out = va;
    for (size_t j = 0; j < out.size(); ++j) out.data[j] *= vb.data[j];
    return push(std::move(out), Op::kHadamard, {a, b}, [a, b](Tape& t, const Tensor<S>& g) {
      if (t.wants_grad(a)) {
        const Tensor<S>& vb2 = t.value(b);
        Tensor<S>& ga = t.grad_slot(a);
        for (size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j] * vb2.data[j];
      }
      if (t.wants_grad(b)) {
        const Tensor<S>& va2 = t.value(a);
        Tensor<S>& gb = t.grad_slot(b);
        for (size_t j = 0; j < g.size(); ++j) gb.data[j] += g.data[j] * va2.data[j];
      }
    });
  }

  NodeId scale(NodeId a, S c) {
    Tensor<S> out = value(a);
    for (auto& v : out.data) v *= c;
    return push(std::move(out), Op::kScale, {a}, [a, c](Tape& t, const Tensor<S>& g) {
      if (!t.wants_grad(a)) return;
      Tensor<S>& ga = t.grad_slot(a);
      for (size_t j = 0; j < g.size(); ++j) ga.data[j] += c * g.data[j];
    });
  }

  NodeId div_scalar(NodeId a, S c) {
    if (c == S(0)) throw std::invalid_argument("div_scalar: division by zero");
    return scale(a, S(1) / c);
  }

  // c = op(a) * op(b) where op is optional transposition
  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false) {
    if (trans_a && trans_b) throw std::invalid_argument("matmul: double transpose unsupported");
    const Tensor<S>& va = value(a);
    const Tensor<S>& vb = value(b);
    const int ar = trans_a ? va.cols : va.rows;
    const int ac = trans_a ? va.rows : va.cols;
    const int br = trans_b ? vb.cols : vb.rows;
    const int bc = trans_b ? vb.rows : vb.cols;
    if (ac != br) {
      throw std::invalid_argument(std::string("matmul: shape mismatch (") + va.shape_str() +
                                  (trans_a ? "^T" : "") + " * " + vb.shape_str() +
                                  (trans_b ? "^T" : "") + ")");
    }
    Tensor<S> out(ar, bc);
    if (trans_a) {
      gemm_tn(va, vb, &out);
    } else if (trans_b) {
      gemm_nt(va, vb, &out);
    } else {
      gemm_nn(va, vb, &out);
    }
    return push(std::move(out), Op::kMatmul, {a, b},
                [a, b, trans_a, trans_b](Tape& t, const Tensor<S>& g) {
                  const Tensor<S>& va2 = t.value(a);
                  const Tensor<S>& vb2 = t.value(b);
                  if (!trans_a && !trans_b) {
                    if (t.wants_grad(a)) gemm_nt(g, vb2, &t.grad_slot(a), true);
                    if (t.wants_grad(b)) gemm_tn(va2, g, &t.grad_slot(b), true);
                  } else if (trans_b) {  // c = a * b^T
                    if (t.wants_grad(a)) gemm_nn(g, vb2, &t.grad_slot(a), true);
                    if (t.wants_grad(b)) gemm_tn(g, va2, &t.grad_slot(b), true);
                  } else {  // c = a^T * b
                    if (t.wants_grad(a)) gemm_nt(vb2, g, &t.grad_slot(a), true);
                    if (t.wants_grad(b)) gemm_nn(va2, g, &t.grad_slot(b), true);
                  }
                });
  }

  // y = fwd * x. `transposed` is the explicitly stored transpose of `fwd`,
  // used by the backward pass; both must outlive the tape.
  NodeId spmm(const CsrMatrix<S>* fwd, const CsrMatrix<S>* transposed, NodeId x) {
    const Tensor<S>& vx = value(x);
    if (fwd->cols != vx.rows) {
      throw std::invalid_argument("spmm: shape mismatch (" + std::to_string(fwd->rows) + "x" +
                                  std::to_string(fwd->cols) + " * " + vx.shape_str() + ")");
    }
    if (transposed->rows != fwd->cols || transposed->cols != fwd->rows) {
      throw std::invalid_argument("spmm: transpose orientation has wrong shape");
    }
    Tensor<S> out;
    hecgcn::spmm(*fwd, vx, &out);
    return push(std::move(out), Op::kSpmm, {x}, [transposed, x](Tape& t, const Tensor<S>& g) {
      if (t.wants_grad(x)) hecgcn::spmm(*transposed, g, &t.grad_slot(x), true);
    });
  }

  // ---- indexing ----

  NodeId gather_rows(NodeId x, std::vector<int32_t> ids) {
    const Tensor<S>& vx = value(x);
    Tensor<S> out(static_cast<int>(ids.size()), vx.cols);
    for (size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || ids[r] >= vx.rows) {
        throw std::out_of_range("gather_rows: id " + std::to_string(ids[r]) + " outside [0," +
                                std::to_string(vx.rows) + ")");
      }
      std::copy_n(vx.row(ids[r]), vx.cols, out.row(static_cast<int>(r)));
    }
    return push(std::move(out), Op::kGatherRows, {x},
                [x, ids = std::move(ids)](Tape& t, const Tensor<S>& g) {
                  if (!t.wants_grad(x)) return;
                  Tensor<S>& gx = t.grad_slot(x);
                  for (size_t r = 0; r < ids.size(); ++r) {
                    S* dst = gx.row(ids[r]);
                    const S* src = g.row(static_cast<int>(r));
                    for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
                  }
                });
  }

  // out[r,0] = x[r, cols[r]]
  NodeId row_pick(NodeId x, std::vector<int32_t> cols) {
    const Tensor<S>& vx = value(x);
    if (static_cast<int>(cols.size()) != vx.rows) {
      throw std::invalid_argument("row_pick: need one column id per row");
    }
    Tensor<S> out(vx.rows, 1);
    for (int r = 0; r < vx.rows; ++r) {
      if (cols[r] < 0 || cols[r] >= vx.cols) {
        throw std::out_of_range("row_pick: column " + std::to_string(cols[r]) + " outside [0," +
                                std::to_string(vx.cols) + ")");
      }
      out.at(r, 0) = vx.at(r, cols[r]);
    }
    return push(std::move(out), Op::kRowPick, {x},
                [x, cols = std::move(cols)](Tape& t, const Tensor<S>& g) {
                  if (!t.wants_grad(x)) return;
                  Tensor<S>& gx = t.grad_slot(x);
                  for (int r = 0; r < g.rows; ++r) gx.at(r, cols[r]) += g.at(r, 0);
                });
  }

  // ---- row-wise nonlinearities ----

  // softmax(temperature_scale * x) per row, max-subtracted for stability
  NodeId row_softmax(NodeId x, S temperature_scale = S(1)) {
    const Tensor<S>& vx = value(x);
    Tensor<S> out(vx.rows, vx.cols);
    for (int r = 0; r < vx.rows; ++r) {
      const S* xr = vx.row(r);
      S* yr = out.row(r);
      S m = -std::numeric_limits<S>::infinity();
      for (int c = 0; c < vx.cols; ++c) {
        const S z = temperature_scale * xr[c];
        if (std::isnan(z)) throw std::domain_error("row_softmax: NaN input");
        m = std::max(m, z);
      }
      S denom(0);
      for (int c = 0; c < vx.cols; ++c) {
        yr[c] = std::exp(temperature_scale * xr[c] - m);
        denom += yr[c];
      }
      for (int c = 0; c < vx.cols; ++c) yr[c] /= denom;
    }
    const NodeId self = next_id();
    return push(std::move(out), Op::kRowSoftmax, {x},
                [x, self, temperature_scale](Tape& t, const Tensor<S>& g) {
                  if (!t.wants_grad(x)) return;
                  const Tensor<S>& y = t.value(self);
                  Tensor<S>& gx = t.grad_slot(x);
                  for (int r = 0; r < y.rows; ++r) {
                    const S* yr = y.row(r);
                    const S* gr = g.row(r);
                    S inner(0);
                    for (int c = 0; c < y.cols; ++c) inner += gr[c] * yr[c];
                    S* gxr = gx.row(r);
                    for (int c = 0; c < y.cols; ++c) {
                      gxr[c] += temperature_scale * yr[c] * (gr[c] - inner);
                    }
                  }
                });
  }

  // Each nonzero row scaled to unit L2 norm; zero rows stay zero and pass no
  // gradient. Denominator carries a 1e-12 epsilon.
  NodeId row_l2_normalize(NodeId x) {
    const Tensor<S>& vx = value(x);
    Tensor<S> out(vx.rows, vx.cols);
    std::vector<S> norms(vx.rows);
    for (int r = 0; r < vx.rows; ++r) {
      const S* xr = vx.row(r);
      S sq(0);
      for (int c = 0; c < vx.cols; ++c) sq += xr[c] * xr[c];
      const S n = std::sqrt(sq);
      norms[r] = n;
      if (n == S(0)) continue;
      const S inv = S(1) / (n + S(1e-12));
      S* yr = out.row(r);
      for (int c = 0; c < vx.cols; ++c) yr[c] = xr[c] * inv;
    }
    return push(std::move(out), Op::kRowL2Normalize, {x},
                [x, norms = std::move(norms)](Tape& t, const Tensor<S>& g) {
                  if (!t.wants_grad(x)) return;
                  const Tensor<S>& vx2 = t.value(x);
                  Tensor<S>& gx = t.grad_slot(x);
                  for (int r = 0; r < vx2.rows; ++r) {
                    const S n = norms[r];
                    if (n == S(0)) continue;
                    const S* xr = vx2.row(r);
                    const S* gr = g.row(r);
                    const S w = S(1) / (n + S(1e-12));
                    S vg(0);
                    for (int c = 0; c < vx2.cols; ++c) vg += xr[c] * gr[c];
                    const S coef = vg / (n * (n + S(1e-12)) * (n + S(1e-12)));
                    S* gxr = gx.row(r);
                    for (int c = 0; c < vx2.cols; ++c) gxr[c] += gr[c] * w - xr[c] * coef;
                  }
                });
  }

  // out[r,0] = log(sum_c exp(x[r,c])), max-subtracted
  NodeId row_logsumexp(NodeId x) {
    const Tensor<S>& vx = value(x);
    Tensor<S> out(vx.rows, 1);
    for (int r = 0; r < vx.rows; ++r) {
      const S* xr = vx.row(r);
      S m = -std::numeric_limits<S>::infinity();
      for (int c = 0; c < vx.cols; ++c) m = std::max(m, xr[c]);
      S acc(0);
      for (int c = 0; c < vx.cols; ++c) acc += std::exp(xr[c] - m);
      out.at(r, 0) = m + std::log(acc);
    }
    const NodeId self = next_id();
    return push(std::move(out), Op::kRowLogSumExp, {x},
                [x, self](Tape& t, const Tensor<S>& g) {
                  if (!t.wants_grad(x)) return;
                  const Tensor<S>& vx2 = t.value(x);
                  const Tensor<S>& y = t.value(self);
                  Tensor<S>& gx = t.grad_slot(x);
                  for (int r = 0; r < vx2.rows; ++r) {
                    const S* xr = vx2.row(r);
                    const S lse = y.at(r, 0);
                    const S gr = g.at(r, 0);
                    S* gxr = gx.row(r);
                    for (int c = 0; c < vx2.cols; ++c) gxr[c] += gr * std::exp(xr[c] - lse);
                  }
                });
  }

  NodeId row_sum(NodeId x) {
    const Tensor<S>& vx = value(x);
    Tensor<S> out(vx.rows, 1);
    for (int r = 0; r < vx.rows; ++r) {
      const S* xr = vx.row(r);
      S acc(0);
      for (int c = 0; c < vx.cols; ++c) acc += xr[c];
      out.at(r, 0) = acc;
    }
    return push(std::move(out), Op::kRowSum, {x}, [x](Tape& t, const Tensor<S>& g) {
      if (!t.wants_grad(x)) return;
      Tensor<S>& gx = t.grad_slot(x);
      for (int r = 0; r < gx.rows; ++r) {
        const S gr = g.at(r, 0);
        S* gxr = gx.row(r);
        for (int c = 0; c < gx.cols; ++c) gxr[c] += gr;
      }
    });
  }

  // out[r,c] = x[r,c] * w[r,0]
  NodeId scale_rows(NodeId x, NodeId w) {
    const Tensor<S>& vx = value(x);
    const Tensor<S>& vw = value(w);
    if (vw.cols != 1 || vw.rows != vx.rows) {
      throw std::invalid_argument("scale_rows: weight must be " + std::to_string(vx.rows) +
                                  "x1, got " + vw.shape_str());
    }
    Tensor<S> out(vx.rows, vx.cols);
    for (int r = 0; r < vx.rows; ++r) {
      const S wr = vw.at(r, 0);
      const S* xr = vx.row(r);
      S* yr = out.row(r);
      for (int c = 0; c < vx.cols; ++c) yr[c] = xr[c] * wr;
    }
    return push(std::move(out), Op::kScaleRows, {x, w}, [x, w](Tape& t, const Tensor<S>& g) {
      const Tensor<S>& vx2 = t.value(x);
      const Tensor<S>& vw2 = t.value(w);
      if (t.wants_grad(x)) {
        Tensor<S>& gx = t.grad_slot(x);
        for (int r = 0; r < vx2.rows; ++r) {
          const S wr = vw2.at(r, 0);
          const S* gr = g.row(r);
          S* gxr = gx.row(r);
          for (int c = 0; c < vx2.cols; ++c) gxr[c] += gr[c] * wr;
        }
      }
      if (t.wants_grad(w)) {
        Tensor<S>& gw = t.grad_slot(w);
        for (int r = 0; r < vx2.rows; ++r) {
          const S* gr = g.row(r);
          const S* xr = vx2.row(r);
          S acc(0);
          for (int c = 0; c < vx2.cols; ++c) acc += gr[c] * xr[c];
          gw.at(r, 0) += acc;
        }
      }
    });
  }

  // column vectors (n x 1) side by side -> (n x K)
  NodeId hstack(std::vector<NodeId> cols) {
    if (cols.empty()) throw std::invalid_argument("hstack: no inputs");
    const int n = value(cols[0]).rows;
    for (NodeId c : cols) {
      const Tensor<S>& v = value(c);
      if (v.cols != 1 || v.rows != n) {
        throw std::invalid_argument("hstack: inputs must all be " + std::to_string(n) +
                                    "x1, got " + v.shape_str());
      }
    }
    Tensor<S> out(n, static_cast<int>(cols.size()));
    for (size_t j = 0; j < cols.size(); ++j) {
      const Tensor<S>& v = value(cols[j]);
      for (int r = 0; r < n; ++r) out.at(r, static_cast<int>(j)) = v.at(r, 0);
    }
    return push(std::move(out), Op::kHStack, cols, [cols](Tape& t, const Tensor<S>& g) {
      for (size_t j = 0; j < cols.size(); ++j) {
        if (!t.wants_grad(cols[j])) continue;
        Tensor<S>& gc = t.grad_slot(cols[j]);
        for (int r = 0; r < g.rows; ++r) gc.at(r, 0) += g.at(r, static_cast<int>(j));
      }
    });
  }

  NodeId slice_col(NodeId x, int col) {
    const Tensor<S>& vx = value(x);
    if (col < 0 || col >= vx.cols) {
      throw std::out_of_range("slice_col: column " + std::to_string(col) + " outside [0," +
                              std::to_string(vx.cols) + ")");
    }
    Tensor<S> out(vx.rows, 1);
    for (int r = 0; r < vx.rows; ++r) out.at(r, 0) = vx.at(r, col);
    return push(std::move(out), Op::kSliceCol, {x}, [x, col](Tape& t, const Tensor<S>& g) {
      if (!t.wants_grad(x)) return;
      Tensor<S>& gx = t.grad_slot(x);
      for (int r = 0; r < g.rows; ++r) gx.at(r, col) += g.at(r, 0);
    });
  }

  // ---- scalar-ish elementwise ----

  NodeId exp(NodeId x) {
    Tensor<S> out = value(x);
    for (auto& v : out.data) v = std::exp(v);
    const NodeId self = next_id();
    return push(std::move(out), Op::kExp, {x}, [x, self](Tape& t, const Tensor<S>& g) {
      if (!t.wants_grad(x)) return;
      const Tensor<S>& y = t.value(self);
      Tensor<S>& gx = t.grad_slot(x);
      for (size_t j = 0; j < g.size(); ++j) gx.data[j] += g.data[j] * y.data[j];
    });
  }

  NodeId log(NodeId x) {
    Tensor<S> out = value(x);
    for (auto& v : out.data) v = std::log(v);
    return push(std::move(out), Op::kLog, {x}, [x](Tape& t, const Tensor<S>& g) {
      if (!t.wants_grad(x)) return;
      const Tensor<S>& vx2 = t.value(x);
      Tensor<S>& gx = t.grad_slot(x);
      for (size_t j = 0; j < g.size(); ++j) gx.data[j] += g.data[j] / vx2.data[j];
    });
  }

  // log(sigmoid(x)) computed as -softplus(-x); exact down to the asymptote
  NodeId log_sigmoid(NodeId x) {
    Tensor<S> out = value(x);
    for (auto& v : out.data) {
      const S t = -v;
      v = -(std::max(t, S(0)) + std::log1p(std::exp(-std::abs(t))));
    }
    return push(std::move(out), Op::kLogSigmoid, {x}, [x](Tape& t, const Tensor<S>& g) {
      if (!t.wants_grad(x)) return;
      const Tensor<S>& vx2 = t.value(x);
      Tensor<S>& gx = t.grad_slot(x);
      for (size_t j = 0; j < g.size(); ++j) {
        const S v = vx2.data[j];
        // d/dx log sigmoid(x) = sigmoid(-x)
        const S sneg = v >= S(0) ? std::exp(-v) / (S(1) + std::exp(-v))
                                 : S(1) / (S(1) + std::exp(v));
        gx.data[j] += g.data[j] * sneg;
      }
    });
  }

  NodeId reduce_sum(NodeId x) {
    const Tensor<S>& vx = value(x);
    Tensor<S> out(1, 1);
    S acc(0);
    for (const auto& v : vx.data) acc += v;
    out.at(0, 0) = acc;
    return push(std::move(out), Op::kReduceSum, {x}, [x](Tape& t, const Tensor<S>& g) {
      if (!t.wants_grad(x)) return;
      const S gv = g.at(0, 0);
      Tensor<S>& gx = t.grad_slot(x);
      for (auto& v : gx.data) v += gv;
    });
  }

  // Identity forward, zero backward. Forward values can be recorded and
  // replayed so finite differences can evaluate the detached function.
  NodeId stop_gradient(NodeId x) {
    Tensor<S> out;
    if (frozen_stops_ != nullptr) {
      if (stops_seen_ >= frozen_stops_->size()) {
        throw std::logic_error("stop_gradient: replay log exhausted (non-deterministic build?)");
      }
      out = (*frozen_stops_)[stops_seen_];
    } else {
      out = value(x);
    }
    ++stops_seen_;
    if (record_stops_) stop_log_.push_back(out);
    if (opts_.break_stop_gradient) {
      // hook: rule removed, gradient passes through untouched
      return push(std::move(out), Op::kStopGradient, {x},
                  [x](Tape& t, const Tensor<S>& g) { t.accumulate(x, g); });
    }
    Node n;
    n.owned = std::move(out);
    n.op = Op::kStopGradient;
    n.requires_grad = false;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  // ---- access ----

  const Tensor<S>& value(NodeId id) const {
    const Node& n = node(id);
    return n.external != nullptr ? *n.external : n.owned;
  }

  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  bool has_grad(NodeId id) const { return !node(id).grad.empty(); }

  const Tensor<S>& grad(NodeId id) const {
    const Node& n = node(id);
    if (n.grad.empty()) throw std::logic_error("grad: node has no gradient (run backward first)");
    return n.grad;
  }

  Tensor<S> grad_or_zero(NodeId id) const {
    const Node& n = node(id);
    if (!n.grad.empty()) return n.grad;
    const Tensor<S>& v = value(id);
    return Tensor<S>(v.rows, v.cols);
  }

  NodeId find_leaf(const void* external) const {
    auto it = leaf_index_.find(external);
    return it == leaf_index_.end() ? kNoNode : it->second;
  }

  const std::string& leaf_name(NodeId id) const { return node(id).name; }
  size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar root. Leaf gradients accumulate across calls;
  // intermediate gradients are rebuilt each call.
  void backward(NodeId root) {
    const Tensor<S>& rv = value(root);
    if (rv.rows != 1 || rv.cols != 1) {
      throw std::logic_error("backward: root must be a 1x1 scalar, got " + rv.shape_str());
    }
    if (!opts_.grad_enabled) throw std::logic_error("backward: tape built with grad disabled");
    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
      Node& n = nodes_[id];
      if (n.op != Op::kLeaf && !n.grad.empty()) n.grad.fill(S(0));
    }
    grad_slot(root).at(0, 0) += S(1);
    for (NodeId id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.empty() || !n.backward) continue;
      if (n.op == opts_.drop_backward_for) continue;
      n.backward(*this, n.grad);
    }
  }

  void zero_grads() {
    for (auto& n : nodes_) n.grad = Tensor<S>();
  }

  // ---- finite-difference support ----
  void record_stops(bool on) { record_stops_ = on; }
  std::vector<Tensor<S>> take_stop_log() { return std::move(stop_log_); }
  void set_frozen_stops(const std::vector<Tensor<S>>* frozen) { frozen_stops_ = frozen; }

  bool wants_grad(NodeId id) const { return node(id).requires_grad; }

  Tensor<S>& grad_slot(NodeId id) {
    Node& n = nodes_.at(static_cast<size_t>(id));
    if (n.grad.empty()) {
      const Tensor<S>& v = value(id);
      n.grad = Tensor<S>(v.rows, v.cols);
    }
    return n.grad;
  }

  void accumulate(NodeId id, const Tensor<S>& g) {
    if (!wants_grad(id)) return;
    Tensor<S>& dst = grad_slot(id);
    for (size_t j = 0; j < g.size(); ++j) dst.data[j] += g.data[j];
  }

 private:
  struct Node {
    Tensor<S> owned;
    const Tensor<S>* external = nullptr;
    Tensor<S> grad;
    Op op = Op::kLeaf;
    bool requires_grad = false;
    std::string name;
    std::function<void(Tape&, const Tensor<S>&)> backward;
  };

  const Node& node(NodeId id) const { return nodes_.at(static_cast<size_t>(id)); }
  NodeId next_id() const { return static_cast<NodeId>(nodes_.size()); }

  static void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
    if (!a.same_shape(b)) {
      throw std::invalid_argument(std::string(what) + ": shape mismatch (" + a.shape_str() +
                                  " vs " + b.shape_str() + ")");
    }
  }

  NodeId push(Tensor<S> out, Op op, const std::vector<NodeId>& parents,
              std::function<void(Tape&, const Tensor<S>&)> bw) {
    Node n;
    n.owned = std::move(out);
    n.op = op;
    bool req = false;
    for (NodeId p : parents) req = req || nodes_.at(static_cast<size_t>(p)).requires_grad;
    n.requires_grad = req && opts_.grad_enabled;
    if (n.requires_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  TapeOptions opts_;
  std::vector<Node> nodes_;
  std::unordered_map<const void*, NodeId> leaf_index_;
  bool record_stops_ = false;
  std::vector<Tensor<S>> stop_log_;
  const std::vector<Tensor<S>>* frozen_stops_ = nullptr;
  size_t stops_seen_ = 0;
};

// ---- gradient checking ----

template <typename S>
struct GradCheckLeaf {
  std::string name;
  Tensor<S>* tensor;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_leaf;
  int worst_row = -1;
  int worst_col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass(double tol) const { return max_rel_err < tol; }
};

// Central-difference check of the scalar built by `build` against the tape's
// analytic gradients. stop_gradient values from the first pass are frozen
// into the perturbed evaluations, so the oracle differentiates the detached
// function -- exactly what the analytic gradient claims to be.
template <typename S>
GradCheckReport finite_diff_check(const std::function<NodeId(Tape<S>&)>& build,
                                  const std::vector<GradCheckLeaf<S>>& leaves, double h = 1e-5,
                                  TapeOptions opts = {}) {
  opts.grad_enabled = true;
  Tape<S> tape(opts);
  tape.record_stops(true);
  const NodeId root = build(tape);
  tape.backward(root);

  std::vector<Tensor<S>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    const NodeId id = tape.find_leaf(leaf.tensor);
    if (id == kNoNode) {
      analytic.emplace_back(leaf.tensor->rows, leaf.tensor->cols);
    } else {
      analytic.push_back(tape.grad_or_zero(id));
    }
  }
  const std::vector<Tensor<S>> stop_log = tape.take_stop_log();

  TapeOptions fwd_opts = opts;
  fwd_opts.grad_enabled = false;
  auto eval = [&]() -> double {
    Tape<S> t(fwd_opts);
    t.set_frozen_stops(&stop_log);
    const NodeId r = build(t);
    return static_cast<double>(t.value(r).at(0, 0));
  };

  GradCheckReport report;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor<S>& theta = *leaves[li].tensor;
    for (int r = 0; r < theta.rows; ++r) {
      for (int c = 0; c < theta.cols; ++c) {
        const S saved = theta.at(r, c);
        theta.at(r, c) = saved + static_cast<S>(h);
        const double f_plus = eval();
        theta.at(r, c) = saved - static_cast<S>(h);
        const double f_minus = eval();
        theta.at(r, c) = saved;
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double a = static_cast<double>(analytic[li].at(r, c));
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_leaf = leaves[li].name;
          report.worst_row = r;
          report.worst_col = c;
          report.analytic = a;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace hecgcn::ad
