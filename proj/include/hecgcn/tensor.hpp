#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hecgcn/parallel.hpp"

namespace hecgcn {

// Dense row-major matrix of reals. Everything numeric in this project --
// the autodiff engine, the model, the evaluator -- moves data through this
// one container. Scalar type S is float for training, double for checks.
template <typename S>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<S> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative dimension");
    data.assign(static_cast<size_t>(r) * static_cast<size_t>(c), S(0));
  }

  static Tensor filled(int r, int c, S v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  S* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const S* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  S& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  S at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }
};

namespace detail {

template <typename S>
inline void check_inner(int a, int b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": inner dimensions disagree (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail

// out = a * b (+ out if accumulate). Parallel over output rows; every output
// element is reduced in a fixed k-ascending order, so the result does not
// depend on the thread count.
template <typename S>
void gemm_nn(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>* out, bool accumulate = false) {
  detail::check_inner<S>(a.cols, b.rows, "gemm_nn");
  if (out->rows != a.rows || out->cols != b.cols) *out = Tensor<S>(a.rows, b.cols);
  if (!accumulate) out->fill(S(0));
  const int n = b.cols;
  parallel_for(a.rows, 16, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const S* arow = a.row(static_cast<int>(i));
      S* orow = out->row(static_cast<int>(i));
      for (int k = 0; k < a.cols; ++k) {
        const S aik = arow[k];
        if (aik == S(0)) continue;
        const S* brow = b.row(k);
        for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  });
}

// out = a * b^T
template <typename S>
void gemm_nt(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>* out, bool accumulate = false) {
  detail::check_inner<S>(a.cols, b.cols, "gemm_nt");
  if (out->rows != a.rows || out->cols != b.rows) *out = Tensor<S>(a.rows, b.rows);
  if (!accumulate) out->fill(S(0));
  parallel_for(a.rows, 16, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const S* arow = a.row(static_cast<int>(i));
      S* orow = out->row(static_cast<int>(i));
      for (int j = 0; j < b.rows; ++j) {
        const S* brow = b.row(j);
        S acc(0);
        for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
        orow[j] += acc;
      }
    }
  });
}

// out = a^T * b, with a: (k x m), b: (k x n), out: (m x n)
template <typename S>
void gemm_tn(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>* out, bool accumulate = false) {
  detail::check_inner<S>(a.rows, b.rows, "gemm_tn");
  if (out->rows != a.cols || out->cols != b.cols) *out = Tensor<S>(a.cols, b.cols);
  if (!accumulate) out->fill(S(0));
  const int n = b.cols;
  parallel_for(a.cols, 16, [&](int64_t r0, int64_t r1) {
    for (int64_t m = r0; m < r1; ++m) {
      S* orow = out->row(static_cast<int>(m));
      for (int k = 0; k < a.rows; ++k) {
        const S akm = a.at(k, static_cast<int>(m));
        if (akm == S(0)) continue;
        const S* brow = b.row(k);
        for (int j = 0; j < n; ++j) orow[j] += akm * brow[j];
      }
    }
  });
}

template <typename S>
S dot(const S* a, const S* b, int n) {
  S acc(0);
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace hecgcn
