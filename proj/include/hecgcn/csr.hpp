#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hecgcn/parallel.hpp"
#include "hecgcn/tensor.hpp"

namespace hecgcn {

// Compressed sparse row matrix. Column indices are strictly increasing within
// each row; this fixes the reduction order of every product, which is what
// makes transposed and direct evaluations agree bitwise.
template <typename S>
struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int64_t> row_ptr;  // size rows + 1
  std::vector<int32_t> col_idx;  // size nnz
  std::vector<S> values;         // size nnz

  CsrMatrix() = default;
  CsrMatrix(int r, int c) : rows(r), cols(c), row_ptr(static_cast<size_t>(r) + 1, 0) {}

  int64_t nnz() const { return static_cast<int64_t>(col_idx.size()); }

  Tensor<S> to_dense() const {
    Tensor<S> d(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int64_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) d.at(r, col_idx[p]) = values[p];
    }
    return d;
  }
};

// Builds a CSR matrix from (row, col, value) triples. Entries are counted,
// bucketed, then sorted per row by column index.
template <typename S>
CsrMatrix<S> csr_from_triples(int rows, int cols,
                              std::vector<std::tuple<int32_t, int32_t, S>> triples) {
  CsrMatrix<S> m(rows, cols);
  for (const auto& [r, c, v] : triples) {
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw std::out_of_range("csr_from_triples: index (" + std::to_string(r) + "," +
                              std::to_string(c) + ") outside " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
    (void)v;
    m.row_ptr[static_cast<size_t>(r) + 1]++;
  }
  for (int r = 0; r < rows; ++r) m.row_ptr[static_cast<size_t>(r) + 1] += m.row_ptr[r];
  m.col_idx.resize(triples.size());
  m.values.resize(triples.size());
  std::vector<int64_t> cursor(m.row_ptr.begin(), m.row_ptr.end() - 1);
  std::sort(triples.begin(), triples.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    return std::get<1>(a) < std::get<1>(b);
  });
  for (const auto& [r, c, v] : triples) {
    const int64_t p = cursor[r]++;
    m.col_idx[p] = c;
    m.values[p] = v;
  }
  return m;
}

// out = a * x (+ out if accumulate), x dense (a.cols x d). Parallel over rows;
// each output row is reduced sequentially in stored order.
template <typename S>
void spmm(const CsrMatrix<S>& a, const Tensor<S>& x, Tensor<S>* out, bool accumulate = false) {
  if (a.cols != x.rows) {
    throw std::invalid_argument("spmm: inner dimensions disagree (" + std::to_string(a.cols) +
                                " vs " + std::to_string(x.rows) + ")");
  }
  if (out->rows != a.rows || out->cols != x.cols) *out = Tensor<S>(a.rows, x.cols);
  if (!accumulate) out->fill(S(0));
  const int d = x.cols;
  parallel_for(a.rows, 64, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      S* orow = out->row(static_cast<int>(r));
      for (int64_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
        const S w = a.values[p];
        const S* xrow = x.row(a.col_idx[p]);
        for (int j = 0; j < d; ++j) orow[j] += w * xrow[j];
      }
    }
  });
}

}  // namespace hecgcn
