#pragma once

// Straight-line dense reference for the full model and loss, kept deliberately
// independent of the engine: plain nested vectors, explicit dependency
// matrices, no shared kernels. Used as the equality oracle in tests.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

namespace refmodel {

using Mat = std::vector<std::vector<double>>;  // row major

inline Mat zeros(int r, int c) { return Mat(r, std::vector<double>(c, 0.0)); }

struct Edges {
  std::vector<std::pair<int, int>> list;  // (user, item)
};

struct Inputs {
  int num_users = 0, num_items = 0, d = 0, layers = 0;
  Mat user_emb0, item_emb0;            // layer-0 tables
  std::vector<Mat> w_user, w_item;     // per behavior, d x S
  std::vector<Edges> behavior_edges;   // cascade order
};

struct ForwardRef {
  Mat eg_user, eg_item;
  std::vector<Mat> eb_user, eb_item;
  std::vector<Mat> eh_user, eh_item;
  std::vector<Mat> eint_user, eint_item;
  std::vector<Mat> ebar_user, ebar_item;
};

inline Mat matmul(const Mat& a, const Mat& b) {
  const int m = static_cast<int>(a.size());
  const int k = static_cast<int>(b.size());
  const int n = static_cast<int>(b[0].size());
  Mat c = zeros(m, n);
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      for (int j = 0; j < n; ++j) c[i][j] += a[i][kk] * b[kk][j];
    }
  }
  return c;
}

// one graph-convolution layer in each direction, straight off the formula
inline void propagate_once(const Edges& e, int num_users, int num_items, const Mat& users_in,
                           const Mat& items_in, Mat* users_out, Mat* items_out) {
  std::vector<int> du(num_users, 0), di(num_items, 0);
  for (const auto& [u, i] : e.list) {
    du[u]++;
    di[i]++;
  }
  const int d = static_cast<int>(users_in[0].size());
  *users_out = zeros(num_users, d);
  *items_out = zeros(num_items, d);
  for (const auto& [u, i] : e.list) {
    const double coef = 1.0 / (std::sqrt(static_cast<double>(du[u])) *
                               std::sqrt(static_cast<double>(di[i])));
    for (int c = 0; c < d; ++c) {
      (*users_out)[u][c] += coef * items_in[i][c];
      (*items_out)[i][c] += coef * users_in[u][c];
    }
  }
}

inline void propagate_sum(const Edges& e, int num_users, int num_items, const Mat& users0,
                          const Mat& items0, int layers, Mat* users_sum, Mat* items_sum) {
  Mat cu = users0, ci = items0;
  *users_sum = users0;
  *items_sum = items0;
  for (int l = 1; l <= layers; ++l) {
    Mat nu, ni;
    propagate_once(e, num_users, num_items, cu, ci, &nu, &ni);
    for (int r = 0; r < num_users; ++r) {
      for (size_t c = 0; c < nu[r].size(); ++c) (*users_sum)[r][c] += nu[r][c];
    }
    for (int r = 0; r < num_items; ++r) {
      for (size_t c = 0; c < ni[r].size(); ++c) (*items_sum)[r][c] += ni[r][c];
    }
    cu = nu;
    ci = ni;
  }
}

// hypergraph output via the explicit n x n dependency matrix
inline Mat hyper_output(const Mat& eb, const Mat& w) {
  const Mat h = matmul(eb, w);  // n x S
  const int n = static_cast<int>(h.size());
  const int s = static_cast<int>(h[0].size());
  Mat dep = zeros(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < s; ++k) dep[i][j] += h[i][k] * h[j][k];
    }
  }
  return matmul(dep, eb);
}

inline ForwardRef forward(const Inputs& in) {
  ForwardRef out;
  Edges global;
  {
    std::set<std::pair<int, int>> uni;
    for (const auto& e : in.behavior_edges) {
      for (const auto& p : e.list) uni.insert(p);
    }
    global.list.assign(uni.begin(), uni.end());
  }
  propagate_sum(global, in.num_users, in.num_items, in.user_emb0, in.item_emb0, in.layers,
                &out.eg_user, &out.eg_item);

  const int K = static_cast<int>(in.behavior_edges.size());
  Mat prev_u = out.eg_user, prev_i = out.eg_item;
  for (int k = 0; k < K; ++k) {
    Mat ebu, ebi;
    propagate_sum(in.behavior_edges[k], in.num_users, in.num_items, prev_u, prev_i, in.layers,
                  &ebu, &ebi);
    const Mat ehu = hyper_output(ebu, in.w_user[k]);
    const Mat ehi = hyper_output(ebi, in.w_item[k]);
    Mat intu = zeros(in.num_users, in.d), inti = zeros(in.num_items, in.d);
    for (int r = 0; r < in.num_users; ++r) {
      for (int c = 0; c < in.d; ++c) intu[r][c] = ebu[r][c] + ehu[r][c] + prev_u[r][c];
    }
    for (int r = 0; r < in.num_items; ++r) {
      for (int c = 0; c < in.d; ++c) inti[r][c] = ebi[r][c] + ehi[r][c] + prev_i[r][c];
    }
    out.eb_user.push_back(ebu);
    out.eb_item.push_back(ebi);
    out.eh_user.push_back(ehu);
    out.eh_item.push_back(ehi);
    out.eint_user.push_back(intu);
    out.eint_item.push_back(inti);
    prev_u = intu;
    prev_i = inti;
  }

  // behavior mutual enhancement, one node at a time
  auto enhance = [&](const std::vector<Mat>& eint, int n) {
    std::vector<Mat> tilde(K, zeros(n, in.d));
    for (int r = 0; r < n; ++r) {
      for (int k = 0; k < K; ++k) {
        std::vector<double> logits(K, 0.0);
        for (int j = 0; j < K; ++j) {
          for (int c = 0; c < in.d; ++c) logits[j] += eint[k][r][c] * eint[j][r][c];
          logits[j] /= std::sqrt(static_cast<double>(in.d));
        }
        double m = logits[0];
        for (double v : logits) m = std::max(m, v);
        double denom = 0;
        std::vector<double> w(K);
        for (int j = 0; j < K; ++j) {
          w[j] = std::exp(logits[j] - m);
          denom += w[j];
        }
        for (int j = 0; j < K; ++j) {
          const double weight = w[j] / denom;
          for (int c = 0; c < in.d; ++c) tilde[k][r][c] += weight * eint[j][r][c];
        }
      }
    }
    return tilde;
  };
  const auto tilde_u = enhance(out.eint_user, in.num_users);
  const auto tilde_i = enhance(out.eint_item, in.num_items);
  for (int k = 0; k < K; ++k) {
    Mat bu = zeros(in.num_users, in.d), bi = zeros(in.num_items, in.d);
    for (int r = 0; r < in.num_users; ++r) {
      for (int c = 0; c < in.d; ++c) bu[r][c] = tilde_u[k][r][c] + out.eg_user[r][c];
    }
    for (int r = 0; r < in.num_items; ++r) {
      for (int c = 0; c < in.d; ++c) bi[r][c] = tilde_i[k][r][c] + out.eg_item[r][c];
    }
    out.ebar_user.push_back(bu);
    out.ebar_item.push_back(bi);
  }
  return out;
}

inline double score(const ForwardRef& f, int k, int u, int i) {
  double s = 0;
  for (size_t c = 0; c < f.ebar_user[k][u].size(); ++c) s += f.ebar_user[k][u][c] * f.ebar_item[k][i][c];
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (size_t c = 0; c < a.size(); ++c) {
    ab += a[c] * b[c];
    aa += a[c] * a[c];
    bb += b[c] * b[c];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return (ab / (na + 1e-12)) / (nb + 1e-12);
}

// InfoNCE with explicit loops; anchors[b]'s positive is pool[pos[b]]
inline double info_nce(const Mat& anchors, const Mat& pool, const std::vector<int>& pos,
                       double tau) {
  double loss = 0;
  for (size_t b = 0; b < anchors.size(); ++b) {
    double denom = 0;
    for (const auto& v : pool) denom += std::exp(cosine(anchors[b], v) / tau);
    const double num = std::exp(cosine(anchors[b], pool[pos[b]]) / tau);
    loss += -std::log(num / denom);
  }
  return loss;
}

inline double bpr(const ForwardRef& f, int k, const std::vector<int>& users,
                  const std::vector<int>& pos, const std::vector<int>& neg) {
  double loss = 0;
  for (size_t b = 0; b < users.size(); ++b) {
    const double diff = score(f, k, users[b], pos[b]) - score(f, k, users[b], neg[b]);
    loss += -std::log(1.0 / (1.0 + std::exp(-diff)));
  }
  return loss;
}

struct LossParts {
  double bpr_total = 0, gb = 0, gh = 0, bh = 0, reg = 0, total = 0;
};

struct LossSpec {
  double alpha = 0, lambda1 = 0, lambda2 = 0, lambda3 = 0, beta = 0, tau = 0.1;
};

inline Mat gather(const Mat& m, const std::vector<int>& ids) {
  Mat out;
  for (int id : ids) out.push_back(m[id]);
  return out;
}

// full objective with in-batch pools on the target behavior's batch
inline LossParts total_loss(const Inputs& in, const ForwardRef& f,
                            const std::vector<std::vector<int>>& users,
                            const std::vector<std::vector<int>>& pos,
                            const std::vector<std::vector<int>>& neg, const LossSpec& spec) {
  const int K = static_cast<int>(in.behavior_edges.size());
  LossParts parts;
  for (int k = 0; k < K; ++k) parts.bpr_total += bpr(f, k, users[k], pos[k], neg[k]);

  const auto& cl_users = users[K - 1];
  const auto& cl_items = pos[K - 1];
  std::vector<int> diag(cl_users.size());  // positives sit at their own batch index
  for (size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<int>(i);

  for (int k = 0; k < K; ++k) {
    parts.gb += info_nce(gather(f.eg_user, cl_users), gather(f.eb_user[k], cl_users), diag, spec.tau);
    parts.gb += info_nce(gather(f.eg_item, cl_items), gather(f.eb_item[k], cl_items), diag, spec.tau);
    parts.gh += info_nce(gather(f.eg_user, cl_users), gather(f.eh_user[k], cl_users), diag, spec.tau);
    parts.gh += info_nce(gather(f.eg_item, cl_items), gather(f.eh_item[k], cl_items), diag, spec.tau);
    parts.bh += info_nce(gather(f.eb_user[k], cl_users), gather(f.eh_user[k], cl_users), diag, spec.tau);
    parts.bh += info_nce(gather(f.eb_item[k], cl_items), gather(f.eh_item[k], cl_items), diag, spec.tau);
  }

  std::set<int> tu, ti;
  for (int k = 0; k < K; ++k) {
    tu.insert(users[k].begin(), users[k].end());
    ti.insert(pos[k].begin(), pos[k].end());
    ti.insert(neg[k].begin(), neg[k].end());
  }
  for (int u : tu) {
    for (double v : in.user_emb0[u]) parts.reg += v * v;
  }
  for (int i : ti) {
    for (double v : in.item_emb0[i]) parts.reg += v * v;
  }
  for (int k = 0; k < K; ++k) {
    for (const auto& row : in.w_user[k]) {
      for (double v : row) parts.reg += v * v;
    }
    for (const auto& row : in.w_item[k]) {
      for (double v : row) parts.reg += v * v;
    }
  }
  parts.total = parts.bpr_total +
                spec.alpha * (spec.lambda1 * parts.gb + spec.lambda2 * parts.gh +
                              spec.lambda3 * parts.bh) +
                spec.beta * parts.reg;
  return parts;
}

}  // namespace refmodel
