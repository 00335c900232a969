#include <cmath>

#include "doctest.h"
#include "hecgcn/autodiff.hpp"
#include "hecgcn/graph.hpp"

using namespace hecgcn;
using ad::NodeId;
using ad::Tape;

namespace {

Tensor<double> random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
  Tensor<double> t(r, c);
  for (auto& v : t.data) v = (2.0 * rng.unit() - 1.0) * scale;
  return t;
}

double check_op(const std::function<NodeId(Tape<double>&, const std::vector<NodeId>&)>& body,
                std::vector<Tensor<double>*> inputs) {
  std::vector<ad::GradCheckLeaf<double>> leaves;
  for (size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back({"x" + std::to_string(i), inputs[i]});
  }
  auto build = [&](Tape<double>& t) {
    std::vector<NodeId> ids;
    for (auto* in : inputs) ids.push_back(t.leaf(in, true));
    return body(t, ids);
  };
  return ad::finite_diff_check<double>(build, leaves).max_rel_err;
}

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("forward basics: matmul identity, log_sigmoid, softmax, normalize") {
  Tape<double> t;
  Tensor<double> eye(3, 3);
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1;
  Rng rng(2);
  Tensor<double> x = random_tensor(3, 4, rng);
  const NodeId xi = t.leaf(&x, false);
  const NodeId prod = t.matmul(t.leaf(&eye, false), xi);
  CHECK(t.value(prod).data == x.data);

  Tensor<double> z(1, 1);
  const NodeId ls0 = t.log_sigmoid(t.leaf(&z, false));
  CHECK(t.value(ls0).at(0, 0) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

  Tensor<double> zneg = Tensor<double>::filled(1, 1, -50.0);
  const NodeId lsn = t.log_sigmoid(t.leaf(&zneg, false));
  CHECK(t.value(lsn).at(0, 0) == doctest::Approx(-50.0).epsilon(1e-12));

  Tensor<double> row(1, 3);  // zeros -> uniform
  const NodeId sm = t.row_softmax(t.leaf(&row, false));
  for (int c = 0; c < 3; ++c) CHECK(t.value(sm).at(0, c) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor<double> big(1, 2);
  big.at(0, 0) = 1000.0;
  const NodeId sm2 = t.row_softmax(t.leaf(&big, false));
  CHECK(t.value(sm2).at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isfinite(t.value(sm2).at(0, 1)));

  Tensor<double> pyth(2, 2);
  pyth.at(0, 0) = 3;
  pyth.at(0, 1) = 4;  // second row stays zero
  const NodeId nn = t.row_l2_normalize(t.leaf(&pyth, false));
  CHECK(t.value(nn).at(0, 0) == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(t.value(nn).at(0, 1) == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(t.value(nn).at(1, 0) == 0.0);
  CHECK(t.value(nn).at(1, 1) == 0.0);
}

TEST_CASE("row_softmax rejects NaN input") {
  Tape<double> t;
  Tensor<double> x(1, 2);
  x.at(0, 0) = std::nan("");
  CHECK_THROWS_AS(t.row_softmax(t.leaf(&x, false)), std::domain_error);
}

TEST_CASE("shape mismatches name both shapes") {
  Tape<double> t;
  Tensor<double> a(2, 3), b(4, 5);
  const NodeId ia = t.leaf(&a, false);
  const NodeId ib = t.leaf(&b, false);
  CHECK_THROWS_WITH_AS(t.matmul(ia, ib), doctest::Contains("2x3"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(t.add(ia, ib), doctest::Contains("4x5"), std::invalid_argument);
}

TEST_CASE("gradient of sum(matmul(A,B)) wrt A is ones * B^T") {
  Rng rng(5);
  Tensor<double> a = random_tensor(3, 4, rng);
  Tensor<double> b = random_tensor(4, 2, rng);
  Tape<double> t;
  const NodeId ia = t.leaf(&a, true);
  const NodeId ib = t.leaf(&b, false);
  const NodeId root = t.reduce_sum(t.matmul(ia, ib));
  t.backward(root);
  const Tensor<double>& ga = t.grad(ia);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      double want = 0;
      for (int j = 0; j < 2; ++j) want += b.at(c, j);
      CHECK(ga.at(r, c) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("gather backward scatter-adds") {
  Tensor<double> x(4, 2);
  Tape<double> t;
  const NodeId xi = t.leaf(&x, true);
  const NodeId g = t.gather_rows(xi, {2, 2});
  t.backward(t.reduce_sum(g));
  const Tensor<double>& gx = t.grad(xi);
  CHECK(gx.at(2, 0) == 2.0);
  CHECK(gx.at(2, 1) == 2.0);
  CHECK(gx.at(0, 0) == 0.0);
  CHECK(gx.at(1, 1) == 0.0);
  CHECK(gx.at(3, 0) == 0.0);

  CHECK_THROWS_AS(t.gather_rows(xi, {4}), std::out_of_range);
}

TEST_CASE("spmm matches hand-evaluated propagation on the 3-edge toy") {
  const auto g = build_graph<double>({{0, 0}, {1, 0}, {1, 1}}, 2, 2);
  Tensor<double> users = Tensor<double>::filled(2, 1, 1.0);
  Tape<double> t;
  const NodeId ui = t.leaf(&users, false);
  const NodeId items = t.spmm(&g.item_to_user, &g.user_to_item, ui);
  CHECK(t.value(items).at(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0) + 0.5).epsilon(1e-9));
  CHECK(t.value(items).at(0, 0) == doctest::Approx(1.20711).epsilon(1e-5));
}

TEST_CASE("spmm equals dense oracle within 1e-10 on graphs up to 32x32") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + static_cast<int>(rng.below(31));
    const int n = 2 + static_cast<int>(rng.below(31));
    std::vector<std::pair<int32_t, int32_t>> edges;
    for (int u = 0; u < m; ++u) {
      for (int i = 0; i < n; ++i) {
        if (rng.unit() < 0.2) edges.emplace_back(u, i);
      }
    }
    const auto g = build_graph<double>(edges, m, n);
    Tensor<double> x = random_tensor(n, 5, rng);
    Tape<double> t;
    const NodeId out = t.spmm(&g.user_to_item, &g.item_to_user, t.leaf(&x, false));
    Tensor<double> want;
    gemm_nn(g.user_to_item.to_dense(), x, &want);
    for (size_t i = 0; i < want.size(); ++i) {
      CHECK(std::abs(t.value(out).data[i] - want.data[i]) < 1e-10);
    }
  }
}

TEST_CASE("every differentiable op passes finite differences (100 trials)") {
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(4));
    const int d = 2 + static_cast<int>(rng.below(4));
    const int which = trial % 14;
    Tensor<double> a = random_tensor(n, d, rng);
    Tensor<double> b = random_tensor(n, d, rng);
    double err = 0;
    switch (which) {
      case 0:  // add / sub / scale chain
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.sub(t.scale(t.add(in[0], in[1]), 1.7), t.scale(in[1], 0.4)));
        }, {&a, &b});
        break;
      case 1:  // hadamard
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.hadamard(in[0], in[1]));
        }, {&a, &b});
        break;
      case 2: {  // matmul nn
        Tensor<double> c = random_tensor(d, 3, rng);
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.matmul(in[0], in[1]));
        }, {&a, &c});
        break;
      }
      case 3:  // matmul nt
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.matmul(in[0], in[1], false, true));
        }, {&a, &b});
        break;
      case 4: {  // matmul tn
        Tensor<double> c = random_tensor(n, 3, rng);
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.matmul(in[0], in[1], true, false));
        }, {&a, &c});
        break;
      }
      case 5: {  // spmm
        std::vector<std::pair<int32_t, int32_t>> edges;
        for (int u = 0; u < n; ++u) {
          for (int i = 0; i < n; ++i) {
            if (rng.unit() < 0.5) edges.emplace_back(u, i);
          }
        }
        const auto g = build_graph<double>(edges, n, n);
        err = check_op([&g](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.spmm(&g.user_to_item, &g.item_to_user, in[0]));
        }, {&a});
        break;
      }
      case 6: {  // gather + row_pick
        std::vector<int32_t> ids, cols;
        for (int i = 0; i < n + 1; ++i) {
          ids.push_back(static_cast<int32_t>(rng.below(n)));
          cols.push_back(static_cast<int32_t>(rng.below(d)));
        }
        err = check_op([ids, cols](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.row_pick(t.gather_rows(in[0], ids), cols));
        }, {&a});
        break;
      }
      case 7:  // row_softmax (with temperature) into a weighted sum
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.hadamard(t.row_softmax(in[0], 0.7), in[1]));
        }, {&a, &b});
        break;
      case 8:  // row_l2_normalize
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.hadamard(t.row_l2_normalize(in[0]), in[1]));
        }, {&a, &b});
        break;
      case 9:  // row_logsumexp + row_sum
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.row_logsumexp(t.scale(in[0], 2.0)));
        }, {&a});
        break;
      case 10: {  // scale_rows + slice_col + hstack
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          const NodeId w = t.hstack({t.row_sum(in[1])});
          return t.reduce_sum(t.scale_rows(in[0], t.slice_col(w, 0)));
        }, {&a, &b});
        break;
      }
      case 11:  // exp / log / div_scalar
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          const NodeId pos = t.exp(in[0]);  // strictly positive input for log
          return t.reduce_sum(t.log(t.div_scalar(t.add(pos, pos), 2.0)));
        }, {&a});
        break;
      case 12:  // log_sigmoid
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.log_sigmoid(t.scale(in[0], 3.0)));
        }, {&a});
        break;
      case 13:  // stop_gradient mixed into a live path
        err = check_op([](Tape<double>& t, const std::vector<NodeId>& in) {
          return t.reduce_sum(t.hadamard(t.stop_gradient(in[0]), in[0]));
        }, {&a});
        break;
    }
    worst = std::max(worst, err);
    CHECK(err < 1e-4);
  }
  MESSAGE("worst op rel err: " << worst);
}

TEST_CASE("stop_gradient: d/dx sum(stop(x) * x) = x, not 2x") {
  Rng rng(8);
  Tensor<double> x = random_tensor(3, 3, rng);
  Tape<double> t;
  const NodeId xi = t.leaf(&x, true);
  const NodeId root = t.reduce_sum(t.hadamard(t.stop_gradient(xi), xi));
  t.backward(root);
  const Tensor<double>& g = t.grad(xi);
  for (size_t i = 0; i < x.size(); ++i) CHECK(g.data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
}

TEST_CASE("stop_gradient forward is identity and blocks requires_grad") {
  Rng rng(9);
  Tensor<double> x = random_tensor(2, 2, rng);
  Tape<double> t;
  const NodeId xi = t.leaf(&x, true);
  const NodeId s = t.stop_gradient(xi);
  CHECK(t.value(s).data == x.data);
  CHECK(!t.requires_grad(s));
}

TEST_CASE("broken stop_gradient hook fails the finite-difference check") {
  Rng rng(10);
  Tensor<double> x = random_tensor(3, 3, rng);
  auto build = [&](Tape<double>& t) {
    const NodeId xi = t.leaf(&x, true);
    return t.reduce_sum(t.hadamard(t.stop_gradient(xi), xi));
  };
  ad::TapeOptions broken;
  broken.break_stop_gradient = true;
  const auto rep = ad::finite_diff_check<double>(build, {{"x", &x}}, 1e-5, broken);
  CHECK(rep.max_rel_err > 1e-2);
}

TEST_CASE("dropping an op's backward rule fails the check") {
  Rng rng(12);
  Tensor<double> x = random_tensor(3, 3, rng);
  auto build = [&](Tape<double>& t) {
    const NodeId xi = t.leaf(&x, true);
    return t.reduce_sum(t.log_sigmoid(xi));
  };
  ad::TapeOptions broken;
  broken.drop_backward_for = ad::Op::kLogSigmoid;
  const auto rep = ad::finite_diff_check<double>(build, {{"x", &x}}, 1e-5, broken);
  CHECK(rep.max_rel_err > 1e-2);
}

TEST_CASE("backward requires a scalar root; repeated calls accumulate") {
  Rng rng(13);
  Tensor<double> x = random_tensor(2, 2, rng);
  Tape<double> t;
  const NodeId xi = t.leaf(&x, true);
  const NodeId mat = t.scale(xi, 2.0);
  CHECK_THROWS_AS(t.backward(mat), std::logic_error);
  const NodeId root = t.reduce_sum(mat);
  t.backward(root);
  CHECK(t.grad(xi).at(0, 0) == doctest::Approx(2.0));
  t.backward(root);
  CHECK(t.grad(xi).at(0, 0) == doctest::Approx(4.0));  // leaves accumulate
  t.zero_grads();
  t.backward(root);
  CHECK(t.grad(xi).at(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("tape replay determinism: identical builds give identical bits") {
  Rng rng(14);
  Tensor<double> x = random_tensor(4, 3, rng);
  Tensor<double> w = random_tensor(3, 2, rng);
  auto run = [&]() {
    Tape<double> t;
    const NodeId xi = t.leaf(&x, true);
    const NodeId wi = t.leaf(&w, true);
    const NodeId root = t.reduce_sum(t.row_softmax(t.matmul(xi, wi), 0.9));
    t.backward(root);
    return std::make_pair(t.value(root).at(0, 0), t.grad(xi).data);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("finite_diff_check on sum(x) reports ~zero error") {
  Tensor<double> x = Tensor<double>::filled(3, 3, 0.25);
  const auto rep = ad::finite_diff_check<double>(
      [&](Tape<double>& t) { return t.reduce_sum(t.leaf(&x, true)); }, {{"x", &x}});
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_SUITE_END();
