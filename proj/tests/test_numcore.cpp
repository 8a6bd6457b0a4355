// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "affect/gradcheck.hpp"
#include "affect/rng.hpp"
#include "affect/tape.hpp"

using namespace affect;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(r, c);
  for (auto& v : m.vec()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("matmul identity") {
  Rng rng(1);
  Matrix a = random_matrix(3, 5, rng);
  Tape t;
  NodeId out = t.matmul(t.constant(Matrix::identity(3)), t.constant(a));
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(t.value(out).vec()[i] == doctest::Approx(a.vec()[i]).epsilon(1e-15));
}

TEST_CASE("l2_normalize 3-4-5") {
  Tape t;
  NodeId out = t.l2_normalize_rows(t.constant(Matrix::from_rows({{3, 4}})));
  CHECK(t.value(out).at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(t.value(out).at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("softmax uniform on zeros") {
  Tape t;
  NodeId out = t.softmax_rows(t.constant(Matrix(1, 7)));
  for (std::size_t c = 0; c < 7; ++c)
    CHECK(t.value(out).at(0, c) == doctest::Approx(1.0 / 7).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one, l2 rows unit norm") {
  Rng rng(7);
  Matrix x = random_matrix(5, 9, rng, -10.0, 10.0);
  Tape t;
  NodeId sm = t.softmax_rows(t.constant(x));
  NodeId l2 = t.l2_normalize_rows(t.constant(x));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0, n2 = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      s += t.value(sm).at(r, c);
      n2 += t.value(l2).at(r, c) * t.value(l2).at(r, c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("l2_normalize of zero row flags a warning") {
  Tape t;
  NodeId out = t.l2_normalize_rows(t.constant(Matrix(2, 3)));
  CHECK(t.zero_row_warnings() == 2);
  CHECK(t.value(out).at(0, 0) == 0.0);
}

TEST_CASE("shape mismatch names op and shapes") {
  Tape t;
  NodeId a = t.constant(Matrix(2, 3));
  NodeId b = t.constant(Matrix(3, 3));
  CHECK_THROWS_WITH_AS(t.add(a, b), "add: shape mismatch 2x3 vs 3x3",
                       std::invalid_argument);
}

TEST_CASE("log clamps at the floor instead of erroring") {
  Tape t;
  NodeId out = t.log_op(t.constant(Matrix::scalar(0.0)));
  CHECK(t.value(out).at(0, 0) == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("backward of sum is all ones") {
  Tape t;
  NodeId x = t.leaf(Matrix::from_rows({{1, 2}, {3, 4}}));
  t.backward(t.sum_all(x));
  for (double g : t.grad(x).vec()) CHECK(g == 1.0);
}

TEST_CASE("backward of half squared norm is x") {
  Rng rng(3);
  Matrix xv = random_matrix(3, 4, rng);
  Tape t;
  NodeId x = t.leaf(xv);
  t.backward(t.scale(t.sum_all(t.mul(x, x)), 0.5));
  for (std::size_t i = 0; i < xv.size(); ++i)
    CHECK(t.grad(x).vec()[i] == doctest::Approx(xv.vec()[i]).epsilon(1e-14));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  NodeId x = t.leaf(Matrix(2, 2));
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("backward twice is deterministic") {
  Rng rng(11);
  Matrix xv = random_matrix(4, 4, rng);
  Tape t;
  NodeId x = t.leaf(xv);
  NodeId loss = t.mean_all(t.mul(t.tanh_op(x), t.sigmoid(x)));
  t.backward(loss);
  Matrix g1 = t.grad(x);
  t.backward(loss);
  CHECK(g1.vec() == t.grad(x).vec());
}

TEST_CASE("grad_check exact for quadratic and linear relu region") {
  auto square = [](const std::vector<Matrix>& p) {
    return p[0].at(0, 0) * p[0].at(0, 0);
  };
  CHECK(grad_check(square, {Matrix::scalar(3.0)}, {Matrix::scalar(6.0)}) <
        1e-9);

  auto relu = [](const std::vector<Matrix>& p) {
    return p[0].at(0, 0) > 0 ? p[0].at(0, 0) : 0.0;
  };
  CHECK(grad_check(relu, {Matrix::scalar(1.0)}, {Matrix::scalar(1.0)}) < 1e-9);
}

TEST_CASE("grad_check reports non-finite coordinate") {
  auto bad = [](const std::vector<Matrix>& p) {
    return 1.0 / (p[0].at(0, 0) - p[0].at(0, 0));
  };
  CHECK_THROWS_AS(grad_check(bad, {Matrix::scalar(1.0)}, {Matrix::scalar(0.0)}),
                  std::runtime_error);
}

TEST_CASE("softmax cross-entropy composite matches finite differences") {
  Rng rng(19);
  Matrix logits = random_matrix(4, 7, rng);
  std::vector<int> targets{2, 0, 6, 3};
  auto loss_at = [&](const std::vector<Matrix>& p) {
    Tape t;
    NodeId x = t.leaf(p[0]);
    NodeId lse = t.logsumexp_rows(x);
    Matrix onehot(4, 7);
    for (std::size_t r = 0; r < 4; ++r)
      onehot.at(r, std::size_t(targets[r])) = 1.0;
    NodeId tl = t.row_sum(t.mul(x, t.constant(onehot)));
    return t.value(t.mean_all(t.sub(lse, tl))).at(0, 0);
  };
  Tape t;
  NodeId x = t.leaf(logits);
  NodeId lse = t.logsumexp_rows(x);
  Matrix onehot(4, 7);
  for (std::size_t r = 0; r < 4; ++r)
    onehot.at(r, std::size_t(targets[r])) = 1.0;
  NodeId tl = t.row_sum(t.mul(x, t.constant(onehot)));
  t.backward(t.mean_all(t.sub(lse, tl)));
  CHECK(grad_check(loss_at, {logits}, {t.grad(x)}) < 1e-5);
}

// every differentiable op, checked at random points via a scalarizing head
TEST_CASE("finite differences across the op set") {
  Rng rng(23);
  auto check_unary = [&](auto make, double lo, double hi) {
    for (int trial = 0; trial < 10; ++trial) {
      Matrix xv = random_matrix(3, 4, rng, lo, hi);
      // the head matches the op output shape (ops may reshape)
      Tape probe;
      const Matrix& out = probe.value(make(probe, probe.constant(xv)));
      Matrix head = random_matrix(out.rows(), out.cols(), rng);
      auto eval = [&](const std::vector<Matrix>& p) {
        Tape t;
        NodeId x = t.leaf(p[0]);
        return t.value(t.sum_all(t.mul(make(t, x), t.constant(head))))
            .at(0, 0);
      };
      Tape t;
      NodeId x = t.leaf(xv);
      t.backward(t.sum_all(t.mul(make(t, x), t.constant(head))));
      CHECK(grad_check(eval, {xv}, {t.grad(x)}) < 1e-5);
    }
  };
  check_unary([](Tape& t, NodeId x) { return t.tanh_op(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.sigmoid(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.exp_op(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.log_op(x); }, 0.5, 3);
  check_unary([](Tape& t, NodeId x) { return t.relu(x); }, 0.2, 2);
  check_unary([](Tape& t, NodeId x) { return t.softmax_rows(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.logsumexp_rows(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.l2_normalize_rows(x); }, 0.5, 2);
  check_unary([](Tape& t, NodeId x) { return t.transpose(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.scale(x, -1.7); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.col_mean(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.row_sum(x); }, -2, 2);
  check_unary([](Tape& t, NodeId x) { return t.slice_cols(x, 1, 3); }, -2, 2);

  // binary ops
  for (int trial = 0; trial < 10; ++trial) {
    Matrix av = random_matrix(3, 4, rng), bv = random_matrix(3, 4, rng, 0.5, 2);
    Matrix head = random_matrix(3, 4, rng);
    for (int which = 0; which < 4; ++which) {
      auto combine = [&](Tape& t, NodeId a, NodeId b) {
        switch (which) {
          case 0: return t.add(a, b);
          case 1: return t.sub(a, b);
          case 2: return t.mul(a, b);
          default: return t.div(a, b);
        }
      };
      auto eval = [&](const std::vector<Matrix>& p) {
        Tape t;
        NodeId a = t.leaf(p[0]), b = t.leaf(p[1]);
        return t.value(t.sum_all(t.mul(combine(t, a, b), t.constant(head))))
            .at(0, 0);
      };
      Tape t;
      NodeId a = t.leaf(av), b = t.leaf(bv);
      t.backward(t.sum_all(t.mul(combine(t, a, b), t.constant(head))));
      CHECK(grad_check(eval, {av, bv}, {t.grad(a), t.grad(b)}) < 1e-5);
    }
  }

  // matmul, concat, add_rowvec
  for (int trial = 0; trial < 10; ++trial) {
    Matrix av = random_matrix(3, 4, rng), bv = random_matrix(4, 5, rng);
    Matrix head = random_matrix(3, 5, rng);
    auto eval = [&](const std::vector<Matrix>& p) {
      Tape t;
      NodeId a = t.leaf(p[0]), b = t.leaf(p[1]);
      return t.value(t.sum_all(t.mul(t.matmul(a, b), t.constant(head))))
          .at(0, 0);
    };
    Tape t;
    NodeId a = t.leaf(av), b = t.leaf(bv);
    t.backward(t.sum_all(t.mul(t.matmul(a, b), t.constant(head))));
    CHECK(grad_check(eval, {av, bv}, {t.grad(a), t.grad(b)}) < 1e-5);
  }
  for (int trial = 0; trial < 10; ++trial) {
    Matrix av = random_matrix(3, 2, rng), bv = random_matrix(3, 4, rng);
    Matrix head = random_matrix(3, 6, rng);
    auto eval = [&](const std::vector<Matrix>& p) {
      Tape t;
      NodeId a = t.leaf(p[0]), b = t.leaf(p[1]);
      return t.value(t.sum_all(t.mul(t.concat_cols(a, b), t.constant(head))))
          .at(0, 0);
    };
    Tape t;
    NodeId a = t.leaf(av), b = t.leaf(bv);
    t.backward(t.sum_all(t.mul(t.concat_cols(a, b), t.constant(head))));
    CHECK(grad_check(eval, {av, bv}, {t.grad(a), t.grad(b)}) < 1e-5);
  }
  for (int trial = 0; trial < 10; ++trial) {
    Matrix av = random_matrix(3, 4, rng), bv = random_matrix(1, 4, rng);
    Matrix head = random_matrix(3, 4, rng);
    auto eval = [&](const std::vector<Matrix>& p) {
      Tape t;
      NodeId a = t.leaf(p[0]), b = t.leaf(p[1]);
      return t.value(t.sum_all(t.mul(t.add_rowvec(a, b), t.constant(head))))
          .at(0, 0);
    };
    Tape t;
    NodeId a = t.leaf(av), b = t.leaf(bv);
    t.backward(t.sum_all(t.mul(t.add_rowvec(a, b), t.constant(head))));
    CHECK(grad_check(eval, {av, bv}, {t.grad(a), t.grad(b)}) < 1e-5);
  }

  // broadcast scalar-node ops
  for (int trial = 0; trial < 10; ++trial) {
    Matrix av = random_matrix(3, 4, rng);
    Matrix sv = random_matrix(1, 1, rng, 0.5, 2.0);
    Matrix head = random_matrix(3, 4, rng);
    for (int which = 0; which < 4; ++which) {
      auto combine = [&](Tape& t, NodeId a, NodeId s) {
        switch (which) {
          case 0: return t.add_scalar(a, s);
          case 1: return t.sub_scalar(a, s);
          case 2: return t.mul_scalar(a, s);
          default: return t.div_scalar(a, s);
        }
      };
      auto eval = [&](const std::vector<Matrix>& p) {
        Tape t;
        NodeId a = t.leaf(p[0]), s = t.leaf(p[1]);
        return t.value(t.sum_all(t.mul(combine(t, a, s), t.constant(head))))
            .at(0, 0);
      };
      Tape t;
      NodeId a = t.leaf(av), s = t.leaf(sv);
      t.backward(t.sum_all(t.mul(combine(t, a, s), t.constant(head))));
      CHECK(grad_check(eval, {av, sv}, {t.grad(a), t.grad(s)}) < 1e-5);
    }
  }
}
