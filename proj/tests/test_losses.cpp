// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "affect/gradcheck.hpp"
#include "affect/losses.hpp"
#include "affect/rng.hpp"

using namespace affect;
using namespace affect::losses;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(r, c);
  for (auto& v : m.vec()) v = rng.uniform(lo, hi);
  return m;
}

// independent oracles, straight from the formulas
double cce_oracle(const Matrix& logits, const std::vector<int>& targets) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c)
      z += std::exp(logits.at(r, c));
    total += -logits.at(r, std::size_t(targets[r])) + std::log(z);
  }
  return total / double(logits.rows());
}

double bce_oracle(const Matrix& p, const Matrix& t) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p.vec()[i], 1e-12);
    const double qi = std::max(1.0 - p.vec()[i], 1e-12);
    total += -(t.vec()[i] * std::log(pi) + (1.0 - t.vec()[i]) * std::log(qi));
  }
  return total / double(p.rows());
}

double ccc_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += (x[i] - mx) * (x[i] - mx) / n;
    sy += (y[i] - my) * (y[i] - my) / n;
    sxy += (x[i] - mx) * (y[i] - my) / n;
  }
  return 2 * sxy / (sx + sy + (mx - my) * (mx - my));
}

Matrix column(const std::vector<double>& v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m.at(i, 0) = v[i];
  return m;
}

}  // namespace

TEST_CASE("cce on zero logits is ln 7") {
  Tape t;
  NodeId logits = t.constant(Matrix(3, 7));
  NodeId loss = cce_loss(t, logits, {0, 4, 6});
  CHECK(t.value(loss).at(0, 0) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("cce saturated correct prediction is ~0") {
  Matrix logits(1, 7);
  logits.at(0, 2) = 50.0;
  Tape t;
  CHECK(t.value(cce_loss(t, t.constant(logits), {2})).at(0, 0) < 1e-9);
}

TEST_CASE("cce matches direct log-sum-exp oracle") {
  Matrix logits = Matrix::from_rows({{1, 2, 3, 0, 0, 0, 0}});
  Tape t;
  const double got = t.value(cce_loss(t, t.constant(logits), {2})).at(0, 0);
  CHECK(got == doctest::Approx(cce_oracle(logits, {2})).epsilon(1e-12));
}

TEST_CASE("cce rejects out-of-range class") {
  Tape t;
  NodeId logits = t.constant(Matrix(1, 7));
  CHECK_THROWS_AS(cce_loss(t, logits, {7}), std::invalid_argument);
}

TEST_CASE("bce perfect prediction") {
  Matrix p = Matrix::from_rows({{1, 0, 1, 0}});
  Matrix target = p;
  Tape t;
  CHECK(t.value(bce_loss(t, t.constant(p), target)).at(0, 0) < 1e-9);
}

TEST_CASE("bce at 0.5 everywhere is K ln 2") {
  Matrix p(2, 8);
  for (auto& v : p.vec()) v = 0.5;
  Matrix target(2, 8);
  target.at(0, 0) = 1;
  target.at(1, 5) = 1;
  Tape t;
  CHECK(t.value(bce_loss(t, t.constant(p), target)).at(0, 0) ==
        doctest::Approx(8.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce matches direct summation oracle on random pairs") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix p = random_matrix(4, 8, rng, 0.05, 0.95);
    Matrix target(4, 8);
    for (auto& v : target.vec()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Tape t;
    CHECK(t.value(bce_loss(t, t.constant(p), target)).at(0, 0) ==
          doctest::Approx(bce_oracle(p, target)).epsilon(1e-12));
  }
}

TEST_CASE("bce rejects non-binary targets") {
  Tape t;
  Matrix target(1, 2);
  target.at(0, 0) = 0.5;
  CHECK_THROWS_AS(
      bce_loss(t, t.constant(Matrix::from_rows({{0.5, 0.5}})), target),
      std::invalid_argument);
}

TEST_CASE("ccc basics") {
  std::vector<double> x{0.1, 0.5, 0.9}, y{0.2, 0.4, 0.6};
  CHECK(ccc(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  bool degenerate = false;
  std::vector<double> c{0.3, 0.3, 0.3};
  CHECK(ccc(c, y, &degenerate) == 0.0);  // zero covariance
  CHECK_FALSE(degenerate);
  CHECK(ccc(x, y) == doctest::Approx(ccc_oracle(x, y)).epsilon(1e-12));
  CHECK(ccc(c, c, &degenerate) == 0.0);  // constant and identical
  CHECK(degenerate);
}

TEST_CASE("ccc symmetry and bound") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(20), y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      x[i] = rng.uniform(-1, 1);
      y[i] = rng.uniform(-1, 1);
    }
    CHECK(ccc(x, y) == ccc(y, x));
    CHECK(std::fabs(ccc(x, y)) <= 1.0 + 1e-12);
    CHECK(ccc(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ccc_loss values") {
  std::vector<double> lv{0.1, 0.5, 0.9}, la{-0.2, 0.1, 0.4};
  Tape t;
  // predictions equal labels -> 0
  NodeId pv = t.leaf(column(lv));
  NodeId pa = t.leaf(column(la));
  NodeId loss = ccc_loss(t, pv, pa, column(lv), column(la));
  CHECK(t.value(loss).at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));

  // rho_v = 1 (exact), rho_a = 0 (constant prediction) -> 0.5
  Tape t2;
  NodeId pv2 = t2.leaf(column(lv));
  NodeId pa2 = t2.leaf(column({0.3, 0.3, 0.3}));
  NodeId loss2 = ccc_loss(t2, pv2, pa2, column(lv), column(la));
  CHECK(t2.value(loss2).at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ccc_loss gradient matches finite differences") {
  Rng rng(13);
  Matrix lv = random_matrix(8, 1, rng, -1, 1), la = random_matrix(8, 1, rng, -1, 1);
  Matrix pv = random_matrix(8, 1, rng, -1, 1), pa = random_matrix(8, 1, rng, -1, 1);
  auto eval = [&](const std::vector<Matrix>& p) {
    Tape t;
    return t.value(ccc_loss(t, t.leaf(p[0]), t.leaf(p[1]), lv, la)).at(0, 0);
  };
  Tape t;
  NodeId a = t.leaf(pv), b = t.leaf(pa);
  t.backward(ccc_loss(t, a, b, lv, la));
  CHECK(grad_check(eval, {pv, pa}, {t.grad(a), t.grad(b)}) < 1e-5);
}

TEST_CASE("mse values and oracle") {
  Rng rng(17);
  Matrix labels = random_matrix(5, 2, rng);
  Tape t;
  CHECK(t.value(mse_loss(t, t.constant(labels), labels)).at(0, 0) == 0.0);

  Matrix shifted = labels;
  for (auto& v : shifted.vec()) v += 0.5;
  Tape t2;
  CHECK(t2.value(mse_loss(t2, t2.constant(shifted), labels)).at(0, 0) ==
        doctest::Approx(0.25).epsilon(1e-12));

  Matrix pred = random_matrix(5, 2, rng);
  double oracle = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    oracle += (pred.vec()[i] - labels.vec()[i]) *
              (pred.vec()[i] - labels.vec()[i]) / double(pred.size());
  Tape t3;
  CHECK(t3.value(mse_loss(t3, t3.constant(pred), labels)).at(0, 0) ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("multitask reduces to the single present task bit-for-bit") {
  Rng rng(21);
  Matrix logits = random_matrix(4, 7, rng);
  std::vector<int> expr{1, 3, 0, 6};
  Tape t;
  NodeId ln = t.constant(logits);
  MultiTaskTargets targets;
  targets.expr = expr;
  NodeId mt = multitask_loss(t, {.expr_logits = ln}, targets, VaMode::Ccc);
  NodeId single = cce_loss(t, ln, expr);
  CHECK(t.value(mt).at(0, 0) == t.value(single).at(0, 0));
}

TEST_CASE("multitask sums the three task losses exactly") {
  Rng rng(25);
  Matrix va = random_matrix(6, 2, rng, -0.9, 0.9);
  Matrix au_logits = random_matrix(6, 8, rng);
  Matrix expr_logits = random_matrix(6, 7, rng);
  MultiTaskTargets targets;
  targets.va = random_matrix(6, 2, rng, -0.9, 0.9);
  Matrix aus(6, 8);
  for (auto& v : aus.vec()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  targets.aus = aus;
  targets.expr = std::vector<int>{0, 1, 2, 3, 4, 5};

  Tape t;
  MultiTaskOutputs out{t.constant(va), t.constant(au_logits),
                       t.constant(expr_logits)};
  const double total =
      t.value(multitask_loss(t, out, targets, VaMode::Ccc)).at(0, 0);

  Tape t2;
  const double cce =
      t2.value(cce_loss(t2, t2.constant(expr_logits), *targets.expr)).at(0, 0);
  const double bce =
      t2.value(bce_loss(t2, t2.sigmoid(t2.constant(au_logits)), aus)).at(0, 0);
  Matrix lv(6, 1), la(6, 1), pv(6, 1), pa(6, 1);
  for (std::size_t r = 0; r < 6; ++r) {
    lv.at(r, 0) = targets.va->at(r, 0);
    la.at(r, 0) = targets.va->at(r, 1);
    pv.at(r, 0) = va.at(r, 0);
    pa.at(r, 0) = va.at(r, 1);
  }
  const double cccl =
      t2.value(ccc_loss(t2, t2.constant(pv), t2.constant(pa), lv, la))
          .at(0, 0);
  CHECK(total == doctest::Approx(cce + bce + cccl).epsilon(1e-12));
}

TEST_CASE("multitask with no task present errors") {
  Tape t;
  CHECK_THROWS_AS(multitask_loss(t, {}, {}, VaMode::Ccc),
                  std::invalid_argument);
}

TEST_CASE("multitask gradient passes finite differences") {
  Rng rng(29);
  Matrix va = random_matrix(4, 2, rng, -0.9, 0.9);
  Matrix au_logits = random_matrix(4, 8, rng);
  Matrix expr_logits = random_matrix(4, 7, rng);
  MultiTaskTargets targets;
  targets.va = random_matrix(4, 2, rng, -0.9, 0.9);
  Matrix aus(4, 8);
  for (auto& v : aus.vec()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  targets.aus = aus;
  targets.expr = std::vector<int>{2, 0, 5, 1};
  auto eval = [&](const std::vector<Matrix>& p) {
    Tape t;
    MultiTaskOutputs out{t.leaf(p[0]), t.leaf(p[1]), t.leaf(p[2])};
    return t.value(multitask_loss(t, out, targets, VaMode::Ccc)).at(0, 0);
  };
  Tape t;
  MultiTaskOutputs out{t.leaf(va), t.leaf(au_logits), t.leaf(expr_logits)};
  t.backward(multitask_loss(t, out, targets, VaMode::Ccc));
  CHECK(grad_check(eval, {va, au_logits, expr_logits},
                   {t.grad(out.va), t.grad(out.au_logits),
                    t.grad(out.expr_logits)}) < 1e-5);
}

TEST_CASE("arcface logits with m=0 are scaled cosines") {
  Rng rng(31);
  Matrix emb = random_matrix(5, 8, rng);
  Matrix w = random_matrix(8, 7, rng);
  std::vector<int> targets{0, 1, 2, 3, 4};
  Tape t;
  NodeId logits =
      arcface_logits(t, t.constant(emb), t.constant(w), 64.0, 0.0, &targets);
  // oracle: plain normalized cosine, scaled
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      double en = 0, wn = 0, dot = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        en += emb.at(r, k) * emb.at(r, k);
        wn += w.at(k, c) * w.at(k, c);
        dot += emb.at(r, k) * w.at(k, c);
      }
      const double expect = 64.0 * dot / std::sqrt(en * wn);
      CHECK(t.value(logits).at(r, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("arcface aligned embedding, theta=0") {
  Matrix w(3, 7);
  for (std::size_t c = 0; c < 7; ++c) w.at(c % 3, c) = 1.0;
  Matrix emb = Matrix::from_rows({{2, 0, 0}});  // aligned with column 0
  std::vector<int> targets{0};
  Tape t;
  NodeId logits =
      arcface_logits(t, t.constant(emb), t.constant(w), 64.0, 0.5, &targets);
  CHECK(t.value(logits).at(0, 0) ==
        doctest::Approx(64.0 * std::cos(0.5)).epsilon(1e-12));
}

TEST_CASE("arcface margin matches explicit-angle oracle") {
  Rng rng(37);
  Matrix emb = random_matrix(6, 8, rng);
  Matrix w = random_matrix(8, 7, rng);
  std::vector<int> targets{3, 1, 6, 0, 2, 5};
  Tape t;
  NodeId logits =
      arcface_logits(t, t.constant(emb), t.constant(w), 10.0, 0.3, &targets);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      double en = 0, wn = 0, dot = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        en += emb.at(r, k) * emb.at(r, k);
        wn += w.at(k, c) * w.at(k, c);
        dot += emb.at(r, k) * w.at(k, c);
      }
      double cosv = dot / std::sqrt(en * wn);
      if (c == std::size_t(targets[r]))
        cosv = std::cos(std::acos(std::clamp(cosv, -1.0, 1.0)) + 0.3);
      CHECK(t.value(logits).at(r, c) ==
            doctest::Approx(10.0 * cosv).epsilon(1e-9));
    }
}

TEST_CASE("arcface rejects zero embedding rows") {
  Tape t;
  Matrix emb(2, 4);
  emb.at(0, 0) = 1.0;  // row 1 stays zero
  Matrix w(4, 7);
  w.at(0, 0) = 1.0;
  std::vector<int> targets{0, 0};
  CHECK_THROWS_AS(
      arcface_logits(t, t.constant(emb), t.constant(w), 64.0, 0.5, &targets),
      std::invalid_argument);
}

TEST_CASE("arcface m=0 scale equivariance and argmax invariance") {
  Rng rng(41);
  Matrix emb = random_matrix(4, 8, rng);
  Matrix w = random_matrix(8, 7, rng);
  Tape t;
  NodeId l1 = arcface_logits(t, t.constant(emb), t.constant(w), 32.0, 0.0,
                             nullptr);
  NodeId l2 = arcface_logits(t, t.constant(emb), t.constant(w), 64.0, 0.0,
                             nullptr);
  for (std::size_t r = 0; r < 4; ++r) {
    std::size_t am1 = 0, am2 = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(t.value(l2).at(r, c) ==
            doctest::Approx(2.0 * t.value(l1).at(r, c)).epsilon(1e-12));
      if (t.value(l1).at(r, c) > t.value(l1).at(r, am1)) am1 = c;
      if (t.value(l2).at(r, c) > t.value(l2).at(r, am2)) am2 = c;
    }
    CHECK(am1 == am2);
  }
}

TEST_CASE("arcface_loss with m=0, s=1 equals CE on raw cosines") {
  Rng rng(43);
  Matrix emb = random_matrix(5, 8, rng);
  Matrix w = random_matrix(8, 7, rng);
  std::vector<int> targets{0, 2, 4, 6, 1};
  Tape t;
  const double arc =
      t.value(arcface_loss(t, t.constant(emb), t.constant(w), 1.0, 0.0,
                           targets))
          .at(0, 0);
  // oracle: softmax CE over the normalized cosines
  Matrix cosines(5, 7);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      double en = 0, wn = 0, dot = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        en += emb.at(r, k) * emb.at(r, k);
        wn += w.at(k, c) * w.at(k, c);
        dot += emb.at(r, k) * w.at(k, c);
      }
      cosines.at(r, c) = dot / std::sqrt(en * wn);
    }
  CHECK(arc == doctest::Approx(cce_oracle(cosines, targets)).epsilon(1e-12));
}

TEST_CASE("arcface_loss gradient passes finite differences") {
  Rng rng(47);
  int checked = 0;
  for (int trial = 0; trial < 20 && checked < 10; ++trial) {
    Matrix emb = random_matrix(4, 8, rng);
    Matrix w = random_matrix(8, 7, rng);
    std::vector<int> targets{int(rng.index(7)), int(rng.index(7)),
                             int(rng.index(7)), int(rng.index(7))};
    // skip configurations close to theta = 0 or pi
    bool near_kink = false;
    for (std::size_t r = 0; r < 4 && !near_kink; ++r) {
      double en = 0, wn = 0, dot = 0;
      const std::size_t c = std::size_t(targets[r]);
      for (std::size_t k = 0; k < 8; ++k) {
        en += emb.at(r, k) * emb.at(r, k);
        wn += w.at(k, c) * w.at(k, c);
        dot += emb.at(r, k) * w.at(k, c);
      }
      near_kink = std::fabs(dot / std::sqrt(en * wn)) > 0.98;
    }
    if (near_kink) continue;
    ++checked;
    auto eval = [&](const std::vector<Matrix>& p) {
      Tape t;
      return t
          .value(arcface_loss(t, t.leaf(p[0]), t.leaf(p[1]), 8.0, 0.4,
                              targets))
          .at(0, 0);
    };
    Tape t;
    NodeId e = t.leaf(emb), wn = t.leaf(w);
    t.backward(arcface_loss(t, e, wn, 8.0, 0.4, targets));
    CHECK(grad_check(eval, {emb, w}, {t.grad(e), t.grad(wn)}) < 1e-5);
  }
  CHECK(checked == 10);
}

TEST_CASE("increasing margin never decreases the loss") {
  Rng rng(53);
  Matrix emb = random_matrix(6, 8, rng);
  Matrix w = random_matrix(8, 7, rng);
  std::vector<int> targets{0, 1, 2, 3, 4, 5};
  // sweep valid while theta_target + m <= pi for every sample
  double max_theta = 0.0;
  for (std::size_t r = 0; r < 6; ++r) {
    double en = 0, wn = 0, dot = 0;
    const std::size_t c = std::size_t(targets[r]);
    for (std::size_t k = 0; k < 8; ++k) {
      en += emb.at(r, k) * emb.at(r, k);
      wn += w.at(k, c) * w.at(k, c);
      dot += emb.at(r, k) * w.at(k, c);
    }
    max_theta = std::max(max_theta,
                         std::acos(std::clamp(dot / std::sqrt(en * wn),
                                              -1.0, 1.0)));
  }
  double prev = -1e300;
  for (double m = 0.0; m + max_theta <= 3.14159; m += 0.1) {
    Tape t;
    const double loss =
        t.value(arcface_loss(t, t.constant(emb), t.constant(w), 8.0, m,
                             targets))
            .at(0, 0);
    CHECK(loss >= prev - 1e-12);
    prev = loss;
  }
}
