// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "affect/embedspace.hpp"
#include "affect/rng.hpp"

using namespace affect;
using namespace affect::embedspace;

namespace {

// well-separated blobs: class c points near unit direction e_c (d >= 7)
Matrix blob_embeddings(std::vector<int>& labels, std::size_t per_class,
                       std::size_t dim, double spread, Rng& rng) {
  Matrix emb(7 * per_class, dim);
  labels.clear();
  for (int c = 0; c < 7; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = std::size_t(c) * per_class + i;
      emb.at(r, std::size_t(c)) = 1.0;
      for (std::size_t k = 0; k < dim; ++k)
        emb.at(r, k) += rng.uniform(-spread, spread);
      labels.push_back(c);
    }
  return emb;
}

}  // namespace

TEST_CASE("one sample per class gives the normalized samples") {
  Rng rng(3);
  std::vector<int> labels;
  Matrix emb = blob_embeddings(labels, 1, 8, 0.2, rng);
  auto model = fit_centroids(emb, labels);
  for (std::size_t c = 0; c < 7; ++c) {
    double n = 0;
    for (std::size_t k = 0; k < 8; ++k) n += emb.at(c, k) * emb.at(c, k);
    n = std::sqrt(n);
    for (std::size_t k = 0; k < 8; ++k)
      CHECK(model.centers.at(c, k) ==
            doctest::Approx(emb.at(c, k) / n).epsilon(1e-12));
  }
}

TEST_CASE("centers are unit norm and match the direct oracle") {
  Rng rng(7);
  std::vector<int> labels;
  Matrix emb = blob_embeddings(labels, 20, 10, 0.3, rng);
  auto model = fit_centroids(emb, labels);
  for (std::size_t c = 0; c < 7; ++c) {
    // direct mean-then-normalize
    std::vector<double> mean(10, 0.0);
    std::size_t count = 0;
    for (std::size_t r = 0; r < emb.rows(); ++r)
      if (labels[r] == int(c)) {
        for (std::size_t k = 0; k < 10; ++k) mean[k] += emb.at(r, k);
        ++count;
      }
    double norm = 0;
    for (auto& v : mean) v /= double(count);
    for (double v : mean) norm += v * v;
    norm = std::sqrt(norm);
    double check_norm = 0;
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(model.centers.at(c, k) ==
            doctest::Approx(mean[k] / norm).epsilon(1e-12));
      check_norm += model.centers.at(c, k) * model.centers.at(c, k);
    }
    CHECK(std::sqrt(check_norm) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("duplicated samples leave centers unchanged") {
  Rng rng(11);
  std::vector<int> labels;
  Matrix emb = blob_embeddings(labels, 3, 8, 0.2, rng);
  auto base = fit_centroids(emb, labels);

  Matrix doubled(emb.rows() * 2, emb.cols());
  std::vector<int> labels2;
  for (std::size_t r = 0; r < emb.rows(); ++r)
    for (int copy = 0; copy < 2; ++copy) {
      for (std::size_t k = 0; k < emb.cols(); ++k)
        doubled.at(r * 2 + std::size_t(copy), k) = emb.at(r, k);
      labels2.push_back(labels[r]);
    }
  auto dup = fit_centroids(doubled, labels2);
  for (std::size_t i = 0; i < base.centers.size(); ++i)
    CHECK(base.centers.vec()[i] ==
          doctest::Approx(dup.centers.vec()[i]).epsilon(1e-12));
}

TEST_CASE("missing classes are reported") {
  Matrix emb(3, 8);
  emb.at(0, 0) = emb.at(1, 1) = emb.at(2, 2) = 1.0;
  std::vector<int> labels{0, 1, 2};
  CHECK_THROWS_WITH_AS(fit_centroids(emb, labels),
                       "fit_centroids: empty classes: 3,4,5,6",
                       std::invalid_argument);
}

TEST_CASE("classify center, scale invariance, zero rejection") {
  Rng rng(13);
  std::vector<int> labels;
  Matrix emb = blob_embeddings(labels, 10, 8, 0.1, rng);
  auto model = fit_centroids(emb, labels);

  std::vector<double> q(model.centers.row_ptr(4), model.centers.row_ptr(4) + 8);
  auto res = classify(model, q);
  CHECK(res.cls == 4);
  CHECK(res.similarities[4] == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> scaled = q;
  for (auto& v : scaled) v *= 137.0;
  auto res2 = classify(model, scaled);
  CHECK(res2.cls == res.cls);
  for (int c = 0; c < 7; ++c)
    CHECK(res2.similarities[std::size_t(c)] ==
          doctest::Approx(res.similarities[std::size_t(c)]).epsilon(1e-12));

  std::vector<double> zero(8, 0.0);
  CHECK_THROWS_AS(classify(model, zero), std::invalid_argument);
}

TEST_CASE("classify agrees with the brute-force 7-way comparison") {
  Rng rng(17);
  std::vector<int> labels;
  Matrix emb = blob_embeddings(labels, 10, 8, 0.3, rng);
  auto model = fit_centroids(emb, labels);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> q(8);
    for (auto& v : q) v = rng.uniform(-1, 1);
    double qn = 0;
    for (double v : q) qn += v * v;
    if (qn == 0) continue;
    auto res = classify(model, q);
    // brute force
    int best = 0;
    double best_sim = -2;
    for (int c = 0; c < 7; ++c) {
      double dot = 0;
      for (std::size_t k = 0; k < 8; ++k)
        dot += q[k] * model.centers.at(std::size_t(c), k);
      const double sim = dot / std::sqrt(qn);
      if (sim > best_sim) {
        best_sim = sim;
        best = c;
      }
    }
    CHECK(res.cls == best);
  }
}

TEST_CASE("well-separated blobs classify at >= 99% training accuracy") {
  Rng rng(19);
  std::vector<int> labels;
  // unit axes are 90 degrees apart; small spread keeps the intra-class
  // angular scatter tight
  Matrix emb = blob_embeddings(labels, 50, 8, 0.08, rng);
  auto model = fit_centroids(emb, labels);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < emb.rows(); ++r) {
    std::vector<double> q(emb.row_ptr(r), emb.row_ptr(r) + 8);
    if (classify(model, q).cls == labels[r]) ++hits;
  }
  CHECK(double(hits) / double(emb.rows()) >= 0.99);
}

TEST_CASE("centroid model round-trips through the AFEN container") {
  Rng rng(23);
  std::vector<int> labels;
  Matrix emb = blob_embeddings(labels, 5, 8, 0.2, rng);
  auto model = fit_centroids(emb, labels);
  const std::string path = "test_centroids.afen";
  serialize::save_afen(path, model.to_arrays());
  auto loaded = CentroidModel::from_arrays(serialize::load_afen(path));
  CHECK(loaded.centers.vec() == model.centers.vec());
  CHECK(loaded.counts == model.counts);
  std::remove(path.c_str());
}
