// SPDX-License-Identifier: Apache-2.0
#include "affect/embedspace.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "affect/kernels.hpp"

namespace affect::embedspace {

serialize::NamedMatrices CentroidModel::to_arrays() const {
  Matrix cnt(1, kNumClasses);
  for (std::size_t c = 0; c < kNumClasses; ++c)
    cnt.at(0, c) = double(counts[c]);
  return {{"centroid.centers", centers}, {"centroid.counts", cnt}};
}

CentroidModel CentroidModel::from_arrays(
    const serialize::NamedMatrices& arrays) {
  const Matrix* centers = serialize::find(arrays, "centroid.centers");
  const Matrix* counts = serialize::find(arrays, "centroid.counts");
  if (!centers || !counts)
    throw std::runtime_error("CentroidModel: missing centroid arrays");
  if (centers->rows() != kNumClasses || counts->cols() != kNumClasses)
    throw std::runtime_error("CentroidModel: malformed centroid arrays");
  CentroidModel m;
  m.centers = *centers;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    m.counts[c] = std::size_t(counts->at(0, c));
  return m;
}

CentroidModel fit_centroids(const Matrix& embeddings,
                            std::span<const int> labels) {
  if (labels.size() != embeddings.rows())
    throw std::invalid_argument("fit_centroids: " +
                                std::to_string(labels.size()) +
                                " labels for " + embeddings.shape_str());
  CentroidModel model;
  model.centers = Matrix(kNumClasses, embeddings.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= kNumClasses)
      throw std::invalid_argument("fit_centroids: label " +
                                  std::to_string(labels[i]) + " out of 0..6");
    kernels::active().add(model.centers.row_ptr(std::size_t(labels[i])),
                          model.centers.row_ptr(std::size_t(labels[i])),
                          embeddings.row_ptr(i), embeddings.cols());
    ++model.counts[std::size_t(labels[i])];
  }
  std::string missing;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (model.counts[c] == 0) missing += (missing.empty() ? "" : ",") +
                                         std::to_string(c);
  if (!missing.empty())
    throw std::invalid_argument("fit_centroids: empty classes: " + missing);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double* row = model.centers.row_ptr(c);
    kernels::active().scale(row, row, 1.0 / double(model.counts[c]),
                            embeddings.cols());
    const double norm = std::sqrt(
        kernels::active().dot(row, row, embeddings.cols()));
    if (norm == 0.0)
      throw std::invalid_argument("fit_centroids: zero mean for class " +
                                  std::to_string(c));
    kernels::active().scale(row, row, 1.0 / norm, embeddings.cols());
  }
  return model;
}

Classification classify(const CentroidModel& model,
                        std::span<const double> embedding) {
  if (embedding.size() != model.centers.cols())
    throw std::invalid_argument("classify: embedding dim " +
                                std::to_string(embedding.size()) + " vs " +
                                model.centers.shape_str());
  const double norm = std::sqrt(
      kernels::active().dot(embedding.data(), embedding.data(),
                            embedding.size()));
  if (norm == 0.0) throw std::invalid_argument("classify: zero embedding");
  Classification out;
  double best = -2.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double sim = kernels::active().dot(embedding.data(),
                                             model.centers.row_ptr(c),
                                             embedding.size()) /
                       norm;
    out.similarities[c] = sim;
    if (sim > best) {
      best = sim;
      out.cls = int(c);
    }
  }
  return out;
}

}  // namespace affect::embedspace
