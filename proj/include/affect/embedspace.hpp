// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "affect/matrix.hpp"
#include "affect/serialize.hpp"

namespace affect::embedspace {

constexpr std::size_t kNumClasses = 7;

// Seven unit-norm class centers in embedding space. Immutable after fit;
// classification is read-only.
struct CentroidModel {
  Matrix centers;  // 7×d, unit rows
  std::array<std::size_t, kNumClasses> counts{};

  serialize::NamedMatrices to_arrays() const;
  static CentroidModel from_arrays(const serialize::NamedMatrices& arrays);
};

// center_c = l2-normalize(mean of embeddings labeled c). Every class 0..6
// must be represented; a zero class mean is an error.
CentroidModel fit_centroids(const Matrix& embeddings,
                            std::span<const int> labels);

struct Classification {
  int cls = 0;
  std::array<double, kNumClasses> similarities{};
};

// argmax cosine similarity over the centers (min cosine distance); ties
// break to the lowest class index.
Classification classify(const CentroidModel& model,
                        std::span<const double> embedding);

}  // namespace affect::embedspace
