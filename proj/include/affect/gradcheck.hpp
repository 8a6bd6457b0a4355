// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "affect/matrix.hpp"

namespace affect {

// Scalar function of a list of matrices.
using ScalarFn = std::function<double(const std::vector<Matrix>&)>;

// Central finite differences against the supplied analytic gradients.
// Returns max over all coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws std::runtime_error identifying the coordinate if f evaluates
// non-finite at a probe point.
double grad_check(const ScalarFn& f, std::vector<Matrix> point,
                  const std::vector<Matrix>& analytic, double h = 1e-5);

}  // namespace affect
