// SPDX-License-Identifier: Apache-2.0
#include "affect/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace affect {

double grad_check(const ScalarFn& f, std::vector<Matrix> point,
                  const std::vector<Matrix>& analytic, double h) {
  if (point.size() != analytic.size())
    throw std::invalid_argument("grad_check: point/gradient count mismatch");
  double worst = 0.0;
  for (std::size_t m = 0; m < point.size(); ++m) {
    if (!point[m].same_shape(analytic[m]))
      throw std::invalid_argument("grad_check: gradient shape " +
                                  analytic[m].shape_str() + " vs point " +
                                  point[m].shape_str());
    for (std::size_t i = 0; i < point[m].size(); ++i) {
      const double saved = point[m].data()[i];
      point[m].data()[i] = saved + h;
      const double fp = f(point);
      point[m].data()[i] = saved - h;
      const double fm = f(point);
      point[m].data()[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite value at matrix " +
                                 std::to_string(m) + " coordinate " +
                                 std::to_string(i));
      const double numeric = (fp - fm) / (2.0 * h);
      const double exact = analytic[m].data()[i];
      const double denom =
          std::max({1.0, std::fabs(exact), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(exact - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace affect
