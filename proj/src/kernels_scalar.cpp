// SPDX-License-Identifier: Apache-2.0
#include "affect/kernels.hpp"

namespace affect::kernels {
namespace {

void add_s(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_s(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul_s(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void div_s(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] / b[i];
}

void scale_s(double* dst, const double* a, double c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * c;
}

void axpy_s(double* dst, double c, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += c * x[i];
}

void relu_s(double* dst, const double* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

double dot_s(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_s(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void minmax_s(const double* a, std::size_t n, double* lo, double* hi) {
  double mn = a[0], mx = a[0];
  for (std::size_t i = 1; i < n; ++i) {
    if (a[i] < mn) mn = a[i];
    if (a[i] > mx) mx = a[i];
  }
  *lo = mn;
  *hi = mx;
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend b{"scalar", add_s, sub_s,  mul_s, div_s, scale_s,
                         axpy_s,   relu_s, dot_s, sum_s, minmax_s};
  return b;
}

}  // namespace affect::kernels
