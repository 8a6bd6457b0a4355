// SPDX-License-Identifier: Apache-2.0
#include "affect/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace affect::kernels {
namespace {

// 4 doubles per 256-bit lane. Elementwise kernels use mul/add (not FMA) so
// per-element rounding matches the scalar reference exactly.

void add_v(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_v(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul_v(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void div_v(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_div_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] / b[i];
}

void scale_v(double* dst, const double* a, double c, std::size_t n) {
  const __m256d cc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), cc));
  for (; i < n; ++i) dst[i] = a[i] * c;
}

void axpy_v(double* dst, double c, const double* x, std::size_t n) {
  const __m256d cc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_loadu_pd(dst + i);
    d = _mm256_add_pd(d, _mm256_mul_pd(cc, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(dst + i, d);
  }
  for (; i < n; ++i) dst[i] += c * x[i];
}

void relu_v(double* dst, const double* a, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  for (; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_v(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                           _mm256_loadu_pd(b + i)));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_v(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

void minmax_v(const double* a, std::size_t n, double* lo, double* hi) {
  double mn = a[0], mx = a[0];
  std::size_t i = 0;
  if (n >= 4) {
    __m256d vmn = _mm256_loadu_pd(a);
    __m256d vmx = vmn;
    for (i = 4; i + 4 <= n; i += 4) {
      __m256d v = _mm256_loadu_pd(a + i);
      vmn = _mm256_min_pd(vmn, v);
      vmx = _mm256_max_pd(vmx, v);
    }
    alignas(32) double t[4];
    _mm256_store_pd(t, vmn);
    mn = t[0];
    for (int k = 1; k < 4; ++k)
      if (t[k] < mn) mn = t[k];
    _mm256_store_pd(t, vmx);
    mx = t[0];
    for (int k = 1; k < 4; ++k)
      if (t[k] > mx) mx = t[k];
  }
  for (; i < n; ++i) {
    if (a[i] < mn) mn = a[i];
    if (a[i] > mx) mx = a[i];
  }
  *lo = mn;
  *hi = mx;
}

}  // namespace

const Backend& avx2_backend() {
  static const Backend b{"avx2", add_v, sub_v,  mul_v, div_v, scale_v,
                         axpy_v, relu_v, dot_v, sum_v, minmax_v};
  return b;
}

bool avx2_supported() { return __builtin_cpu_supports("avx2"); }

}  // namespace affect::kernels

#endif
