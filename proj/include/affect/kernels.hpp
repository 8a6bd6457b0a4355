// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace affect::kernels {

// Flat-array kernels behind the dense matrix ops. Every entry point has a
// scalar reference implementation; on x86-64 an AVX2 variant is selected at
// runtime when the CPU supports it. Elementwise kernels are bit-identical
// across backends (same per-element operation order); reductions (dot, sum,
// minmax) may differ in accumulation order and are equivalence-tested to
// tight tolerance instead.
struct Backend {
  const char* name;
  void (*add)(double* dst, const double* a, const double* b, std::size_t n);
  void (*sub)(double* dst, const double* a, const double* b, std::size_t n);
  void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
  void (*div)(double* dst, const double* a, const double* b, std::size_t n);
  void (*scale)(double* dst, const double* a, double c, std::size_t n);
  // dst[i] += c * x[i]; the matmul inner loop.
  void (*axpy)(double* dst, double c, const double* x, std::size_t n);
  void (*relu)(double* dst, const double* a, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  void (*minmax)(const double* a, std::size_t n, double* lo, double* hi);
};

const Backend& scalar_backend();

#if defined(__x86_64__) || defined(_M_X64)
const Backend& avx2_backend();
bool avx2_supported();
#endif

// Runtime-selected backend. AFFECT_FORCE_SCALAR=1 in the environment forces
// the scalar path; selection happens once, on first use.
const Backend& active();

}  // namespace affect::kernels
