// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "affect/losses.hpp"

namespace affect::metrics {

// Identical computation to losses::ccc (shared implementation).
inline double ccc_metric(std::span<const double> pred,
                         std::span<const double> labels,
                         bool* degenerate = nullptr) {
  return losses::ccc(pred, labels, degenerate);
}

struct F1Result {
  double value = 0.0;
  bool zero_division = false;  // P + R == 0
};

// Binary F1 from TP/FP/FN counts; entries must be in {0,1}.
F1Result f1(std::span<const int> predictions, std::span<const int> targets);

// Unweighted mean of per-column F1 over an n×K binary label matrix.
F1Result macro_f1(const Matrix& predictions, const Matrix& targets);
// TP/FP/FN pooled across columns before the F1.
F1Result micro_f1(const Matrix& predictions, const Matrix& targets);

double accuracy(std::span<const int> pred, std::span<const int> truth);

// 7×7 counts, rows = true class, cols = predicted.
class ConfusionMatrix {
 public:
  static constexpr std::size_t kClasses = 7;

  void add(int true_class, int predicted_class);
  std::size_t count(std::size_t t, std::size_t p) const { return cells_[t][p]; }
  std::size_t total() const;
  std::size_t trace() const;

  static ConfusionMatrix from(std::span<const int> truth,
                              std::span<const int> pred);

 private:
  std::array<std::array<std::size_t, kClasses>, kClasses> cells_{};
};

// Mean per-class recall (diagonal of the row-normalized matrix). Empty rows
// are excluded (reported via *excluded_rows) unless strict, which throws.
double mean_diagonal(const ConfusionMatrix& cm, bool strict = false,
                     std::size_t* excluded_rows = nullptr);

}  // namespace affect::metrics
