// SPDX-License-Identifier: Apache-2.0
#include "affect/metrics.hpp"

#include <stdexcept>
#include <string>

namespace affect::metrics {

namespace {

F1Result f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0 && fp == 0 && fn == 0) return {0.0, true};
  const double p_denom = double(tp + fp), r_denom = double(tp + fn);
  const double precision = p_denom > 0 ? double(tp) / p_denom : 0.0;
  const double recall = r_denom > 0 ? double(tp) / r_denom : 0.0;
  if (precision + recall == 0.0) return {0.0, true};
  return {2.0 * precision * recall / (precision + recall), false};
}

void require_binary(double v, const char* what) {
  if (v != 0.0 && v != 1.0)
    throw std::invalid_argument(std::string(what) + ": entry " +
                                std::to_string(v) + " not in {0,1}");
}

}  // namespace

F1Result f1(std::span<const int> predictions, std::span<const int> targets) {
  if (predictions.size() != targets.size())
    throw std::invalid_argument("f1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] != 0 && predictions[i] != 1)
      throw std::invalid_argument("f1: prediction not in {0,1}");
    if (targets[i] != 0 && targets[i] != 1)
      throw std::invalid_argument("f1: target not in {0,1}");
    if (predictions[i] == 1 && targets[i] == 1) ++tp;
    else if (predictions[i] == 1) ++fp;
    else if (targets[i] == 1) ++fn;
  }
  return f1_from_counts(tp, fp, fn);
}

F1Result macro_f1(const Matrix& predictions, const Matrix& targets) {
  if (!predictions.same_shape(targets))
    throw std::invalid_argument("macro_f1: shape mismatch " +
                                predictions.shape_str() + " vs " +
                                targets.shape_str());
  double acc = 0.0;
  bool any_zero = false;
  for (std::size_t c = 0; c < predictions.cols(); ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < predictions.rows(); ++r) {
      require_binary(predictions.at(r, c), "macro_f1 predictions");
      require_binary(targets.at(r, c), "macro_f1 targets");
      const bool p = predictions.at(r, c) == 1.0, t = targets.at(r, c) == 1.0;
      if (p && t) ++tp;
      else if (p) ++fp;
      else if (t) ++fn;
    }
    F1Result col = f1_from_counts(tp, fp, fn);
    any_zero = any_zero || col.zero_division;
    acc += col.value;
  }
  return {acc / double(predictions.cols()), any_zero};
}

F1Result micro_f1(const Matrix& predictions, const Matrix& targets) {
  if (!predictions.same_shape(targets))
    throw std::invalid_argument("micro_f1: shape mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    require_binary(predictions.vec()[i], "micro_f1 predictions");
    require_binary(targets.vec()[i], "micro_f1 targets");
    const bool p = predictions.vec()[i] == 1.0, t = targets.vec()[i] == 1.0;
    if (p && t) ++tp;
    else if (p) ++fp;
    else if (t) ++fn;
  }
  return f1_from_counts(tp, fp, fn);
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("accuracy: length mismatch");
  if (pred.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == truth[i]) ++hits;
  return double(hits) / double(pred.size());
}

void ConfusionMatrix::add(int true_class, int predicted_class) {
  if (true_class < 0 || std::size_t(true_class) >= kClasses ||
      predicted_class < 0 || std::size_t(predicted_class) >= kClasses)
    throw std::invalid_argument("ConfusionMatrix: class out of 0..6");
  ++cells_[std::size_t(true_class)][std::size_t(predicted_class)];
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : cells_)
    for (std::size_t v : row) n += v;
  return n;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kClasses; ++i) n += cells_[i][i];
  return n;
}

ConfusionMatrix ConfusionMatrix::from(std::span<const int> truth,
                                      std::span<const int> pred) {
  if (truth.size() != pred.size())
    throw std::invalid_argument("ConfusionMatrix: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
  return cm;
}

double mean_diagonal(const ConfusionMatrix& cm, bool strict,
                     std::size_t* excluded_rows) {
  double acc = 0.0;
  std::size_t scored = 0, excluded = 0;
  for (std::size_t t = 0; t < ConfusionMatrix::kClasses; ++t) {
    std::size_t row_total = 0;
    for (std::size_t p = 0; p < ConfusionMatrix::kClasses; ++p)
      row_total += cm.count(t, p);
    if (row_total == 0) {
      if (strict)
        throw std::invalid_argument("mean_diagonal: class " +
                                    std::to_string(t) + " has no samples");
      ++excluded;
      continue;
    }
    acc += double(cm.count(t, t)) / double(row_total);
    ++scored;
  }
  if (excluded_rows) *excluded_rows = excluded;
  if (scored == 0)
    throw std::invalid_argument("mean_diagonal: empty confusion matrix");
  return acc / double(scored);
}

}  // namespace affect::metrics
