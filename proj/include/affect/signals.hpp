// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "affect/matrix.hpp"

namespace affect::signals {

struct SpectrogramConfig {
  double sample_rate = 44100.0;
  double window_ms = 33.0;
  double overlap_ms = 11.0;  // hop = window - overlap
  bool log_magnitude = false;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  std::size_t bins() const { return window_samples() / 2 + 1; }
  std::size_t frame_count(std::size_t n_samples) const;
};

// Magnitude spectrogram of Hann-windowed frames, min-max normalized to
// [-1,1] over the whole matrix. Rows are frames, columns frequency bins
// 0..window/2. A constant signal (min == max after the transform) maps to
// all -1 and sets *degenerate.
Matrix spectrogram(std::span<const double> samples,
                   const SpectrogramConfig& cfg, bool* degenerate = nullptr);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// p -> scale * R * p + t with R a proper rotation.
struct SimilarityTransform {
  double scale = 1.0;
  std::array<std::array<double, 2>, 2> rotation{{{1.0, 0.0}, {0.0, 1.0}}};
  Point2 translation;

  Point2 apply(Point2 p) const;
  SimilarityTransform inverse() const;
  static SimilarityTransform from_angle(double scale, double radians,
                                        Point2 translation);
};

// Least-squares similarity fit (Umeyama closed form, reflection-guarded):
// minimizes sum_i ||s R src_i + t - dst_i||^2.
SimilarityTransform fit_similarity(std::span<const Point2> src,
                                   std::span<const Point2> dst);

double alignment_residual(const SimilarityTransform& t,
                          std::span<const Point2> src,
                          std::span<const Point2> dst);

// h×w×c intensity grid, channel-interleaved rows.
struct ImageF {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> data;

  ImageF() = default;
  ImageF(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), channels(c), data(h * w * c, 0.0) {}
  double& at(std::size_t y, std::size_t x, std::size_t ch) {
    return data[(y * width + x) * channels + ch];
  }
  double at(std::size_t y, std::size_t x, std::size_t ch) const {
    return data[(y * width + x) * channels + ch];
  }
};

// Maps each output pixel through `transform` into the source plane and
// samples bilinearly; out-of-bounds samples are zero.
ImageF warp_crop(const ImageF& image, const SimilarityTransform& transform,
                 std::size_t out_size = 96);

// v -> v/127.5 - 1
ImageF normalize_pixels(const std::vector<std::uint8_t>& pixels,
                        std::size_t height, std::size_t width,
                        std::size_t channels = 3);

// Five-landmark destination template (two eyes, nose, two mouth corners) in
// the 96×96 output frame.
std::array<Point2, 5> canonical_landmarks();

}  // namespace affect::signals
