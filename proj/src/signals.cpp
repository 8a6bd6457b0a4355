// SPDX-License-Identifier: Apache-2.0
#include "affect/signals.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "affect/kernels.hpp"

namespace affect::signals {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::size_t SpectrogramConfig::window_samples() const {
  auto w = std::size_t(std::llround(window_ms * sample_rate / 1000.0));
  if (w < 2)
    throw std::invalid_argument("SpectrogramConfig: window of " +
                                std::to_string(w) + " samples (< 2)");
  return w;
}

std::size_t SpectrogramConfig::hop_samples() const {
  const std::size_t w = window_samples();
  const auto ov = std::size_t(std::llround(overlap_ms * sample_rate / 1000.0));
  if (ov >= w)
    throw std::invalid_argument("SpectrogramConfig: overlap >= window");
  return w - ov;
}

std::size_t SpectrogramConfig::frame_count(std::size_t n_samples) const {
  const std::size_t w = window_samples();
  if (n_samples < w)
    throw std::invalid_argument(
        "spectrogram: signal of " + std::to_string(n_samples) +
        " samples shorter than one window (" + std::to_string(w) + ")");
  return (n_samples - w) / hop_samples() + 1;
}

Matrix spectrogram(std::span<const double> samples,
                   const SpectrogramConfig& cfg, bool* degenerate) {
  const std::size_t w = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::size_t frames = cfg.frame_count(samples.size());
  const std::size_t bins = cfg.bins();

  std::vector<double> hann(w);
  for (std::size_t i = 0; i < w; ++i)
    hann[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * double(i) / double(w - 1)));

  // Twiddle tables for the length-w DFT, magnitude bins 0..w/2.
  std::vector<double> cos_tab(bins * w), sin_tab(bins * w);
  for (std::size_t k = 0; k < bins; ++k)
    for (std::size_t i = 0; i < w; ++i) {
      const double a = 2.0 * kPi * double(k) * double(i) / double(w);
      cos_tab[k * w + i] = std::cos(a);
      sin_tab[k * w + i] = std::sin(a);
    }

  Matrix out(frames, bins);
  std::vector<double> frame(w);
  for (std::size_t f = 0; f < frames; ++f) {
    kernels::active().mul(frame.data(), samples.data() + f * hop, hann.data(),
                          w);
    for (std::size_t k = 0; k < bins; ++k) {
      const double re =
          kernels::active().dot(frame.data(), cos_tab.data() + k * w, w);
      const double im =
          kernels::active().dot(frame.data(), sin_tab.data() + k * w, w);
      double mag = std::sqrt(re * re + im * im);
      if (cfg.log_magnitude) mag = std::log(mag + 1e-10);
      out.at(f, k) = mag;
    }
  }

  double lo, hi;
  kernels::active().minmax(out.data(), out.size(), &lo, &hi);
  if (degenerate) *degenerate = false;
  if (hi - lo < 1e-300) {
    // constant spectrogram: convention maps everything to -1
    if (degenerate) *degenerate = true;
    for (auto& v : out.vec()) v = -1.0;
    return out;
  }
  for (auto& v : out.vec()) v = 2.0 * (v - lo) / (hi - lo) - 1.0;
  return out;
}

Point2 SimilarityTransform::apply(Point2 p) const {
  return {scale * (rotation[0][0] * p.x + rotation[0][1] * p.y) + translation.x,
          scale * (rotation[1][0] * p.x + rotation[1][1] * p.y) +
              translation.y};
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  // R^{-1} = R^T
  inv.rotation = {{{rotation[0][0], rotation[1][0]},
                   {rotation[0][1], rotation[1][1]}}};
  const double tx = -(inv.rotation[0][0] * translation.x +
                      inv.rotation[0][1] * translation.y) *
                    inv.scale;
  const double ty = -(inv.rotation[1][0] * translation.x +
                      inv.rotation[1][1] * translation.y) *
                    inv.scale;
  inv.translation = {tx, ty};
  return inv;
}

SimilarityTransform SimilarityTransform::from_angle(double scale,
                                                    double radians,
                                                    Point2 translation) {
  SimilarityTransform t;
  t.scale = scale;
  const double c = std::cos(radians), s = std::sin(radians);
  t.rotation = {{{c, -s}, {s, c}}};
  t.translation = translation;
  return t;
}

SimilarityTransform fit_similarity(std::span<const Point2> src,
                                   std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.size() < 2)
    throw std::invalid_argument("fit_similarity: need >= 2 point pairs");
  const double n = double(src.size());
  Point2 ms, md;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms.x += src[i].x;
    ms.y += src[i].y;
    md.x += dst[i].x;
    md.y += dst[i].y;
  }
  ms.x /= n;
  ms.y /= n;
  md.x /= n;
  md.y /= n;

  // cross-covariance (dst, src) and source variance
  double a = 0, b = 0, c = 0, d = 0, var_src = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double sx = src[i].x - ms.x, sy = src[i].y - ms.y;
    const double dx = dst[i].x - md.x, dy = dst[i].y - md.y;
    a += dx * sx;
    b += dx * sy;
    c += dy * sx;
    d += dy * sy;
    var_src += sx * sx + sy * sy;
  }
  a /= n;
  b /= n;
  c /= n;
  d /= n;
  var_src /= n;
  if (var_src < 1e-24)
    throw std::invalid_argument("fit_similarity: zero source variance");

  // Over SO(2), trace(R^T M) = (a+d) cos(psi) + (c-b) sin(psi), so the
  // trace-maximizing proper rotation is psi = atan2(c-b, a+d) with maximum
  // sqrt((a+d)^2 + (c-b)^2); that maximum equals trace(D S) in the Umeyama
  // closed form, giving the scale directly and absorbing the reflection
  // guard.
  const double rot_angle = std::atan2(c - b, a + d);

  SimilarityTransform t;
  t.scale = std::sqrt((a + d) * (a + d) + (c - b) * (c - b)) / var_src;
  const double cr = std::cos(rot_angle), sr = std::sin(rot_angle);
  t.rotation = {{{cr, -sr}, {sr, cr}}};
  t.translation = {md.x - t.scale * (cr * ms.x - sr * ms.y),
                   md.y - t.scale * (sr * ms.x + cr * ms.y)};
  return t;
}

double alignment_residual(const SimilarityTransform& t,
                          std::span<const Point2> src,
                          std::span<const Point2> dst) {
  double acc = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point2 p = t.apply(src[i]);
    acc += (p.x - dst[i].x) * (p.x - dst[i].x) +
           (p.y - dst[i].y) * (p.y - dst[i].y);
  }
  return acc;
}

ImageF warp_crop(const ImageF& image, const SimilarityTransform& transform,
                 std::size_t out_size) {
  ImageF out(out_size, out_size, image.channels);
  for (std::size_t y = 0; y < out_size; ++y)
    for (std::size_t x = 0; x < out_size; ++x) {
      const Point2 s = transform.apply({double(x), double(y)});
      const double fx = std::floor(s.x), fy = std::floor(s.y);
      const long x0 = long(fx), y0 = long(fy);
      const double wx = s.x - fx, wy = s.y - fy;
      for (std::size_t ch = 0; ch < image.channels; ++ch) {
        auto sample = [&](long yy, long xx) -> double {
          if (yy < 0 || xx < 0 || yy >= long(image.height) ||
              xx >= long(image.width))
            return 0.0;
          return image.at(std::size_t(yy), std::size_t(xx), ch);
        };
        out.at(y, x, ch) = (1 - wy) * ((1 - wx) * sample(y0, x0) +
                                       wx * sample(y0, x0 + 1)) +
                           wy * ((1 - wx) * sample(y0 + 1, x0) +
                                 wx * sample(y0 + 1, x0 + 1));
      }
    }
  return out;
}

ImageF normalize_pixels(const std::vector<std::uint8_t>& pixels,
                        std::size_t height, std::size_t width,
                        std::size_t channels) {
  if (pixels.size() != height * width * channels)
    throw std::invalid_argument("normalize_pixels: size mismatch");
  ImageF out(height, width, channels);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out.data[i] = double(pixels[i]) / 127.5 - 1.0;
  return out;
}

std::array<Point2, 5> canonical_landmarks() {
  // 112x112 five-point face template scaled to the 96x96 frame
  return {{{32.82, 44.31},
           {63.03, 44.14},
           {48.02, 61.49},
           {35.61, 79.17},
           {60.63, 79.03}}};
}

}  // namespace affect::signals
