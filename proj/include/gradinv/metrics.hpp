#pragma once

#include <span>
#include <vector>

#include "gradinv/rng.hpp"
#include "gradinv/tensor.hpp"

namespace gradinv {

namespace detail {

// Images are [C,H,W]; anything of lower rank is treated as one channel.
inline std::size_t channel_count(const Tensor& t) {
  return t.rank() == 3 ? t.extent(0) : 1;
}

struct ChannelStats {
  double mean_a = 0.0, mean_b = 0.0;
  double var_a = 0.0, var_b = 0.0, cov = 0.0;
};

inline ChannelStats channel_stats(std::span<const double> a,
                                  std::span<const double> b) {
  ChannelStats s;
  const double m = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    s.mean_a += a[i];
    s.mean_b += b[i];
  }
  s.mean_a /= m;
  s.mean_b /= m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - s.mean_a;
    const double db = b[i] - s.mean_b;
    s.var_a += da * da;
    s.var_b += db * db;
    s.cov += da * db;
  }
  s.var_a /= m;
  s.var_b /= m;
  s.cov /= m;
  return s;
}

}  // namespace detail

// Stabilizers for the SSIM quotient, c1=(k1 L)^2 and c2=(k2 L)^2 with
// k1=0.01, k2=0.03 and dynamic range L=1.
struct SsimParams {
  double c1 = 1e-4;
  double c2 = 9e-4;
};

// Mean of squared pixel-wise differences; the mean over channels equals the
// mean over all elements since channels have equal size.
inline double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("mse shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

// Global-statistics structural similarity: means, variances and covariance
// over the whole image, per channel, then the channel mean.
inline double ssim(const Tensor& a, const Tensor& b, SsimParams p = {}) {
  if (!a.same_shape(b)) {
    throw ShapeError("ssim shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t channels = detail::channel_count(a);
  const std::size_t per = a.numel() / channels;
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const auto sa = std::span<const double>(a.data()).subspan(c * per, per);
    const auto sb = std::span<const double>(b.data()).subspan(c * per, per);
    const detail::ChannelStats s = detail::channel_stats(sa, sb);
    total += ((2.0 * s.mean_a * s.mean_b + p.c1) * (2.0 * s.cov + p.c2)) /
             ((s.mean_a * s.mean_a + s.mean_b * s.mean_b + p.c1) *
              (s.var_a + s.var_b + p.c2));
  }
  return total / static_cast<double>(channels);
}

struct BaselineResult {
  double mean_mse = 0.0;
  double mean_ssim = 0.0;
};

// Reference point for attack quality: for each trial, pick a target image
// and a different random image from the same set and measure how similar
// they already are. An attack only matters if it beats this.
inline BaselineResult random_image_baseline(std::span<const Tensor> images,
                                            std::size_t trials, Rng& rng) {
  if (images.size() < 2) {
    throw ConfigError("random_image_baseline needs at least 2 images");
  }
  BaselineResult r;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t target = rng.index_below(images.size());
    std::size_t other = rng.index_below(images.size() - 1);
    if (other >= target) ++other;  // never the target itself
    r.mean_mse += mse(images[target], images[other]);
    r.mean_ssim += ssim(images[target], images[other]);
  }
  r.mean_mse /= static_cast<double>(trials);
  r.mean_ssim /= static_cast<double>(trials);
  return r;
}

}  // namespace gradinv
