// Test-only reference implementations, written independently of the library
// code they check: straight loops, no graph, no shared helpers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace oracles {

// Central finite differences of a scalar function of a flat vector.
inline std::vector<double> fd_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double step = 1e-4) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// abs for near-zero values, relative otherwise.
inline bool close(double a, double b, double rtol, double atol) {
  const double diff = std::fabs(a - b);
  if (diff <= atol) return true;
  return diff <= rtol * std::max(std::fabs(a), std::fabs(b));
}

inline double max_mismatch(const std::vector<double>& a,
                           const std::vector<double>& b, double atol) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::fabs(a[i] - b[i]);
    if (diff <= atol) continue;
    worst = std::max(worst, diff / std::max(std::fabs(a[i]), std::fabs(b[i])));
  }
  return worst;
}

// Direct sliding-window cross-correlation, single image, no padding logic
// shared with the library (padding applied by the caller if wanted).
// x: [cin][h][w] flattened, k: [cout][cin][kh][kw] flattened.
inline std::vector<double> naive_conv2d(const std::vector<double>& x,
                                        std::size_t cin, std::size_t h,
                                        std::size_t w,
                                        const std::vector<double>& k,
                                        std::size_t cout, std::size_t kh,
                                        std::size_t kw, std::size_t stride) {
  const std::size_t hout = (h - kh) / stride + 1;
  const std::size_t wout = (w - kw) / stride + 1;
  std::vector<double> out(cout * hout * wout, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t i = 0; i < hout; ++i)
      for (std::size_t j = 0; j < wout; ++j) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ki = 0; ki < kh; ++ki)
            for (std::size_t kj = 0; kj < kw; ++kj) {
              acc += k[((co * cin + ci) * kh + ki) * kw + kj] *
                     x[(ci * h + i * stride + ki) * w + j * stride + kj];
            }
        out[(co * hout + i) * wout + j] = acc;
      }
  return out;
}

inline double two_pass_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

inline double naive_mse(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return acc / static_cast<double>(a.size());
}

// Global-statistics SSIM over a single channel, c1=(0.01)^2, c2=(0.03)^2.
inline double naive_ssim(const std::vector<double>& a,
                         const std::vector<double>& b) {
  const double m = static_cast<double>(a.size());
  double mu_a = 0.0, mu_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mu_a += a[i];
    mu_b += b[i];
  }
  mu_a /= m;
  mu_b /= m;
  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    var_a += (a[i] - mu_a) * (a[i] - mu_a);
    var_b += (b[i] - mu_b) * (b[i] - mu_b);
    cov += (a[i] - mu_a) * (b[i] - mu_b);
  }
  var_a /= m;
  var_b /= m;
  cov /= m;
  const double c1 = 1e-4, c2 = 9e-4;
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia] <= b[ib]) {
      ++ia;
    } else {
      ++ib;
    }
    const double fa = static_cast<double>(ia) / static_cast<double>(a.size());
    const double fb = static_cast<double>(ib) / static_cast<double>(b.size());
    d = std::max(d, std::fabs(fa - fb));
  }
  return d;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n,
                                         double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace oracles
