#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <memory>
#include <vector>

#include "gradinv/errors.hpp"

namespace gradinv {

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void check_gradient_finite(const std::vector<double>& g) {
  for (double v : g) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite gradient in optimizer step");
    }
  }
}

}  // namespace detail

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // One update of x in place given the gradient at x. One call = one
  // attack iteration; there is no line search.
  virtual void step(std::vector<double>& x, const std::vector<double>& g) = 0;
};

// L-BFGS with a fixed step size and the standard two-loop recursion.
// Curvature pairs with s.y below the threshold are rejected, not stored.
class Lbfgs : public Optimizer {
 public:
  explicit Lbfgs(double lr, std::size_t history = 20)
      : lr_(lr), history_(history) {
    if (lr <= 0.0) throw ConfigError("lbfgs learning rate must be > 0");
  }

  void step(std::vector<double>& x, const std::vector<double>& g) override {
    detail::check_gradient_finite(g);
    if (has_prev_) {
      std::vector<double> s(x.size()), y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        s[i] = x[i] - prev_x_[i];
        y[i] = g[i] - prev_g_[i];
      }
      const double sy = detail::dot(s, y);
      if (sy > kCurvatureFloor) {
        pairs_.push_back({std::move(s), std::move(y), 1.0 / sy});
        if (pairs_.size() > history_) pairs_.pop_front();
      }
    }
    prev_x_ = x;
    prev_g_ = g;
    has_prev_ = true;

    const std::vector<double> d = direction(g);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += lr_ * d[i];
  }

  std::size_t history_size() const noexcept { return pairs_.size(); }

  static constexpr double kCurvatureFloor = 1e-10;

 private:
  struct Pair {
    std::vector<double> s, y;
    double rho;
  };

  // Two-loop recursion; with no stored pairs the direction is plain -g.
  std::vector<double> direction(const std::vector<double>& g) const {
    std::vector<double> q = g;
    if (pairs_.empty()) {
      for (double& v : q) v = -v;
      return q;
    }
    std::vector<double> alpha(pairs_.size());
    for (std::size_t i = pairs_.size(); i-- > 0;) {
      alpha[i] = pairs_[i].rho * detail::dot(pairs_[i].s, q);
      for (std::size_t j = 0; j < q.size(); ++j) {
        q[j] -= alpha[i] * pairs_[i].y[j];
      }
    }
    const Pair& newest = pairs_.back();
    const double gamma =
        detail::dot(newest.s, newest.y) / detail::dot(newest.y, newest.y);
    for (double& v : q) v *= gamma;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      const double beta = pairs_[i].rho * detail::dot(pairs_[i].y, q);
      for (std::size_t j = 0; j < q.size(); ++j) {
        q[j] += (alpha[i] - beta) * pairs_[i].s[j];
      }
    }
    for (double& v : q) v = -v;
    return q;
  }

  double lr_;
  std::size_t history_;
  std::deque<Pair> pairs_;
  std::vector<double> prev_x_, prev_g_;
  bool has_prev_ = false;
};

// AdamW: Adam with bias correction and decoupled weight decay. The decay
// defaults to 0; pulling dummy pixels toward zero is a side effect the
// attack configuration must opt into.
class Adamw : public Optimizer {
 public:
  explicit Adamw(double lr, double weight_decay = 0.0, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw ConfigError("adamw learning rate must be > 0");
  }

  void step(std::vector<double>& x, const std::vector<double>& g) override {
    detail::check_gradient_finite(g);
    if (m_.empty()) {
      m_.assign(x.size(), 0.0);
      v_.assign(x.size(), 0.0);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      x[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * x[i]);
    }
  }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace gradinv
