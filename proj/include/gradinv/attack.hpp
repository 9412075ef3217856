#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradinv/measures.hpp"
#include "gradinv/metrics.hpp"
#include "gradinv/model.hpp"
#include "gradinv/optim.hpp"
#include "gradinv/rng.hpp"

namespace gradinv {

// Dummy-data initialization schemes: a draw from the underlying
// distribution, rescaled to [0,1]. TG draws standard normal, Unif draws
// uniform; after rescaling TG mass concentrates around 0.5 while Unif
// stays flat.
enum class InitScheme { kTransformedGaussian, kUniform };

inline const char* init_name(InitScheme s) {
  return s == InitScheme::kTransformedGaussian ? "tg" : "unif";
}

// (v - min) / (max - min), elementwise over the whole tensor. A degenerate
// draw with max == min falls back to all 0.5.
inline Tensor rescale01(const Tensor& draw) {
  const double lo = draw.min();
  const double hi = draw.max();
  if (hi == lo) return Tensor(draw.shape(), 0.5);
  Tensor out(draw.shape());
  const double range = hi - lo;
  // Plain division: x/x is exactly 1, so the endpoints land on {0,1}.
  for (std::size_t i = 0; i < draw.numel(); ++i) {
    out[i] = (draw[i] - lo) / range;
  }
  return out;
}

// Dummy image and dummy label logits, drawn independently and each
// rescaled to [0,1]. The image draw comes first in the stream.
inline std::pair<Tensor, Tensor> init_dummy(const Shape& image_shape,
                                            std::size_t classes,
                                            InitScheme scheme, Rng& rng) {
  const Dist dist = scheme == InitScheme::kTransformedGaussian
                        ? Dist::kStandardNormal
                        : Dist::kUniform01;
  Tensor x = rescale01(sample(rng, image_shape, dist));
  Tensor y = rescale01(sample(rng, {classes}, dist));
  return {std::move(x), std::move(y)};
}

enum class OptimizerKind { kLbfgs, kAdamw };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kLbfgs ? "lbfgs" : "adamw";
}

struct AttackConfig {
  InitScheme init = InitScheme::kTransformedGaussian;
  MeasureConfig measure = MeasureConfig::eucl();
  OptimizerKind optimizer = OptimizerKind::kLbfgs;
  double lr = 0.1;
  std::uint32_t iterations = 100;
  std::uint64_t seed = 0;
  double nnc_threshold = 0.1;
  double weight_decay = 0.0;  // adamw only
  // Iterations at which to keep a copy of the dummy image (0 = the
  // initialization). The final state is always kept.
  std::vector<std::uint32_t> snapshot_iters;
  // Optional explicit starting point (X', Y' logits) replacing the
  // scheme draw.
  std::optional<std::pair<Tensor, Tensor>> start;

  void validate() const {
    if (lr <= 0.0) throw ConfigError("learning rate must be > 0");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
  }
};

// Image snapshots at the standard dump points {0, N/4, N/2, 3N/4, N}.
inline std::vector<std::uint32_t> default_snapshot_iters(std::uint32_t n) {
  std::vector<std::uint32_t> out;
  for (const std::uint32_t it : {0u, n / 4, n / 2, 3 * n / 4, n}) {
    if (out.empty() || out.back() != it) out.push_back(it);
  }
  return out;
}

struct TraceRecord {
  std::uint32_t iter = 0;  // 1-based; values measured before this update
  double loss = 0.0;       // gradient-matching loss L_G
  double mse = 0.0;        // vs ground truth, NaN when unavailable
  double ssim = 0.0;
};

struct AttackTrace {
  std::vector<TraceRecord> records;
  Tensor initial_x;
  Tensor final_x;
  Tensor final_y_logits;
  std::vector<std::pair<std::uint32_t, Tensor>> snapshots;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
  double wallclock_ms = 0.0;
  bool has_ground_truth = false;

  double final_loss() const {
    return records.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : records.back().loss;
  }
  double final_mse() const {
    return records.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : records.back().mse;
  }
  double final_ssim() const {
    return records.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : records.back().ssim;
  }
};

// Convergence verdict. With ground truth: final MSE <= tau (inclusive).
// Without: the loss must have dropped to 1e-7 of its initial value. Any
// non-finite value or an aborted run counts as non-converged.
inline bool is_converged(const AttackTrace& trace, double tau) {
  if (trace.aborted || trace.records.empty()) return false;
  for (const TraceRecord& r : trace.records) {
    if (!std::isfinite(r.loss)) return false;
  }
  if (trace.has_ground_truth) {
    const double m = trace.final_mse();
    return std::isfinite(m) && m <= tau;
  }
  const double initial = trace.records.front().loss;
  const double final = trace.records.back().loss;
  return std::isfinite(final) && final <= 1e-7 * initial;
}

namespace detail {

inline std::unique_ptr<Optimizer> make_optimizer(const AttackConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::kLbfgs) {
    return std::make_unique<Lbfgs>(cfg.lr);
  }
  return std::make_unique<Adamw>(cfg.lr, cfg.weight_decay);
}

}  // namespace detail

// The reconstruction loop: initialize dummy data, then for N iterations
// compute dummy gradients (kept differentiable), score them against the
// observed gradients, and step (X', Y') jointly along -d L_G. X' is never
// clamped during optimization; metrics and snapshots use a clamped copy.
inline AttackTrace reconstruct(const Model& model, const ModelParams& params,
                               const GradientSet& observed,
                               const AttackConfig& cfg,
                               const Tensor* ground_truth = nullptr) {
  cfg.validate();
  if (!observed.shapes_match(params)) {
    throw ShapeError("observed gradients do not match model parameters");
  }
  const auto t_start = std::chrono::steady_clock::now();

  Rng rng(cfg.seed);
  auto [x, y_logits] =
      init_dummy(model.input_shape(), model.classes, cfg.init, rng);
  if (cfg.start.has_value()) {
    if (cfg.start->first.shape() != model.input_shape() ||
        cfg.start->second.numel() != model.classes) {
      throw ShapeError("explicit start does not match model shapes");
    }
    x = cfg.start->first;
    y_logits = cfg.start->second;
  }

  AttackTrace trace;
  trace.has_ground_truth = ground_truth != nullptr;
  trace.initial_x = x;

  const std::size_t nx = x.numel();
  const std::size_t ny = y_logits.numel();
  std::vector<double> flat(nx + ny);
  std::copy(x.data().begin(), x.data().end(), flat.begin());
  std::copy(y_logits.data().begin(), y_logits.data().end(),
            flat.begin() + nx);

  std::unique_ptr<Optimizer> opt = detail::make_optimizer(cfg);

  auto unpack = [&](const std::vector<double>& v) {
    std::copy(v.begin(), v.begin() + nx, x.data().begin());
    std::copy(v.begin() + nx, v.end(), y_logits.data().begin());
  };
  auto maybe_snapshot = [&](std::uint32_t iter) {
    for (std::uint32_t want : cfg.snapshot_iters) {
      if (want == iter) {
        trace.snapshots.emplace_back(iter, x.clamped01());
        return;
      }
    }
  };

  maybe_snapshot(0);
  for (std::uint32_t iter = 1; iter <= cfg.iterations; ++iter) {
    double loss_value = 0.0;
    std::vector<Tensor> grads;
    try {
      LossGraph lg = build_loss_graph(model, params, x,
                                      Target::logits(y_logits));
      Graph& g = lg.graph;
      std::vector<NodeId> wrt;
      wrt.reserve(lg.params.size() * 2);
      for (auto [w, b] : lg.params) {
        wrt.push_back(w);
        wrt.push_back(b);
      }
      const std::vector<NodeId> dummy_grads = g.backward_nodes(lg.loss, wrt);
      std::vector<LayerGradNodes> layer_nodes(lg.params.size());
      for (std::size_t i = 0; i < lg.params.size(); ++i) {
        layer_nodes[i] = {dummy_grads[2 * i], dummy_grads[2 * i + 1]};
      }
      const NodeId lg_node =
          measure_node(g, layer_nodes, observed, cfg.measure);
      loss_value = g.value(lg_node).scalar_value();
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite gradient-matching loss");
      }
      grads = g.backward(lg_node, std::vector<NodeId>{lg.x, lg.y});
    } catch (const NumericError& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      break;
    }

    TraceRecord rec;
    rec.iter = iter;
    rec.loss = loss_value;
    if (ground_truth != nullptr) {
      const Tensor clamped = x.clamped01();
      rec.mse = mse(clamped, *ground_truth);
      rec.ssim = ssim(clamped, *ground_truth);
    } else {
      rec.mse = std::numeric_limits<double>::quiet_NaN();
      rec.ssim = std::numeric_limits<double>::quiet_NaN();
    }
    trace.records.push_back(rec);

    std::vector<double> gflat(nx + ny);
    std::copy(grads[0].data().begin(), grads[0].data().end(), gflat.begin());
    std::copy(grads[1].data().begin(), grads[1].data().end(),
              gflat.begin() + nx);
    try {
      opt->step(flat, gflat);
    } catch (const NumericError& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      break;
    }
    unpack(flat);
    if (iter < cfg.iterations) maybe_snapshot(iter);
  }

  trace.final_x = x;
  trace.final_y_logits = y_logits;
  if (!trace.aborted) maybe_snapshot(cfg.iterations);
  trace.converged = is_converged(trace, cfg.nnc_threshold);
  trace.wallclock_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t_start)
          .count();
  return trace;
}

}  // namespace gradinv
