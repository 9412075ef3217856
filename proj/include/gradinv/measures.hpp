#pragma once

#include <span>
#include <string>
#include <vector>

#include "gradinv/graph.hpp"
#include "gradinv/model.hpp"

namespace gradinv {

// How the distance between the dummy and the observed gradients is scored.
//  - kEucl:  sum over all elements of the squared difference, no weights.
//  - kGauss: per-layer Q_i * (1 - exp(-||d_i||^2 / lambda^2)), one fixed
//            lambda^2 shared by all layers.
//  - kAdaptiveGauss: same, but lambda_i^2 = n_i * Var(observed gradient of
//            layer i), floored to keep the exponent representable.
enum class MeasureKind { kEucl, kGauss, kAdaptiveGauss };

struct MeasureConfig {
  MeasureKind kind = MeasureKind::kEucl;
  double lambda2 = 200.0;        // fixed-Gauss value
  double lambda2_floor = 1e-12;  // adaptive floor for constant layers

  static MeasureConfig eucl() { return {MeasureKind::kEucl, 0.0, 1e-12}; }
  static MeasureConfig gauss(double lambda2) {
    return {MeasureKind::kGauss, lambda2, 1e-12};
  }
  static MeasureConfig adaptive_gauss() {
    return {MeasureKind::kAdaptiveGauss, 0.0, 1e-12};
  }
};

inline const char* measure_name(MeasureKind k) {
  switch (k) {
    case MeasureKind::kEucl: return "eucl";
    case MeasureKind::kGauss: return "gauss";
    case MeasureKind::kAdaptiveGauss: return "ag";
  }
  return "?";
}

// Per-layer weight: 1/i with i the 1-based layer number, so layers close
// to the input count more.
inline double layer_weight(std::size_t layer_index_zero_based) {
  return 1.0 / static_cast<double>(layer_index_zero_based + 1);
}

// n * population variance of a flattened layer gradient, floored.
inline double lambda_adaptive(std::span<const double> values,
                              double floor = 1e-12) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  for (double v : values) {
    ++count;
    const double delta = v - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (v - mean);
  }
  const double variance = m2 / n;
  const double lambda2 = n * variance;
  return lambda2 > floor ? lambda2 : floor;
}

inline double lambda_adaptive(const Tensor& layer_gradient,
                              double floor = 1e-12) {
  return lambda_adaptive(std::span<const double>(layer_gradient.data()), floor);
}

// Per-layer lambda^2 values for a measure against an observed gradient set;
// the adaptive values depend only on the observed side.
inline std::vector<double> per_layer_lambda2(const GradientSet& observed,
                                             const MeasureConfig& cfg) {
  std::vector<double> out(observed.layers.size(), cfg.lambda2);
  if (cfg.kind == MeasureKind::kGauss && cfg.lambda2 <= 0.0) {
    throw ConfigError("gauss measure needs lambda2 > 0, got " +
                      std::to_string(cfg.lambda2));
  }
  if (cfg.kind == MeasureKind::kAdaptiveGauss) {
    for (std::size_t i = 0; i < observed.layers.size(); ++i) {
      const GradientLayer& l = observed.layers[i];
      std::vector<double> flat;
      flat.reserve(l.count());
      flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
      flat.insert(flat.end(), l.bias.data().begin(), l.bias.data().end());
      out[i] = lambda_adaptive(flat, cfg.lambda2_floor);
    }
  }
  return out;
}

// Dummy-side gradient nodes of one layer inside a graph.
struct LayerGradNodes {
  NodeId weight;
  NodeId bias;
};

// Builds the measure as a scalar node: the dummy side stays differentiable
// while the observed gradients enter as constants.
inline NodeId measure_node(Graph& g, std::span<const LayerGradNodes> dummy,
                           const GradientSet& observed,
                           const MeasureConfig& cfg) {
  if (dummy.size() != observed.layers.size()) {
    throw ShapeError("gradient sets have " + std::to_string(dummy.size()) +
                     " vs " + std::to_string(observed.layers.size()) +
                     " layers");
  }
  const std::vector<double> lambda2 = per_layer_lambda2(observed, cfg);
  NodeId total{};
  for (std::size_t i = 0; i < dummy.size(); ++i) {
    const GradientLayer& obs = observed.layers[i];
    if (!g.value(dummy[i].weight).same_shape(obs.weight) ||
        !g.value(dummy[i].bias).same_shape(obs.bias)) {
      throw ShapeError("gradient shape mismatch at layer " + obs.name);
    }
    const NodeId dw = g.sub(dummy[i].weight, g.leaf(obs.weight));
    const NodeId db = g.sub(dummy[i].bias, g.leaf(obs.bias));
    const NodeId sq = g.add(g.sum(g.mul(dw, dw)), g.sum(g.mul(db, db)));
    NodeId term;
    if (cfg.kind == MeasureKind::kEucl) {
      term = sq;
    } else {
      const NodeId e = g.exp(g.scale(sq, -1.0 / lambda2[i]));
      const NodeId one = g.leaf(Tensor::scalar(1.0));
      term = g.scale(g.sub(one, e), layer_weight(i));
    }
    total = total.valid() ? g.add(total, term) : term;
  }
  return total;
}

// Plain-tensor forms: evaluate the same node construction on constants.
namespace detail {

inline std::vector<LayerGradNodes> lift(Graph& g, const GradientSet& set) {
  std::vector<LayerGradNodes> nodes;
  nodes.reserve(set.layers.size());
  for (const GradientLayer& l : set.layers) {
    nodes.push_back({g.leaf(l.weight), g.leaf(l.bias)});
  }
  return nodes;
}

}  // namespace detail

inline double measure_value(const GradientSet& a, const GradientSet& b,
                            const MeasureConfig& cfg) {
  Graph g;
  const auto nodes = detail::lift(g, a);
  return g.value(measure_node(g, nodes, b, cfg)).scalar_value();
}

inline double distance_eucl(const GradientSet& a, const GradientSet& b) {
  return measure_value(a, b, MeasureConfig::eucl());
}

inline double distance_gauss(const GradientSet& a, const GradientSet& b,
                             double lambda2) {
  return measure_value(a, b, MeasureConfig::gauss(lambda2));
}

}  // namespace gradinv
