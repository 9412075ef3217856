#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gradinv/attack.hpp"
#include "gradinv/graph.hpp"
#include "gradinv/measures.hpp"
#include "gradinv/model.hpp"
#include "gradinv/nn.hpp"
#include "gradinv/rng.hpp"

namespace gradinv {

struct CheckResult {
  std::string name;
  double max_err = 0.0;
  bool pass = true;
};

using ValueFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Central finite differences of value_fn against grad_fn. The verdict uses
// a relative tolerance away from zero and an absolute one near it.
inline CheckResult check_gradient(const std::string& name, const ValueFn& value_fn,
                                  const GradFn& grad_fn, std::vector<double> x0,
                                  double step = 1e-4, double rtol = 1e-5,
                                  double atol = 1e-8) {
  const std::vector<double> grad = grad_fn(x0);
  CheckResult result{name, 0.0, true};
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double keep = x0[i];
    x0[i] = keep + step;
    const double up = value_fn(x0);
    x0[i] = keep - step;
    const double down = value_fn(x0);
    x0[i] = keep;
    const double fd = (up - down) / (2.0 * step);
    const double diff = std::fabs(fd - grad[i]);
    if (diff <= atol) continue;
    const double rel = diff / std::max(std::fabs(fd), std::fabs(grad[i]));
    result.max_err = std::max(result.max_err, rel);
    if (rel > rtol) result.pass = false;
  }
  return result;
}

enum class GradcheckScope { kPrimitives, kModels, kAttackPath };

struct GradcheckReport {
  std::vector<CheckResult> checks;
  bool all_pass = true;
  double elapsed_ms = 0.0;

  void add(CheckResult r) {
    all_pass = all_pass && r.pass;
    checks.push_back(std::move(r));
  }
};

namespace detail {

// A differentiable scalar expression over a set of leaf tensors.
struct CheckCase {
  std::string name;
  std::vector<Shape> shapes;
  std::function<NodeId(Graph&, const std::vector<NodeId>&)> build;
  double lo = -1.0, hi = 1.0;
};

inline std::vector<double> random_point(Rng& rng, const CheckCase& c) {
  std::size_t n = 0;
  for (const Shape& s : c.shapes) n += shape_numel(s);
  std::vector<double> x(n);
  for (double& v : x) v = c.lo + (c.hi - c.lo) * rng.uniform01();
  return x;
}

inline std::vector<NodeId> make_leaves(Graph& g, const CheckCase& c,
                                       const std::vector<double>& flat) {
  std::vector<NodeId> leaves;
  std::size_t off = 0;
  for (const Shape& s : c.shapes) {
    const std::size_t n = shape_numel(s);
    leaves.push_back(g.leaf(
        Tensor(s, std::vector<double>(flat.begin() + off,
                                      flat.begin() + off + n))));
    off += n;
  }
  return leaves;
}

inline double case_value(const CheckCase& c, const std::vector<double>& flat) {
  Graph g;
  const auto leaves = make_leaves(g, c, flat);
  return g.value(c.build(g, leaves)).scalar_value();
}

inline std::vector<double> case_gradient(const CheckCase& c,
                                         const std::vector<double>& flat) {
  Graph g;
  const auto leaves = make_leaves(g, c, flat);
  const NodeId out = c.build(g, leaves);
  std::vector<double> result;
  for (const Tensor& t : g.backward(out, leaves)) {
    result.insert(result.end(), t.data().begin(), t.data().end());
  }
  return result;
}

// Weighted-sum probe to turn tensor outputs into a scalar.
inline NodeId probe(Graph& g, NodeId out, Rng& rng) {
  Tensor w(g.value(out).shape());
  for (double& v : w.data()) v = 0.3 + 0.7 * rng.uniform01();
  return g.sum(g.mul(out, g.leaf(std::move(w))));
}

inline std::vector<CheckCase> primitive_cases(std::uint64_t seed) {
  std::vector<CheckCase> cases;
  const Shape m{2, 3};
  // The probe weights must be identical for every evaluation of a case, or
  // the finite-difference comparison would be meaningless; each case seeds
  // its own stream from (seed, case index).
  std::uint64_t salt_counter = 0;
  auto wrap = [seed, &salt_counter](auto f) {
    const std::uint64_t salt = mix_seed(seed, ++salt_counter);
    return [salt, f](Graph& g, const std::vector<NodeId>& in) {
      Rng prng(salt);
      return probe(g, f(g, in), prng);
    };
  };
  cases.push_back({"add", {m, m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.add(i[0], i[1]);
                   })});
  cases.push_back({"sub", {m, m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.sub(i[0], i[1]);
                   })});
  cases.push_back({"mul", {m, m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.mul(i[0], i[1]);
                   })});
  cases.push_back({"div", {m, m},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.div(i[0], i[1]);
                   }),
                   0.5, 1.5});
  cases.push_back({"matmul", {Shape{2, 3}, Shape{3, 4}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.matmul(i[0], i[1]);
                   })});
  cases.push_back({"matmul_t", {Shape{3, 2}, Shape{4, 3}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.matmul(i[0], i[1], true, true);
                   })});
  cases.push_back({"sigmoid", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.sigmoid(i[0]);
                   }),
                   -2.0, 2.0});
  cases.push_back({"tanh", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.tanh(i[0]);
                   }),
                   -2.0, 2.0});
  cases.push_back({"exp", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.exp(i[0]);
                   })});
  cases.push_back({"log", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.log(i[0]);
                   }),
                   0.5, 2.0});
  cases.push_back({"neg", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.neg(i[0]);
                   })});
  cases.push_back({"scale", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.scale(i[0], -1.75);
                   })});
  cases.push_back({"max_const", {m},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.max_const(i[0], 0.1);
                   }),
                   0.2, 1.2});
  cases.push_back({"sum", {m}, [](Graph& g, const std::vector<NodeId>& i) {
                     return g.sum(i[0]);
                   }});
  cases.push_back({"sum_axes", {Shape{2, 3, 2}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.sum(i[0], {1}, false);
                   })});
  cases.push_back({"mean", {m}, [](Graph& g, const std::vector<NodeId>& i) {
                     return g.mean(i[0]);
                   }});
  cases.push_back({"reshape", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.reshape(i[0], {3, 2});
                   })});
  cases.push_back({"broadcast", {Shape{3, 1}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.broadcast(i[0], {2, 3, 4});
                   })});
  cases.push_back({"slice", {Shape{2, 5, 7}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.slice(i[0], {SliceRange{0, 2, 1},
                                           SliceRange{1, 5, 2},
                                           SliceRange{1, 7, 3}});
                   })});
  cases.push_back({"concat", {m, m},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return g.concat({i[0], i[1]}, 1);
                   })});
  cases.push_back({"conv2d", {Shape{1, 2, 6, 6}, Shape{2, 2, 3, 3}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return nn::conv2d(g, i[0], i[1], 1, 0);
                   })});
  cases.push_back({"conv2d_s2p1", {Shape{1, 1, 5, 5}, Shape{2, 1, 3, 3}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return nn::conv2d(g, i[0], i[1], 2, 1);
                   })});
  cases.push_back({"avgpool2", {Shape{1, 2, 4, 4}},
                   wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return nn::avgpool2(g, i[0]);
                   })});
  cases.push_back({"softmax_ce", {Shape{5}, Shape{5}},
                   [](Graph& g, const std::vector<NodeId>& i) {
                     return nn::cross_entropy(g, i[0], nn::softmax(g, i[1]));
                   }});
  cases.push_back({"softplus", {m}, wrap([](Graph& g, const std::vector<NodeId>& i) {
                     return nn::softplus(g, i[0]);
                   }),
                   -2.0, 2.0});
  return cases;
}

// First-order check of a case, plus a second-order pass built from a
// squared-gradient scalar (double backward against finite differences of
// the first-order gradient).
inline void check_case(GradcheckReport& report, const CheckCase& c, Rng& rng,
                       int instances, bool second_order, double rtol,
                       double atol) {
  for (int k = 0; k < instances; ++k) {
    const std::vector<double> x0 = random_point(rng, c);
    report.add(check_gradient(
        c.name, [&](const std::vector<double>& x) { return case_value(c, x); },
        [&](const std::vector<double>& x) { return case_gradient(c, x); }, x0,
        1e-4, rtol, atol));
    if (!second_order) continue;
    // Scalar of first-order gradients: s(x) = sum_i g_i(x)^2 / 2, whose
    // gradient is H g, computable by a second backward.
    auto svalue = [&](const std::vector<double>& x) {
      const auto g = case_gradient(c, x);
      double s = 0.0;
      for (double v : g) s += 0.5 * v * v;
      return s;
    };
    auto sgrad = [&](const std::vector<double>& x) {
      Graph g;
      const auto leaves = make_leaves(g, c, x);
      const NodeId out = c.build(g, leaves);
      const auto first = g.backward_nodes(out, leaves);
      NodeId acc{};
      for (NodeId gn : first) {
        const NodeId term = g.scale(g.sum(g.mul(gn, gn)), 0.5);
        acc = acc.valid() ? g.add(acc, term) : term;
      }
      std::vector<double> flat;
      for (const Tensor& t : g.backward(acc, leaves)) {
        flat.insert(flat.end(), t.data().begin(), t.data().end());
      }
      return flat;
    };
    report.add(check_gradient(c.name + "(second-order)", svalue, sgrad,
                              random_point(rng, c), 1e-4, rtol, atol));
  }
}

}  // namespace detail

// Finite-difference verification gate. Scope kPrimitives covers every op,
// first and second order; kModels checks d loss / d params through each
// architecture; kAttackPath spot-checks d L_G / d X' for both measures.
inline GradcheckReport gradcheck(GradcheckScope scope, std::uint64_t seed) {
  GradcheckReport report;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 0xC0DE));

  switch (scope) {
    case GradcheckScope::kPrimitives: {
      for (const detail::CheckCase& c : detail::primitive_cases(seed)) {
        detail::check_case(report, c, rng, /*instances=*/20,
                           /*second_order=*/true, 1e-5, 1e-8);
      }
      break;
    }
    case GradcheckScope::kModels: {
      for (const Arch arch : {Arch::kLenet5, Arch::kMlp, Arch::kTinyResnet}) {
        Rng mrng(mix_seed(seed, static_cast<std::uint64_t>(arch) + 1));
        auto [model, params] = build_model(arch, {1, 16, 16}, 3, mrng);
        const Tensor image = sample(mrng, {1, 16, 16}, Dist::kUniform01);
        const Target label = Target::one_hot(1, 3);
        const GradientSet grads = victim_gradients(model, params, image, label);
        // Spot-check a handful of parameter coordinates per layer.
        const char* names[] = {"lenet5", "mlp", "tiny_resnet"};
        const std::string base = names[static_cast<int>(arch)];
        ModelParams probe = params;
        CheckResult r{base + " d(loss)/d(params)", 0.0, true};
        for (std::size_t li = 0; li < probe.layers.size(); ++li) {
          for (int k = 0; k < 4; ++k) {
            Tensor& w = probe.layers[li].weight;
            const std::size_t i = rng.index_below(w.numel());
            const double keep = w[i];
            w[i] = keep + 1e-4;
            LossGraph up = build_loss_graph(model, probe, image, label);
            const double lu = up.graph.value(up.loss).scalar_value();
            w[i] = keep - 1e-4;
            LossGraph dn = build_loss_graph(model, probe, image, label);
            const double ld = dn.graph.value(dn.loss).scalar_value();
            w[i] = keep;
            const double fd = (lu - ld) / 2e-4;
            const double want = grads.layers[li].weight[i];
            const double diff = std::fabs(fd - want);
            if (diff > 1e-8) {
              const double rel =
                  diff / std::max(std::fabs(fd), std::fabs(want));
              r.max_err = std::max(r.max_err, rel);
              if (rel > 1e-5) r.pass = false;
            }
          }
        }
        report.add(r);
      }
      break;
    }
    case GradcheckScope::kAttackPath: {
      Rng mrng(mix_seed(seed, 0xA77AC));
      Model model = make_mlp({1, 4, 4}, {8}, 3);
      ModelParams params = init_params(model, mrng);
      const Tensor x0 = sample(mrng, {1, 4, 4}, Dist::kUniform01);
      const GradientSet observed =
          victim_gradients(model, params, x0, std::size_t{1});
      auto [x, y] = init_dummy({1, 4, 4}, 3, InitScheme::kTransformedGaussian,
                               mrng);
      for (const MeasureConfig mcfg :
           {MeasureConfig::eucl(), MeasureConfig::adaptive_gauss()}) {
        auto loss_at = [&](const Tensor& xt) {
          LossGraph lg =
              build_loss_graph(model, params, xt, Target::logits(y));
          Graph& g = lg.graph;
          std::vector<NodeId> wrt;
          for (auto [w, b] : lg.params) {
            wrt.push_back(w);
            wrt.push_back(b);
          }
          const auto dg = g.backward_nodes(lg.loss, wrt);
          std::vector<LayerGradNodes> nodes(lg.params.size());
          for (std::size_t i = 0; i < nodes.size(); ++i) {
            nodes[i] = {dg[2 * i], dg[2 * i + 1]};
          }
          return g.value(measure_node(g, nodes, observed, mcfg))
              .scalar_value();
        };
        LossGraph lg = build_loss_graph(model, params, x, Target::logits(y));
        Graph& g = lg.graph;
        std::vector<NodeId> wrt;
        for (auto [w, b] : lg.params) {
          wrt.push_back(w);
          wrt.push_back(b);
        }
        const auto dg = g.backward_nodes(lg.loss, wrt);
        std::vector<LayerGradNodes> nodes(lg.params.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          nodes[i] = {dg[2 * i], dg[2 * i + 1]};
        }
        const NodeId m = measure_node(g, nodes, observed, mcfg);
        const auto grads = g.backward(m, std::vector<NodeId>{lg.x});
        CheckResult r{std::string("d(L_G)/d(X') ") + measure_name(mcfg.kind),
                      0.0, true};
        for (int probe = 0; probe < 10; ++probe) {
          const std::size_t i = rng.index_below(x.numel());
          Tensor xp = x;
          xp[i] += 1e-4;
          const double up = loss_at(xp);
          xp[i] -= 2e-4;
          const double down = loss_at(xp);
          const double fd = (up - down) / 2e-4;
          const double want = grads[0][i];
          const double diff = std::fabs(fd - want);
          if (diff > 1e-10) {
            const double rel = diff / std::max(std::fabs(fd), std::fabs(want));
            r.max_err = std::max(r.max_err, rel);
            if (rel > 1e-4) r.pass = false;
          }
        }
        report.add(r);
      }
      break;
    }
  }
  report.elapsed_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  return report;
}

inline GradcheckReport gradcheck_all(std::uint64_t seed) {
  GradcheckReport all;
  const auto t0 = std::chrono::steady_clock::now();
  for (const GradcheckScope s :
       {GradcheckScope::kPrimitives, GradcheckScope::kModels,
        GradcheckScope::kAttackPath}) {
    GradcheckReport r = gradcheck(s, seed);
    for (CheckResult& c : r.checks) all.add(std::move(c));
  }
  all.elapsed_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return all;
}

}  // namespace gradinv
