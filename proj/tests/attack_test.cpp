#include "gradinv/attack.hpp"

#include <gtest/gtest.h>

#include <random>

#include "gradinv/dataio.hpp"
#include "oracles.hpp"

using namespace gradinv;

namespace {

// Dummy-path gradients through the same soft-label loss the attack uses.
GradientSet dummy_gradients(const Model& model, const ModelParams& params,
                            const Tensor& x, const Tensor& y_logits) {
  LossGraph lg = build_loss_graph(model, params, x, Target::logits(y_logits));
  std::vector<NodeId> wrt;
  for (auto [w, b] : lg.params) {
    wrt.push_back(w);
    wrt.push_back(b);
  }
  const auto grads = lg.graph.backward(lg.loss, wrt);
  GradientSet out;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    out.layers.push_back(
        {params.layers[i].name, grads[2 * i], grads[2 * i + 1]});
  }
  return out;
}

// L_G as a plain function of the dummy image, for finite differences.
double attack_loss(const Model& model, const ModelParams& params,
                   const GradientSet& observed, const MeasureConfig& mcfg,
                   const Tensor& x, const Tensor& y_logits) {
  LossGraph lg = build_loss_graph(model, params, x, Target::logits(y_logits));
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
  return g.value(measure_node(g, nodes, observed, mcfg)).scalar_value();
}

}  // namespace

TEST(InitDummy, RescaleMatchesHandExample) {
  const Tensor draw({3}, {2.0, 4.0, 6.0});
  const Tensor scaled = rescale01(draw);
  EXPECT_DOUBLE_EQ(scaled[0], 0.0);
  EXPECT_DOUBLE_EQ(scaled[1], 0.5);
  EXPECT_DOUBLE_EQ(scaled[2], 1.0);
}

TEST(InitDummy, DegenerateDrawFallsBackToHalf) {
  const Tensor draw({4}, 0.3);
  const Tensor scaled = rescale01(draw);
  for (double v : scaled.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(InitDummy, AttainsExactEndpointsForBothSchemes) {
  for (const InitScheme s :
       {InitScheme::kTransformedGaussian, InitScheme::kUniform}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(seed);
      auto [x, y] = init_dummy({1, 6, 6}, 10, s, rng);
      EXPECT_DOUBLE_EQ(x.min(), 0.0);
      EXPECT_DOUBLE_EQ(x.max(), 1.0);
      EXPECT_DOUBLE_EQ(y.min(), 0.0);
      EXPECT_DOUBLE_EQ(y.max(), 1.0);
      for (double v : x.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(InitDummy, SchemesAreDistinguishableByKs) {
  Rng r1(123), r2(123);
  auto [tg, tg_y] =
      init_dummy({1, 100, 100}, 2, InitScheme::kTransformedGaussian, r1);
  auto [un, un_y] = init_dummy({1, 100, 100}, 2, InitScheme::kUniform, r2);
  const double ks = oracles::ks_statistic(tg.data(), un.data());
  EXPECT_GT(ks, 0.1);
}

TEST(IsConverged, ThresholdIsInclusiveAndNanFails) {
  AttackTrace t;
  t.has_ground_truth = true;
  t.records.push_back({1, 0.5, 0.1, 0.2});
  EXPECT_TRUE(is_converged(t, 0.1));  // boundary counts as converged
  t.records.back().mse = 0.1000001;
  EXPECT_FALSE(is_converged(t, 0.1));
  t.records.back().mse = 0.0;
  EXPECT_TRUE(is_converged(t, 0.1));
  t.records.back().loss = std::nan("");
  EXPECT_FALSE(is_converged(t, 0.1));
  AttackTrace aborted;
  aborted.has_ground_truth = true;
  aborted.aborted = true;
  aborted.records.push_back({1, 0.5, 0.0, 1.0});
  EXPECT_FALSE(is_converged(aborted, 0.1));
}

TEST(Reconstruct, TrueDummyIsAFixedPoint) {
  // Observed gradients taken at (X0, Y0 logits); starting the attack there
  // must give L_G = 0 at iteration 1 and no movement at all.
  Rng mrng(10);
  Model model = make_mlp({1, 4, 4}, {8}, 3);
  ModelParams params = init_params(model, mrng);
  Rng drng(11);
  const Tensor x0 = sample(drng, {1, 4, 4}, Dist::kUniform01);
  const Tensor y0 = sample(drng, {3}, Dist::kUniform01);
  const GradientSet observed = dummy_gradients(model, params, x0, y0);

  for (const MeasureConfig mcfg :
       {MeasureConfig::eucl(), MeasureConfig::gauss(100.0),
        MeasureConfig::adaptive_gauss()}) {
    for (const OptimizerKind opt :
         {OptimizerKind::kLbfgs, OptimizerKind::kAdamw}) {
      AttackConfig cfg;
      cfg.measure = mcfg;
      cfg.optimizer = opt;
      cfg.lr = opt == OptimizerKind::kLbfgs ? 0.1 : 0.001;
      cfg.iterations = 3;
      cfg.start = std::make_pair(x0, y0);
      const AttackTrace trace =
          reconstruct(model, params, observed, cfg, &x0);
      ASSERT_EQ(trace.records.size(), 3u);
      EXPECT_LE(trace.records[0].loss, 1e-20);
      EXPECT_TRUE(trace.final_x.bitwise_equal(x0))
          << measure_name(mcfg.kind) << "/" << optimizer_name(opt);
      EXPECT_TRUE(trace.final_y_logits.bitwise_equal(y0));
      EXPECT_TRUE(trace.converged);
    }
  }
}

TEST(Reconstruct, UnderflowedLambdaFreezesTheAttack) {
  // lambda^2 = 1e-30: exp underflows to zero for every layer, the measure
  // is flat, X' never moves and the run counts as non-converging.
  Rng mrng(20);
  Model model = make_mlp({1, 4, 4}, {8}, 3);
  ModelParams params = init_params(model, mrng);
  Rng drng(21);
  const Tensor x0 = sample(drng, {1, 4, 4}, Dist::kUniform01);
  const GradientSet observed =
      victim_gradients(model, params, x0, std::size_t{1});

  AttackConfig cfg;
  cfg.measure = MeasureConfig::gauss(1e-30);
  cfg.iterations = 10;
  cfg.seed = 7;
  const AttackTrace trace = reconstruct(model, params, observed, cfg, &x0);
  ASSERT_EQ(trace.records.size(), 10u);
  EXPECT_TRUE(trace.final_x.bitwise_equal(trace.initial_x));
  EXPECT_FALSE(trace.converged);
  // The flat measure value is sum of layer weights: 1 + 1/2.
  EXPECT_NEAR(trace.records.front().loss, 1.5, 1e-12);
  EXPECT_NEAR(trace.records.back().loss, 1.5, 1e-12);
}

TEST(Reconstruct, SeedToTraceDeterminism) {
  Rng mrng(30);
  Model model = make_mlp({1, 4, 4}, {8}, 3);
  ModelParams params = init_params(model, mrng);
  Rng drng(31);
  const Tensor x0 = sample(drng, {1, 4, 4}, Dist::kUniform01);
  const GradientSet observed =
      victim_gradients(model, params, x0, std::size_t{0});

  AttackConfig cfg;
  cfg.iterations = 20;
  cfg.seed = 99;
  const AttackTrace a = reconstruct(model, params, observed, cfg, &x0);
  const AttackTrace b = reconstruct(model, params, observed, cfg, &x0);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].loss, b.records[i].loss);
    EXPECT_EQ(a.records[i].mse, b.records[i].mse);
    EXPECT_EQ(a.records[i].ssim, b.records[i].ssim);
  }
  EXPECT_TRUE(a.final_x.bitwise_equal(b.final_x));
  EXPECT_TRUE(a.final_y_logits.bitwise_equal(b.final_y_logits));
}

TEST(Reconstruct, GradientPathMatchesFiniteDifferences) {
  // Spot-check d L_G / d X' on 10 coordinates for both measure families.
  Rng mrng(40);
  Model model = make_mlp({1, 3, 3}, {6}, 2);
  ModelParams params = init_params(model, mrng);
  Rng drng(41);
  const Tensor x0 = sample(drng, {1, 3, 3}, Dist::kUniform01);
  const GradientSet observed =
      victim_gradients(model, params, x0, std::size_t{1});

  Rng irng(42);
  auto [x, y] = init_dummy({1, 3, 3}, 2, InitScheme::kTransformedGaussian,
                           irng);
  for (const MeasureConfig mcfg :
       {MeasureConfig::eucl(), MeasureConfig::adaptive_gauss()}) {
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

    std::mt19937_64 pick(43);
    for (int probe = 0; probe < 10; ++probe) {
      const std::size_t i = pick() % x.numel();
      Tensor xp = x;
      xp[i] += 1e-4;
      const double up = attack_loss(model, params, observed, mcfg, xp, y);
      xp[i] -= 2e-4;
      const double down = attack_loss(model, params, observed, mcfg, xp, y);
      const double fd = (up - down) / 2e-4;
      EXPECT_TRUE(oracles::close(fd, grads[0][i], 1e-4, 1e-10))
          << measure_name(mcfg.kind) << " coord " << i << ": fd=" << fd
          << " engine=" << grads[0][i];
    }
  }
}

TEST(Reconstruct, RecoversSmallSyntheticImage) {
  // 8x8 image, small MLP, TG/Eucl, L-BFGS 0.1, 300 iterations.
  Rng drng(50);
  const Dataset ds = synth(SynthKind::kBinaryStrokes, {1, 8, 8}, 1, 2, drng);
  Rng mrng(51);
  Model model = make_mlp({1, 8, 8}, {32}, 2);
  ModelParams params = init_params(model, mrng);
  const GradientSet observed =
      victim_gradients(model, params, ds.images[0], ds.labels[0]);

  AttackConfig cfg;
  cfg.init = InitScheme::kTransformedGaussian;
  cfg.measure = MeasureConfig::eucl();
  cfg.optimizer = OptimizerKind::kLbfgs;
  cfg.lr = 0.1;
  cfg.iterations = 300;
  cfg.seed = 5;
  const AttackTrace trace =
      reconstruct(model, params, observed, cfg, &ds.images[0]);
  EXPECT_LT(trace.final_mse(), 1e-2);
  EXPECT_TRUE(trace.converged);
  ASSERT_EQ(trace.records.size(), 300u);  // one record per iteration
  for (const TraceRecord& r : trace.records) {
    ASSERT_GE(r.loss, 0.0);
  }
}

TEST(Reconstruct, NumericBlowUpAbortsAndIsNonConverged) {
  // An absurd learning rate on a softplus network: exp() overflows, the
  // run aborts with a recorded reason and counts as non-converged.
  Rng mrng(60);
  auto [model, params] = build_model(Arch::kTinyResnet, {1, 16, 16}, 3, mrng);
  Rng drng(61);
  const Tensor x0 = sample(drng, {1, 16, 16}, Dist::kUniform01);
  const GradientSet observed =
      victim_gradients(model, params, x0, std::size_t{0});

  AttackConfig cfg;
  cfg.lr = 1e8;
  cfg.iterations = 8;
  cfg.seed = 3;
  const AttackTrace trace = reconstruct(model, params, observed, cfg, &x0);
  EXPECT_TRUE(trace.aborted);
  EXPECT_FALSE(trace.converged);
  EXPECT_FALSE(trace.abort_reason.empty());
  EXPECT_LT(trace.records.size(), 8u);
}

TEST(Reconstruct, SnapshotsAtRequestedIterations) {
  Rng mrng(70);
  Model model = make_mlp({1, 3, 3}, {4}, 2);
  ModelParams params = init_params(model, mrng);
  Rng drng(71);
  const Tensor x0 = sample(drng, {1, 3, 3}, Dist::kUniform01);
  const GradientSet observed =
      victim_gradients(model, params, x0, std::size_t{1});

  AttackConfig cfg;
  cfg.iterations = 8;
  cfg.snapshot_iters = default_snapshot_iters(8);  // {0,2,4,6,8}
  const AttackTrace trace = reconstruct(model, params, observed, cfg, &x0);
  ASSERT_EQ(trace.snapshots.size(), 5u);
  EXPECT_EQ(trace.snapshots[0].first, 0u);
  EXPECT_EQ(trace.snapshots[4].first, 8u);
  // Snapshot 0 is the clamped initialization.
  EXPECT_TRUE(trace.snapshots[0].second.bitwise_equal(
      trace.initial_x.clamped01()));
}
