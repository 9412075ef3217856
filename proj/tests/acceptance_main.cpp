// Acceptance suite: one pass/fail line per criterion, nonzero exit count on
// failure. Expected values come from independent oracles (straight loops,
// closed forms, finite differences), never from the code under test.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradinv/harness.hpp"
#include "oracles.hpp"

using namespace gradinv;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (std::getline(is, tok, sep)) out.push_back(tok);
  return out;
}

// --------------------------------------------------------------------------
// 1. Differentiation oracle: every primitive and the attack-path composite,
//    first and second order, 20 seeded instances, under 2 CPU minutes.
// --------------------------------------------------------------------------
Outcome criterion_differentiation() {
  Outcome o;
  const GradcheckReport report = gradcheck_all(20240501);
  std::size_t failed = 0;
  double worst = 0.0;
  for (const CheckResult& c : report.checks) {
    worst = std::max(worst, c.max_err);
    if (!c.pass) {
      ++failed;
      o.require(false, "check failed: " + c.name);
    }
  }
  o.require(report.elapsed_ms < 120000.0, "runtime exceeded 2 minutes");
  if (o.pass) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu checks, worst rel err %.2g, %.1fs",
                  report.checks.size(), worst, report.elapsed_ms / 1000.0);
    o.detail = buf;
  }
  return o;
}

// --------------------------------------------------------------------------
// 2. Measure correctness against concatenation, closed-form and two-pass
//    variance oracles.
// --------------------------------------------------------------------------
Outcome criterion_measures() {
  Outcome o;
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    GradientSet a, b;
    for (int l = 0; l < 3; ++l) {
      const std::size_t n = 8 + l * 4;
      a.layers.push_back({"l" + std::to_string(l),
                          Tensor({n}, oracles::random_vector(rng, n)),
                          Tensor({2}, oracles::random_vector(rng, 2))});
      b.layers.push_back({"l" + std::to_string(l),
                          Tensor({n}, oracles::random_vector(rng, n)),
                          Tensor({2}, oracles::random_vector(rng, 2))});
    }
    std::vector<double> fa, fb;
    for (const auto& l : a.layers) {
      fa.insert(fa.end(), l.weight.data().begin(), l.weight.data().end());
      fa.insert(fa.end(), l.bias.data().begin(), l.bias.data().end());
    }
    for (const auto& l : b.layers) {
      fb.insert(fb.end(), l.weight.data().begin(), l.weight.data().end());
      fb.insert(fb.end(), l.bias.data().begin(), l.bias.data().end());
    }
    double oracle = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
      oracle += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    }
    o.require(std::fabs(distance_eucl(a, b) - oracle) <= 1e-12 * oracle,
              "eucl vs concatenated squared norm");
  }
  // ||diff||^2 = lambda^2 with one layer (Q=1): 1 - 1/e.
  GradientSet ga, gb;
  ga.layers.push_back({"l", Tensor({2}, {1.0, 1.0}), Tensor({1}, {0.0})});
  gb.layers.push_back({"l", Tensor({2}, {0.0, 0.0}), Tensor({1}, {0.0})});
  o.require(std::fabs(distance_gauss(ga, gb, 2.0) - (1.0 - std::exp(-1.0))) <=
                1e-12,
            "gauss closed form 1-1/e");
  // lambda_adaptive vs n * two-pass variance.
  for (int t = 0; t < 10; ++t) {
    const auto v = oracles::random_vector(rng, 1000);
    const double want = 1000.0 * oracles::two_pass_variance(v);
    o.require(std::fabs(lambda_adaptive(v) - want) <= 1e-12 * std::fabs(want),
              "lambda_adaptive vs two-pass variance");
  }
  if (o.pass) o.detail = "eucl, gauss closed form, adaptive lambda^2";
  return o;
}

// --------------------------------------------------------------------------
// 3. Metric oracle equivalence on 50 random 8x8 pairs plus fuzzed
//    identities.
// --------------------------------------------------------------------------
Outcome criterion_metrics() {
  Outcome o;
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto av = oracles::random_vector(rng, 64, 0.0, 1.0);
    const auto bv = oracles::random_vector(rng, 64, 0.0, 1.0);
    const Tensor a({1, 8, 8}, av);
    const Tensor b({1, 8, 8}, bv);
    o.require(std::fabs(mse(a, b) - oracles::naive_mse(av, bv)) <= 1e-12,
              "mse vs double-loop oracle");
    o.require(std::fabs(ssim(a, b) - oracles::naive_ssim(av, bv)) <= 1e-12,
              "ssim vs naive statistics oracle");
  }
  for (int t = 0; t < 200; ++t) {
    const std::size_t side = 2 + (rng() % 7);
    Tensor a({1, side, side},
             oracles::random_vector(rng, side * side, -0.5, 1.5));
    a = a.clamped01();
    Tensor b({1, side, side},
             oracles::random_vector(rng, side * side, -0.5, 1.5));
    b = b.clamped01();
    o.require(ssim(a, a) == 1.0, "ssim(a,a) must be exactly 1");
    const double m = mse(a, b);
    o.require(m >= 0.0 && m <= 1.0, "mse out of [0,1] on clamped inputs");
  }
  if (o.pass) o.detail = "50 oracle pairs, 200 fuzzed identities";
  return o;
}

// --------------------------------------------------------------------------
// 4. Fixed point: observed gradients taken at (X0, Y0-logits), dummy
//    started there: L_G <= 1e-20 at iteration 1 and zero movement, for all
//    measures and both optimizers.
// --------------------------------------------------------------------------
Outcome criterion_fixed_point() {
  Outcome o;
  Rng mrng(4);
  Model model = make_mlp({1, 4, 4}, {8}, 3);
  ModelParams params = init_params(model, mrng);
  Rng drng(5);
  const Tensor x0 = sample(drng, {1, 4, 4}, Dist::kUniform01);
  const Tensor y0 = sample(drng, {3}, Dist::kUniform01);

  LossGraph lg = build_loss_graph(model, params, x0, Target::logits(y0));
  std::vector<NodeId> wrt;
  for (auto [w, b] : lg.params) {
    wrt.push_back(w);
    wrt.push_back(b);
  }
  const auto grads = lg.graph.backward(lg.loss, wrt);
  GradientSet observed;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    observed.layers.push_back(
        {params.layers[i].name, grads[2 * i], grads[2 * i + 1]});
  }

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
      const AttackTrace t = reconstruct(model, params, observed, cfg, &x0);
      const std::string tag = std::string(measure_name(mcfg.kind)) + "/" +
                              optimizer_name(opt);
      o.require(!t.records.empty() && t.records[0].loss <= 1e-20,
                tag + ": L_G not <= 1e-20 at iteration 1");
      o.require(t.final_x.bitwise_equal(x0) &&
                    t.final_y_logits.bitwise_equal(y0),
                tag + ": parameters moved");
    }
  }
  if (o.pass) o.detail = "3 measures x 2 optimizers, bitwise frozen";
  return o;
}

// --------------------------------------------------------------------------
// 5. End-to-end reconstruction: 10 seeded 16x16 stroke images, mlp,
//    TG/Eucl, L-BFGS 0.1, 300 iterations; >= 8/10 below MSE 1e-2 and the
//    converged mean beats the random-image baseline. Under 5 CPU minutes.
// --------------------------------------------------------------------------
Outcome criterion_end_to_end() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Settings s;
  s.init = "tg";
  s.measure = "eucl";
  s.optimizer = "lbfgs";
  s.lr = 0.1;
  s.iters = 300;
  ExperimentSpec spec = finalize_spec(s);
  spec.arch = Arch::kMlp;
  spec.dataset = "binary_strokes";
  spec.img_h = spec.img_w = 16;
  spec.dataset_size = 32;
  spec.classes = 10;
  spec.images = 10;
  spec.master_seed = 20240502;
  spec.baseline_trials = 200;

  const RunReport report = run_bench(spec);
  std::size_t hits = 0;
  double mean_converged = 0.0;
  std::size_t n_conv = 0;
  for (const RunResult& r : report.runs) {
    const double m = r.trace.final_mse();
    if (std::isfinite(m) && m < 1e-2) ++hits;
    if (r.trace.converged) {
      mean_converged += m;
      ++n_conv;
    }
  }
  o.require(hits >= 8, "only " + std::to_string(hits) + "/10 below MSE 1e-2");
  o.require(n_conv > 0, "no converged runs");
  if (n_conv > 0) {
    mean_converged /= static_cast<double>(n_conv);
    o.require(mean_converged < report.baseline.mean_mse,
              "converged mean MSE does not beat the random-image baseline");
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  o.require(secs < 300.0, "runtime exceeded 5 minutes");
  if (o.pass) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "%zu/10 hits, mean mse %.2g vs baseline %.2g, %.1fs", hits,
                  mean_converged, report.baseline.mean_mse, secs);
    o.detail = buf;
  }
  return o;
}

// --------------------------------------------------------------------------
// 6. Underflow regime: sweep at lambda^2 = 1e-30 over 5 images; every run
//    non-converging with the dummy image bitwise frozen.
// --------------------------------------------------------------------------
Outcome criterion_underflow() {
  Outcome o;
  Settings s;
  s.init = "tg";
  s.measure = "gauss";
  s.iters = 20;
  ExperimentSpec spec = finalize_spec(s);
  spec.arch = Arch::kMlp;
  spec.dataset = "binary_strokes";
  spec.img_h = spec.img_w = 8;
  spec.dataset_size = 8;
  spec.classes = 4;
  spec.images = 5;
  spec.master_seed = 20240503;
  spec.baseline_trials = 10;

  const RunReport report =
      run_sweep(spec, {"1e-30"}, {InitScheme::kTransformedGaussian});
  o.require(report.nnc.size() == 1 && report.nnc[0] == 5,
            "NNC != 5/5 in the underflow regime");
  for (const RunResult& r : report.runs) {
    o.require(r.trace.final_x.bitwise_equal(r.trace.initial_x),
              "dummy image moved despite underflowed exp()");
    o.require(!r.trace.converged, "run converged in the underflow regime");
  }
  if (o.pass) o.detail = "NNC 5/5, X' bitwise frozen";
  return o;
}

// --------------------------------------------------------------------------
// 7. Initialization contract: exact [0,1] endpoints over 1000 seeds per
//    scheme; TG and Unif separated by KS > 0.1 on 1e4-element draws.
// --------------------------------------------------------------------------
Outcome criterion_init() {
  Outcome o;
  for (const InitScheme scheme :
       {InitScheme::kTransformedGaussian, InitScheme::kUniform}) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      Rng rng(seed);
      auto [x, y] = init_dummy({1, 4, 4}, 5, scheme, rng);
      o.require(x.min() == 0.0 && x.max() == 1.0,
                "image endpoints not exactly {0,1}");
      o.require(y.min() == 0.0 && y.max() == 1.0,
                "label endpoints not exactly {0,1}");
      for (double v : x.data()) {
        o.require(v >= 0.0 && v <= 1.0, "value outside [0,1]");
      }
    }
  }
  Rng r1(77), r2(77);
  auto [tg, tgy] =
      init_dummy({1, 100, 100}, 2, InitScheme::kTransformedGaussian, r1);
  auto [un, uny] = init_dummy({1, 100, 100}, 2, InitScheme::kUniform, r2);
  const double ks = oracles::ks_statistic(tg.data(), un.data());
  o.require(ks > 0.1, "KS statistic between schemes too small");
  if (o.pass) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "2000 draws exact, KS %.3f", ks);
    o.detail = buf;
  }
  return o;
}

// --------------------------------------------------------------------------
// 8. Determinism and exclusion accounting: byte-identical CSVs across
//    repeat runs; aggregates recomputable from per-run rows to 1e-12; NNC
//    equals the count of converged=0 rows.
// --------------------------------------------------------------------------
Outcome criterion_determinism() {
  Outcome o;
  const std::string dir1 = "acceptance-out/det1";
  const std::string dir2 = "acceptance-out/det2";
  auto make_spec = [&](const std::string& dir) {
    Settings s;
    s.iters = 20;
    ExperimentSpec spec = finalize_spec(s);  // four configurations
    spec.arch = Arch::kMlp;
    spec.dataset = "binary_strokes";
    spec.img_h = spec.img_w = 8;
    spec.dataset_size = 16;
    spec.classes = 4;
    spec.images = 4;
    spec.master_seed = 20240504;
    spec.baseline_trials = 16;
    spec.out_dir = dir;
    return spec;
  };
  const ExperimentSpec spec1 = make_spec(dir1);
  const RunReport r1 = run_bench(spec1);
  write_report(r1, spec1);
  const ExperimentSpec spec2 = make_spec(dir2);
  const RunReport r2 = run_bench(spec2);
  write_report(r2, spec2);
  for (const char* f : {"trace.csv", "summary.csv", "curves.csv"}) {
    o.require(read_file(dir1 + "/" + f) == read_file(dir2 + "/" + f),
              std::string(f) + " not byte-identical across repeat runs");
  }
  // Sweep determinism.
  ExperimentSpec sw1 = make_spec(dir1 + "-sweep");
  ExperimentSpec sw2 = make_spec(dir2 + "-sweep");
  sw1.images = sw2.images = 2;
  const RunReport s1 = run_sweep(sw1, {"100", "ag"},
                                 {InitScheme::kTransformedGaussian});
  write_report(s1, sw1);
  const RunReport s2 = run_sweep(sw2, {"100", "ag"},
                                 {InitScheme::kTransformedGaussian});
  write_report(s2, sw2);
  o.require(read_file(dir1 + "-sweep/sweep.csv") ==
                read_file(dir2 + "-sweep/sweep.csv"),
            "sweep.csv not byte-identical across repeat runs");

  // Independent recomputation of the aggregate curves from the CSV rows.
  std::map<std::string, std::size_t> config_index;
  for (std::size_t i = 0; i < r1.config_names.size(); ++i) {
    config_index[r1.config_names[i]] = i;
  }
  std::map<std::pair<std::string, std::size_t>, bool> converged;
  std::map<std::string, std::size_t> nnc_rows;
  {
    std::istringstream is(read_file(dir1 + "/summary.csv"));
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      const auto cols = split(line, ',');
      const bool conv = cols[2] == "1";
      converged[{cols[0], std::stoul(cols[1])}] = conv;
      if (!conv) nnc_rows[cols[0]] += 1;
    }
  }
  for (std::size_t ci = 0; ci < r1.config_names.size(); ++ci) {
    o.require(nnc_rows[r1.config_names[ci]] == r1.nnc[ci],
              "NNC does not equal the count of converged=0 rows");
  }
  std::map<std::pair<std::string, std::size_t>, std::pair<double, double>>
      sums;  // (config, iter) -> (sum mse, sum ssim)
  std::map<std::pair<std::string, std::size_t>, std::size_t> counts;
  {
    std::istringstream is(read_file(dir1 + "/trace.csv"));
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      const auto cols = split(line, ',');
      if (!converged[{cols[0], std::stoul(cols[1])}]) continue;
      const std::size_t iter = std::stoul(cols[2]);
      auto& slot = sums[{cols[0], iter}];
      slot.first += std::stod(cols[4]);
      slot.second += std::stod(cols[5]);
      counts[{cols[0], iter}] += 1;
    }
  }
  for (std::size_t ci = 0; ci < r1.curves.size(); ++ci) {
    const AggregateCurve& curve = r1.curves[ci];
    const std::string& name = r1.config_names[ci];
    for (std::size_t k = 0; k < curve.mean_mse.size(); ++k) {
      const auto key = std::make_pair(name, k + 1);
      const std::size_t n = counts.count(key) ? counts.at(key) : 0;
      o.require(n == curve.counts[k], "curve counts differ from CSV rows");
      if (n == 0) continue;
      const double mse_mean = sums.at(key).first / double(n);
      const double ssim_mean = sums.at(key).second / double(n);
      o.require(std::fabs(mse_mean - curve.mean_mse[k]) <= 1e-12,
                "recomputed mean MSE differs beyond 1e-12");
      o.require(std::fabs(ssim_mean - curve.mean_ssim[k]) <= 1e-12,
                "recomputed mean SSIM differs beyond 1e-12");
    }
  }
  std::filesystem::remove_all("acceptance-out");
  if (o.pass) o.detail = "bench+sweep byte-stable, curves recomputed";
  return o;
}

// --------------------------------------------------------------------------
// 9. Optimizer checks: quadratic convergence, exact first step, hand-
//    computed AdamW update, zero-gradient fixed points.
// --------------------------------------------------------------------------
Outcome criterion_optimizers() {
  Outcome o;
  {
    Lbfgs opt(1.0);
    std::vector<double> x{1.0, 1.0};
    int steps = 0;
    auto deriv = [](const std::vector<double>& p) {
      return std::vector<double>{p[0], 10.0 * p[1]};
    };
    auto norm = [](const std::vector<double>& g) {
      return std::sqrt(g[0] * g[0] + g[1] * g[1]);
    };
    while (steps < 25 && norm(deriv(x)) >= 1e-8) {
      opt.step(x, deriv(x));
      ++steps;
    }
    o.require(norm(deriv(x)) < 1e-8,
              "L-BFGS gradient norm not < 1e-8 within 25 steps");
  }
  {
    Lbfgs opt(0.37);
    std::vector<double> x{0.5, -0.25, 2.0};
    const std::vector<double> g{1.0, -4.0, 0.125};
    std::vector<double> want(3);
    for (int i = 0; i < 3; ++i) want[i] = x[i] - 0.37 * g[i];
    opt.step(x, g);
    o.require(x == want, "first L-BFGS step is not exactly -lr*g");
  }
  {
    Adamw opt(0.001);
    std::vector<double> x{0.0};
    opt.step(x, {1.0});
    const double want = -0.001 * (1.0 / (1.0 + 1e-8));
    o.require(std::fabs(x[0] - want) <= 1e-12,
              "AdamW single step differs from hand computation");
  }
  {
    Adamw adam(0.01);
    Lbfgs lbfgs(0.5);
    std::vector<double> xa{0.4, -0.2}, xl{0.4, -0.2};
    for (int i = 0; i < 4; ++i) {
      adam.step(xa, {0.0, 0.0});
      lbfgs.step(xl, {0.0, 0.0});
    }
    o.require(xa == std::vector<double>({0.4, -0.2}) &&
                  xl == std::vector<double>({0.4, -0.2}),
              "zero gradient is not a fixed point");
  }
  if (o.pass) o.detail = "quadratic, exact first step, AdamW hand value";
  return o;
}

// --------------------------------------------------------------------------
// 10. I/O round-trips: byte-exact IDX fixture, bounded PGM quantization,
//     structured errors on malformed files.
// --------------------------------------------------------------------------
Outcome criterion_io() {
  Outcome o;
  std::filesystem::create_directories("acceptance-out");
  const std::string img_path = "acceptance-out/fixture-images.idx";
  const std::string lbl_path = "acceptance-out/fixture-labels.idx";
  {
    std::ofstream os(img_path, std::ios::binary);
    const unsigned char header[16] = {0, 0, 8, 3, 0, 0, 0, 1,
                                      0, 0, 0, 2, 0, 0, 0, 2};
    os.write(reinterpret_cast<const char*>(header), 16);
    const unsigned char px[4] = {0, 128, 255, 64};
    os.write(reinterpret_cast<const char*>(px), 4);
  }
  {
    std::ofstream os(lbl_path, std::ios::binary);
    const unsigned char header[8] = {0, 0, 8, 1, 0, 0, 0, 1};
    os.write(reinterpret_cast<const char*>(header), 8);
    os.put(3);
  }
  const Dataset ds = load_idx(img_path, lbl_path, 5);
  o.require(ds.size() == 1 && ds.labels[0] == 3, "IDX fixture metadata");
  const double want[4] = {0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0};
  for (int i = 0; i < 4; ++i) {
    o.require(ds.images[0][i] == want[i], "IDX pixel decode not byte-exact");
  }

  std::mt19937_64 rng(10);
  for (int t = 0; t < 50; ++t) {
    const Tensor img({1, 7, 5}, oracles::random_vector(rng, 35, 0.0, 1.0));
    const std::string p = "acceptance-out/rt.pgm";
    save_pgm(p, img);
    const Tensor back = load_pgm(p);
    double err = 0.0;
    for (std::size_t i = 0; i < img.numel(); ++i) {
      err = std::max(err, std::fabs(img[i] - back[i]));
    }
    o.require(err <= 1.0 / 255.0, "PGM round-trip error above 1/255");
  }

  // Malformed-file fuzzing: structured errors, never a crash.
  const std::vector<std::string> bad_pgm = {
      "",  "P6 2 2 255 ....",      "P2 0 1 255 0", "P2 2 1 70000 0 0",
      "P5", "P5 3 3 255 ab",       "P2 2 1 255 0 960",
      "P2 x 1 255 0",              "P5 2 2 255 \x01",
  };
  std::size_t structured = 0;
  for (std::size_t i = 0; i < bad_pgm.size(); ++i) {
    const std::string p = "acceptance-out/bad" + std::to_string(i) + ".pgm";
    std::ofstream(p, std::ios::binary) << bad_pgm[i];
    try {
      (void)load_pgm(p);
      o.require(false, "malformed PGM accepted: case " + std::to_string(i));
    } catch (const IoError&) {
      ++structured;
    }
  }
  const std::vector<std::vector<unsigned char>> bad_idx = {
      {},                                    // empty
      {0, 0, 8, 2, 0, 0, 0, 1},              // wrong magic
      {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2},  // truncated dims
      {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 9},  // short payload
  };
  for (std::size_t i = 0; i < bad_idx.size(); ++i) {
    const std::string p = "acceptance-out/bad" + std::to_string(i) + ".idx";
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bad_idx[i].data()),
             static_cast<std::streamsize>(bad_idx[i].size()));
    os.close();
    try {
      (void)load_idx(p, lbl_path, 1);
      o.require(false, "malformed IDX accepted: case " + std::to_string(i));
    } catch (const IoError&) {
      ++structured;
    }
  }
  std::filesystem::remove_all("acceptance-out");
  if (o.pass) {
    o.detail = "IDX exact, 50 PGM round-trips, " +
               std::to_string(structured) + " fuzz cases structured";
  }
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"differentiation oracle (first+second order, <2min)",
       criterion_differentiation},
      {"measure correctness (eucl/gauss/adaptive)", criterion_measures},
      {"metric oracle equivalence (mse/ssim)", criterion_metrics},
      {"fixed point at the true dummy", criterion_fixed_point},
      {"end-to-end reconstruction beats baseline (<5min)",
       criterion_end_to_end},
      {"underflow regime: NNC 5/5, frozen X'", criterion_underflow},
      {"initialization contract (exact endpoints, KS)", criterion_init},
      {"determinism and exclusion accounting", criterion_determinism},
      {"optimizer checks (L-BFGS, AdamW)", criterion_optimizers},
      {"I/O round-trips and malformed-file fuzzing", criterion_io},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] %2zu %-52s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL",
                i + 1, criteria[i].name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  if (failures > 0) {
    std::printf("%d criteria failed\n", failures);
  } else {
    std::printf("all %zu criteria passed\n", criteria.size());
  }
  return failures;
}
