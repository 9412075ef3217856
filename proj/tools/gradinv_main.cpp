// gradinv: reconstruct training images from shared model gradients and
// benchmark attack configurations (initialization schemes, gradient
// distance measures, optimizers) on desk-scale datasets.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gradinv/harness.hpp"

namespace {

using namespace gradinv;

struct CliValues {
  std::string config_file;
  std::string dataset, arch, init, measure, optimizer, out, grid, size;
  double lambda2 = 0.0, lr = 0.0, wd = 0.0;
  std::uint64_t seed = 0;
  std::uint32_t iters = 0, images = 0, threads = 0, classes = 0, count = 0;
  std::uint32_t trials = 0, image_index = 0;
  bool timings = false;
};

// Adds the shared option set to a subcommand and returns the merged
// Settings builder: file values first, command line wins.
void add_common_options(CLI::App* cmd, CliValues& v) {
  cmd->add_option("--config", v.config_file,
                  "key=value config file; flags override file values");
  cmd->add_option("--dataset", v.dataset,
                  "binary_strokes|uniform_noise|gaussian_blobs|"
                  "idx:IMAGES:LABELS|pgm:DIR");
  cmd->add_option("--arch", v.arch, "lenet5|mlp|tiny_resnet");
  cmd->add_option("--init", v.init, "dummy init scheme: tg|unif");
  cmd->add_option("--measure", v.measure,
                  "gradient distance: eucl|gauss|ag");
  cmd->add_option("--lambda2", v.lambda2, "fixed lambda^2 for gauss");
  cmd->add_option("--optimizer", v.optimizer, "lbfgs|adamw");
  cmd->add_option("--lr", v.lr, "learning rate");
  cmd->add_option("--iters", v.iters, "attack iterations");
  cmd->add_option("--images", v.images, "images per configuration");
  cmd->add_option("--seed", v.seed, "master seed");
  cmd->add_option("--out", v.out, "output directory");
  cmd->add_option("--size", v.size, "synthetic image size HxW");
  cmd->add_option("--classes", v.classes, "synthetic class count");
  cmd->add_option("--count", v.count, "synthetic dataset size / load limit");
  cmd->add_option("--threads", v.threads, "worker threads (0 = auto)");
  cmd->add_option("--wd", v.wd, "adamw weight decay");
  cmd->add_flag("--timings", v.timings,
                "write real per-run wallclock into summary.csv (makes the "
                "output nondeterministic)");
}

Settings settings_from_cli(const CLI::App* cmd, const CliValues& v) {
  Settings s;
  if (!v.config_file.empty()) s = load_config_file(v.config_file);
  Settings cli;
  auto set = [&](const char* flag, auto& field, const auto& value) {
    if (cmd->count(flag) > 0) field = value;
  };
  set("--dataset", cli.dataset, v.dataset);
  set("--arch", cli.arch, v.arch);
  set("--init", cli.init, v.init);
  set("--measure", cli.measure, v.measure);
  set("--optimizer", cli.optimizer, v.optimizer);
  set("--out", cli.out, v.out);
  set("--size", cli.size, v.size);
  if (cmd->get_option_no_throw("--grid") != nullptr) {
    set("--grid", cli.grid, v.grid);
  }
  if (cmd->get_option_no_throw("--image") != nullptr) {
    set("--image", cli.image_index, v.image_index);
  }
  if (cmd->get_option_no_throw("--trials") != nullptr) {
    set("--trials", cli.trials, v.trials);
  }
  set("--lambda2", cli.lambda2, v.lambda2);
  set("--lr", cli.lr, v.lr);
  set("--wd", cli.wd, v.wd);
  set("--seed", cli.seed, v.seed);
  set("--iters", cli.iters, v.iters);
  set("--images", cli.images, v.images);
  set("--threads", cli.threads, v.threads);
  set("--classes", cli.classes, v.classes);
  set("--count", cli.count, v.count);
  if (cmd->count("--timings") > 0) cli.timings = true;
  s.merge_from(cli);
  return s;
}

void print_report_summary(const RunReport& report) {
  std::printf("baseline: mse %.4g ssim %.4g\n", report.baseline.mean_mse,
              report.baseline.mean_ssim);
  for (std::size_t ci = 0; ci < report.config_names.size(); ++ci) {
    double mse_acc = 0.0, ssim_acc = 0.0;
    std::size_t n = 0;
    for (const RunResult& r : report.runs) {
      if (r.config_index != ci || !r.trace.converged) continue;
      mse_acc += r.trace.final_mse();
      ssim_acc += r.trace.final_ssim();
      ++n;
    }
    if (n > 0) {
      std::printf("%-16s nnc %zu  mean final mse %.4g ssim %.4g (%zu runs)\n",
                  report.config_names[ci].c_str(), report.nnc[ci],
                  mse_acc / double(n), ssim_acc / double(n), n);
    } else {
      std::printf("%-16s nnc %zu  (no converged runs)\n",
                  report.config_names[ci].c_str(), report.nnc[ci]);
    }
  }
  std::printf("total wallclock %.0f ms\n", report.total_wallclock_ms);
}

int cmd_attack(const CLI::App* cmd, const CliValues& v) {
  Settings s = settings_from_cli(cmd, v);
  // A single run needs one concrete configuration.
  if (!s.init) s.init = "tg";
  if (!s.measure) s.measure = "eucl";
  ExperimentSpec spec = finalize_spec(s);
  spec.images = 1;

  const Dataset ds = resolve_dataset(spec);
  const std::size_t index = s.image_index.value_or(0);
  if (index >= ds.size()) {
    throw ConfigError("image index " + std::to_string(index) +
                      " out of range (dataset has " +
                      std::to_string(ds.size()) + ")");
  }
  Rng mrng(mix_seed(spec.master_seed, 0x30DE1));
  auto [model, params] =
      build_model(spec.arch, ds.images[index].shape(), ds.classes, mrng);
  const GradientSet observed =
      victim_gradients(model, params, ds.images[index], ds.labels[index]);

  AttackConfig cfg = spec.configs[0].config;
  cfg.seed = run_seed(spec.master_seed, 0, 0);
  cfg.snapshot_iters = default_snapshot_iters(cfg.iterations);
  RunReport report;
  report.config_names.push_back(spec.configs[0].name);
  report.runs.resize(1);
  report.runs[0].seed = cfg.seed;
  report.runs[0].trace =
      reconstruct(model, params, observed, cfg, &ds.images[index]);
  report.nnc.push_back(report.runs[0].trace.converged ? 0 : 1);
  report.curves.push_back(
      detail::aggregate_config(report.runs, 0, cfg.iterations));
  Rng brng(mix_seed(spec.master_seed, 0xBA5E));
  report.baseline = random_image_baseline(ds.images, spec.baseline_trials,
                                          brng);

  std::filesystem::create_directories(spec.out_dir);
  write_trace_csv(report, spec.out_dir + "/trace.csv");
  write_summary_csv(report, spec.out_dir + "/summary.csv", spec.timings);
  write_reconstruction_dumps(report, spec.out_dir);
  save_pgm(spec.out_dir + "/target_0.pgm", ds.images[index]);

  const AttackTrace& t = report.runs[0].trace;
  std::printf("%s on %s[%zu]: %s, final mse %.4g ssim %.4g (%zu iters)\n",
              spec.configs[0].name.c_str(), ds.name.c_str(), index,
              t.converged ? "converged" : "non-converged", t.final_mse(),
              t.final_ssim(), t.records.size());
  if (t.aborted) std::printf("aborted: %s\n", t.abort_reason.c_str());
  std::printf("outputs in %s\n", spec.out_dir.c_str());
  return 0;
}

int cmd_bench(const CLI::App* cmd, const CliValues& v) {
  const ExperimentSpec spec = finalize_spec(settings_from_cli(cmd, v));
  const RunReport report = run_bench(spec);
  write_report(report, spec);
  print_report_summary(report);
  std::printf("outputs in %s\n", spec.out_dir.c_str());
  return 0;
}

int cmd_sweep(const CLI::App* cmd, const CliValues& v) {
  Settings s = settings_from_cli(cmd, v);
  const std::vector<std::string> grid =
      s.grid ? parse_grid(*s.grid) : default_sweep_grid();
  std::vector<InitScheme> schemes;
  if (s.init) {
    schemes.push_back(parse_init(*s.init));
  } else {
    schemes = {InitScheme::kTransformedGaussian, InitScheme::kUniform};
  }
  if (!s.measure) s.measure = "gauss";  // sweep varies the Gaussian family
  const ExperimentSpec base = finalize_spec(s);
  const RunReport report = run_sweep(base, grid, schemes);
  write_report(report, base);
  print_report_summary(report);
  std::printf("outputs in %s\n", base.out_dir.c_str());
  return 0;
}

int cmd_baseline(const CLI::App* cmd, const CliValues& v) {
  const Settings s = settings_from_cli(cmd, v);
  const ExperimentSpec spec = finalize_spec(s);
  const Dataset ds = resolve_dataset(spec);
  Rng rng(mix_seed(spec.master_seed, 0xBA5E));
  const BaselineResult r =
      random_image_baseline(ds.images, spec.baseline_trials, rng);
  std::printf("dataset %s (%zu images), %u trials: mse %.6g ssim %.6g\n",
              ds.name.c_str(), ds.size(), spec.baseline_trials, r.mean_mse,
              r.mean_ssim);
  return 0;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed) {
  GradcheckReport report;
  if (scope == "primitives") {
    report = gradcheck(GradcheckScope::kPrimitives, seed);
  } else if (scope == "models") {
    report = gradcheck(GradcheckScope::kModels, seed);
  } else if (scope == "attack-path") {
    report = gradcheck(GradcheckScope::kAttackPath, seed);
  } else if (scope == "all") {
    report = gradcheck_all(seed);
  } else {
    throw ConfigError("gradcheck scope '" + scope +
                      "' not recognized (accepted: primitives, models, "
                      "attack-path, all)");
  }
  std::size_t failed = 0;
  double worst = 0.0;
  for (const CheckResult& c : report.checks) {
    worst = std::max(worst, c.max_err);
    if (!c.pass) {
      ++failed;
      std::printf("FAIL %s (max rel err %.3g)\n", c.name.c_str(), c.max_err);
    }
  }
  std::printf("%zu checks, %zu failed, worst rel err %.3g, %.0f ms\n",
              report.checks.size(), failed, worst, report.elapsed_ms);
  return report.all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gradient inversion attack lab: reconstruct images from shared "
      "gradients and benchmark attack configurations"};
  app.require_subcommand(1);

  CliValues v;
  std::string gradcheck_scope = "all";

  CLI::App* attack = app.add_subcommand(
      "attack", "reconstruct a single image from its victim gradients");
  add_common_options(attack, v);
  attack->add_option("--image", v.image_index, "dataset index of the target");

  CLI::App* bench = app.add_subcommand(
      "bench", "run every configuration over a set of images");
  add_common_options(bench, v);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "lambda^2 study over a grid of Gaussian-measure values");
  add_common_options(sweep, v);
  sweep->add_option("--grid", v.grid,
                    "comma list of lambda^2 values and/or 'ag'");

  CLI::App* baseline = app.add_subcommand(
      "baseline", "random-image similarity baseline for a dataset");
  add_common_options(baseline, v);
  baseline->add_option("--trials", v.trials, "number of random pairs");

  CLI::App* gc = app.add_subcommand(
      "gradcheck", "finite-difference verification of the attack machinery");
  gc->add_option("--scope", gradcheck_scope,
                 "primitives|models|attack-path|all");
  gc->add_option("--seed", v.seed, "check seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad flags are config errors
  }

  try {
    if (attack->parsed()) return cmd_attack(attack, v);
    if (bench->parsed()) return cmd_bench(bench, v);
    if (sweep->parsed()) return cmd_sweep(sweep, v);
    if (baseline->parsed()) return cmd_baseline(baseline, v);
    if (gc->parsed()) {
      return cmd_gradcheck(gradcheck_scope,
                           gc->count("--seed") > 0 ? v.seed : 0);
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
