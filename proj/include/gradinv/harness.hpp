#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gradinv/attack.hpp"
#include "gradinv/dataio.hpp"
#include "gradinv/gradcheck.hpp"
#include "gradinv/metrics.hpp"
#include "gradinv/model.hpp"

namespace gradinv {

// ---------------------------------------------------------------------------
// Configuration: key=value files merged with command-line overrides.
// ---------------------------------------------------------------------------

struct Settings {
  std::optional<std::string> dataset, arch, init, measure, optimizer, out;
  std::optional<std::string> grid, size;
  std::optional<double> lambda2, lr, wd;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> iters, images, threads, classes, count;
  std::optional<std::uint32_t> trials, image_index;
  std::optional<bool> timings;

  // Values in `other` win; used for CLI-over-file precedence.
  void merge_from(const Settings& other) {
    auto take = [](auto& mine, const auto& theirs) {
      if (theirs.has_value()) mine = theirs;
    };
    take(dataset, other.dataset);
    take(arch, other.arch);
    take(init, other.init);
    take(measure, other.measure);
    take(optimizer, other.optimizer);
    take(out, other.out);
    take(grid, other.grid);
    take(size, other.size);
    take(lambda2, other.lambda2);
    take(lr, other.lr);
    take(wd, other.wd);
    take(seed, other.seed);
    take(iters, other.iters);
    take(images, other.images);
    take(threads, other.threads);
    take(classes, other.classes);
    take(count, other.count);
    take(trials, other.trials);
    take(image_index, other.image_index);
    take(timings, other.timings);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a non-negative integer: '" + v + "'");
  }
  if (used != v.size()) {
    throw ConfigError(key + ": not a non-negative integer: '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace detail

// Parses the key=value config format. Blank lines and '#' comments are
// allowed; unknown keys are errors so typos never pass silently.
inline Settings parse_config_text(const std::string& text) {
  Settings s;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key == "dataset") s.dataset = value;
    else if (key == "arch") s.arch = value;
    else if (key == "init") s.init = value;
    else if (key == "measure") s.measure = value;
    else if (key == "optimizer") s.optimizer = value;
    else if (key == "out") s.out = value;
    else if (key == "grid") s.grid = value;
    else if (key == "size") s.size = value;
    else if (key == "lambda2") s.lambda2 = detail::parse_double(key, value);
    else if (key == "lr") s.lr = detail::parse_double(key, value);
    else if (key == "wd") s.wd = detail::parse_double(key, value);
    else if (key == "seed") s.seed = detail::parse_u64(key, value);
    else if (key == "iters")
      s.iters = static_cast<std::uint32_t>(detail::parse_u64(key, value));
    else if (key == "images")
      s.images = static_cast<std::uint32_t>(detail::parse_u64(key, value));
    else if (key == "threads")
      s.threads = static_cast<std::uint32_t>(detail::parse_u64(key, value));
    else if (key == "classes")
      s.classes = static_cast<std::uint32_t>(detail::parse_u64(key, value));
    else if (key == "count")
      s.count = static_cast<std::uint32_t>(detail::parse_u64(key, value));
    else if (key == "trials")
      s.trials = static_cast<std::uint32_t>(detail::parse_u64(key, value));
    else if (key == "image")
      s.image_index = static_cast<std::uint32_t>(detail::parse_u64(key, value));
    else if (key == "timings") s.timings = detail::parse_bool(key, value);
    else
      throw ConfigError(
          "unknown config key '" + key +
          "' (accepted: dataset, arch, init, measure, lambda2, optimizer, "
          "lr, iters, images, seed, out, threads, classes, count, size, wd, "
          "grid, trials, image, timings)");
  }
  return s;
}

inline Settings load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return parse_config_text(os.str());
}

inline InitScheme parse_init(const std::string& v) {
  if (v == "tg") return InitScheme::kTransformedGaussian;
  if (v == "unif") return InitScheme::kUniform;
  throw ConfigError("init '" + v + "' not recognized (accepted: tg, unif)");
}

inline MeasureKind parse_measure(const std::string& v) {
  if (v == "eucl") return MeasureKind::kEucl;
  if (v == "gauss") return MeasureKind::kGauss;
  if (v == "ag") return MeasureKind::kAdaptiveGauss;
  throw ConfigError("measure '" + v +
                    "' not recognized (accepted: eucl, gauss, ag)");
}

inline OptimizerKind parse_optimizer(const std::string& v) {
  if (v == "lbfgs") return OptimizerKind::kLbfgs;
  if (v == "adamw") return OptimizerKind::kAdamw;
  throw ConfigError("optimizer '" + v +
                    "' not recognized (accepted: lbfgs, adamw)");
}

inline Arch parse_arch(const std::string& v) {
  if (v == "lenet5") return Arch::kLenet5;
  if (v == "mlp") return Arch::kMlp;
  if (v == "tiny_resnet") return Arch::kTinyResnet;
  throw ConfigError("arch '" + v +
                    "' not recognized (accepted: lenet5, mlp, tiny_resnet)");
}

struct NamedConfig {
  std::string name;
  AttackConfig config;
};

// A full experiment: dataset, model, attack configurations and run counts.
// Per-image seeds derive from the master seed so every output byte is a
// function of (seed, spec).
struct ExperimentSpec {
  std::string dataset = "binary_strokes";
  Arch arch = Arch::kMlp;
  std::vector<NamedConfig> configs;
  std::uint32_t images = 100;
  std::string out_dir = "out";
  std::uint64_t master_seed = 0;
  std::size_t img_h = 16, img_w = 16, channels = 1;
  std::size_t classes = 10;
  std::size_t dataset_size = 128;
  std::uint32_t threads = 1;
  std::uint32_t baseline_trials = 200;
  bool timings = false;
};

namespace detail {

inline std::string format_lambda(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline AttackConfig config_from_settings(const Settings& s) {
  AttackConfig cfg;
  if (s.init) cfg.init = parse_init(*s.init);
  if (s.measure) {
    const MeasureKind kind = parse_measure(*s.measure);
    if (kind == MeasureKind::kGauss) {
      cfg.measure = MeasureConfig::gauss(s.lambda2.value_or(200.0));
    } else if (kind == MeasureKind::kAdaptiveGauss) {
      cfg.measure = MeasureConfig::adaptive_gauss();
    } else {
      cfg.measure = MeasureConfig::eucl();
    }
  }
  if (s.optimizer) cfg.optimizer = parse_optimizer(*s.optimizer);
  cfg.lr = s.lr.value_or(
      cfg.optimizer == OptimizerKind::kLbfgs ? 0.1 : 0.001);
  if (s.wd) cfg.weight_decay = *s.wd;
  if (s.iters) cfg.iterations = *s.iters;
  cfg.validate();
  return cfg;
}

inline std::string config_name(const AttackConfig& cfg) {
  std::string name = init_name(cfg.init);
  name += "-";
  if (cfg.measure.kind == MeasureKind::kGauss) {
    name += "gauss" + format_lambda(cfg.measure.lambda2);
  } else {
    name += measure_name(cfg.measure.kind);
  }
  return name;
}

}  // namespace detail

// Builds the bench spec. Pinning both init and measure gives a single
// configuration; pinning one constrains that axis; pinning neither gives
// the four combinations {tg,unif} x {eucl,ag} the evaluation protocol
// compares. Enum values are validated even on axes left free, so a typo
// never silently falls back to a default.
inline ExperimentSpec finalize_spec(const Settings& s) {
  if (s.init) parse_init(*s.init);
  if (s.measure) parse_measure(*s.measure);
  if (s.optimizer) parse_optimizer(*s.optimizer);
  ExperimentSpec spec;
  if (s.dataset) spec.dataset = *s.dataset;
  if (s.arch) spec.arch = parse_arch(*s.arch);
  // Deeper networks run far fewer images by default.
  if (spec.arch == Arch::kTinyResnet) spec.images = 20;
  if (s.images) spec.images = *s.images;
  if (s.out) spec.out_dir = *s.out;
  if (s.seed) spec.master_seed = *s.seed;
  if (s.classes) spec.classes = *s.classes;
  if (s.count) spec.dataset_size = *s.count;
  if (s.threads) spec.threads = *s.threads;
  if (s.trials) spec.baseline_trials = *s.trials;
  if (s.timings) spec.timings = *s.timings;
  if (s.size) {
    const std::size_t x = s.size->find('x');
    if (x == std::string::npos) {
      throw ConfigError("size must be HxW, got '" + *s.size + "'");
    }
    spec.img_h = detail::parse_u64("size", s.size->substr(0, x));
    spec.img_w = detail::parse_u64("size", s.size->substr(x + 1));
    if (spec.img_h == 0 || spec.img_w == 0) {
      throw ConfigError("size must be positive, got '" + *s.size + "'");
    }
  }
  if (spec.images < 1) throw ConfigError("images must be >= 1");

  const std::vector<std::string> inits =
      s.init ? std::vector<std::string>{*s.init}
             : std::vector<std::string>{"tg", "unif"};
  const std::vector<std::string> measures =
      s.measure ? std::vector<std::string>{*s.measure}
                : std::vector<std::string>{"eucl", "ag"};
  for (const std::string& init : inits) {
    for (const std::string& measure : measures) {
      Settings combo = s;
      combo.init = init;
      combo.measure = measure;
      AttackConfig cfg = detail::config_from_settings(combo);
      spec.configs.push_back({detail::config_name(cfg), cfg});
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Dataset resolution
// ---------------------------------------------------------------------------

// Dataset strings: a synthetic family name, "idx:IMAGES:LABELS", or
// "pgm:DIR" (every *.pgm in the directory, sorted by name).
inline Dataset resolve_dataset(const ExperimentSpec& spec) {
  const std::string& d = spec.dataset;
  if (d == "binary_strokes" || d == "uniform_noise" || d == "gaussian_blobs") {
    const SynthKind kind = d == "binary_strokes" ? SynthKind::kBinaryStrokes
                           : d == "uniform_noise" ? SynthKind::kUniformNoise
                                                  : SynthKind::kGaussianBlobs;
    Rng rng(mix_seed(spec.master_seed, 0xDA7A));
    return synth(kind, {spec.channels, spec.img_h, spec.img_w},
                 spec.dataset_size, spec.classes, rng);
  }
  if (d.rfind("idx:", 0) == 0) {
    const std::string rest = d.substr(4);
    const std::size_t colon = rest.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("idx dataset needs idx:IMAGES:LABELS, got '" + d + "'");
    }
    return load_idx(rest.substr(0, colon), rest.substr(colon + 1),
                    spec.dataset_size);
  }
  if (d.rfind("pgm:", 0) == 0) {
    const std::string dir = d.substr(4);
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
      if (entry.path().extension() == ".pgm") files.push_back(entry.path());
    }
    if (ec) throw IoError("cannot list directory " + dir);
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .pgm files in " + dir);
    Dataset ds;
    ds.name = "pgm";
    ds.classes = spec.classes;
    for (std::size_t i = 0; i < files.size() && i < spec.dataset_size; ++i) {
      ds.images.push_back(load_pgm(files[i].string()));
      ds.labels.push_back(i % ds.classes);
      if (!ds.images.back().same_shape(ds.images.front())) {
        throw IoError("pgm images differ in shape: " + files[i].string());
      }
    }
    return ds;
  }
  throw ConfigError("dataset '" + d +
                    "' not recognized (accepted: binary_strokes, "
                    "uniform_noise, gaussian_blobs, idx:IMG:LBL, pgm:DIR)");
}

// First `n` indices after a seeded shuffle of the whole dataset.
inline std::vector<std::size_t> select_images(std::size_t dataset_size,
                                              std::size_t n,
                                              std::uint64_t master_seed) {
  if (dataset_size < n) {
    throw ConfigError("dataset has " + std::to_string(dataset_size) +
                      " images, need " + std::to_string(n));
  }
  std::vector<std::size_t> idx(dataset_size);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(mix_seed(master_seed, 0x5E1EC7));
  for (std::size_t i = idx.size(); i-- > 1;) {
    std::swap(idx[i], idx[rng.index_below(i + 1)]);
  }
  idx.resize(n);
  return idx;
}

// Seed of one (config, image) run; lets any run be replayed in isolation.
inline std::uint64_t run_seed(std::uint64_t master_seed,
                              std::size_t config_index,
                              std::size_t image_index) {
  return mix_seed(mix_seed(master_seed, config_index + 1), image_index + 1);
}

// ---------------------------------------------------------------------------
// Bench execution
// ---------------------------------------------------------------------------

struct RunResult {
  std::size_t config_index = 0;
  std::size_t image_index = 0;  // position in the selected subset
  std::uint64_t seed = 0;
  AttackTrace trace;
};

struct AggregateCurve {
  std::vector<double> mean_mse;
  std::vector<double> mean_ssim;
  std::vector<std::size_t> counts;  // converged runs contributing per iter
};

struct RunReport {
  std::vector<std::string> config_names;
  std::vector<RunResult> runs;  // ordered by (config, image)
  std::vector<std::size_t> nnc;
  std::vector<AggregateCurve> curves;
  BaselineResult baseline;
  double total_wallclock_ms = 0.0;
  // Sweep shape (empty for plain benches): column labels and per-config
  // (scheme, column) coordinates of the Table-style matrix.
  std::vector<std::string> sweep_columns;
  std::vector<std::string> sweep_scheme_of_config;
  std::vector<std::size_t> sweep_column_of_config;
};

namespace detail {

inline void parallel_for(std::size_t n, std::uint32_t threads,
                         const std::function<void(std::size_t)>& fn) {
  const std::uint32_t workers =
      threads == 0
          ? std::max(1u, std::thread::hardware_concurrency())
          : threads;
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::uint32_t spawn = static_cast<std::uint32_t>(
      std::min<std::size_t>(workers, n));
  pool.reserve(spawn);
  for (std::uint32_t w = 0; w < spawn; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (std::thread& t : pool) t.join();
}

// NNC-excluded per-iteration means over the converged runs of one config.
inline AggregateCurve aggregate_config(const std::vector<RunResult>& runs,
                                       std::size_t config_index,
                                       std::uint32_t iterations) {
  AggregateCurve curve;
  curve.mean_mse.assign(iterations, 0.0);
  curve.mean_ssim.assign(iterations, 0.0);
  curve.counts.assign(iterations, 0);
  for (const RunResult& r : runs) {
    if (r.config_index != config_index || !r.trace.converged) continue;
    for (const TraceRecord& rec : r.trace.records) {
      const std::size_t k = rec.iter - 1;
      if (k >= iterations) continue;
      curve.mean_mse[k] += rec.mse;
      curve.mean_ssim[k] += rec.ssim;
      curve.counts[k] += 1;
    }
  }
  for (std::size_t k = 0; k < iterations; ++k) {
    if (curve.counts[k] > 0) {
      curve.mean_mse[k] /= static_cast<double>(curve.counts[k]);
      curve.mean_ssim[k] /= static_cast<double>(curve.counts[k]);
    } else {
      curve.mean_mse[k] = std::numeric_limits<double>::quiet_NaN();
      curve.mean_ssim[k] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return curve;
}

}  // namespace detail

// Runs every configured attack over the selected images. Failures of
// individual runs are contained: they surface as aborted, non-converged
// rows, never as a bench abort.
inline RunReport run_bench(const ExperimentSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = resolve_dataset(spec);
  const std::vector<std::size_t> picked =
      select_images(ds.size(), spec.images, spec.master_seed);

  Rng mrng(mix_seed(spec.master_seed, 0x30DE1));
  const Shape in_shape = ds.images[0].shape();
  auto [model, params] = build_model(spec.arch, in_shape, ds.classes, mrng);

  RunReport report;
  for (const NamedConfig& nc : spec.configs) report.config_names.push_back(nc.name);

  const std::size_t total = spec.configs.size() * picked.size();
  report.runs.resize(total);
  detail::parallel_for(total, spec.threads, [&](std::size_t flat) {
    const std::size_t ci = flat / picked.size();
    const std::size_t ii = flat % picked.size();
    RunResult& slot = report.runs[flat];
    slot.config_index = ci;
    slot.image_index = ii;
    slot.seed = run_seed(spec.master_seed, ci, ii);
    AttackConfig cfg = spec.configs[ci].config;
    cfg.seed = slot.seed;
    if (cfg.snapshot_iters.empty()) {
      cfg.snapshot_iters = default_snapshot_iters(cfg.iterations);
    }
    const Tensor& image = ds.images[picked[ii]];
    try {
      const GradientSet observed =
          victim_gradients(model, params, image, ds.labels[picked[ii]]);
      slot.trace = reconstruct(model, params, observed, cfg, &image);
    } catch (const std::exception& e) {
      slot.trace.aborted = true;
      slot.trace.converged = false;
      slot.trace.abort_reason = e.what();
    }
  });

  report.nnc.assign(spec.configs.size(), 0);
  for (const RunResult& r : report.runs) {
    if (!r.trace.converged) report.nnc[r.config_index] += 1;
    if (r.trace.aborted) {
      std::fprintf(stderr, "run %s/%zu aborted: %s\n",
                   report.config_names[r.config_index].c_str(), r.image_index,
                   r.trace.abort_reason.c_str());
    }
  }
  for (std::size_t ci = 0; ci < spec.configs.size(); ++ci) {
    report.curves.push_back(detail::aggregate_config(
        report.runs, ci, spec.configs[ci].config.iterations));
  }
  Rng brng(mix_seed(spec.master_seed, 0xBA5E));
  report.baseline =
      random_image_baseline(ds.images, spec.baseline_trials, brng);
  report.total_wallclock_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// Default fixed-lambda grid plus the adaptive column.
inline std::vector<std::string> default_sweep_grid() {
  return {"50", "100", "150", "200", "500", "800", "1000", "1500", "ag"};
}

inline std::vector<std::string> parse_grid(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    const std::string t = detail::trim(tok);
    if (t.empty()) continue;
    if (t != "ag") {
      const double v = detail::parse_double("grid", t);
      if (v <= 0.0) throw ConfigError("grid lambda2 must be > 0, got " + t);
    }
    out.push_back(t);
  }
  if (out.empty()) throw ConfigError("grid is empty");
  return out;
}

// Lambda^2 study: one bench column per grid entry per initialization
// scheme, producing the Table-shaped MSE/SSIM/NNC matrix.
inline RunReport run_sweep(const ExperimentSpec& base,
                           const std::vector<std::string>& grid,
                           const std::vector<InitScheme>& schemes) {
  ExperimentSpec spec = base;
  spec.configs.clear();
  std::vector<std::string> scheme_of;
  std::vector<std::size_t> column_of;
  for (const InitScheme scheme : schemes) {
    for (std::size_t col = 0; col < grid.size(); ++col) {
      AttackConfig cfg = base.configs.empty() ? AttackConfig{}
                                              : base.configs[0].config;
      cfg.init = scheme;
      if (grid[col] == "ag") {
        cfg.measure = MeasureConfig::adaptive_gauss();
      } else {
        cfg.measure =
            MeasureConfig::gauss(detail::parse_double("grid", grid[col]));
      }
      std::string name = std::string(init_name(scheme)) + "-";
      name += grid[col] == "ag" ? "ag" : "gauss" + grid[col];
      spec.configs.push_back({name, cfg});
      scheme_of.push_back(init_name(scheme));
      column_of.push_back(col);
    }
  }
  RunReport report = run_bench(spec);
  report.sweep_columns = grid;
  report.sweep_scheme_of_config = std::move(scheme_of);
  report.sweep_column_of_config = std::move(column_of);
  return report;
}

// ---------------------------------------------------------------------------
// CSV and image output. Every byte is a function of (seed, spec); the
// wallclock_ms column is written as 0 unless timings are explicitly
// enabled, since real timing would break that contract.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_trace_csv(const RunReport& report,
                            const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "config,image,iter,loss,mse,ssim\n";
  for (const RunResult& r : report.runs) {
    for (const TraceRecord& rec : r.trace.records) {
      os << report.config_names[r.config_index] << ',' << r.image_index << ','
         << rec.iter << ',' << detail::fmt(rec.loss) << ','
         << detail::fmt(rec.mse) << ',' << detail::fmt(rec.ssim) << '\n';
    }
  }
  if (!os) throw IoError("write failed for " + path);
}

inline void write_summary_csv(const RunReport& report, const std::string& path,
                              bool timings) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "config,image,converged,final_mse,final_ssim,iters,wallclock_ms\n";
  for (const RunResult& r : report.runs) {
    os << report.config_names[r.config_index] << ',' << r.image_index << ','
       << (r.trace.converged ? 1 : 0) << ',' << detail::fmt(r.trace.final_mse())
       << ',' << detail::fmt(r.trace.final_ssim()) << ','
       << r.trace.records.size() << ','
       << (timings ? static_cast<long>(r.trace.wallclock_ms) : 0L) << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

inline void write_curves_csv(const RunReport& report,
                             const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "config,iter,mean_mse,mean_ssim,converged_runs\n";
  for (std::size_t ci = 0; ci < report.curves.size(); ++ci) {
    const AggregateCurve& c = report.curves[ci];
    for (std::size_t k = 0; k < c.mean_mse.size(); ++k) {
      os << report.config_names[ci] << ',' << k + 1 << ','
         << detail::fmt(c.mean_mse[k]) << ',' << detail::fmt(c.mean_ssim[k])
         << ',' << c.counts[k] << '\n';
    }
  }
  if (!os) throw IoError("write failed for " + path);
}

inline void write_baseline_csv(const RunReport& report, const std::string& path,
                               const ExperimentSpec& spec) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "dataset,trials,mean_mse,mean_ssim\n";
  os << spec.dataset << ',' << spec.baseline_trials << ','
     << detail::fmt(report.baseline.mean_mse) << ','
     << detail::fmt(report.baseline.mean_ssim) << '\n';
  if (!os) throw IoError("write failed for " + path);
}

// Table-shaped matrix: metric,scheme rows by lambda^2 columns. Cells with
// no converged runs print "na", mirroring how an all-diverged column is
// reported.
inline void write_sweep_csv(const RunReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "metric,scheme";
  for (const std::string& col : report.sweep_columns) os << ',' << col;
  os << '\n';

  std::vector<std::string> schemes;
  for (const std::string& s : report.sweep_scheme_of_config) {
    if (std::find(schemes.begin(), schemes.end(), s) == schemes.end()) {
      schemes.push_back(s);
    }
  }
  const std::size_t ncols = report.sweep_columns.size();
  for (const char* metric : {"mse", "ssim", "nnc"}) {
    for (const std::string& scheme : schemes) {
      os << metric << ',' << scheme;
      for (std::size_t col = 0; col < ncols; ++col) {
        // Locate the config for (scheme, col).
        std::size_t ci = report.config_names.size();
        for (std::size_t k = 0; k < report.config_names.size(); ++k) {
          if (report.sweep_scheme_of_config[k] == scheme &&
              report.sweep_column_of_config[k] == col) {
            ci = k;
            break;
          }
        }
        os << ',';
        if (ci == report.config_names.size()) {
          os << "na";
          continue;
        }
        if (std::string(metric) == "nnc") {
          os << report.nnc[ci];
          continue;
        }
        double acc = 0.0;
        std::size_t n = 0;
        for (const RunResult& r : report.runs) {
          if (r.config_index != ci || !r.trace.converged) continue;
          acc += std::string(metric) == "mse" ? r.trace.final_mse()
                                              : r.trace.final_ssim();
          ++n;
        }
        if (n == 0) {
          os << "na";
        } else {
          os << detail::fmt(acc / static_cast<double>(n));
        }
      }
      os << '\n';
    }
  }
  if (!os) throw IoError("write failed for " + path);
}

// Non-convergence counts as an init-scheme by measure matrix, the layout
// used when comparing configurations side by side.
inline void write_nnc_csv(const RunReport& report, const ExperimentSpec& spec,
                          const std::string& path) {
  std::vector<std::string> schemes, measures;
  std::map<std::pair<std::string, std::string>, std::size_t> cell;
  for (std::size_t ci = 0; ci < spec.configs.size(); ++ci) {
    const AttackConfig& cfg = spec.configs[ci].config;
    const std::string scheme = init_name(cfg.init);
    std::string measure = measure_name(cfg.measure.kind);
    if (cfg.measure.kind == MeasureKind::kGauss) {
      measure += detail::format_lambda(cfg.measure.lambda2);
    }
    if (std::find(schemes.begin(), schemes.end(), scheme) == schemes.end()) {
      schemes.push_back(scheme);
    }
    if (std::find(measures.begin(), measures.end(), measure) ==
        measures.end()) {
      measures.push_back(measure);
    }
    cell[{scheme, measure}] = report.nnc[ci];
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "scheme";
  for (const std::string& m : measures) os << ',' << m;
  os << '\n';
  for (const std::string& s : schemes) {
    os << s;
    for (const std::string& m : measures) {
      os << ',';
      const auto it = cell.find({s, m});
      if (it == cell.end()) {
        os << "na";
      } else {
        os << it->second;
      }
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

inline void write_reconstruction_dumps(const RunReport& report,
                                       const std::string& out_dir) {
  for (const RunResult& r : report.runs) {
    for (const auto& [iter, image] : r.trace.snapshots) {
      std::ostringstream name;
      name << out_dir << "/recon_" << report.config_names[r.config_index]
           << "_" << r.image_index << "_" << iter << ".pgm";
      save_pgm(name.str(), image);
    }
  }
}

// Writes the full report: trace/summary/curves/baseline CSVs, optional
// sweep matrix, and the snapshot PGMs.
inline void write_report(const RunReport& report, const ExperimentSpec& spec) {
  std::filesystem::create_directories(spec.out_dir);
  write_trace_csv(report, spec.out_dir + "/trace.csv");
  write_summary_csv(report, spec.out_dir + "/summary.csv", spec.timings);
  write_curves_csv(report, spec.out_dir + "/curves.csv");
  write_baseline_csv(report, spec.out_dir + "/baseline.csv", spec);
  if (!report.sweep_columns.empty()) {
    write_sweep_csv(report, spec.out_dir + "/sweep.csv");
  } else {
    write_nnc_csv(report, spec, spec.out_dir + "/nnc.csv");
  }
  write_reconstruction_dumps(report, spec.out_dir);
}

}  // namespace gradinv
