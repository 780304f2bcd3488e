#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "polyrad/baselines.hpp"
#include "polyrad/benchmark.hpp"
#include "polyrad/config.hpp"
#include "polyrad/errors.hpp"
#include "polyrad/evaluate.hpp"
#include "polyrad/gradcheck.hpp"
#include "polyrad/network.hpp"
#include "polyrad/polytransform.hpp"
#include "polyrad/synthgen.hpp"
#include "polyrad/training.hpp"

namespace polyrad::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<long long> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--set", c.sets, "extra key=value override (repeatable)");
  cmd->add_option("--seed", c.seed, "seed for generation, initialization and shuffling");
}

KeyValueConfig resolve(const Common& c) {
  KeyValueConfig cfg = c.config_path.empty() ? KeyValueConfig() : KeyValueConfig::load(c.config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) {
    cfg.set("seed", std::to_string(*c.seed));
    cfg.set("init_seed", std::to_string(*c.seed));
  }
  return cfg;
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
}

std::vector<SceneSample> select(std::vector<SceneSample> scenes, const std::string& split) {
  if (split == "all") return scenes;
  const auto parts = train::split_by_parity(scenes);
  if (split == "test") return parts.test;
  if (split == "train") return parts.train;
  if (split == "validation") return parts.validation;
  throw UsageError("unknown split '" + split + "' (expected all, train, validation or test)");
}

train::ExperimentConfig experiment_for(const std::string& preset, const KeyValueConfig& cfg) {
  if (preset == "benchmark") return bench::experiment(cfg);
  if (preset != "default") throw UsageError("unknown preset '" + preset + "' (expected default or benchmark)");
  train::ExperimentConfig e;
  e.net = net::NetConfig::from_config(cfg);
  e.train = train::TrainConfig::from_config(cfg);
  e.loss = train::LossConfig::from_config(cfg);
  return e;
}

std::string format_coeffs(const std::string& id, const PolyCoefficients& c) {
  std::ostringstream os;
  char buf[40];
  os << id;
  std::snprintf(buf, sizeof buf, ",%.17g", c.z_max);
  os << buf;
  for (double v : c.c) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    os << buf;
  }
  os << '\n';
  return os.str();
}

std::string coeff_header(int degree) {
  std::string h = "scene,z_max";
  for (int i = 0; i <= degree; ++i) h += ",c" + std::to_string(i);
  return h + "\n";
}

train::ProgressFn progress_to(std::ostream& err, bool quiet) {
  if (quiet) return {};
  return [&err](const train::EpochLog& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d  l1 %.4f  l2 %.4f  slope %.4f  val_mae %.4f\n", e.epoch, e.l1, e.l2,
                  e.slope, e.val_mae);
    err << buf;
  };
}

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string out;
  std::size_t count = 10;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const KeyValueConfig cfg = resolve(a.common);
  synth::SceneSpec spec = synth::SceneSpec::from_config(cfg);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(bench::kSeed)));
  const auto ids = synth::generate_dataset(spec, a.count, seed, a.out);
  out << "wrote " << ids.size() << " scenes to " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  Common common;
  std::string data, out, log, preset = "default";
  std::optional<int> epochs, degree;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  KeyValueConfig cfg = resolve(a.common);
  if (a.epochs) cfg.set("epochs", std::to_string(*a.epochs));
  if (a.degree) cfg.set("degree", std::to_string(*a.degree));
  const auto exp = experiment_for(a.preset, cfg);
  const auto scenes = load_dataset(a.data);
  const auto split = train::split_by_parity(scenes);
  auto result = train::train(net::ModelParams::init(exp.net), split.train, split.validation, exp.train, exp.loss,
                             progress_to(err, a.quiet));
  net::save_checkpoint(a.out, result.best);
  if (!a.log.empty()) train::write_log_csv(a.log, result.log);
  out << "best epoch " << result.best_epoch << " of " << result.log.size() << ", checkpoint " << a.out << "\n";
  if (result.diverged) {
    err << "training diverged; kept the last finite parameters\n";
    return kNumerical;
  }
  return kOk;
}

struct EvalArgs {
  Common common;
  std::string data, checkpoint, out, per_scene, unit = "mm", split = "all";
  std::vector<std::string> methods{"linear"};
  std::vector<double> caps{50.0, 70.0, 80.0};
  int degree = 8;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const KeyValueConfig cfg = resolve(a.common);
  const eval::Unit unit = eval::parse_unit(a.unit);
  std::vector<eval::MethodSpec> specs;
  for (const auto& m : a.methods) {
    specs.push_back(eval::MethodSpec::parse(m, a.degree));
    if (specs.back().kind == eval::MethodKind::Network && a.checkpoint.empty()) {
      throw UsageError("method network needs --checkpoint");
    }
  }
  const auto scenes = select(load_dataset(a.data), a.split);
  if (scenes.empty()) throw DatasetError("split '" + a.split + "' has no scenes");
  eval::Report report;
  report.unit = unit;
  for (auto& spec : specs) {
    std::optional<net::ModelParams> model;
    if (spec.kind == eval::MethodKind::Network) {
      model = net::load_checkpoint(a.checkpoint);
      spec.ablation = train::LossConfig::from_config(cfg).ablation;
    }
    report.append(eval::evaluate_method(spec, scenes, a.caps, unit, model ? &*model : nullptr));
  }
  emit(a.out, report.csv(), out);
  if (!a.per_scene.empty()) emit(a.per_scene, report.scenes_csv(), out);
  return kOk;
}

struct FitArgs {
  Common common;
  std::string data, out, method = "linear", split = "all";
  int degree = 8;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  resolve(a.common);
  const eval::MethodSpec spec = eval::MethodSpec::parse(a.method, a.degree);
  if (spec.kind == eval::MethodKind::Network) throw UsageError("fit does not run the network; use inspect or eval");
  const auto scenes = select(load_dataset(a.data), a.split);
  std::string text;
  for (const auto& s : scenes) {
    const Projection proj = Projection::for_raster(s.height(), s.width());
    PolyCoefficients c;
    switch (spec.kind) {
      case eval::MethodKind::Linear: c = fit::fit_linear(s.z, s.gt, s.mask).as_poly(); break;
      case eval::MethodKind::Median: c = PolyCoefficients({0.0, fit::median_scale_sparse(s.z, s.radar, proj)}, 1.0); break;
      case eval::MethodKind::RawZ: c = PolyCoefficients({0.0, fit::median_scale(s.z, s.gt, s.mask)}, 1.0); break;
      case eval::MethodKind::PolyDense: c = fit::fit_poly_dense(s.z, s.gt, s.mask, spec.degree); break;
      case eval::MethodKind::PolySparse: c = fit::fit_poly_sparse(s.z, s.radar, proj, spec.degree); break;
      case eval::MethodKind::Network: throw UsageError("fit does not run the network; use inspect or eval");
    }
    if (text.empty()) text = coeff_header(c.degree());
    text += format_coeffs(s.id, c);
  }
  emit(a.out, text, out);
  return kOk;
}

struct ExperimentArgs {
  Common common;
  std::string data, out, preset = "benchmark";
  std::vector<int> degrees{1, 2, 4, 6, 8, 10};
  bool quiet = false;
};

std::vector<SceneSample> experiment_data(const ExperimentArgs& a, const KeyValueConfig& cfg) {
  if (!a.data.empty()) return load_dataset(a.data);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(bench::kSeed)));
  return bench::dataset(bench::kScenes, seed);
}

int cmd_sweep(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  const KeyValueConfig cfg = resolve(a.common);
  const auto exp = experiment_for(a.preset, cfg);
  const auto data = experiment_data(a, cfg);
  const auto rows = train::run_degree_sweep(data, a.degrees, exp, progress_to(err, a.quiet));
  std::string text = "degree,mae_mm,rmse_mm,negative_slope_scenes\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.1f,%.1f,%zu\n", r.degree, 1000.0 * r.score.mae, 1000.0 * r.score.rmse,
                  r.score.negative_slope_scenes);
    text += buf;
  }
  emit(a.out, text, out);
  return kOk;
}

int cmd_ablate(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  const KeyValueConfig cfg = resolve(a.common);
  const auto exp = experiment_for(a.preset, cfg);
  const auto data = experiment_data(a, cfg);
  const auto rows = train::run_ablations(data, exp, progress_to(err, a.quiet));
  std::string text = "ablation,mae_mm,rmse_mm,negative_slope_scenes\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.1f,%.1f,%zu\n", r.name.c_str(), 1000.0 * r.score.mae,
                  1000.0 * r.score.rmse, r.score.negative_slope_scenes);
    text += buf;
  }
  emit(a.out, text, out);
  return kOk;
}

struct GradArgs {
  Common common;
  std::size_t sampled = 0;
  bool ops_only = false;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  KeyValueConfig cfg = resolve(a.common);
  // Narrow widths keep the exhaustive check fast; --set overrides them.
  net::NetConfig narrow;
  narrow.c_r = narrow.c_z = narrow.c_v = narrow.c_s = 8;
  narrow.n_prototypes = 4;
  const net::NetConfig nc = net::NetConfig::from_config(cfg, narrow);
  const train::LossConfig lc = train::LossConfig::from_config(cfg);
  gradcheck::Options opt;
  opt.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(opt.seed)));

  std::vector<gradcheck::Check> checks = gradcheck::check_ops(opt);
  if (!a.ops_only) {
    const auto scene = gradcheck::fixture_scene();
    auto net_checks = gradcheck::check_network(nc, lc, scene, opt);
    checks.insert(checks.end(), net_checks.begin(), net_checks.end());
    if (a.sampled > 0) {
      gradcheck::Options sampled = opt;
      sampled.max_entries = a.sampled;
      auto wide = gradcheck::check_network(net::NetConfig::from_config(cfg), lc, scene, sampled);
      for (auto& c : wide) c.name = "default-width:" + c.name;
      checks.insert(checks.end(), wide.begin(), wide.end());
    }
  }
  out << "check,entries,refined,skipped,rel_error,status\n";
  char buf[200];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.3e,%s\n", c.name.c_str(), c.entries, c.refined,
                  c.skipped, c.rel_error,
                  c.rel_error < gradcheck::kTolerance ? "ok" : "FAIL");
    out << buf;
  }
  const double worst = gradcheck::max_error(checks);
  std::snprintf(buf, sizeof buf, "max relative error %.3e (tolerance %.0e)\n", worst, gradcheck::kTolerance);
  out << buf;
  return worst < gradcheck::kTolerance ? kOk : kNumerical;
}

struct InspectArgs {
  Common common;
  std::string checkpoint, data, scene, coeffs, out, roots;
  double z_max = 1.0;
  std::size_t points = 512;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const KeyValueConfig cfg = resolve(a.common);
  PolyCoefficients c;
  if (!a.coeffs.empty()) {
    if (!a.checkpoint.empty()) throw UsageError("give either --coeffs or --checkpoint, not both");
    c = PolyCoefficients(parse_double_list(a.coeffs), a.z_max);
  } else {
    if (a.checkpoint.empty() || a.data.empty() || a.scene.empty()) {
      throw UsageError("inspect needs --coeffs, or --checkpoint with --data and --scene");
    }
    const auto model = net::load_checkpoint(a.checkpoint);
    const auto scenes = load_dataset(a.data);
    const auto it = std::find_if(scenes.begin(), scenes.end(), [&](const SceneSample& s) { return s.id == a.scene; });
    if (it == scenes.end()) throw DatasetError("scene '" + a.scene + "' is not in " + a.data);
    c = net::predict_coefficients(model, it->z, it->radar, train::LossConfig::from_config(cfg).ablation);
  }
  if (a.points < 2) throw UsageError("--points must be at least 2");

  std::string grid = "z,depth,slope\n";
  char buf[128];
  for (const auto& r : poly::sample_grid(c, a.points)) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", r.z, r.depth, r.slope);
    grid += buf;
  }
  std::string roots = "z,direction\n";
  for (const auto& r : poly::inflection_points(c)) {
    std::snprintf(buf, sizeof buf, "%.17g,%d\n", r.z, r.direction);
    roots += buf;
  }
  emit(a.out, grid, out);
  if (!a.roots.empty()) {
    emit(a.roots, roots, out);
  } else {
    // Without a separate file the roots follow the grid as a second table.
    out << (a.out.empty() || a.out == "-" ? "\n" : "") << roots;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Radar-guided polynomial alignment of scaleless depth", "polyrad"};
  app.require_subcommand(1);

  SynthArgs synth_a;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_a.common);
  synth->add_option("--out", synth_a.out, "output directory")->required();
  synth->add_option("--count", synth_a.count, "number of scenes")->check(CLI::PositiveNumber);

  TrainArgs train_a;
  auto* trn = app.add_subcommand("train", "train the coefficient network");
  add_common(trn, train_a.common);
  trn->add_option("--data", train_a.data, "dataset directory")->required();
  trn->add_option("--out", train_a.out, "checkpoint path")->required();
  trn->add_option("--log", train_a.log, "per-epoch CSV log");
  trn->add_option("--preset", train_a.preset, "default or benchmark");
  trn->add_option("--epochs", train_a.epochs, "number of epochs");
  trn->add_option("--degree", train_a.degree, "polynomial degree");
  trn->add_flag("--quiet", train_a.quiet, "no per-epoch progress");

  EvalArgs eval_a;
  auto* ev = app.add_subcommand("eval", "score methods against ground truth");
  add_common(ev, eval_a.common);
  ev->add_option("--data", eval_a.data, "dataset directory")->required();
  ev->add_option("--method", eval_a.methods,
                 "network, median, linear, poly-dense[:N], poly-sparse[:N], raw-z (repeatable)");
  ev->add_option("--degree", eval_a.degree, "degree for polynomial methods without :N");
  ev->add_option("--checkpoint", eval_a.checkpoint, "checkpoint for the network method");
  ev->add_option("--caps", eval_a.caps, "depth caps in metres")->delimiter(',');
  ev->add_option("--unit", eval_a.unit, "mm or m");
  ev->add_option("--split", eval_a.split, "all, train, validation or test");
  ev->add_option("--out", eval_a.out, "report CSV (stdout by default)");
  ev->add_option("--per-scene", eval_a.per_scene, "per-scene CSV");

  FitArgs fit_a;
  auto* ft = app.add_subcommand("fit", "closed-form coefficients per scene");
  add_common(ft, fit_a.common);
  ft->add_option("--data", fit_a.data, "dataset directory")->required();
  ft->add_option("--method", fit_a.method, "median, linear, poly-dense[:N], poly-sparse[:N], raw-z");
  ft->add_option("--degree", fit_a.degree, "degree for polynomial methods without :N");
  ft->add_option("--split", fit_a.split, "all, train, validation or test");
  ft->add_option("--out", fit_a.out, "coefficient CSV (stdout by default)");

  ExperimentArgs sweep_a;
  auto* sw = app.add_subcommand("sweep", "train one model per polynomial degree");
  add_common(sw, sweep_a.common);
  sw->add_option("--data", sweep_a.data, "dataset directory (default: standard benchmark in memory)");
  sw->add_option("--degrees", sweep_a.degrees, "degrees to train")->delimiter(',');
  sw->add_option("--preset", sweep_a.preset, "default or benchmark");
  sw->add_option("--out", sweep_a.out, "result CSV (stdout by default)");
  sw->add_flag("--quiet", sweep_a.quiet, "no per-epoch progress");

  ExperimentArgs ablate_a;
  auto* ab = app.add_subcommand("ablate", "unablated model and one run per ablation switch");
  add_common(ab, ablate_a.common);
  ab->add_option("--data", ablate_a.data, "dataset directory (default: standard benchmark in memory)");
  ab->add_option("--preset", ablate_a.preset, "default or benchmark");
  ab->add_option("--out", ablate_a.out, "result CSV (stdout by default)");
  ab->add_flag("--quiet", ablate_a.quiet, "no per-epoch progress");

  GradArgs grad_a;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op and the full loss");
  add_common(gc, grad_a.common);
  gc->add_option("--sampled", grad_a.sampled, "also check default widths on this many entries per array");
  gc->add_flag("--ops-only", grad_a.ops_only, "skip the network check");

  InspectArgs insp_a;
  auto* in = app.add_subcommand("inspect", "sample a transform and list its inflection points");
  add_common(in, insp_a.common);
  in->add_option("--coeffs", insp_a.coeffs, "comma-separated c0,...,cN");
  in->add_option("--z-max", insp_a.z_max, "normalization of z for --coeffs");
  in->add_option("--checkpoint", insp_a.checkpoint, "checkpoint to predict coefficients with");
  in->add_option("--data", insp_a.data, "dataset directory");
  in->add_option("--scene", insp_a.scene, "scene id");
  in->add_option("--points", insp_a.points, "grid size");
  in->add_option("--out", insp_a.out, "grid CSV (stdout by default)");
  in->add_option("--roots", insp_a.roots, "inflection CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_a, out);
    if (trn->parsed()) return cmd_train(train_a, out, err);
    if (ev->parsed()) return cmd_eval(eval_a, out);
    if (ft->parsed()) return cmd_fit(fit_a, out);
    if (sw->parsed()) return cmd_sweep(sweep_a, out, err);
    if (ab->parsed()) return cmd_ablate(ablate_a, out, err);
    if (gc->parsed()) return cmd_gradcheck(grad_a, out);
    if (in->parsed()) return cmd_inspect(insp_a, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  err << app.help();
  return kUsage;
}

}  // namespace polyrad::cli
