#include "polyrad/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "polyrad/errors.hpp"
#include "polyrad/metrics.hpp"
#include "polyrad/polytransform.hpp"
#include "polyrad/rng.hpp"

namespace polyrad::train {

using ad::Graph;
using ad::Tensor;
using ad::Var;

void LossConfig::validate() const {
  if (!(lambda_l1 >= 0.0 && lambda_l2 >= 0.0 && lambda_slope >= 0.0)) {
    throw UsageError("loss weights must be non-negative");
  }
}

LossConfig LossConfig::from_config(const KeyValueConfig& cfg, LossConfig d) {
  d.lambda_l1 = cfg.get_double("lambda_l1", d.lambda_l1);
  d.lambda_l2 = cfg.get_double("lambda_l2", d.lambda_l2);
  d.lambda_slope = cfg.get_double("lambda_slope", d.lambda_slope);
  d.disable_monotonicity = cfg.get_bool("disable_monotonicity", d.disable_monotonicity);
  d.ablation.disable_prototypes = cfg.get_bool("disable_prototypes", d.ablation.disable_prototypes);
  d.ablation.disable_fusion = cfg.get_bool("disable_fusion", d.ablation.disable_fusion);
  d.validate();
  return d;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw UsageError("final_lr_fraction must lie in (0, 1]");
  }
  if (augment && !(augment_scale_lo > 0.0 && augment_scale_lo <= augment_scale_hi)) {
    throw UsageError("augmentation scale range must satisfy 0 < lo <= hi");
  }
  if (!(augment_shift_max >= 0.0 && augment_gamma >= 0.0)) {
    throw UsageError("augmentation shift and gamma bounds must be non-negative");
  }
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw UsageError("ema_decay must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw UsageError("invalid Adam hyper-parameters");
  }
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg, TrainConfig d) {
  d.learning_rate = cfg.get_double("learning_rate", d.learning_rate);
  d.beta1 = cfg.get_double("beta1", d.beta1);
  d.beta2 = cfg.get_double("beta2", d.beta2);
  d.epsilon = cfg.get_double("epsilon", d.epsilon);
  d.epochs = static_cast<int>(cfg.get_int("epochs", d.epochs));
  d.final_lr_fraction = cfg.get_double("final_lr_fraction", d.final_lr_fraction);
  d.augment = cfg.get_bool("augment", d.augment);
  d.augment_scale_lo = cfg.get_double("augment_scale_lo", d.augment_scale_lo);
  d.augment_scale_hi = cfg.get_double("augment_scale_hi", d.augment_scale_hi);
  d.augment_shift_max = cfg.get_double("augment_shift_max", d.augment_shift_max);
  d.augment_gamma = cfg.get_double("augment_gamma", d.augment_gamma);
  d.ema_decay = cfg.get_double("ema_decay", d.ema_decay);
  d.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(d.seed)));
  d.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every", d.checkpoint_every));
  d.checkpoint_dir = cfg.get_string("checkpoint_dir", d.checkpoint_dir.string());
  d.validate();
  return d;
}

LossTerms compute_loss(const DepthMap& pred, const DepthMap& gt, std::span<const std::uint8_t> mask,
                       const DepthMap& slope, const LossConfig& cfg) {
  if (!pred.same_size(gt) || !pred.same_size(slope) || mask.size() != pred.size()) {
    throw DimensionError("loss inputs must share H x W");
  }
  double abs_sum = 0.0, sq_sum = 0.0, slope_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    slope_sum += std::abs(1.0 - slope[i]);
    if (!mask[i]) continue;
    const double e = pred[i] - gt[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    ++n;
  }
  if (n == 0) throw DegenerateInputError("loss: empty mask");
  LossTerms t;
  t.l1 = abs_sum / static_cast<double>(n);
  t.l2 = sq_sum / static_cast<double>(n);
  t.slope = slope_sum / static_cast<double>(pred.size());
  t.total = cfg.lambda_l1 * t.l1 + cfg.lambda_l2 * t.l2 + cfg.effective_slope_weight() * t.slope;
  return t;
}

PreparedScene prepare_scene(const SceneSample& sample, int degree, double z_max) {
  if (degree < 1) throw UsageError("polynomial degree must be >= 1");
  const std::size_t n = sample.z.size();
  const std::size_t m = static_cast<std::size_t>(degree) + 1;
  PreparedScene p;
  p.sample = &sample;
  p.basis = Tensor({m, n});
  p.slope_basis = Tensor({m, n});
  p.target = Tensor({1, n});
  p.mask = Tensor({1, n});
  for (std::size_t k = 0; k < n; ++k) {
    const double t = sample.z[k] / z_max;
    double pw = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      p.basis.at(i, k) = pw;
      if (i + 1 < m) p.slope_basis.at(i + 1, k) = static_cast<double>(i + 1) * pw / z_max;
      pw *= t;
    }
    if (sample.mask[k]) {
      p.mask[k] = 1.0;
      p.target[k] = sample.gt[k];
      ++p.valid;
    }
  }
  if (p.valid == 0) throw DegenerateInputError("scene " + sample.id + " has no ground truth");
  return p;
}

SceneSample transform_scene(const SceneSample& sample, const SceneTransform& t) {
  if (!(t.scale > 0.0 && t.shift >= 0.0 && t.z_gamma > 0.0)) throw UsageError("invalid scene transform");
  const std::size_t h = sample.z.height(), w = sample.z.width();
  SceneSample out = sample;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t sr = t.flip_rows ? h - 1 - r : r;
      const std::size_t sc = t.flip_cols ? w - 1 - c : c;
      out.z.at(r, c) = std::pow(sample.z.at(sr, sc), t.z_gamma);
      const double d = sample.gt.at(sr, sc);
      out.gt.at(r, c) = d > 0.0 ? t.scale * (d + t.shift) : 0.0;
      out.mask[r * w + c] = sample.mask[sr * w + sc];
    }
  }
  // The principal point sits at the raster centre, so a mirror negates the
  // lateral coordinate.
  std::vector<Point3> pts;
  pts.reserve(sample.radar.size());
  for (const auto& p : sample.radar.points()) {
    const double k = t.scale * (p.z + t.shift) / p.z;
    pts.push_back(Point3{(t.flip_cols ? -p.x : p.x) * k, (t.flip_rows ? -p.y : p.y) * k, p.z * k});
  }
  out.radar = RadarCloud(std::move(pts));
  return out;
}

LossVars loss_graph(Graph& g, Var coefficients, const PreparedScene& scene, const LossConfig& cfg) {
  const double inv_valid = 1.0 / static_cast<double>(scene.valid);
  const double inv_pixels = 1.0 / static_cast<double>(scene.basis.dim(1));

  Var pred = ad::matmul(coefficients, g.constant(scene.basis));
  Var residual = ad::mul(ad::sub(pred, g.constant(scene.target)), g.constant(scene.mask));
  LossVars out;
  out.l1 = ad::scalar_mul(ad::abs_sum(residual), inv_valid);
  out.l2 = ad::scalar_mul(ad::square_sum(residual), inv_valid);
  Var slope = ad::matmul(coefficients, g.constant(scene.slope_basis));
  out.slope = ad::scalar_mul(ad::abs_sum(ad::add_scalar(ad::scalar_mul(slope, -1.0), 1.0)), inv_pixels);
  out.total = ad::add(ad::add(ad::scalar_mul(out.l1, cfg.lambda_l1), ad::scalar_mul(out.l2, cfg.lambda_l2)),
                      ad::scalar_mul(out.slope, cfg.effective_slope_weight()));
  return out;
}

LossVars scene_loss(Graph& g, net::ModelParams& params, const PreparedScene& scene, const LossConfig& cfg) {
  net::ForwardPass fp = net::forward(g, params, scene.sample->z, scene.sample->radar, cfg.ablation);
  return loss_graph(g, fp.coefficients, scene, cfg);
}

Adam::Adam(const TrainConfig& cfg, net::ModelParams& params)
    : lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.epsilon) {
  for (auto* p : params.parameters()) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(net::ModelParams& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  auto list = params.parameters();
  for (std::size_t k = 0; k < list.size(); ++k) {
    auto w = list[k]->value.data();
    auto g = list[k]->grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

struct Validation {
  double mae = 0.0, rmse = 0.0;
};

Validation validate(const net::ModelParams& params, std::span<const SceneSample> scenes, const net::Ablation& abl) {
  if (scenes.empty()) return {NAN, NAN};
  Validation v;
  for (const auto& s : scenes) {
    const auto coeffs = net::predict_coefficients(params, s.z, s.radar, abl);
    const auto pred = poly::eval_poly(coeffs, s.z).depth;
    const auto st = eval::mae_rmse(pred, s.gt, s.mask);
    v.mae += st.mae;
    v.rmse += st.rmse;
  }
  v.mae /= static_cast<double>(scenes.size());
  v.rmse /= static_cast<double>(scenes.size());
  return v;
}

}  // namespace

TrainResult train(net::ModelParams init, std::span<const SceneSample> train_set,
                  std::span<const SceneSample> val_set, const TrainConfig& tcfg, const LossConfig& lcfg,
                  const ProgressFn& progress) {
  tcfg.validate();
  lcfg.validate();
  if (train_set.empty()) throw DatasetError("training set is empty");

  const int degree = init.config.degree;
  const double z_max = init.config.z_max;
  std::vector<PreparedScene> prepared;
  prepared.reserve(train_set.size());
  for (const auto& s : train_set) prepared.push_back(prepare_scene(s, degree, z_max));

  TrainResult result{init, init, {}, 0, false};
  net::ModelParams& params = result.last;
  Adam adam(tcfg, params);
  double best_mae = INFINITY;
  const bool use_ema = tcfg.ema_decay > 0.0;
  net::ModelParams averaged = params;
  long steps = 0;

  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    Rng rng(tcfg.seed, static_cast<std::uint64_t>(epoch));
    rng.shuffle(order.begin(), order.end());
    const double progress_frac = tcfg.epochs > 1 ? static_cast<double>(epoch - 1) / (tcfg.epochs - 1) : 0.0;
    const double f = tcfg.final_lr_fraction;
    adam.set_learning_rate(tcfg.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(M_PI * progress_frac))));

    const net::ModelParams before = params;
    const net::ModelParams averaged_before = use_ema ? averaged : net::ModelParams{};
    EpochLog entry;
    entry.epoch = epoch;
    bool finite = true;
    for (std::size_t idx : order) {
      params.zero_grad();
      Graph g;
      SceneSample augmented;
      PreparedScene step_scene;
      if (tcfg.augment) {
        SceneTransform t;
        t.flip_cols = rng.uniform() < 0.5;
        t.flip_rows = rng.uniform() < 0.5;
        t.scale = std::exp(rng.uniform(std::log(tcfg.augment_scale_lo), std::log(tcfg.augment_scale_hi)));
        t.shift = rng.uniform(0.0, tcfg.augment_shift_max);
        t.z_gamma = std::exp(rng.uniform(-tcfg.augment_gamma, tcfg.augment_gamma));
        augmented = transform_scene(train_set[idx], t);
        step_scene = prepare_scene(augmented, degree, z_max);
      }
      LossVars loss = scene_loss(g, params, tcfg.augment ? step_scene : prepared[idx], lcfg);
      const double total = loss.total.value()[0];
      if (!std::isfinite(total)) {
        finite = false;
        break;
      }
      g.backward(loss.total);
      adam.step(params);
      if (use_ema) {
        // Warm-up keeps the average from clinging to the initial weights.
        const double d = std::min(tcfg.ema_decay, (1.0 + steps) / (10.0 + steps));
        auto src = params.parameters();
        auto dst = averaged.parameters();
        for (std::size_t k = 0; k < src.size(); ++k) {
          auto a = dst[k]->value.data();
          auto w = src[k]->value.data();
          for (std::size_t i = 0; i < a.size(); ++i) a[i] = d * a[i] + (1.0 - d) * w[i];
        }
      }
      ++steps;
      entry.l1 += loss.l1.value()[0];
      entry.l2 += loss.l2.value()[0];
      entry.slope += loss.slope.value()[0];
    }
    if (!finite) {
      result.diverged = true;
      params = before;
      if (use_ema) averaged = averaged_before;
      if (result.log.empty()) result.best = use_ema ? averaged : params;
      break;
    }
    const double inv = 1.0 / static_cast<double>(prepared.size());
    entry.l1 *= inv;
    entry.l2 *= inv;
    entry.slope *= inv;
    const net::ModelParams& current = use_ema ? averaged : params;
    const Validation v = validate(current, val_set, lcfg.ablation);
    entry.val_mae = v.mae;
    entry.val_rmse = v.rmse;
    result.log.push_back(entry);

    if (val_set.empty() || v.mae < best_mae) {
      best_mae = v.mae;
      result.best = current;
      result.best_epoch = epoch;
    }
    if (tcfg.checkpoint_every > 0 && epoch % tcfg.checkpoint_every == 0 && !tcfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(tcfg.checkpoint_dir);
      char name[64];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
      net::save_checkpoint(tcfg.checkpoint_dir / name, current);
    }
    if (progress) progress(entry);
  }
  if (use_ema) result.last = averaged;
  return result;
}

std::string log_csv(std::span<const EpochLog> log) {
  std::ostringstream os;
  os << "epoch,term1,term2,term3,val_mae,val_rmse\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.l1, e.l2, e.slope, e.val_mae,
                  e.val_rmse);
    os << buf;
  }
  return os.str();
}

void write_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << log_csv(log);
}

Split split_by_parity(std::span<const SceneSample> dataset) {
  Split s;
  for (std::size_t pos = 0; pos < dataset.size(); ++pos) {
    const auto idx = scene_index(dataset[pos].id).value_or(pos);
    if (idx % 2 == 1) {
      s.test.push_back(dataset[pos]);
    } else if (idx % 10 == 8) {
      s.validation.push_back(dataset[pos]);
    } else {
      s.train.push_back(dataset[pos]);
    }
  }
  return s;
}

ModelScore score_model(const net::ModelParams& params, std::span<const SceneSample> scenes,
                       const net::Ablation& ablation) {
  ModelScore score;
  if (scenes.empty()) throw DatasetError("no scenes to score");
  for (const auto& s : scenes) {
    auto coeffs = net::predict_coefficients(params, s.z, s.radar, ablation);
    const auto pred = poly::eval_poly(coeffs, s.z).depth;
    const auto st = eval::mae_rmse(pred, s.gt, s.mask);
    score.mae += st.mae;
    score.rmse += st.rmse;
    if (poly::has_negative_slope(coeffs)) ++score.negative_slope_scenes;
    score.coefficients.push_back(std::move(coeffs));
  }
  score.mae /= static_cast<double>(scenes.size());
  score.rmse /= static_cast<double>(scenes.size());
  return score;
}

namespace {

ModelScore train_and_score(const Split& split, net::NetConfig net_cfg, const TrainConfig& tcfg,
                           const LossConfig& lcfg, const ProgressFn& progress) {
  auto result = train(net::ModelParams::init(net_cfg), split.train, split.validation, tcfg, lcfg, progress);
  if (result.diverged && result.log.empty()) throw NumericalError("training diverged in the first epoch");
  return score_model(result.best, split.test, lcfg.ablation);
}

}  // namespace

std::vector<SweepRow> run_degree_sweep(std::span<const SceneSample> dataset, std::span<const int> degrees,
                                       const ExperimentConfig& cfg, const ProgressFn& progress) {
  const Split split = split_by_parity(dataset);
  if (split.train.empty() || split.test.empty()) throw DatasetError("sweep needs both train and test scenes");
  std::vector<SweepRow> rows;
  for (int degree : degrees) {
    net::NetConfig nc = cfg.net;
    nc.degree = degree;
    rows.push_back({degree, train_and_score(split, nc, cfg.train, cfg.loss, progress)});
  }
  return rows;
}

std::vector<AblationRow> run_ablations(std::span<const SceneSample> dataset, const ExperimentConfig& cfg,
                                       const ProgressFn& progress, const ModelScore* unablated) {
  const Split split = split_by_parity(dataset);
  if (split.train.empty() || split.test.empty()) throw DatasetError("ablation needs both train and test scenes");

  struct Variant {
    std::string name;
    LossConfig loss;
  };
  std::vector<Variant> variants{{"none", cfg.loss}};
  variants.push_back({"prototypes", cfg.loss});
  variants.back().loss.ablation.disable_prototypes = true;
  variants.push_back({"fusion", cfg.loss});
  variants.back().loss.ablation.disable_fusion = true;
  variants.push_back({"monotonicity", cfg.loss});
  variants.back().loss.disable_monotonicity = true;

  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    if (v.name == "none" && unablated) {
      rows.push_back({v.name, *unablated});
      continue;
    }
    rows.push_back({v.name, train_and_score(split, cfg.net, cfg.train, v.loss, progress)});
  }
  return rows;
}

}  // namespace polyrad::train
