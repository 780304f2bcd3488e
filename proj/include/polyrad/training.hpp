#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "polyrad/autodiff.hpp"
#include "polyrad/config.hpp"
#include "polyrad/datamodel.hpp"
#include "polyrad/network.hpp"

namespace polyrad::train {

struct LossConfig {
  double lambda_l1 = 1.0;
  double lambda_l2 = 1.0;
  double lambda_slope = 0.1;
  bool disable_monotonicity = false;
  net::Ablation ablation;

  void validate() const;
  double effective_slope_weight() const { return disable_monotonicity ? 0.0 : lambda_slope; }
  static LossConfig from_config(const KeyValueConfig& cfg, LossConfig defaults);
  static LossConfig from_config(const KeyValueConfig& cfg) { return from_config(cfg, LossConfig()); }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 20;
  // Cosine decay of the learning rate over the epochs down to
  // learning_rate * final_lr_fraction. 1 keeps it constant.
  double final_lr_fraction = 1.0;
  // Per-step random SceneTransform of each training scene.
  bool augment = false;
  double augment_scale_lo = 0.8, augment_scale_hi = 1.25;
  double augment_shift_max = 0.0;  // metres, shift drawn from [0, max]
  double augment_gamma = 0.0;      // z exponent drawn log-uniformly from [e^-g, e^g]
  // Exponential moving average of the weights, used for validation and the
  // returned models. 0 disables it.
  double ema_decay = 0.0;
  std::uint64_t seed = 7;
  int checkpoint_every = 0;          // epochs; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;  // used when checkpoint_every > 0

  void validate() const;
  static TrainConfig from_config(const KeyValueConfig& cfg, TrainConfig defaults);
  static TrainConfig from_config(const KeyValueConfig& cfg) { return from_config(cfg, TrainConfig()); }
};

struct LossTerms {
  double l1 = 0.0;     // mean |d - gt| over the mask
  double l2 = 0.0;     // mean (d - gt)^2 over the mask
  double slope = 0.0;  // mean |1 - dd/dz| over all pixels
  double total = 0.0;
};

/// Weighted three-term loss on plain maps.
LossTerms compute_loss(const DepthMap& pred, const DepthMap& gt, std::span<const std::uint8_t> mask,
                       const DepthMap& slope, const LossConfig& cfg);

/// Per-scene constants for the differentiable loss: the monomial basis
/// (z/z_max)^i and its derivative basis, one row per power.
struct PreparedScene {
  const SceneSample* sample = nullptr;
  ad::Tensor basis;        // [(N+1) x P]
  ad::Tensor slope_basis;  // [(N+1) x P], row 0 is zero
  ad::Tensor target;       // [1 x P], gt with 0 at masked-out pixels
  ad::Tensor mask;         // [1 x P]
  std::size_t valid = 0;
};

PreparedScene prepare_scene(const SceneSample& sample, int degree, double z_max);

struct SceneTransform {
  bool flip_cols = false;
  bool flip_rows = false;
  double scale = 1.0;    // metric depth d -> scale * (d + shift)
  double shift = 0.0;    // metres
  double z_gamma = 1.0;  // scaleless z -> z^z_gamma
};

/// Applies `t` to ground truth and radar alike. Radar points move along their
/// viewing rays, so every point keeps its pixel.
SceneSample transform_scene(const SceneSample& sample, const SceneTransform& t);

struct LossVars {
  ad::Var total, l1, l2, slope;
};

/// Builds the loss on top of predicted coefficients [1 x (N+1)].
LossVars loss_graph(ad::Graph& g, ad::Var coefficients, const PreparedScene& scene, const LossConfig& cfg);

/// Forward + loss for one scene, binding `params` mutably.
LossVars scene_loss(ad::Graph& g, net::ModelParams& params, const PreparedScene& scene, const LossConfig& cfg);

class Adam {
 public:
  Adam(const TrainConfig& cfg, net::ModelParams& params);
  void step(net::ModelParams& params);
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<ad::Tensor> m_, v_;
};

struct EpochLog {
  int epoch = 0;
  double l1 = 0.0, l2 = 0.0, slope = 0.0;  // epoch means of the unweighted terms
  double val_mae = 0.0, val_rmse = 0.0;    // metres
};

struct TrainResult {
  net::ModelParams best;  // lowest validation MAE
  net::ModelParams last;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool diverged = false;
};

using ProgressFn = std::function<void(const EpochLog&)>;

/// Adam on one scene per step. Deterministic given the configs. On a
/// non-finite loss training stops and the last finite state is kept.
TrainResult train(net::ModelParams init, std::span<const SceneSample> train_set,
                  std::span<const SceneSample> val_set, const TrainConfig& tcfg, const LossConfig& lcfg,
                  const ProgressFn& progress = {});

void write_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log);
std::string log_csv(std::span<const EpochLog> log);

struct Split {
  std::vector<SceneSample> train;
  std::vector<SceneSample> validation;
  std::vector<SceneSample> test;
};

/// Even scene indices train, odd indices test. Every fifth training scene
/// (index % 10 == 8) is held out for validation.
Split split_by_parity(std::span<const SceneSample> dataset);

struct ModelScore {
  double mae = 0.0;   // mean over scenes of per-scene MAE, metres
  double rmse = 0.0;  // mean over scenes of per-scene RMSE, metres
  std::size_t negative_slope_scenes = 0;
  std::vector<PolyCoefficients> coefficients;
};

ModelScore score_model(const net::ModelParams& params, std::span<const SceneSample> scenes,
                       const net::Ablation& ablation = {});

struct ExperimentConfig {
  net::NetConfig net;
  TrainConfig train;
  LossConfig loss;
};

struct SweepRow {
  int degree = 0;
  ModelScore score;
};

std::vector<SweepRow> run_degree_sweep(std::span<const SceneSample> dataset, std::span<const int> degrees,
                                       const ExperimentConfig& cfg, const ProgressFn& progress = {});

struct AblationRow {
  std::string name;
  ModelScore score;
};

/// Unablated model followed by one run per switch: prototypes, fusion,
/// monotonicity loss. A given `unablated` score (same dataset and config) is
/// reused instead of retraining.
std::vector<AblationRow> run_ablations(std::span<const SceneSample> dataset, const ExperimentConfig& cfg,
                                       const ProgressFn& progress = {}, const ModelScore* unablated = nullptr);

}  // namespace polyrad::train
