#include "polyrad/benchmark.hpp"

namespace polyrad::bench {

synth::SceneSpec scene_spec() {
  synth::SceneSpec s;
  s.height = 64;
  s.width = 64;
  s.radar_points = 100;
  s.radar_sigma = 0.5;
  s.outlier_fraction = 0.1;
  s.seed = kSeed;
  return s;
}

std::vector<SceneSample> dataset(std::size_t count, std::uint64_t seed) {
  return synth::make_dataset(scene_spec(), count, seed);
}

train::ExperimentConfig experiment() {
  train::ExperimentConfig e;
  e.net.c_r = e.net.c_z = e.net.c_v = e.net.c_s = 16;
  e.net.n_prototypes = 16;
  e.net.degree = 8;
  e.train.learning_rate = 3e-3;
  e.train.final_lr_fraction = 0.03;
  e.train.epochs = 300;
  e.train.augment = true;
  e.train.augment_shift_max = 6.0;
  e.train.augment_gamma = 0.3;
  e.train.ema_decay = 0.999;
  return e;
}

train::ExperimentConfig experiment(const KeyValueConfig& cfg) {
  const train::ExperimentConfig base = experiment();
  train::ExperimentConfig e;
  e.net = net::NetConfig::from_config(cfg, base.net);
  e.train = train::TrainConfig::from_config(cfg, base.train);
  e.loss = train::LossConfig::from_config(cfg, base.loss);
  return e;
}

}  // namespace polyrad::bench
