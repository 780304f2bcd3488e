#include <doctest.h>

#include <cmath>

#include "polyrad/baselines.hpp"
#include "polyrad/errors.hpp"
#include "polyrad/metrics.hpp"
#include "polyrad/polytransform.hpp"
#include "polyrad/rng.hpp"
#include "polyrad/synthgen.hpp"
#include "polyrad/training.hpp"
#include "support.hpp"

using namespace polyrad;

namespace {

net::NetConfig tiny(int degree) {
  net::NetConfig c;
  c.c_r = c.c_z = c.c_v = c.c_s = 8;
  c.n_prototypes = 4;
  c.degree = degree;
  return c;
}

synth::SceneSpec small_scenes() {
  synth::SceneSpec s;
  s.height = s.width = 16;
  s.radar_points = 20;
  return s;
}

train::LossConfig weights(double l1, double l2, double slope) {
  train::LossConfig c;
  c.lambda_l1 = l1;
  c.lambda_l2 = l2;
  c.lambda_slope = slope;
  return c;
}

std::vector<std::uint8_t> all(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

}  // namespace

TEST_CASE("loss examples") {
  DepthMap gt(1, 4, DepthKind::GroundTruth, std::vector<double>{1, 2, 3, 4});
  DepthMap one_slope(1, 4, DepthKind::Metric, 1.0);
  train::LossConfig cfg;
  auto t = train::compute_loss(gt, gt, all(4), one_slope, cfg);
  CHECK(t.total == 0.0);

  DepthMap plus(1, 4, DepthKind::Metric, std::vector<double>{2, 3, 4, 5});
  cfg.lambda_slope = 0.0;
  t = train::compute_loss(plus, gt, all(4), one_slope, cfg);
  CHECK(t.total == 2.0);
  CHECK(t.l1 == 1.0);
  CHECK(t.l2 == 1.0);

  // Slope is averaged over every pixel; l1/l2 only over the mask.
  DepthMap slope(1, 4, DepthKind::Metric, std::vector<double>{1, 3, 1, -1});
  cfg = weights(1.0, 1.0, 1.0);
  t = train::compute_loss(plus, gt, std::vector<std::uint8_t>{1, 1, 0, 0}, slope, cfg);
  CHECK(t.slope == 1.0);
  CHECK(t.total == 3.0);

  CHECK_THROWS_AS(train::compute_loss(plus, gt, std::vector<std::uint8_t>(4, 0), slope, cfg), DegenerateInputError);
  cfg.disable_monotonicity = true;
  CHECK(train::compute_loss(plus, gt, all(4), slope, cfg).total == 2.0);
}

TEST_CASE("identity coefficients make the monotonicity term exactly zero") {
  const auto s = synth::make_dataset(small_scenes(), 1, 2)[0];
  for (int degree : {1, 3, 8}) {
    const auto prep = train::prepare_scene(s, degree, 1.0);
    ad::Graph g;
    auto id = PolyCoefficients::identity(degree);
    ad::Var c = g.constant(ad::Tensor({1, static_cast<std::size_t>(degree) + 1}, id.c));
    CHECK(train::loss_graph(g, c, prep, train::LossConfig()).slope.value()[0] == 0.0);
  }
}

TEST_CASE("differentiable loss agrees with the map loss") {
  const auto s = synth::make_dataset(small_scenes(), 1, 3)[0];
  const PolyCoefficients c({1.5, 70.0, -8.0, 12.0}, 1.0);
  const auto prep = train::prepare_scene(s, 3, 1.0);
  ad::Graph g;
  const train::LossConfig cfg = weights(1.0, 0.5, 0.3);
  auto lv = train::loss_graph(g, g.constant(ad::Tensor({1, 4}, c.c)), prep, cfg);
  // The training loss acts on the unclamped polynomial; these coefficients stay positive.
  const auto ref = train::compute_loss(poly::eval_poly(c, s.z).depth, s.gt, s.mask, poly::eval_derivative(c, s.z), cfg);
  CHECK(lv.l1.value()[0] == doctest::Approx(ref.l1).epsilon(1e-12));
  CHECK(lv.l2.value()[0] == doctest::Approx(ref.l2).epsilon(1e-12));
  CHECK(lv.slope.value()[0] == doctest::Approx(ref.slope).epsilon(1e-12));
  CHECK(lv.total.value()[0] == doctest::Approx(ref.total).epsilon(1e-12));
}

TEST_CASE("scene transform keeps radar returns on their pixels") {
  const auto g = synth::generate_scene(small_scenes());
  const auto& s = g.sample;
  train::SceneTransform t;
  t.flip_cols = true;
  t.flip_rows = true;
  t.scale = 1.2;
  t.shift = 3.0;
  t.z_gamma = 0.8;
  const auto out = train::transform_scene(s, t);
  const auto proj = Projection::for_raster(s.height(), s.width());
  const std::size_t H = s.height(), W = s.width();
  for (std::size_t i = 0; i < s.radar.size(); ++i) {
    const std::size_t src = g.radar_pixels[i];
    const std::size_t r = H - 1 - src / W, c = W - 1 - src % W;
    const auto px = proj.pixel_of(out.radar[i], H, W);
    REQUIRE(px.has_value());
    CHECK(px->first == r);
    CHECK(px->second == c);
    CHECK(out.radar[i].z == doctest::Approx(1.2 * (s.radar[i].z + 3.0)).epsilon(1e-12));
  }
  CHECK(out.gt.at(0, 0) == doctest::Approx(1.2 * (s.gt.at(H - 1, W - 1) + 3.0)).epsilon(1e-12));
  CHECK(out.z.at(0, 0) == doctest::Approx(std::pow(s.z.at(H - 1, W - 1), 0.8)).epsilon(1e-12));
  CHECK(out.mask == mask_from_gt(out.gt));

  const auto same = train::transform_scene(s, train::SceneTransform());
  CHECK(same.z == s.z);
  CHECK(same.gt == s.gt);
  CHECK(same.radar == s.radar);
}

TEST_CASE("parity split") {
  const auto data = synth::make_dataset(small_scenes(), 20, 1);
  const auto split = train::split_by_parity(data);
  CHECK(split.test.size() == 10);
  CHECK(split.validation.size() == 2);
  CHECK(split.train.size() == 8);
  for (const auto& s : split.test) CHECK(*scene_index(s.id) % 2 == 1);
  for (const auto& s : split.validation) CHECK(*scene_index(s.id) % 10 == 8);
  for (const auto& s : split.train) {
    CHECK(*scene_index(s.id) % 2 == 0);
    CHECK(*scene_index(s.id) % 10 != 8);
  }
}

TEST_CASE("same seed twice gives identical logs and parameters") {
  const auto data = synth::make_dataset(small_scenes(), 10, 4);
  const auto split = train::split_by_parity(data);
  train::TrainConfig tc;
  tc.epochs = 3;
  tc.augment = true;
  tc.augment_shift_max = 2.0;
  tc.augment_gamma = 0.2;
  auto run = [&] { return train::train(net::ModelParams::init(tiny(4)), split.train, split.validation, tc, {}); };
  const auto a = run();
  const auto b = run();
  CHECK(train::log_csv(a.log) == train::log_csv(b.log));
  CHECK(net::serialize(a.best) == net::serialize(b.best));
  CHECK(net::serialize(a.last) == net::serialize(b.last));
  CHECK(a.log.size() == 3);
}

TEST_CASE("log CSV header and periodic checkpoints") {
  testing::TempDir dir;
  const auto data = synth::make_dataset(small_scenes(), 6, 5);
  const auto split = train::split_by_parity(data);
  train::TrainConfig tc;
  tc.epochs = 4;
  tc.checkpoint_every = 2;
  tc.checkpoint_dir = dir / "ckpt";
  const auto r = train::train(net::ModelParams::init(tiny(2)), split.train, split.validation, tc, {});
  train::write_log_csv(dir / "log.csv", r.log);
  const std::string text = testing::slurp(dir / "log.csv");
  CHECK(text.rfind("epoch,term1,term2,term3,val_mae,val_rmse\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(std::filesystem::exists(dir / "ckpt" / "epoch_0002.ckpt"));
  CHECK(std::filesystem::exists(dir / "ckpt" / "epoch_0004.ckpt"));
  CHECK_FALSE(std::filesystem::exists(dir / "ckpt" / "epoch_0003.ckpt"));
}

TEST_CASE("single-scene overfit beats the linear oracle") {
  synth::SceneSpec spec;
  spec.seed = 21;
  spec.regions = 3;
  spec.gamma = {0.6, 1.5, 1.0};
  spec.offset = {0.0, 0.0, 0.0};
  auto scene = synth::generate_scene(spec).sample;
  scene.id = "s0000";
  const std::vector<SceneSample> one{scene};
  train::TrainConfig tc;
  tc.epochs = 500;
  tc.learning_rate = 3e-3;
  tc.final_lr_fraction = 0.05;
  const auto r = train::train(net::ModelParams::init(tiny(8)), one, {}, tc, {});
  const double learned = train::score_model(r.last, one).mae;
  const auto lin = fit::fit_linear(scene.z, scene.gt, scene.mask);
  const double oracle = eval::mae_rmse(poly::eval_poly(lin.as_poly(), scene.z).depth, scene.gt, scene.mask).mae;
  INFO("learned ", learned, " oracle ", oracle);
  CHECK(learned < oracle);
}

TEST_CASE("regularizer-only training reaches slope one") {
  const auto data = synth::make_dataset(small_scenes(), 4, 6);
  train::TrainConfig tc;
  tc.epochs = 2000;
  tc.learning_rate = 3e-2;
  tc.final_lr_fraction = 1e-4;
  const train::LossConfig lc = weights(0.0, 0.0, 1.0);
  const auto r = train::train(net::ModelParams::init(tiny(4)), data, {}, tc, lc);
  INFO("final slope term ", r.log.back().slope);
  double worst = 0.0;
  net::ModelParams p = r.last;
  for (const auto& s : data) {
    const auto prep = train::prepare_scene(s, 4, 1.0);
    ad::Graph g;
    worst = std::max(worst, train::scene_loss(g, p, prep, lc).slope.value()[0]);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("non-finite loss stops training with the last finite parameters") {
  auto data = synth::make_dataset(small_scenes(), 2, 7);
  data[0].gt[0] = 1e300;  // squares to infinity
  data[1].gt[0] = 1e300;
  train::TrainConfig tc;
  tc.epochs = 2;
  const auto init = net::ModelParams::init(tiny(2));
  const auto r = train::train(init, data, {}, tc, {});
  CHECK(r.diverged);
  CHECK(r.log.empty());
  CHECK(net::serialize(r.last) == net::serialize(init));
  CHECK(net::serialize(r.best) == net::serialize(init));
}

TEST_CASE("config validation") {
  train::TrainConfig tc;
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), UsageError);
  tc = train::TrainConfig();
  tc.epochs = 0;
  CHECK_THROWS_AS(tc.validate(), UsageError);
  train::LossConfig lc;
  lc.lambda_l2 = -1.0;
  CHECK_THROWS_AS(lc.validate(), UsageError);
  CHECK_THROWS_AS(train::train(net::ModelParams::init(tiny(2)), {}, {}, train::TrainConfig(), {}), DatasetError);

  const auto cfg = KeyValueConfig::parse("epochs = 9\nlambda_slope = 0.5\ndisable_fusion = true\naugment = 1\n");
  CHECK(train::TrainConfig::from_config(cfg).epochs == 9);
  CHECK(train::TrainConfig::from_config(cfg).augment);
  CHECK(train::LossConfig::from_config(cfg).lambda_slope == 0.5);
  CHECK(train::LossConfig::from_config(cfg).ablation.disable_fusion);
}

TEST_CASE("sweep and ablation tables have one row per configuration") {
  const auto data = synth::make_dataset(small_scenes(), 8, 8);
  train::ExperimentConfig e;
  e.net = tiny(1);
  e.train.epochs = 1;
  const std::vector<int> degrees{1, 2};
  const auto sweep = train::run_degree_sweep(data, degrees, e);
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[1].degree == 2);
  CHECK(sweep[1].score.coefficients.size() == 4);
  CHECK(sweep[1].score.coefficients[0].c.size() == 3);

  const auto ablations = train::run_ablations(data, e, {}, &sweep[0].score);
  REQUIRE(ablations.size() == 4);
  CHECK(ablations[0].name == "none");
  CHECK(ablations[0].score.mae == sweep[0].score.mae);
  CHECK(ablations[1].name == "prototypes");
  CHECK(ablations[2].name == "fusion");
  CHECK(ablations[3].name == "monotonicity");
}
