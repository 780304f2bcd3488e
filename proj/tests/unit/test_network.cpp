#include <doctest.h>

#include <cmath>

#include "polyrad/errors.hpp"
#include "polyrad/network.hpp"
#include "polyrad/rng.hpp"
#include "polyrad/synthgen.hpp"
#include "support.hpp"

using namespace polyrad;
using namespace polyrad::ad;

namespace {

net::NetConfig small_config(int degree = 4) {
  net::NetConfig c;
  c.c_r = c.c_z = c.c_v = c.c_s = 8;
  c.n_prototypes = 4;
  c.degree = degree;
  return c;
}

RadarCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(-20, 20), rng.uniform(-3, 3), rng.uniform(1, 80)});
  return RadarCloud(pts);
}

RadarCloud permuted(const RadarCloud& c, Rng& rng) {
  auto pts = c.points();
  rng.shuffle(pts.begin(), pts.end());
  return RadarCloud(pts);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void check_rows_sum_to_one(const Tensor& t) {
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < t.dim(1); ++c) s += t.at(r, c);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

// Gives every bias a nonzero value so tests do not pass by accident.
void jitter(net::ModelParams& p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* q : p.parameters()) {
    if (q->value.rank() == 1) {
      for (auto& v : q->value.data()) v += rng.uniform(-0.1, 0.1);
    }
  }
}

}  // namespace

TEST_CASE("zero-weight radar MLP gives zero features") {
  auto p = net::ModelParams::init(small_config());
  for (auto* l : {&p.radar1, &p.radar2, &p.radar3}) {
    l->weight.value.fill(0.0);
    l->bias.value.fill(0.0);
  }
  Graph g;
  Var f = net::encode_radar(g, p, random_cloud(7, 1));
  CHECK(f.shape() == Shape{7, 8});
  for (double v : f.value().data()) CHECK(v == 0.0);
}

TEST_CASE("radar features are pointwise") {
  auto p = net::ModelParams::init(small_config());
  jitter(p, 2);
  auto pts = random_cloud(3, 2).points();
  pts.push_back(pts[1]);
  Graph g;
  Var f = net::encode_radar(g, p, RadarCloud(pts));
  for (std::size_t c = 0; c < 8; ++c) CHECK(f.value().at(3, c) == f.value().at(1, c));

  Graph g2;
  Var b = net::encode_radar(g2, p, RadarCloud({{0, 0, 0.1}, {0, 0, 80}, {50, -50, 80}}));
  for (double v : b.value().data()) CHECK(std::isfinite(v));
}

TEST_CASE("prototype attention with a single point returns its value row") {
  auto p = net::ModelParams::init(small_config());
  jitter(p, 3);
  Graph g;
  Var f = net::encode_radar(g, p, random_cloud(1, 3));
  auto out = net::aggregate_prototypes(g, p, f);
  CHECK(out.aggregated.shape() == Shape{4, 8});
  // value row = F psi^V + b
  const Tensor v = ad::matmul(f.value(), p.radar_value.weight.value);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(out.aggregated.value().at(r, c) == doctest::Approx(v.at(0, c) + p.radar_value.bias.value[c]).epsilon(1e-14));
    }
  }
  for (double a : out.attention.value().data()) CHECK(a == 1.0);
}

TEST_CASE("prototype aggregation is invariant to feature row order") {
  auto p = net::ModelParams::init(small_config());
  jitter(p, 4);
  const auto cloud = random_cloud(30, 4);
  Rng rng(44);
  Graph g;
  auto base = net::aggregate_prototypes(g, p, net::encode_radar(g, p, cloud));
  check_rows_sum_to_one(base.attention.value());
  for (int k = 0; k < 5; ++k) {
    Graph h;
    auto other = net::aggregate_prototypes(h, p, net::encode_radar(h, p, permuted(cloud, rng)));
    CHECK(max_abs_diff(base.aggregated.value(), other.aggregated.value()) <= 1e-12);
  }
}

TEST_CASE("depth encoder shapes") {
  auto p = net::ModelParams::init(small_config());
  Graph g;
  Var z0 = net::encode_depth(g, p, DepthMap(16, 12, DepthKind::Scaleless, 0.0));
  CHECK(z0.shape() == Shape{4 * 3, 8});
  for (double v : z0.value().data()) CHECK(v == 0.0);

  Rng rng(5);
  DepthMap z(16, 16, DepthKind::Scaleless);
  for (auto& v : z.values()) v = rng.uniform(0, 1);
  Var zz = net::encode_depth(g, p, z);
  for (double v : zz.value().data()) CHECK(std::isfinite(v));

  CHECK_THROWS_AS(net::encode_depth(g, p, DepthMap(15, 16, DepthKind::Scaleless)), UsageError);
}

TEST_CASE("fusion with one prototype copies the projected row to every token") {
  auto cfg = small_config();
  cfg.n_prototypes = 1;
  auto p = net::ModelParams::init(cfg);
  jitter(p, 6);
  const auto scene = synth::generate_scene([] {
    synth::SceneSpec s;
    s.height = s.width = 16;
    return s;
  }());
  Graph g;
  auto fwd = net::forward(g, p, scene.sample.z, scene.sample.radar);
  const Tensor& R = fwd.prototypes.aggregated.value();
  const Tensor v = ad::matmul(R, p.fuse_value.weight.value);
  const Tensor& S = fwd.fusion.fused.value();
  CHECK(S.dim(0) == 16);
  for (std::size_t t = 0; t < S.dim(0); ++t) {
    for (std::size_t c = 0; c < S.dim(1); ++c) {
      CHECK(S.at(t, c) == doctest::Approx(v.at(0, c) + p.fuse_value.bias.value[c]).epsilon(1e-13));
    }
  }
  check_rows_sum_to_one(fwd.fusion.attention.value());
}

TEST_CASE("fusion attention rows sum to one") {
  auto p = net::ModelParams::init(small_config());
  jitter(p, 7);
  const auto s = synth::make_dataset(synth::SceneSpec(), 1, 7)[0];
  Graph g;
  auto fwd = net::forward(g, p, s.z, s.radar);
  CHECK(fwd.fusion.attention.shape() == Shape{256, 4});
  check_rows_sum_to_one(fwd.fusion.attention.value());
  CHECK(fwd.pooled.shape() == Shape{1, 8});
}

TEST_CASE("fresh model applies a sane linear map") {
  for (int degree : {1, 4, 8, 10}) {
    net::NetConfig cfg;
    cfg.degree = degree;
    const auto p = net::ModelParams::init(cfg);
    const auto s = synth::make_dataset(synth::SceneSpec(), 1, 8)[0];
    const auto c = net::predict_coefficients(p, s.z, s.radar);
    REQUIRE(c.c.size() == static_cast<std::size_t>(degree) + 1);
    CHECK(std::abs(c.c[1] - cfg.d_scale) <= 0.1 * cfg.d_scale);
    for (std::size_t i = 0; i < c.c.size(); ++i) {
      if (i != 1) CHECK(std::abs(c.c[i]) < 0.1 * cfg.d_scale);
    }
  }
}

TEST_CASE("predicted coefficients ignore radar order") {
  auto p = net::ModelParams::init(small_config(8));
  jitter(p, 9);
  for (auto& w : p.head2.weight.value.data()) w *= 1e3;
  Rng rng(99);
  for (const auto& s : synth::make_dataset(synth::SceneSpec(), 3, 9)) {
    const auto base = net::predict_coefficients(p, s.z, s.radar);
    for (int k = 0; k < 10; ++k) {
      const auto other = net::predict_coefficients(p, s.z, permuted(s.radar, rng));
      for (std::size_t i = 0; i < base.c.size(); ++i) CHECK(std::abs(base.c[i] - other.c[i]) < 1e-10);
    }
  }
}

TEST_CASE("single prototype and single point make the radar branch constant across tokens") {
  auto cfg = small_config();
  cfg.n_prototypes = 1;
  auto p = net::ModelParams::init(cfg);
  jitter(p, 10);
  DepthMap z(8, 8, DepthKind::Scaleless);
  Rng rng(10);
  for (auto& v : z.values()) v = rng.uniform(0, 1);
  Graph g;
  auto fwd = net::forward(g, p, z, RadarCloud({{1.0, 0.5, 20.0}}));
  const Tensor& S = fwd.fusion.fused.value();
  for (std::size_t t = 1; t < S.dim(0); ++t) {
    for (std::size_t c = 0; c < S.dim(1); ++c) CHECK(S.at(t, c) == S.at(0, c));
  }
}

TEST_CASE("ablations") {
  auto p = net::ModelParams::init(small_config());
  jitter(p, 11);
  const auto s = synth::make_dataset(synth::SceneSpec(), 1, 11)[0];
  Graph g;
  net::Ablation no_proto;
  no_proto.disable_prototypes = true;
  auto a = net::forward(g, p, s.z, s.radar, no_proto);
  const Tensor& R = a.prototypes.aggregated.value();
  CHECK(R.dim(0) == 4);
  for (std::size_t r = 1; r < 4; ++r) {
    for (std::size_t c = 0; c < R.dim(1); ++c) CHECK(R.at(r, c) == R.at(0, c));
  }

  net::Ablation no_fuse;
  no_fuse.disable_fusion = true;
  auto b = net::forward(g, p, s.z, s.radar, no_fuse);
  const Tensor& S = b.fusion.fused.value();
  for (std::size_t t = 1; t < S.dim(0); ++t) {
    for (std::size_t c = 0; c < S.dim(1); ++c) CHECK(S.at(t, c) == S.at(0, c));
  }
}

TEST_CASE("empty cloud is a no-radar error") {
  const auto p = net::ModelParams::init(small_config());
  CHECK_THROWS_AS(net::predict_coefficients(p, DepthMap(8, 8, DepthKind::Scaleless, 0.5), RadarCloud()),
                  NoRadarError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  testing::TempDir dir;
  auto p = net::ModelParams::init(small_config(6));
  jitter(p, 12);
  net::save_checkpoint(dir / "m.ckpt", p);
  const auto q = net::load_checkpoint(dir / "m.ckpt");
  CHECK(q.config.degree == 6);
  CHECK(q.config.c_r == 8);
  const auto pa = p.parameters();
  const auto qa = q.parameters();
  REQUIRE(pa.size() == qa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == qa[i]->value);
  CHECK(net::serialize(q) == net::serialize(p));
  CHECK(testing::slurp(dir / "m.ckpt").substr(0, 8) == "PRADCKPT");

  testing::spit(dir / "bad.ckpt", "NOTACKPT");
  CHECK_THROWS_AS(net::load_checkpoint(dir / "bad.ckpt"), FormatError);
  auto bytes = net::serialize(p);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(net::deserialize(bytes), FormatError);
}

TEST_CASE("invalid configs") {
  net::NetConfig c;
  c.degree = 0;
  CHECK_THROWS_AS(net::ModelParams::init(c), UsageError);
  c = net::NetConfig();
  c.c_r = 0;
  CHECK_THROWS_AS(net::ModelParams::init(c), UsageError);
}
