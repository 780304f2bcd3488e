#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "polyrad/baselines.hpp"
#include "polyrad/errors.hpp"
#include "polyrad/metrics.hpp"
#include "polyrad/polytransform.hpp"
#include "polyrad/synthgen.hpp"
#include "support.hpp"

using namespace polyrad;

TEST_CASE("same seed gives a bit-identical scene") {
  synth::SceneSpec spec;
  spec.seed = 99;
  const auto a = synth::generate_scene(spec).sample;
  const auto b = synth::generate_scene(spec).sample;
  CHECK(a.z == b.z);
  CHECK(a.gt == b.gt);
  CHECK(a.radar == b.radar);
  spec.seed = 100;
  CHECK_FALSE(synth::generate_scene(spec).sample.z == a.z);
}

TEST_CASE("value ranges and mask") {
  for (const auto& s : synth::make_dataset(synth::SceneSpec(), 10, 5)) {
    const auto [zlo, zhi] = std::minmax_element(s.z.values().begin(), s.z.values().end());
    CHECK(*zlo >= 0.0);
    CHECK(*zhi <= 1.0);
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
      const double d = s.gt[i];
      CHECK((d == 0.0 || (d >= 2.0 && d <= 80.0)));
      CHECK(s.mask[i] == (d > 0.0 ? 1 : 0));
    }
    CHECK(s.radar.size() == 100);
    for (const auto& p : s.radar.points()) CHECK(p.z > 0.0);
  }
}

TEST_CASE("z is strictly increasing in depth within every region") {
  synth::SceneSpec spec;
  spec.ramp_fraction = 1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    spec.seed = seed;
    spec.gamma = {0.6, 1.6, 0.9, 1.2};
    spec.offset = {5, -5, 0, 2};
    const auto g = synth::generate_scene(spec);
    for (std::size_t r = 0; r < g.regions.size(); ++r) {
      std::vector<std::pair<double, double>> pairs;
      for (std::size_t i = 0; i < g.region_of_pixel.size(); ++i) {
        if (g.region_of_pixel[i] == r) pairs.emplace_back(g.sample.gt[i], g.sample.z[i]);
      }
      std::sort(pairs.begin(), pairs.end());
      for (std::size_t k = 1; k < pairs.size(); ++k) {
        if (pairs[k].first > pairs[k - 1].first) CHECK(pairs[k].second > pairs[k - 1].second);
        if (pairs[k].first == pairs[k - 1].first) CHECK(pairs[k].second == pairs[k - 1].second);
      }
    }
  }
}

TEST_CASE("regions tile the raster") {
  const auto regions = synth::partition(64, 48, 5, 3);
  REQUIRE(regions.size() == 5);
  std::vector<int> covered(64 * 48, 0);
  for (const auto& r : regions) {
    for (std::size_t y = r.row0; y < r.row0 + r.rows; ++y) {
      for (std::size_t x = r.col0; x < r.col0 + r.cols; ++x) ++covered[y * 48 + x];
    }
  }
  CHECK(std::all_of(covered.begin(), covered.end(), [](int c) { return c == 1; }));
}

TEST_CASE("single region, identity warp, no noise: z is an affine rescale of depth") {
  synth::SceneSpec spec;
  spec.regions = 1;
  spec.gamma = {1.0};
  spec.gain = {1.0};
  spec.offset = {0.0};
  spec.radar_sigma = 0.0;
  spec.outlier_fraction = 0.0;
  const auto s = synth::generate_scene(spec).sample;
  const auto lin = fit::fit_linear(s.z, s.gt, s.mask);
  const auto pred = poly::eval_poly(lin.as_poly(), s.z).depth;
  CHECK(eval::mae_rmse(pred, s.gt, s.mask).mae < 1e-9);
}

TEST_CASE("misalignment fixture: no scale and shift gets within half the offset gap") {
  const auto spec = synth::misalignment_fixture();
  const auto g = synth::generate_scene(spec);
  const auto& s = g.sample;
  double gap = INFINITY;
  for (std::size_t a = 0; a < spec.offset.size(); ++a) {
    for (std::size_t b = a + 1; b < spec.offset.size(); ++b) gap = std::min(gap, std::abs(spec.offset[a] - spec.offset[b]));
  }
  const auto lin = fit::fit_linear(s.z, s.gt, s.mask);
  CHECK(eval::mae_rmse(poly::eval_poly(lin.as_poly(), s.z).depth, s.gt, s.mask).mae >= 0.5 * gap);

  // Region-mean ordering of z disagrees with that of depth for some pair.
  std::vector<double> zm(3, 0.0), dm(3, 0.0), n(3, 0.0);
  for (std::size_t i = 0; i < s.z.size(); ++i) {
    zm[g.region_of_pixel[i]] += s.z[i];
    dm[g.region_of_pixel[i]] += s.gt[i];
    n[g.region_of_pixel[i]] += 1.0;
  }
  bool inverted = false;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (zm[a] / n[a] < zm[b] / n[b] && dm[a] / n[a] > dm[b] / n[b]) inverted = true;
    }
  }
  CHECK(inverted);
}

TEST_CASE("radar returns follow ground truth up to noise and outliers") {
  synth::SceneSpec spec;
  spec.radar_sigma = 0.5;
  spec.outlier_fraction = 0.1;
  spec.radar_points = 400;
  const auto g = synth::generate_scene(spec);
  std::size_t far = 0;
  for (std::size_t i = 0; i < g.sample.radar.size(); ++i) {
    const double truth = g.sample.gt[g.radar_pixels[i]];
    CHECK(truth > 0.0);
    if (std::abs(g.sample.radar[i].z - truth) > 3.0) ++far;
  }
  // Roughly the outlier fraction lands far from the truth.
  CHECK(far > 10);
  CHECK(far < 80);

  spec.radar_sigma = 0.0;
  spec.outlier_fraction = 0.0;
  const auto clean = synth::generate_scene(spec);
  for (std::size_t i = 0; i < clean.sample.radar.size(); ++i) {
    CHECK(clean.sample.radar[i].z == clean.sample.gt[clean.radar_pixels[i]]);
  }
}

TEST_CASE("invalid specs") {
  synth::SceneSpec spec;
  spec.height = spec.width = 2;
  spec.regions = 5;
  CHECK_THROWS_AS(synth::generate_scene(spec), SpecError);
  spec = synth::SceneSpec();
  spec.d_min = 90.0;
  CHECK_THROWS_AS(synth::generate_scene(spec), SpecError);
  spec = synth::SceneSpec();
  spec.gamma = {1.0, -1.0};
  CHECK_THROWS_AS(synth::generate_scene(spec), SpecError);
  spec = synth::SceneSpec();
  spec.outlier_fraction = 1.0;
  CHECK_THROWS_AS(synth::generate_scene(spec), SpecError);
}

TEST_CASE("spec config round trip") {
  synth::SceneSpec spec = synth::misalignment_fixture();
  spec.radar_points = 37;
  const auto back = synth::SceneSpec::from_config(spec.to_config());
  CHECK(back.gamma == spec.gamma);
  CHECK(back.offset == spec.offset);
  CHECK(back.radar_points == 37);
  CHECK(back.seed == spec.seed);
}

TEST_CASE("dataset scenes use seed + index and documented warp ranges") {
  const synth::SceneSpec base;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto s = synth::dataset_scene_spec(base, 7, i);
    CHECK(s.seed == 7 + i);
    REQUIRE(s.gamma.size() == base.regions);
    for (std::size_t r = 0; r < base.regions; ++r) {
      CHECK(s.gamma[r] >= 0.6);
      CHECK(s.gamma[r] <= 1.6);
      CHECK(s.offset[r] >= -0.15 * base.d_max);
      CHECK(s.offset[r] <= 0.15 * base.d_max);
      CHECK(s.gain[r] >= 0.7);
      CHECK(s.gain[r] <= 1.3);
    }
  }
}

TEST_CASE("generated dataset files and deterministic rewrite") {
  testing::TempDir a, b;
  synth::SceneSpec spec;
  spec.height = spec.width = 16;
  const auto ids = synth::generate_dataset(spec, 10, 3, a.path());
  CHECK(ids.size() == 10);
  CHECK(read_manifest(a.path()) == ids);
  for (const auto& id : ids) {
    CHECK(std::filesystem::exists(a / (id + ".z.prad")));
    CHECK(std::filesystem::exists(a / (id + ".gt.prad")));
    CHECK(std::filesystem::exists(a / (id + ".pts.csv")));
  }
  const std::string first = testing::slurp(a / (ids[4] + ".z.prad"));
  synth::generate_dataset(spec, 10, 3, a.path());
  CHECK(testing::slurp(a / (ids[4] + ".z.prad")) == first);
  synth::generate_dataset(spec, 10, 3, b.path());
  for (const auto& id : ids) {
    for (const char* ext : {".z.prad", ".gt.prad", ".pts.csv"}) {
      CHECK(testing::slurp(a / (id + ext)) == testing::slurp(b / (id + ext)));
    }
  }
}
