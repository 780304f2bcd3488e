#include <doctest.h>

#include <cmath>

#include "polyrad/baselines.hpp"
#include "polyrad/errors.hpp"
#include "polyrad/evaluate.hpp"
#include "polyrad/metrics.hpp"
#include "polyrad/polytransform.hpp"
#include "polyrad/rng.hpp"
#include "polyrad/synthgen.hpp"
#include "support.hpp"

using namespace polyrad;

namespace {

DepthMap row(std::vector<double> v, DepthKind k = DepthKind::Metric) {
  const std::size_t n = v.size();
  return DepthMap(1, n, k, std::move(v));
}

}  // namespace

TEST_CASE("mae_rmse examples") {
  const auto gt = row({10, 20}, DepthKind::GroundTruth);
  const std::vector<std::uint8_t> m{1, 1};
  const auto zero = eval::mae_rmse(gt, gt, m);
  CHECK(zero.mae == 0.0);
  CHECK(zero.rmse == 0.0);

  const auto e = eval::mae_rmse(row({11, 19}), gt, m, eval::kNoCap, eval::Unit::Millimeters);
  CHECK(e.mae == 1000.0);
  CHECK(e.rmse == 1000.0);
  CHECK(e.count == 2);

  CHECK_THROWS_AS(eval::mae_rmse(gt, gt, m, 5.0), DegenerateInputError);
  CHECK(eval::mae_rmse(row({11, 25}), gt, m, 15.0).mae == 1.0);
  CHECK_THROWS_AS(eval::mae_rmse(row({1, 2, 3}), gt, m), DimensionError);
}

TEST_CASE("MAE never exceeds RMSE and caps only shrink the pixel set") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    DepthMap gt(4, 5, DepthKind::GroundTruth), pred(4, 5, DepthKind::Metric);
    std::vector<std::uint8_t> mask(20);
    for (std::size_t i = 0; i < 20; ++i) {
      gt[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform(2, 80);
      pred[i] = rng.uniform(0, 90);
      mask[i] = gt[i] > 0.0;
    }
    std::size_t prev = SIZE_MAX;
    for (double cap : {eval::kNoCap, 80.0, 70.0, 50.0, 20.0}) {
      const std::size_t n = eval::eligible_count(gt, mask, cap);
      CHECK(n <= prev);
      prev = n;
      if (n == 0) continue;
      const auto s = eval::mae_rmse(pred, gt, mask, cap);
      CHECK(s.count == n);
      CHECK(s.mae <= s.rmse * (1.0 + 1e-15));
    }
  }
}

TEST_CASE("method parsing") {
  CHECK(eval::MethodSpec::parse("linear").kind == eval::MethodKind::Linear);
  CHECK(eval::MethodSpec::parse("median").kind == eval::MethodKind::Median);
  CHECK(eval::MethodSpec::parse("raw-z").kind == eval::MethodKind::RawZ);
  CHECK(eval::MethodSpec::parse("network").kind == eval::MethodKind::Network);
  const auto d = eval::MethodSpec::parse("poly-dense:3");
  CHECK(d.kind == eval::MethodKind::PolyDense);
  CHECK(d.degree == 3);
  CHECK(d.name() == "poly-dense:3");
  CHECK(eval::MethodSpec::parse("poly-sparse", 5).degree == 5);
  CHECK_THROWS_AS(eval::MethodSpec::parse("cubic"), UsageError);
  CHECK_THROWS_AS(eval::MethodSpec::parse("poly-dense:0"), UsageError);
  CHECK_THROWS_AS(eval::MethodSpec::parse("poly-dense:x"), UsageError);
  CHECK(eval::parse_unit("mm") == eval::Unit::Millimeters);
  CHECK(eval::parse_unit("m") == eval::Unit::Meters);
  CHECK_THROWS_AS(eval::parse_unit("cm"), UsageError);
}

TEST_CASE("degree-8 dense fit beats the linear fit on every benchmark scene") {
  const auto scenes = synth::make_dataset(synth::SceneSpec(), 200, 7);
  const std::vector<double> caps{eval::kNoCap};
  const auto lin = eval::MethodSpec::parse("linear");
  const auto poly8 = eval::MethodSpec::parse("poly-dense:8");
  const auto a = eval::evaluate_method(lin, scenes, caps, eval::Unit::Meters);
  const auto b = eval::evaluate_method(poly8, scenes, caps, eval::Unit::Meters);
  REQUIRE(a.scenes.size() == 200);
  REQUIRE(b.scenes.size() == 200);
  for (std::size_t i = 0; i < 200; ++i) {
    INFO(a.scenes[i].scene);
    // Least squares minimizes squared error, so compare RMSE.
    CHECK(b.scenes[i].stats.rmse <= a.scenes[i].stats.rmse * (1.0 + 1e-9));
  }
  CHECK(b.rows[0].mae < a.rows[0].mae);
}

TEST_CASE("reports") {
  const auto scenes = synth::make_dataset(synth::SceneSpec(), 6, 3);
  const std::vector<double> caps{50.0, 80.0};
  eval::Report rep;
  for (const char* m : {"median", "linear", "raw-z", "poly-sparse:2"}) {
    rep.append(eval::evaluate_method(eval::MethodSpec::parse(m), scenes, caps));
  }
  REQUIRE(rep.rows.size() == 8);
  for (const auto& r : rep.rows) CHECK(r.mae <= r.rmse);
  const std::string csv = rep.csv();
  CHECK(csv.rfind("method,cap_m,scenes,mae,rmse,unit\n", 0) == 0);
  CHECK(csv.find("median,50,") != std::string::npos);
  CHECK(csv.find("linear,80,6,") != std::string::npos);
  CHECK(rep.scenes_csv().rfind("method,scene,cap_m,pixels,mae,rmse,unit\n", 0) == 0);
  CHECK(eval::cap_label(eval::kNoCap) == "none");

  // Deterministic.
  eval::Report again;
  for (const char* m : {"median", "linear", "raw-z", "poly-sparse:2"}) {
    again.append(eval::evaluate_method(eval::MethodSpec::parse(m), scenes, caps));
  }
  CHECK(again.csv() == csv);

  CHECK_THROWS_AS(eval::evaluate_method(eval::MethodSpec::parse("linear"), scenes, std::vector<double>{1.0}),
                  DegenerateInputError);
}

TEST_CASE("method predictions") {
  const auto s = synth::make_dataset(synth::SceneSpec(), 1, 4)[0];
  const auto lin = fit::fit_linear(s.z, s.gt, s.mask);
  CHECK(eval::predict(eval::MethodSpec::parse("linear"), s) == poly::eval_poly(lin.as_poly(), s.z).depth);
  const double k = fit::median_scale(s.z, s.gt, s.mask);
  const auto raw = eval::predict(eval::MethodSpec::parse("raw-z"), s);
  CHECK(raw[10] == doctest::Approx(k * s.z[10]).epsilon(1e-15));
  CHECK_THROWS_AS(eval::predict(eval::MethodSpec::parse("network"), s), UsageError);
}
