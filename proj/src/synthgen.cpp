#include "polyrad/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "polyrad/errors.hpp"
#include "polyrad/rng.hpp"

namespace polyrad::synth {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kLayoutStream = 11;
constexpr std::uint64_t kDepthStream = 12;
constexpr std::uint64_t kRadarStream = 13;
constexpr std::uint64_t kWarpStream = 14;

std::string join(const std::vector<double>& v) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out += (i ? "," : "");
    out += buf;
  }
  return out;
}

double warp_param(const std::vector<double>& v, std::size_t r, double fallback) {
  return r < v.size() ? v[r] : fallback;
}

}  // namespace

void SceneSpec::validate() const {
  if (height < 1 || width < 1) throw SpecError("scene raster must be at least 1x1");
  if (regions < 1) throw SpecError("scene needs at least one region");
  if (regions > height * width) {
    throw SpecError(std::to_string(regions) + " regions cannot tile a " + std::to_string(height) + "x" +
                    std::to_string(width) + " raster");
  }
  if (!(d_min > 0.0 && d_min < d_max)) throw SpecError("depth range must satisfy 0 < d_min < d_max");
  for (double g : gamma)
    if (!(g > 0.0)) throw SpecError("warp gamma must be positive");
  for (double a : gain)
    if (!(a > 0.0)) throw SpecError("warp gain must be positive");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw SpecError("outlier fraction must lie in [0, 1)");
  }
  if (!(radar_sigma >= 0.0)) throw SpecError("radar noise must be non-negative");
  if (!(ramp_fraction >= 0.0 && ramp_fraction <= 1.0)) throw SpecError("ramp fraction must lie in [0, 1]");
}

SceneSpec SceneSpec::from_config(const KeyValueConfig& cfg) {
  SceneSpec s;
  s.height = static_cast<std::size_t>(cfg.get_int("height", static_cast<long long>(s.height)));
  s.width = static_cast<std::size_t>(cfg.get_int("width", static_cast<long long>(s.width)));
  s.regions = static_cast<std::size_t>(cfg.get_int("regions", static_cast<long long>(s.regions)));
  s.d_min = cfg.get_double("d_min", s.d_min);
  s.d_max = cfg.get_double("d_max", s.d_max);
  s.gamma = cfg.get_doubles("gamma", s.gamma);
  s.offset = cfg.get_doubles("offset", s.offset);
  s.gain = cfg.get_doubles("gain", s.gain);
  s.ramp_fraction = cfg.get_double("ramp_fraction", s.ramp_fraction);
  s.radar_points = static_cast<std::size_t>(cfg.get_int("radar_points", static_cast<long long>(s.radar_points)));
  s.radar_sigma = cfg.get_double("radar_sigma", s.radar_sigma);
  s.outlier_fraction = cfg.get_double("outlier_fraction", s.outlier_fraction);
  s.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(s.seed)));
  return s;
}

KeyValueConfig SceneSpec::to_config() const {
  KeyValueConfig cfg;
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  cfg.set("height", std::to_string(height));
  cfg.set("width", std::to_string(width));
  cfg.set("regions", std::to_string(regions));
  cfg.set("d_min", num(d_min));
  cfg.set("d_max", num(d_max));
  if (!gamma.empty()) cfg.set("gamma", join(gamma));
  if (!offset.empty()) cfg.set("offset", join(offset));
  if (!gain.empty()) cfg.set("gain", join(gain));
  cfg.set("ramp_fraction", num(ramp_fraction));
  cfg.set("radar_points", std::to_string(radar_points));
  cfg.set("radar_sigma", num(radar_sigma));
  cfg.set("outlier_fraction", num(outlier_fraction));
  cfg.set("seed", std::to_string(seed));
  return cfg;
}

std::vector<Region> partition(std::size_t height, std::size_t width, std::size_t count, std::uint64_t seed) {
  if (count < 1 || count > height * width) {
    throw SpecError(std::to_string(count) + " regions cannot tile the raster");
  }
  Rng rng(seed, kLayoutStream);
  std::vector<Region> regions{Region{0, 0, height, width}};
  while (regions.size() < count) {
    // Split the largest region (first one on ties) across its longer side.
    std::size_t pick = 0;
    for (std::size_t i = 1; i < regions.size(); ++i) {
      if (regions[i].rows * regions[i].cols > regions[pick].rows * regions[pick].cols) pick = i;
    }
    Region r = regions[pick];
    const bool split_rows = r.rows >= r.cols;
    const std::size_t len = split_rows ? r.rows : r.cols;
    const std::size_t lo = std::max<std::size_t>(1, len / 4);
    const std::size_t hi = std::max(lo, len - len / 4);
    const std::size_t cut = std::min(len - 1, lo + static_cast<std::size_t>(rng.below(hi - lo + 1)));
    Region a = r, b = r;
    if (split_rows) {
      a.rows = cut;
      b.row0 = r.row0 + cut;
      b.rows = r.rows - cut;
    } else {
      a.cols = cut;
      b.col0 = r.col0 + cut;
      b.cols = r.cols - cut;
    }
    regions[pick] = a;
    regions.insert(regions.begin() + static_cast<std::ptrdiff_t>(pick) + 1, b);
  }
  return regions;
}

GeneratedScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width;

  GeneratedScene out;
  out.regions = partition(h, w, spec.regions, spec.seed);

  Rng depth_rng(spec.seed, kDepthStream);
  for (auto& r : out.regions) {
    const bool ramp = depth_rng.uniform() < spec.ramp_fraction;
    r.depth_start = depth_rng.uniform(spec.d_min, spec.d_max);
    r.depth_end = ramp ? depth_rng.uniform(spec.d_min, spec.d_max) : r.depth_start;
    r.vertical = depth_rng.uniform() < 0.5;
  }
  // With ramps enabled, at least one region carries intra-region structure so
  // that the scaleless map has more distinct values than regions.
  const bool any_ramp = std::any_of(out.regions.begin(), out.regions.end(),
                                    [](const Region& r) { return r.depth_end != r.depth_start; });
  if (spec.ramp_fraction > 0.0 && !any_ramp) {
    Region& r = out.regions.front();
    r.depth_end = r.depth_start < 0.5 * (spec.d_min + spec.d_max) ? spec.d_max : spec.d_min;
  }

  DepthMap gt(h, w, DepthKind::GroundTruth);
  std::vector<double> z_raw(h * w);
  out.region_of_pixel.assign(h * w, 0);
  for (std::size_t ri = 0; ri < out.regions.size(); ++ri) {
    const Region& r = out.regions[ri];
    const double gamma = warp_param(spec.gamma, ri, 1.0);
    const double offset = warp_param(spec.offset, ri, 0.0);
    const double gain = warp_param(spec.gain, ri, 1.0);
    for (std::size_t y = r.row0; y < r.row0 + r.rows; ++y) {
      for (std::size_t x = r.col0; x < r.col0 + r.cols; ++x) {
        const std::size_t span = r.vertical ? r.rows : r.cols;
        const std::size_t pos = r.vertical ? y - r.row0 : x - r.col0;
        const double frac = span > 1 ? static_cast<double>(pos) / static_cast<double>(span - 1) : 0.0;
        const double d = r.depth_start + frac * (r.depth_end - r.depth_start);
        const std::size_t i = y * w + x;
        gt[i] = d;
        z_raw[i] = gain * spec.d_max * std::pow(d / spec.d_max, gamma) + offset;
        out.region_of_pixel[i] = ri;
      }
    }
  }

  const auto [lo_it, hi_it] = std::minmax_element(z_raw.begin(), z_raw.end());
  const double lo = *lo_it, hi = *hi_it;
  DepthMap z(h, w, DepthKind::Scaleless);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = hi > lo ? (z_raw[i] - lo) / (hi - lo) : 0.0;

  // Radar: distinct uniform pixels when possible, Gaussian depth noise, and a
  // fixed fraction of uniform-depth outliers.
  Rng radar_rng(spec.seed, kRadarStream);
  const std::size_t n_pix = h * w;
  const std::size_t n_pts = spec.radar_points;
  std::vector<std::size_t> pixels;
  if (n_pts <= n_pix) {
    std::vector<std::size_t> all(n_pix);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_pts; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(radar_rng.below(n_pix - i));
      std::swap(all[i], all[j]);
    }
    pixels.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_pts));
  } else {
    for (std::size_t i = 0; i < n_pts; ++i) pixels.push_back(static_cast<std::size_t>(radar_rng.below(n_pix)));
  }
  const auto n_out = static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(n_pts)));
  std::vector<std::size_t> order(n_pts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  radar_rng.shuffle(order.begin(), order.end());
  std::vector<bool> outlier(n_pts, false);
  for (std::size_t i = 0; i < n_out; ++i) outlier[order[i]] = true;

  const Projection proj = Projection::for_raster(h, w);
  std::vector<Point3> points;
  points.reserve(n_pts);
  for (std::size_t k = 0; k < n_pts; ++k) {
    const std::size_t i = pixels[k];
    double depth = outlier[k] ? radar_rng.uniform(spec.d_min, spec.d_max)
                              : gt[i] + radar_rng.normal(0.0, spec.radar_sigma);
    depth = std::max(depth, 1e-3);
    points.push_back(proj.unproject(i / w, i % w, depth));
  }
  out.radar_pixels = std::move(pixels);

  char id[32];
  std::snprintf(id, sizeof id, "seed%llu", static_cast<unsigned long long>(spec.seed));
  out.sample = make_sample(id, std::move(z), RadarCloud(std::move(points)), std::move(gt), spec.seed);
  return out;
}

SceneSpec dataset_scene_spec(const SceneSpec& base, std::uint64_t seed, std::size_t index,
                             const WarpRanges& ranges) {
  SceneSpec s = base;
  s.seed = seed + index;
  Rng rng(s.seed, kWarpStream);
  s.gamma.resize(s.regions);
  s.offset.resize(s.regions);
  s.gain.resize(s.regions);
  for (std::size_t r = 0; r < s.regions; ++r) {
    s.gamma[r] = rng.uniform(ranges.gamma_lo, ranges.gamma_hi);
    s.offset[r] = rng.uniform(ranges.offset_lo, ranges.offset_hi) * s.d_max;
    s.gain[r] = rng.uniform(ranges.gain_lo, ranges.gain_hi);
  }
  return s;
}

std::string scene_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%04zu", index);
  return buf;
}

std::vector<SceneSample> make_dataset(const SceneSpec& base, std::size_t count, std::uint64_t seed,
                                      const WarpRanges& ranges) {
  if (count < 1) throw UsageError("dataset needs at least one scene");
  base.validate();
  std::vector<SceneSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    GeneratedScene scene = generate_scene(dataset_scene_spec(base, seed, i, ranges));
    scene.sample.id = scene_id(i);
    out.push_back(std::move(scene.sample));
  }
  return out;
}

std::vector<std::string> generate_dataset(const SceneSpec& base, std::size_t count, std::uint64_t seed,
                                          const fs::path& dir, const WarpRanges& ranges) {
  if (count < 1) throw UsageError("dataset needs at least one scene");
  base.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create dataset directory " + dir.string());

  std::vector<std::string> ids;
  for (const auto& sample : make_dataset(base, count, seed, ranges)) {
    save_sample(dir, sample);
    ids.push_back(sample.id);
  }
  write_manifest(dir, ids);

  KeyValueConfig cfg = base.to_config();
  cfg.set("count", std::to_string(count));
  cfg.set("seed", std::to_string(seed));
  std::ofstream meta(dir / "synth.cfg", std::ios::trunc);
  if (!meta) throw IoError("cannot write synth.cfg in " + dir.string());
  meta << "# synthetic dataset parameters\n" << cfg.dump();
  return ids;
}

SceneSpec misalignment_fixture() {
  SceneSpec s;
  s.regions = 3;
  s.gamma = {0.6, 1.5, 1.0};
  s.offset = {10.0, -8.0, 0.0};
  s.gain = {1.0, 1.0, 1.0};
  s.radar_sigma = 0.0;
  s.outlier_fraction = 0.0;
  s.seed = 11;
  return s;
}

}  // namespace polyrad::synth
