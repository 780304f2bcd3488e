#pragma once

// Synthetic scenes: piecewise planar/ramp ground truth, a per-region monotone
// warp producing the scaleless map, and sparse noisy radar sampled from the
// ground truth.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "polyrad/config.hpp"
#include "polyrad/datamodel.hpp"

namespace polyrad::synth {

struct Region {
  std::size_t row0 = 0, col0 = 0, rows = 0, cols = 0;
  double depth_start = 0.0;  // metres
  double depth_end = 0.0;    // equal to depth_start for a fronto-parallel plane
  bool vertical = false;     // ramp direction
};

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t regions = 4;
  double d_min = 2.0;
  double d_max = 80.0;
  // Per-region warp z_r = gain_r * d_max * (d / d_max)^gamma_r + offset_r.
  // Missing entries fall back to the identity warp (1, 0, 1).
  std::vector<double> gamma;
  std::vector<double> offset;  // metres
  std::vector<double> gain;
  double ramp_fraction = 0.75;  // probability that a region is a linear ramp
  std::size_t radar_points = 100;
  double radar_sigma = 0.5;       // metres
  double outlier_fraction = 0.1;  // replaced by uniform depths in [d_min, d_max]
  std::uint64_t seed = 7;

  void validate() const;
  static SceneSpec from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
};

struct GeneratedScene {
  SceneSample sample;
  std::vector<Region> regions;
  std::vector<std::size_t> region_of_pixel;
  std::vector<std::size_t> radar_pixels;  // source pixel index per radar point
};

/// Guillotine split of the raster into `count` axis-aligned rectangles.
std::vector<Region> partition(std::size_t height, std::size_t width, std::size_t count, std::uint64_t seed);

GeneratedScene generate_scene(const SceneSpec& spec);

/// Fixed noise-free 3-region scene whose per-region warps leave one pair of
/// regions in inverted order: a global scale and shift cannot align it.
SceneSpec misalignment_fixture();

struct WarpRanges {
  double gamma_lo = 0.6, gamma_hi = 1.6;
  double offset_lo = -0.15, offset_hi = 0.15;  // fraction of d_max
  double gain_lo = 0.7, gain_hi = 1.3;
};

/// Spec for scene `index` of a dataset: seed + index, warps drawn from `ranges`.
SceneSpec dataset_scene_spec(const SceneSpec& base, std::uint64_t seed, std::size_t index,
                             const WarpRanges& ranges = {});

std::string scene_id(std::size_t index);

/// The scenes generate_dataset would write, kept in memory.
std::vector<SceneSample> make_dataset(const SceneSpec& base, std::size_t count, std::uint64_t seed,
                                      const WarpRanges& ranges = {});

/// Writes `count` scenes and a manifest into dir. Returns the ids.
std::vector<std::string> generate_dataset(const SceneSpec& base, std::size_t count, std::uint64_t seed,
                                          const std::filesystem::path& dir, const WarpRanges& ranges = {});

}  // namespace polyrad::synth
