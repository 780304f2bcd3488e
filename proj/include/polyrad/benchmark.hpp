#pragma once

// The standard synthetic benchmark: 200 scenes at 64x64 with 100 radar
// points, seed 7, and the training budget shared by the degree sweep and the
// ablation runs.

#include <cstdint>
#include <vector>

#include "polyrad/config.hpp"
#include "polyrad/synthgen.hpp"
#include "polyrad/training.hpp"

namespace polyrad::bench {

inline constexpr std::size_t kScenes = 200;
inline constexpr std::uint64_t kSeed = 7;

synth::SceneSpec scene_spec();
std::vector<SceneSample> dataset(std::size_t count = kScenes, std::uint64_t seed = kSeed);

/// Network widths and optimizer budget used for the benchmark runs.
train::ExperimentConfig experiment();

/// experiment() with `cfg` entries applied on top (same keys as the CLI).
train::ExperimentConfig experiment(const KeyValueConfig& cfg);

}  // namespace polyrad::bench
