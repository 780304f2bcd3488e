#pragma once

// Central finite-difference checks of the reverse-mode gradients.
//
// Error metric per checked array: ||analytic - numeric||_2 divided by
// max(||analytic||_2, ||numeric||_2, floor), over the checked entries.
// A difference whose +-step evaluations change the sign pattern of any relu
// or |.| input has crossed a kink; the step is divided by 10 until it no
// longer does, and entries still crossing at the smallest step are skipped.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "polyrad/autodiff.hpp"
#include "polyrad/datamodel.hpp"
#include "polyrad/network.hpp"
#include "polyrad/training.hpp"

namespace polyrad::gradcheck {

struct Options {
  double step = 1e-4;
  double floor = 1e-3;  // keeps structurally zero gradients from dividing noise by noise
  int max_refinements = 4;
  std::size_t max_entries = 0;  // per array; 0 checks every entry
  std::uint64_t seed = 3;       // entry sampling and random inputs
};

struct Check {
  std::string name;
  double rel_error = 0.0;
  double abs_error = 0.0;       // ||analytic - numeric||_2
  double analytic_norm = 0.0;   // ||analytic||_2
  std::size_t entries = 0;
  std::size_t refined = 0;  // entries checked with a reduced step
  std::size_t skipped = 0;  // entries on a kink at every step
};

inline constexpr double kTolerance = 1e-4;

double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor);
Check make_check(std::string name, std::span<const double> analytic, std::span<const double> numeric, double floor);

/// Builds a single-element loss from leaves bound to `inputs`.
using Builder = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

/// One Check per input tensor.
std::vector<Check> check_function(const std::string& name, const std::vector<ad::Tensor>& inputs,
                                  const Builder& loss, const Options& opt = {});

/// Every differentiable op on random inputs.
std::vector<Check> check_ops(const Options& opt = {});

/// 16x16 scene with 5 radar points used for the full-pipeline check.
SceneSample fixture_scene(std::uint64_t seed = 5);

/// Three-term loss through the complete network, one Check per parameter array.
std::vector<Check> check_network(const net::NetConfig& net_cfg, const train::LossConfig& loss_cfg,
                                 const SceneSample& scene, const Options& opt = {});

double max_error(std::span<const Check> checks);

}  // namespace polyrad::gradcheck
