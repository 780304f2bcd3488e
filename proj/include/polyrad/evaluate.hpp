#pragma once

// Scoring of alignment methods over a dataset with depth caps.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyrad/datamodel.hpp"
#include "polyrad/metrics.hpp"
#include "polyrad/network.hpp"

namespace polyrad::eval {

enum class MethodKind {
  Network,     // learned coefficients from a checkpoint
  Median,      // median scaling against the radar returns
  Linear,      // least-squares scale and shift against dense ground truth
  PolyDense,   // least-squares polynomial against dense ground truth
  PolySparse,  // least-squares polynomial against the radar returns
  RawZ,        // z median-scaled against dense ground truth
};

struct MethodSpec {
  MethodKind kind = MethodKind::Linear;
  int degree = 1;  // PolyDense / PolySparse
  std::filesystem::path checkpoint;  // Network
  net::Ablation ablation;            // Network

  /// Accepts network, median, linear, poly-dense[:N], poly-sparse[:N], raw-z.
  /// `default_degree` applies when no ":N" suffix is given.
  static MethodSpec parse(const std::string& text, int default_degree = 8);
  std::string name() const;
};

/// Prediction of one method on one scene. `model` is required for Network.
DepthMap predict(const MethodSpec& method, const SceneSample& scene, const net::ModelParams* model = nullptr);

struct ReportRow {
  std::string method;
  double cap = kNoCap;     // metres
  std::size_t scenes = 0;  // scenes with at least one eligible pixel
  double mae = 0.0;        // mean over scenes
  double rmse = 0.0;       // mean over scenes
};

struct SceneRow {
  std::string method;
  std::string scene;
  double cap = kNoCap;
  ErrorStats stats;
};

struct Report {
  Unit unit = Unit::Millimeters;
  std::vector<ReportRow> rows;
  std::vector<SceneRow> scenes;

  void append(const Report& other);
  /// method,cap_m,scenes,mae,rmse,unit
  std::string csv() const;
  /// method,scene,cap_m,pixels,mae,rmse,unit
  std::string scenes_csv() const;
};

std::string cap_label(double cap);

/// Per-cap MAE/RMSE. Scenes without eligible pixels under a cap are skipped
/// for that cap; a cap that no scene reaches raises DegenerateInputError.
Report evaluate_method(const MethodSpec& method, std::span<const SceneSample> scenes, std::span<const double> caps,
                       Unit unit = Unit::Millimeters);

/// Same, with an already loaded network (ignores method.checkpoint).
Report evaluate_method(const MethodSpec& method, std::span<const SceneSample> scenes, std::span<const double> caps,
                       Unit unit, const net::ModelParams* model);

Unit parse_unit(const std::string& text);
std::string unit_name(Unit unit);

}  // namespace polyrad::eval
