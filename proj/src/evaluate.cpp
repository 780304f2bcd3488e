#include "polyrad/evaluate.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "polyrad/baselines.hpp"
#include "polyrad/errors.hpp"
#include "polyrad/polytransform.hpp"

namespace polyrad::eval {

namespace {

int parse_degree(std::string_view text) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v < 1) {
    throw UsageError("invalid polynomial degree '" + std::string(text) + "'");
  }
  return v;
}

DepthMap scaled(const DepthMap& z, double k) {
  DepthMap out = z;
  out.set_kind(DepthKind::Metric);
  for (auto& v : out.values()) v *= k;
  return out;
}

}  // namespace

MethodSpec MethodSpec::parse(const std::string& text, int default_degree) {
  MethodSpec m;
  std::string head = text;
  std::optional<int> degree;
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    head = text.substr(0, colon);
    degree = parse_degree(std::string_view(text).substr(colon + 1));
  }
  if (head == "network") {
    m.kind = MethodKind::Network;
  } else if (head == "median") {
    m.kind = MethodKind::Median;
  } else if (head == "linear") {
    m.kind = MethodKind::Linear;
  } else if (head == "poly-dense") {
    m.kind = MethodKind::PolyDense;
  } else if (head == "poly-sparse") {
    m.kind = MethodKind::PolySparse;
  } else if (head == "raw-z") {
    m.kind = MethodKind::RawZ;
  } else {
    throw UsageError("unknown method '" + text +
                     "' (expected network, median, linear, poly-dense[:N], poly-sparse[:N] or raw-z)");
  }
  const bool polynomial = m.kind == MethodKind::PolyDense || m.kind == MethodKind::PolySparse;
  if (degree && !polynomial) throw UsageError("method '" + head + "' takes no degree");
  m.degree = polynomial ? degree.value_or(default_degree) : 1;
  if (m.degree < 1) throw UsageError("polynomial degree must be >= 1");
  return m;
}

std::string MethodSpec::name() const {
  switch (kind) {
    case MethodKind::Network: return "network";
    case MethodKind::Median: return "median";
    case MethodKind::Linear: return "linear";
    case MethodKind::PolyDense: return "poly-dense:" + std::to_string(degree);
    case MethodKind::PolySparse: return "poly-sparse:" + std::to_string(degree);
    case MethodKind::RawZ: return "raw-z";
  }
  return "?";
}

DepthMap predict(const MethodSpec& method, const SceneSample& s, const net::ModelParams* model) {
  const Projection proj = Projection::for_raster(s.z.height(), s.z.width());
  switch (method.kind) {
    case MethodKind::Network: {
      if (!model) throw UsageError("network method needs a checkpoint");
      const auto c = net::predict_coefficients(*model, s.z, s.radar, method.ablation);
      return poly::eval_poly(c, s.z).depth;
    }
    case MethodKind::Median:
      return scaled(s.z, fit::median_scale_sparse(s.z, s.radar, proj));
    case MethodKind::Linear:
      return poly::eval_poly(fit::fit_linear(s.z, s.gt, s.mask).as_poly(), s.z).depth;
    case MethodKind::PolyDense:
      return poly::eval_poly(fit::fit_poly_dense(s.z, s.gt, s.mask, method.degree), s.z).depth;
    case MethodKind::PolySparse:
      return poly::eval_poly(fit::fit_poly_sparse(s.z, s.radar, proj, method.degree), s.z).depth;
    case MethodKind::RawZ:
      return scaled(s.z, fit::median_scale(s.z, s.gt, s.mask));
  }
  throw UsageError("unhandled method");
}

void Report::append(const Report& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  scenes.insert(scenes.end(), other.scenes.begin(), other.scenes.end());
}

std::string cap_label(double cap) {
  if (std::isinf(cap)) return "none";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", cap);
  return buf;
}

std::string Report::csv() const {
  std::ostringstream os;
  os << "method,cap_m,scenes,mae,rmse,unit\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f,", r.scenes, r.mae, r.rmse);
    os << r.method << ',' << cap_label(r.cap) << buf << unit_name(unit) << '\n';
  }
  return os.str();
}

std::string Report::scenes_csv() const {
  std::ostringstream os;
  os << "method,scene,cap_m,pixels,mae,rmse,unit\n";
  char buf[128];
  for (const auto& r : scenes) {
    std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f,", r.stats.count, r.stats.mae, r.stats.rmse);
    os << r.method << ',' << r.scene << ',' << cap_label(r.cap) << buf << unit_name(unit) << '\n';
  }
  return os.str();
}

Report evaluate_method(const MethodSpec& method, std::span<const SceneSample> scenes, std::span<const double> caps,
                       Unit unit) {
  std::optional<net::ModelParams> model;
  if (method.kind == MethodKind::Network) model = net::load_checkpoint(method.checkpoint);
  return evaluate_method(method, scenes, caps, unit, model ? &*model : nullptr);
}

Report evaluate_method(const MethodSpec& method, std::span<const SceneSample> scenes, std::span<const double> caps,
                       Unit unit, const net::ModelParams* model) {
  if (scenes.empty()) throw DatasetError("no scenes to evaluate");
  if (caps.empty()) throw UsageError("at least one depth cap is required");
  Report report;
  report.unit = unit;
  const std::string name = method.name();
  std::vector<DepthMap> preds;
  preds.reserve(scenes.size());
  for (const auto& s : scenes) preds.push_back(predict(method, s, model));

  for (double cap : caps) {
    ReportRow row{name, cap, 0, 0.0, 0.0};
    for (std::size_t k = 0; k < scenes.size(); ++k) {
      const auto& s = scenes[k];
      if (eligible_count(s.gt, s.mask, cap) == 0) continue;
      const ErrorStats st = mae_rmse(preds[k], s.gt, s.mask, cap, unit);
      report.scenes.push_back({name, s.id, cap, st});
      row.mae += st.mae;
      row.rmse += st.rmse;
      ++row.scenes;
    }
    if (row.scenes == 0) {
      throw DegenerateInputError("no scene has ground truth within the " + cap_label(cap) + " m cap");
    }
    row.mae /= static_cast<double>(row.scenes);
    row.rmse /= static_cast<double>(row.scenes);
    report.rows.push_back(row);
  }
  return report;
}

Unit parse_unit(const std::string& text) {
  if (text == "mm" || text == "millimeters") return Unit::Millimeters;
  if (text == "m" || text == "meters") return Unit::Meters;
  throw UsageError("unknown unit '" + text + "' (expected mm or m)");
}

std::string unit_name(Unit unit) { return unit == Unit::Millimeters ? "mm" : "m"; }

}  // namespace polyrad::eval
