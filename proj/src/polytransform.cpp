#include "polyrad/polytransform.hpp"

#include <cmath>

#include "polyrad/errors.hpp"

namespace polyrad::poly {

namespace {

constexpr std::size_t kGridIntervals = 4096;
constexpr double kRootTolerance = 1e-10;

void check(const PolyCoefficients& c) {
  if (c.degree() < 1) throw UsageError("polynomial degree must be >= 1");
  if (!(c.z_max > 0.0)) throw UsageError("z_max must be positive");
}

double horner_value(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * t + c[i];
  return acc;
}

// sum_{i>=1} i c_i t^(i-1)
double horner_first(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 1;) acc = acc * t + static_cast<double>(i) * c[i];
  return acc;
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double value_at(const PolyCoefficients& c, double z) { return horner_value(c.c, z / c.z_max); }

double slope_at(const PolyCoefficients& c, double z) { return horner_first(c.c, z / c.z_max) / c.z_max; }

double curvature_at(const PolyCoefficients& c, double t) {
  double acc = 0.0;
  for (std::size_t i = c.c.size(); i-- > 2;) acc = acc * t + static_cast<double>(i * (i - 1)) * c.c[i];
  return acc;
}

Evaluation eval_poly(const PolyCoefficients& c, const DepthMap& z) {
  check(c);
  Evaluation out{DepthMap(z.height(), z.width(), DepthKind::Metric), 0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = value_at(c, z[i]);
    if (d < 0.0) {
      ++out.clamped;
      out.depth[i] = 0.0;
    } else {
      out.depth[i] = d;
    }
  }
  return out;
}

DepthMap eval_derivative(const PolyCoefficients& c, const DepthMap& z) {
  check(c);
  DepthMap out(z.height(), z.width(), DepthKind::Metric);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = slope_at(c, z[i]);
  return out;
}

std::vector<Inflection> inflection_points(const PolyCoefficients& c, Domain domain) {
  std::vector<Inflection> roots;
  if (c.degree() < 2) return roots;

  const double lo = domain == Domain::Positive ? 0.0 : -1.0;
  const std::size_t intervals = domain == Domain::Positive ? kGridIntervals : 2 * kGridIntervals;
  const double step = 1.0 / static_cast<double>(kGridIntervals);
  auto grid = [&](std::size_t j) { return lo + static_cast<double>(j) * step; };

  std::vector<double> f(intervals + 1);
  for (std::size_t j = 0; j <= intervals; ++j) f[j] = curvature_at(c, grid(j));

  auto accept = [&](double t) {
    return domain == Domain::Symmetric || t > 0.0;
  };

  for (std::size_t j = 0; j < intervals; ++j) {
    const int sa = sign(f[j]);
    const int sb = sign(f[j + 1]);
    if (sa == 0) {
      // Exact grid zero: a root only when the neighbours straddle it.
      if (j == 0) continue;
      const int sl = sign(f[j - 1]);
      if (sl != 0 && sb != 0 && sl != sb && accept(grid(j))) {
        roots.push_back({grid(j) * c.z_max, sb > 0 ? 1 : -1});
      }
      continue;
    }
    if (sb == 0 || sa == sb) continue;

    double a = grid(j), b = grid(j + 1);
    double fa = f[j];
    double mid = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
      mid = 0.5 * (a + b);
      const double fm = curvature_at(c, mid);
      if (std::abs(fm) < kRootTolerance || mid == a || mid == b) break;
      if (sign(fm) == sign(fa)) {
        a = mid;
        fa = fm;
      } else {
        b = mid;
      }
    }
    if (accept(mid)) roots.push_back({mid * c.z_max, sb > 0 ? 1 : -1});
  }
  return roots;
}

std::vector<GridRow> sample_grid(const PolyCoefficients& c, std::size_t n) {
  check(c);
  std::vector<GridRow> rows;
  rows.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double z = n > 1 ? c.z_max * static_cast<double>(j) / static_cast<double>(n - 1) : 0.0;
    rows.push_back({z, value_at(c, z), slope_at(c, z)});
  }
  return rows;
}

bool has_negative_slope(const PolyCoefficients& c, std::size_t n) {
  for (const auto& row : sample_grid(c, n)) {
    if (row.slope < 0.0) return true;
  }
  return false;
}

}  // namespace polyrad::poly
