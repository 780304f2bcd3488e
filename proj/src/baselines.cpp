#include "polyrad/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "polyrad/errors.hpp"
#include "polyrad/polytransform.hpp"

namespace polyrad::fit {

namespace {

void check_shapes(const DepthMap& z, const DepthMap& target, Mask mask) {
  if (!z.same_size(target) || mask.size() != z.size()) {
    throw DimensionError("scaleless map, target and mask must share H x W");
  }
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

using Matrix = std::vector<std::vector<long double>>;

// Cholesky solve of A x = b, A symmetric positive definite. Returns false on
// breakdown (pivot not clearly positive after damping).
bool cholesky_solve(Matrix a, std::vector<long double>& b) {
  const std::size_t n = b.size();
  for (std::size_t j = 0; j < n; ++j) {
    long double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (!(d > 0.5L * static_cast<long double>(kRidge)) || !std::isfinite(static_cast<double>(d))) return false;
    d = std::sqrt(d);
    a[j][j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      long double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    long double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i][k] * b[k];
    b[i] = s / a[i][i];
  }
  for (std::size_t i = n; i-- > 0;) {
    long double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k][i] * b[k];
    b[i] = s / a[i][i];
  }
  return true;
}

}  // namespace

double median_scale(const DepthMap& z, const DepthMap& target, Mask mask) {
  check_shapes(z, target, mask);
  std::vector<double> zs, ts;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!mask[i]) continue;
    zs.push_back(z[i]);
    ts.push_back(target[i]);
  }
  if (zs.empty()) throw DegenerateInputError("median scaling: empty mask");
  const double mz = median_of(std::move(zs));
  if (!(mz > 0.0)) throw DegenerateInputError("median scaling: median of scaleless depth is zero");
  return median_of(std::move(ts)) / mz;
}

PolyCoefficients LinearFit::as_poly(double z_max) const {
  // a z + b = b + (a z_max) (z / z_max)
  return PolyCoefficients({shift, scale * z_max}, z_max);
}

LinearFit fit_linear(const DepthMap& z, const DepthMap& target, Mask mask) {
  check_shapes(z, target, mask);
  std::size_t n = 0;
  long double sz = 0, st = 0;
  double zmin = INFINITY, zmax = -INFINITY;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    sz += z[i];
    st += target[i];
    zmin = std::min(zmin, z[i]);
    zmax = std::max(zmax, z[i]);
  }
  if (n < 2) throw DegenerateInputError("linear fit needs at least two valid pixels");
  if (zmin == zmax) throw RankError("linear fit: scaleless depth is constant over the mask");
  const long double mz = sz / n, mt = st / n;
  long double cov = 0, var = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!mask[i]) continue;
    const long double dz = z[i] - mz;
    cov += dz * (target[i] - mt);
    var += dz * dz;
  }
  const long double a = cov / var;
  return LinearFit{static_cast<double>(a), static_cast<double>(mt - a * mz)};
}

PolyCoefficients fit_poly_pairs(std::span<const double> z, std::span<const double> target, int degree,
                                double z_max) {
  if (degree < 1) throw UsageError("polynomial degree must be >= 1");
  if (!(z_max > 0.0)) throw UsageError("z_max must be positive");
  if (z.size() != target.size()) throw DimensionError("fit: sample count mismatch");
  const std::size_t m = static_cast<std::size_t>(degree) + 1;
  if (z.size() < m) {
    throw UnderdeterminedError("degree-" + std::to_string(degree) + " fit needs at least " +
                               std::to_string(m) + " samples, got " + std::to_string(z.size()));
  }
  std::set<double> distinct(z.begin(), z.end());
  if (distinct.size() < m) {
    throw ConditioningError("degree-" + std::to_string(degree) + " fit: only " +
                            std::to_string(distinct.size()) + " distinct scaleless values");
  }

  // Normal equations V^T V c = V^T y plus ridge, in the normalized variable.
  Matrix ata(m, std::vector<long double>(m, 0.0L));
  std::vector<long double> aty(m, 0.0L);
  std::vector<long double> pw(m);
  for (std::size_t s = 0; s < z.size(); ++s) {
    const long double t = static_cast<long double>(z[s]) / z_max;
    pw[0] = 1.0L;
    for (std::size_t i = 1; i < m; ++i) pw[i] = pw[i - 1] * t;
    for (std::size_t i = 0; i < m; ++i) {
      aty[i] += pw[i] * target[s];
      for (std::size_t j = 0; j <= i; ++j) ata[i][j] += pw[i] * pw[j];
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) ata[i][j] = ata[j][i];
    ata[i][i] += kRidge;
  }

  std::vector<long double> c = aty;
  if (!cholesky_solve(ata, c)) throw ConditioningError("normal equations are rank deficient");

  // Two rounds of iterative refinement against the damped system.
  for (int round = 0; round < 2; ++round) {
    std::vector<long double> r(m);
    for (std::size_t i = 0; i < m; ++i) {
      long double s = aty[i];
      for (std::size_t j = 0; j < m; ++j) s -= ata[i][j] * c[j];
      r[i] = s;
    }
    if (!cholesky_solve(ata, r)) break;
    for (std::size_t i = 0; i < m; ++i) c[i] += r[i];
  }

  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = static_cast<double>(c[i]);
    if (!std::isfinite(out[i])) throw ConditioningError("polynomial fit produced non-finite coefficients");
  }
  return PolyCoefficients(std::move(out), z_max);
}

PolyCoefficients fit_poly_dense(const DepthMap& z, const DepthMap& target, Mask mask, int degree,
                                double z_max) {
  check_shapes(z, target, mask);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!mask[i]) continue;
    xs.push_back(z[i]);
    ys.push_back(target[i]);
  }
  return fit_poly_pairs(xs, ys, degree, z_max);
}

RadarPairs radar_pairs(const DepthMap& z, const RadarCloud& cloud, const Projection& projection) {
  RadarPairs out;
  for (const auto& p : cloud.points()) {
    auto px = projection.pixel_of(p, z.height(), z.width());
    if (!px) continue;
    out.z.push_back(z.at(px->first, px->second));
    out.depth.push_back(p.z);
  }
  return out;
}

double median_scale_sparse(const DepthMap& z, const RadarCloud& cloud, const Projection& projection) {
  RadarPairs pairs = radar_pairs(z, cloud, projection);
  if (pairs.z.empty()) throw NoRadarError("median scaling: no radar point projects into the raster");
  const double mz = median_of(std::move(pairs.z));
  if (!(mz > 0.0)) throw DegenerateInputError("median scaling: median of scaleless depth is zero");
  return median_of(std::move(pairs.depth)) / mz;
}

PolyCoefficients fit_poly_sparse(const DepthMap& z, const RadarCloud& cloud, const Projection& projection,
                                 int degree, double z_max) {
  const RadarPairs pairs = radar_pairs(z, cloud, projection);
  return fit_poly_pairs(pairs.z, pairs.depth, degree, z_max);
}

double squared_residual(const PolyCoefficients& c, const DepthMap& z, const DepthMap& target, Mask mask) {
  check_shapes(z, target, mask);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!mask[i]) continue;
    const double r = poly::value_at(c, z[i]) - target[i];
    s += r * r;
  }
  return s;
}

}  // namespace polyrad::fit
