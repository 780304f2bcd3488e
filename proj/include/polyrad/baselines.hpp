#pragma once

// Closed-form alignment of a scaleless map to metric depth. These are the
// deterministic baselines and the oracles the learned model is compared to.

#include <cstdint>
#include <span>
#include <vector>

#include "polyrad/datamodel.hpp"

namespace polyrad::fit {

using Mask = std::span<const std::uint8_t>;

/// median(target) / median(z) over mask.
double median_scale(const DepthMap& z, const DepthMap& target, Mask mask);

struct LinearFit {
  double scale = 1.0;
  double shift = 0.0;
  PolyCoefficients as_poly(double z_max = 1.0) const;
};

/// Ordinary least squares for target ~ scale * z + shift over mask.
LinearFit fit_linear(const DepthMap& z, const DepthMap& target, Mask mask);

inline constexpr double kRidge = 1e-10;

/// Least squares on paired samples, variable normalized by z_max. Normal
/// equations with ridge damping, accumulated in extended precision.
PolyCoefficients fit_poly_pairs(std::span<const double> z, std::span<const double> target, int degree,
                                double z_max = 1.0);

PolyCoefficients fit_poly_dense(const DepthMap& z, const DepthMap& target, Mask mask, int degree,
                                double z_max = 1.0);

struct RadarPairs {
  std::vector<double> z;      // scaleless value at each point's pixel
  std::vector<double> depth;  // radar depth, metres
};

/// Pairs every radar point that projects inside the raster with z there.
RadarPairs radar_pairs(const DepthMap& z, const RadarCloud& cloud, const Projection& projection);

/// median(radar depth) / median(z at the radar pixels).
double median_scale_sparse(const DepthMap& z, const RadarCloud& cloud, const Projection& projection);

/// Fit using only radar returns: each point is projected to its pixel and
/// paired with the scaleless value there.
PolyCoefficients fit_poly_sparse(const DepthMap& z, const RadarCloud& cloud, const Projection& projection,
                                 int degree, double z_max = 1.0);

/// Sum of squared residuals of the (unclamped) polynomial over mask.
double squared_residual(const PolyCoefficients& c, const DepthMap& z, const DepthMap& target, Mask mask);

}  // namespace polyrad::fit
