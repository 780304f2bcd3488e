#pragma once

// Polynomial depth transform d = sum_i c_i (z / z_max)^i and its derivatives.
// All evaluation is Horner's rule on the normalized variable t = z / z_max.

#include <cstddef>
#include <vector>

#include "polyrad/datamodel.hpp"

namespace polyrad::poly {

/// Unclamped value at a single scaleless depth.
double value_at(const PolyCoefficients& c, double z);
/// d(d)/dz with respect to the un-normalized z.
double slope_at(const PolyCoefficients& c, double z);
/// f''(t) = sum_{i>=2} i (i-1) c_i t^(i-2), in the normalized variable t.
double curvature_at(const PolyCoefficients& c, double t);

struct Evaluation {
  DepthMap depth;
  std::size_t clamped = 0;  // pixels whose raw value was negative
};

/// Metric depth map; negative values are clamped to 0 and counted.
Evaluation eval_poly(const PolyCoefficients& c, const DepthMap& z);
DepthMap eval_derivative(const PolyCoefficients& c, const DepthMap& z);

struct Inflection {
  double z = 0.0;   // in scaleless units (t * z_max)
  int direction = 0;  // +1: curvature goes from negative to positive, -1 otherwise
};

enum class Domain {
  Positive,   // (0, z_max]
  Symmetric,  // [-z_max, z_max]
};

/// Roots of f'' with a genuine sign change, located on a 4096-interval grid
/// and refined by bisection.
std::vector<Inflection> inflection_points(const PolyCoefficients& c, Domain domain = Domain::Positive);

struct GridRow {
  double z;
  double depth;
  double slope;
};

/// Samples (z, d(z), slope(z)) at n evenly spaced points over [0, z_max].
std::vector<GridRow> sample_grid(const PolyCoefficients& c, std::size_t n = 512);

/// True when the slope is negative anywhere on the sampled grid.
bool has_negative_slope(const PolyCoefficients& c, std::size_t n = 512);

}  // namespace polyrad::poly
