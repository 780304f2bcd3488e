#pragma once

#include <cstdint>
#include <limits>
#include <span>

#include "polyrad/datamodel.hpp"

namespace polyrad::eval {

enum class Unit { Meters, Millimeters };

struct ErrorStats {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;  // eligible pixels
};

inline constexpr double kNoCap = std::numeric_limits<double>::infinity();

/// MAE and RMSE over pixels with mask set and gt <= cap (cap in metres).
/// Throws DegenerateInputError when no pixel is eligible.
ErrorStats mae_rmse(const DepthMap& pred, const DepthMap& gt, std::span<const std::uint8_t> mask,
                    double cap = kNoCap, Unit unit = Unit::Meters);

/// Number of pixels mae_rmse would use.
std::size_t eligible_count(const DepthMap& gt, std::span<const std::uint8_t> mask, double cap);

}  // namespace polyrad::eval
