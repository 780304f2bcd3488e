#include "polyrad/metrics.hpp"

#include <cmath>

#include "polyrad/errors.hpp"

namespace polyrad::eval {

std::size_t eligible_count(const DepthMap& gt, std::span<const std::uint8_t> mask, double cap) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) n += (mask[i] && gt[i] <= cap) ? 1 : 0;
  return n;
}

ErrorStats mae_rmse(const DepthMap& pred, const DepthMap& gt, std::span<const std::uint8_t> mask, double cap,
                    Unit unit) {
  if (!pred.same_size(gt) || mask.size() != gt.size()) {
    throw DimensionError("prediction, ground truth and mask must share H x W");
  }
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i] || gt[i] > cap) continue;
    const double e = pred[i] - gt[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    ++n;
  }
  if (n == 0) throw DegenerateInputError("no pixels eligible for evaluation under the depth cap");
  const double scale = unit == Unit::Millimeters ? 1000.0 : 1.0;
  return ErrorStats{scale * abs_sum / static_cast<double>(n), scale * std::sqrt(sq_sum / static_cast<double>(n)), n};
}

}  // namespace polyrad::eval
