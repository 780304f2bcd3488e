#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polyrad {

enum class DepthKind { Scaleless, Metric, GroundTruth };

std::string_view to_string(DepthKind kind);
DepthKind parse_depth_kind(std::string_view token);

/// H x W raster of non-negative depths, row-major. Ground-truth maps use 0 as
/// the "no measurement" sentinel.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(std::size_t height, std::size_t width, DepthKind kind, double fill = 0.0);
  DepthMap(std::size_t height, std::size_t width, DepthKind kind, std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  DepthKind kind() const { return kind_; }
  void set_kind(DepthKind k) { kind_ = k; }

  double& at(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool same_size(const DepthMap& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const DepthMap& other) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  DepthKind kind_ = DepthKind::Metric;
  std::vector<double> values_;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;  // depth along the optical axis, meters
  bool operator==(const Point3&) const = default;
};

/// Unordered set of camera-frame points. Consumers must not depend on order.
class RadarCloud {
 public:
  RadarCloud() = default;
  explicit RadarCloud(std::vector<Point3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Point3>& points() const { return points_; }
  const Point3& operator[](std::size_t i) const { return points_[i]; }

  bool operator==(const RadarCloud&) const = default;

 private:
  std::vector<Point3> points_;
};

/// Pinhole model linking camera-frame points to raster pixels. Synthetic
/// scenes use focal = W pixels and the principal point at the raster centre.
struct Projection {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  static Projection for_raster(std::size_t height, std::size_t width);

  /// Camera-frame point for the centre of pixel (row, col) at the given depth.
  Point3 unproject(std::size_t row, std::size_t col, double depth) const;
  /// Pixel (row, col) containing the point, or nullopt outside the raster.
  std::optional<std::pair<std::size_t, std::size_t>> pixel_of(const Point3& p, std::size_t height,
                                                              std::size_t width) const;
};

struct SceneSample {
  std::string id;
  DepthMap z;   // scaleless
  RadarCloud radar;
  DepthMap gt;  // metric, 0 = missing
  std::vector<std::uint8_t> mask;  // 1 exactly where gt > 0
  std::optional<std::uint64_t> seed;

  std::size_t height() const { return z.height(); }
  std::size_t width() const { return z.width(); }
  std::size_t valid_count() const;
};

/// Builds a SceneSample, deriving the mask from gt and validating shapes.
SceneSample make_sample(std::string id, DepthMap z, RadarCloud radar, DepthMap gt,
                        std::optional<std::uint64_t> seed = std::nullopt);

std::vector<std::uint8_t> mask_from_gt(const DepthMap& gt);

/// Coefficients c_0..c_N of d = sum_i c_i (z / z_max)^i.
struct PolyCoefficients {
  std::vector<double> c;
  double z_max = 1.0;

  PolyCoefficients() = default;
  PolyCoefficients(std::vector<double> coeffs, double zmax);

  int degree() const { return static_cast<int>(c.size()) - 1; }
  static PolyCoefficients identity(int degree, double zmax = 1.0);
};

// ---- file formats ----------------------------------------------------------

// .prad: "PRAD1 <H> <W> <kind>\n" followed by H*W little-endian float64.
void write_raster(const std::filesystem::path& path, const DepthMap& map);
DepthMap read_raster(const std::filesystem::path& path);

// .pts.csv: "x,y,z" header, one point per line, 17 significant digits.
void write_points(const std::filesystem::path& path, const RadarCloud& cloud);
RadarCloud read_points(const std::filesystem::path& path);

/// Loads `{id}.z.prad`, `{id}.gt.prad`, `{id}.pts.csv` for every id listed in
/// `manifest.txt`, in manifest order.
std::vector<SceneSample> load_dataset(const std::filesystem::path& dir);
void save_sample(const std::filesystem::path& dir, const SceneSample& sample);
void write_manifest(const std::filesystem::path& dir, std::span<const std::string> ids);
std::vector<std::string> read_manifest(const std::filesystem::path& dir);

/// Trailing integer of a scene id ("s0042" -> 42), used for the parity split.
std::optional<std::uint64_t> scene_index(std::string_view id);

}  // namespace polyrad
