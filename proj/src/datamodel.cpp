#include "polyrad/datamodel.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "polyrad/errors.hpp"

namespace polyrad {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; add byte swapping for this host");

namespace fs = std::filesystem;

std::string_view to_string(DepthKind kind) {
  switch (kind) {
    case DepthKind::Scaleless: return "scaleless";
    case DepthKind::Metric: return "metric";
    case DepthKind::GroundTruth: return "ground-truth";
  }
  return "metric";
}

DepthKind parse_depth_kind(std::string_view token) {
  if (token == "scaleless") return DepthKind::Scaleless;
  if (token == "metric") return DepthKind::Metric;
  if (token == "ground-truth") return DepthKind::GroundTruth;
  throw FormatError("unknown depth kind '" + std::string(token) + "'");
}

DepthMap::DepthMap(std::size_t height, std::size_t width, DepthKind kind, double fill)
    : DepthMap(height, width, kind, std::vector<double>(height * width, fill)) {}

DepthMap::DepthMap(std::size_t height, std::size_t width, DepthKind kind, std::vector<double> values)
    : height_(height), width_(width), kind_(kind), values_(std::move(values)) {
  if (height_ < 1 || width_ < 1) throw DimensionError("depth map needs H >= 1 and W >= 1");
  if (values_.size() != height_ * width_) {
    throw DimensionError("depth map expects " + std::to_string(height_ * width_) + " values, got " +
                         std::to_string(values_.size()));
  }
}

RadarCloud::RadarCloud(std::vector<Point3> points) : points_(std::move(points)) {
  for (const auto& p : points_) {
    if (!(p.z > 0.0) || !std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw FormatError("radar point with non-positive or non-finite depth");
    }
  }
}

Projection Projection::for_raster(std::size_t height, std::size_t width) {
  const double f = static_cast<double>(width);
  return Projection{f, f, static_cast<double>(width) / 2.0, static_cast<double>(height) / 2.0};
}

Point3 Projection::unproject(std::size_t row, std::size_t col, double depth) const {
  const double u = static_cast<double>(col) + 0.5;
  const double v = static_cast<double>(row) + 0.5;
  return Point3{(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
}

std::optional<std::pair<std::size_t, std::size_t>> Projection::pixel_of(const Point3& p,
                                                                        std::size_t height,
                                                                        std::size_t width) const {
  if (!(p.z > 0.0)) return std::nullopt;
  const double u = fx * p.x / p.z + cx;
  const double v = fy * p.y / p.z + cy;
  const double col = std::floor(u);
  const double row = std::floor(v);
  if (col < 0.0 || row < 0.0 || col >= static_cast<double>(width) || row >= static_cast<double>(height)) {
    return std::nullopt;
  }
  return std::make_pair(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
}

std::vector<std::uint8_t> mask_from_gt(const DepthMap& gt) {
  std::vector<std::uint8_t> mask(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) mask[i] = gt[i] > 0.0 ? 1 : 0;
  return mask;
}

std::size_t SceneSample::valid_count() const {
  std::size_t n = 0;
  for (auto m : mask) n += m;
  return n;
}

SceneSample make_sample(std::string id, DepthMap z, RadarCloud radar, DepthMap gt,
                        std::optional<std::uint64_t> seed) {
  if (!z.same_size(gt)) {
    throw DimensionError("scene " + id + ": scaleless and ground-truth rasters differ in size");
  }
  SceneSample s;
  s.id = std::move(id);
  s.mask = mask_from_gt(gt);
  s.z = std::move(z);
  s.radar = std::move(radar);
  s.gt = std::move(gt);
  s.seed = seed;
  return s;
}

PolyCoefficients::PolyCoefficients(std::vector<double> coeffs, double zmax)
    : c(std::move(coeffs)), z_max(zmax) {
  if (c.size() < 2) throw UsageError("polynomial degree must be >= 1");
  if (!(z_max > 0.0)) throw UsageError("z_max must be positive");
}

PolyCoefficients PolyCoefficients::identity(int degree, double zmax) {
  std::vector<double> c(static_cast<std::size_t>(degree) + 1, 0.0);
  c.at(1) = zmax;  // d = z_max * (z / z_max) = z
  return PolyCoefficients(std::move(c), zmax);
}

// ---- raster ---------------------------------------------------------------

void write_raster(const fs::path& path, const DepthMap& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "PRAD1 " << map.height() << ' ' << map.width() << ' ' << to_string(map.kind()) << '\n';
  out.write(reinterpret_cast<const char*>(map.values().data()),
            static_cast<std::streamsize>(map.size() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

DepthMap read_raster(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError(path.string() + ": missing header");
  std::istringstream hs(header);
  std::string magic, kind;
  long long h = 0, w = 0;
  if (!(hs >> magic) || magic != "PRAD1") throw FormatError(path.string() + ": bad magic");
  if (!(hs >> h >> w >> kind) || h < 1 || w < 1) throw FormatError(path.string() + ": malformed header");
  std::string extra;
  if (hs >> extra) throw FormatError(path.string() + ": trailing header fields");

  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<double> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw FormatError(path.string() + ": truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw FormatError(path.string() + ": negative or non-finite depth");
  }
  return DepthMap(static_cast<std::size_t>(h), static_cast<std::size_t>(w), parse_depth_kind(kind),
                  std::move(values));
}

// ---- points ---------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_field(std::string_view field, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": non-numeric field '" +
                      std::string(field) + "'");
  }
  return v;
}

}  // namespace

void write_points(const fs::path& path, const RadarCloud& cloud) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "x,y,z\n";
  for (const auto& p : cloud.points()) {
    out << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.z) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

RadarCloud read_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,z") throw FormatError(path.string() + ": expected header 'x,y,z'");

  std::vector<Point3> points;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 columns, got " +
                        std::to_string(fields.size()));
    }
    Point3 p{parse_field(fields[0], path, lineno), parse_field(fields[1], path, lineno),
             parse_field(fields[2], path, lineno)};
    if (!(p.z > 0.0) || !std::isfinite(p.z)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-positive depth");
    }
    points.push_back(p);
  }
  return RadarCloud(std::move(points));
}

// ---- dataset --------------------------------------------------------------

std::vector<std::string> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw DatasetError("no manifest.txt in " + dir.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ids.push_back(line);
  }
  return ids;
}

void write_manifest(const fs::path& dir, std::span<const std::string> ids) {
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  for (const auto& id : ids) out << id << '\n';
}

void save_sample(const fs::path& dir, const SceneSample& s) {
  write_raster(dir / (s.id + ".z.prad"), s.z);
  write_raster(dir / (s.id + ".gt.prad"), s.gt);
  write_points(dir / (s.id + ".pts.csv"), s.radar);
}

std::vector<SceneSample> load_dataset(const fs::path& dir) {
  std::vector<SceneSample> out;
  for (const auto& id : read_manifest(dir)) {
    const fs::path zp = dir / (id + ".z.prad");
    const fs::path gp = dir / (id + ".gt.prad");
    const fs::path pp = dir / (id + ".pts.csv");
    for (const auto& p : {zp, gp, pp}) {
      if (!fs::exists(p)) throw DatasetError("scene '" + id + "': missing " + p.filename().string());
    }
    try {
      out.push_back(make_sample(id, read_raster(zp), read_points(pp), read_raster(gp)));
    } catch (const DimensionError& e) {
      throw DatasetError("scene '" + id + "': " + e.what());
    }
  }
  return out;
}

std::optional<std::uint64_t> scene_index(std::string_view id) {
  std::size_t end = id.size();
  std::size_t begin = end;
  while (begin > 0 && id[begin - 1] >= '0' && id[begin - 1] <= '9') --begin;
  if (begin == end) return std::nullopt;
  std::uint64_t v = 0;
  std::from_chars(id.data() + begin, id.data() + end, v);
  return v;
}

}  // namespace polyrad
