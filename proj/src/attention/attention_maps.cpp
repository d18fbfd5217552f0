#include "rrl/attention/attention_maps.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"

namespace rrl {

void LandmarkSet::validate() const {
  require(points.allFinite(), "landmarks: non-finite coordinate");
  require((points.array() >= 0.0).all() && (points.array() <= 1.0).all(),
          "landmarks: coordinates must lie in [0, 1]");
}

LandmarkSet LandmarkSet::translated(double dx, double dy) const {
  LandmarkSet out = *this;
  out.points.col(0).array() += dx;
  out.points.col(1).array() += dy;
  return out;
}

LandmarkSet LandmarkSet::flipped_horizontally() const {
  LandmarkSet out = *this;
  out.points.col(0) = (1.0 - points.col(0).array()).matrix();
  return out;
}

bool Ellipse::contains(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d d = p - center;
  const double c = std::cos(rotation), s = std::sin(rotation);
  const double u = (c * d.x() + s * d.y()) / semi_axes[0];
  const double v = (-s * d.x() + c * d.y()) / semi_axes[1];
  return u * u + v * v <= 1.0;
}

Eigen::Vector2d Ellipse::half_extent() const {
  const double c = std::cos(rotation), s = std::sin(rotation);
  const double a = semi_axes[0], b = semi_axes[1];
  return {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
}

Eigen::VectorXd AttentionMap::flat(int k) const {
  const Eigen::MatrixXd& m = maps.at(static_cast<std::size_t>(k));
  Eigen::VectorXd out(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
  }
  return out;
}

Ellipse fit_ellipse(const std::vector<Eigen::Vector2d>& points, double floor) {
  require(!points.empty(), "fit_ellipse: no points");
  require(floor > 0.0, "fit_ellipse: floor must be positive");
  Ellipse e;
  for (const auto& p : points) e.center += p;
  e.center /= static_cast<double>(points.size());

  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector2d d = p - e.center;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(cov);
  const Eigen::Vector2d eigenvalues = solver.eigenvalues().cwiseMax(0.0);
  const Eigen::Vector2d major = solver.eigenvectors().col(1);
  e.semi_axes = {std::max(std::sqrt(2.0 * eigenvalues[1]), floor), std::max(std::sqrt(2.0 * eigenvalues[0]), floor)};
  e.rotation = std::atan2(major.y(), major.x());
  if (e.rotation <= -std::numbers::pi / 2) e.rotation += std::numbers::pi;
  if (e.rotation > std::numbers::pi / 2) e.rotation -= std::numbers::pi;
  return e;
}

Eigen::MatrixXd ellipse_mask(const Ellipse& ellipse, int grid) {
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(grid, grid);
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) {
      const Eigen::Vector2d cell{(c + 0.5) / grid, (r + 0.5) / grid};
      if (ellipse.contains(cell)) mask(r, c) = 1.0;
    }
  }
  return mask;
}

Eigen::MatrixXd gaussian_smooth(const Eigen::MatrixXd& mask, double sigma) {
  require(sigma > 0.0, "gaussian_smooth: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::VectorXd kernel(2 * radius + 1);
  for (int t = -radius; t <= radius; ++t) kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  kernel /= kernel.sum();

  const auto rows = static_cast<int>(mask.rows()), cols = static_cast<int>(mask.cols());
  Eigen::MatrixXd horizontal(rows, cols), out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += kernel[t + radius] * mask(r, std::clamp(c + t, 0, cols - 1));
      horizontal(r, c) = acc;
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += kernel[t + radius] * horizontal(std::clamp(r + t, 0, rows - 1), c);
      out(r, c) = acc;
    }
  }
  return out;
}

Eigen::MatrixXd rasterize_and_smooth(const Ellipse& ellipse, double sigma, int grid) {
  require(ellipse.center.x() >= 0.0 && ellipse.center.x() <= 1.0 && ellipse.center.y() >= 0.0 &&
              ellipse.center.y() <= 1.0,
          "rasterize_and_smooth: ellipse center outside the unit square");
  // With both semi-axes at least one cell, some cell center is always inside.
  const Eigen::MatrixXd mask = ellipse_mask(ellipse, grid);
  require(mask.maxCoeff() > 0.0, "rasterize_and_smooth: ellipse covers no cell center");
  Eigen::MatrixXd smooth = gaussian_smooth(mask, sigma);
  return smooth / smooth.maxCoeff();
}

std::vector<Eigen::Vector2d> region_points(const LandmarkSet& landmarks, const AuRegionSpec& spec) {
  require(!spec.landmark_ids.empty(), "AU region " + std::to_string(spec.au_index) + ": no landmarks");
  std::vector<Eigen::Vector2d> points;
  points.reserve(spec.landmark_ids.size());
  for (int id : spec.landmark_ids) {
    require(id >= 0 && id < kLandmarkCount,
            "AU region " + std::to_string(spec.au_index) + ": landmark id " + std::to_string(id) + " out of range");
    Eigen::Vector2d p = landmarks.points.row(id).transpose() + spec.offset;
    points.push_back(p.cwiseMax(0.0).cwiseMin(1.0));
  }
  return points;
}

AttentionMap build_attention(const LandmarkSet& landmarks, const std::vector<AuRegionSpec>& specs) {
  require(!specs.empty(), "build_attention: no AU regions");
  AttentionMap out;
  out.maps.reserve(specs.size());
  for (const AuRegionSpec& spec : specs) out.maps.push_back(rasterize_and_smooth(fit_ellipse(region_points(landmarks, spec))));
  return out;
}

std::array<int, 2> argmax_cell(const Eigen::MatrixXd& map) {
  Eigen::Index r = 0, c = 0;
  double best = map(0, 0);
  for (Eigen::Index i = 0; i < map.rows(); ++i) {
    for (Eigen::Index j = 0; j < map.cols(); ++j) {
      if (map(i, j) > best) {
        best = map(i, j);
        r = i;
        c = j;
      }
    }
  }
  return {static_cast<int>(r), static_cast<int>(c)};
}

std::vector<LandmarkSet> read_landmarks_csv(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  require(table.header.size() == 2 * kLandmarkCount,
          path.string() + ": expected 136 landmark columns, found " + std::to_string(table.header.size()));
  std::vector<LandmarkSet> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    LandmarkSet l;
    for (int i = 0; i < kLandmarkCount; ++i) {
      l.points(i, 0) = io::parse_double(row[2 * i]);
      l.points(i, 1) = io::parse_double(row[2 * i + 1]);
    }
    l.validate();
    out.push_back(l);
  }
  return out;
}

void write_landmarks_csv(const std::filesystem::path& path, const std::vector<LandmarkSet>& landmarks) {
  io::CsvTable table;
  for (int i = 0; i < kLandmarkCount; ++i) {
    table.header.push_back("x" + std::to_string(i));
    table.header.push_back("y" + std::to_string(i));
  }
  for (const LandmarkSet& l : landmarks) {
    std::vector<std::string> row;
    row.reserve(2 * kLandmarkCount);
    for (int i = 0; i < kLandmarkCount; ++i) {
      row.push_back(io::format_double(l.points(i, 0)));
      row.push_back(io::format_double(l.points(i, 1)));
    }
    table.rows.push_back(std::move(row));
  }
  io::write_csv(path, table);
}

std::vector<AuRegionSpec> read_au_regions(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  const std::size_t c_au = table.column("au_index"), c_ids = table.column("landmark_ids");
  const std::size_t c_dx = table.column("dx"), c_dy = table.column("dy");
  std::vector<AuRegionSpec> specs;
  std::set<int> seen;
  for (const auto& row : table.rows) {
    AuRegionSpec spec;
    spec.au_index = static_cast<int>(io::parse_int(row[c_au]));
    for (const std::string& id : io::split(row[c_ids], ';')) {
      const auto value = static_cast<int>(io::parse_int(id));
      require(value >= 0 && value < kLandmarkCount, path.string() + ": landmark id " + id + " out of range");
      spec.landmark_ids.push_back(value);
    }
    spec.offset = {io::parse_double(row[c_dx]), io::parse_double(row[c_dy])};
    require(seen.insert(spec.au_index).second, path.string() + ": duplicate au_index " + row[c_au]);
    specs.push_back(std::move(spec));
  }
  std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.au_index < b.au_index; });
  for (std::size_t i = 0; i < specs.size(); ++i) {
    require(specs[i].au_index == static_cast<int>(i), path.string() + ": au_index values must be 0..K-1");
  }
  return specs;
}

void write_au_regions(const std::filesystem::path& path, const std::vector<AuRegionSpec>& specs) {
  io::CsvTable table;
  table.header = {"au_index", "landmark_ids", "dx", "dy"};
  for (const AuRegionSpec& spec : specs) {
    std::string ids;
    for (std::size_t i = 0; i < spec.landmark_ids.size(); ++i) ids += (i ? ";" : "") + std::to_string(spec.landmark_ids[i]);
    table.rows.push_back({std::to_string(spec.au_index), ids, io::format_double(spec.offset.x()),
                          io::format_double(spec.offset.y())});
  }
  io::write_csv(path, table);
}

}  // namespace rrl
