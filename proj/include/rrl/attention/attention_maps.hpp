#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace rrl {

inline constexpr int kLandmarkCount = 68;
inline constexpr int kAttentionGrid = 14;
inline constexpr double kAttentionSigma = 3.0;
// Minimum ellipse semi-axis: one attention-grid cell in normalized units.
inline constexpr double kSemiAxisFloor = 1.0 / kAttentionGrid;

using LandmarkPoints = Eigen::Matrix<double, kLandmarkCount, 2>;

/// 68 (x, y) points in normalized image coordinates, x to the right, y down.
struct LandmarkSet {
  LandmarkPoints points = LandmarkPoints::Zero();

  void validate() const;
  LandmarkSet translated(double dx, double dy) const;
  LandmarkSet flipped_horizontally() const;
};

struct AuRegionSpec {
  int au_index = 0;
  std::vector<int> landmark_ids;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
};

struct Ellipse {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  // (major, minor) in normalized units.
  Eigen::Vector2d semi_axes = Eigen::Vector2d::Zero();
  // Angle of the major axis from the +x axis, in (-pi/2, pi/2].
  double rotation = 0.0;

  bool contains(const Eigen::Vector2d& p) const;
  // Half extents of the axis-aligned bounding box.
  Eigen::Vector2d half_extent() const;
};

/// K attention grids, each kAttentionGrid x kAttentionGrid with rows along y.
struct AttentionMap {
  std::vector<Eigen::MatrixXd> maps;

  int K() const { return static_cast<int>(maps.size()); }
  // Map k flattened row-major (cell (r, c) -> r * grid + c).
  Eigen::VectorXd flat(int k) const;
};

/// Centroid plus principal axes of the points' second moments. A semi-axis is
/// sqrt(2) times the standard deviation along its principal direction (the
/// exact radius for points spread evenly over an ellipse boundary), floored
/// at `floor`.
Ellipse fit_ellipse(const std::vector<Eigen::Vector2d>& points, double floor = kSemiAxisFloor);

/// Binary mask of grid cells whose centers lie inside the ellipse, smoothed by
/// a normalized Gaussian (sigma in cells, truncated at 3 sigma, edge cells
/// replicated) and rescaled so the largest cell is exactly 1.
Eigen::MatrixXd rasterize_and_smooth(const Ellipse& ellipse, double sigma = kAttentionSigma,
                                     int grid = kAttentionGrid);

Eigen::MatrixXd ellipse_mask(const Ellipse& ellipse, int grid = kAttentionGrid);
Eigen::MatrixXd gaussian_smooth(const Eigen::MatrixXd& mask, double sigma);

std::vector<Eigen::Vector2d> region_points(const LandmarkSet& landmarks, const AuRegionSpec& spec);

AttentionMap build_attention(const LandmarkSet& landmarks, const std::vector<AuRegionSpec>& specs);

// Row-major position of the largest cell; first occurrence wins ties.
std::array<int, 2> argmax_cell(const Eigen::MatrixXd& map);

std::vector<LandmarkSet> read_landmarks_csv(const std::filesystem::path& path);
void write_landmarks_csv(const std::filesystem::path& path, const std::vector<LandmarkSet>& landmarks);

// Columns: au_index, landmark_ids (semicolon separated), dx, dy. Indices must
// cover 0..K-1 exactly once; the result is ordered by au_index.
std::vector<AuRegionSpec> read_au_regions(const std::filesystem::path& path);
void write_au_regions(const std::filesystem::path& path, const std::vector<AuRegionSpec>& specs);

}  // namespace rrl
