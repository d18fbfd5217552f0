#include <doctest.h>

#include <filesystem>

#include "rrl/attention/attention_maps.hpp"
#include "rrl/error.hpp"
#include "rrl/synth/synth_data.hpp"

using namespace rrl;

namespace {

Ellipse circle(double x, double y, double r) {
  Ellipse e;
  e.center = {x, y};
  e.semi_axes = {r, r};
  return e;
}

}  // namespace

TEST_CASE("fit_ellipse on a single point gives a floor-radius circle") {
  const Ellipse e = fit_ellipse({{0.5, 0.5}});
  CHECK(e.center.x() == doctest::Approx(0.5));
  CHECK(e.center.y() == doctest::Approx(0.5));
  CHECK(e.semi_axes.x() == kSemiAxisFloor);
  CHECK(e.semi_axes.y() == kSemiAxisFloor);
}

TEST_CASE("fit_ellipse on two points is centered with its major axis along the segment") {
  const Ellipse e = fit_ellipse({{0.4, 0.5}, {0.6, 0.5}});
  CHECK(e.center.x() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.center.y() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(e.rotation) < 1e-12);
  CHECK(e.semi_axes.x() == doctest::Approx(std::sqrt(2.0) * 0.1).epsilon(1e-12));
  CHECK(e.semi_axes.y() == kSemiAxisFloor);
}

TEST_CASE("fit_ellipse on an axis-aligned rectangle") {
  // Second moments by hand: std 0.1 along x and 0.06 along y.
  const Ellipse e = fit_ellipse({{0.4, 0.44}, {0.6, 0.44}, {0.4, 0.56}, {0.6, 0.56}});
  CHECK(e.center.x() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.center.y() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(e.rotation) < 1e-12);
  CHECK(e.semi_axes.x() == doctest::Approx(std::sqrt(2.0) * 0.1).epsilon(1e-12));
  CHECK(e.semi_axes.y() == doctest::Approx(std::sqrt(2.0) * 0.06).epsilon(1e-12));

  const Ellipse tall = fit_ellipse({{0.44, 0.4}, {0.44, 0.6}, {0.56, 0.4}, {0.56, 0.6}});
  CHECK(std::abs(std::abs(tall.rotation) - std::acos(0.0)) < 1e-12);
}

TEST_CASE("an ellipse covering the whole grid gives a constant map") {
  const Eigen::MatrixXd m = rasterize_and_smooth(circle(0.5, 0.5, 2.0));
  CHECK(m.rows() == kAttentionGrid);
  CHECK((m.array() == 1.0).all());
}

TEST_CASE("a centered circle peaks at the center and decays outward") {
  const Eigen::MatrixXd m = rasterize_and_smooth(circle(0.5, 0.5, 0.15));
  // The grid center falls between cells 6 and 7, so the four middle cells tie
  // up to rounding.
  const auto cell = argmax_cell(m);
  CHECK((cell[0] == 6 || cell[0] == 7));
  CHECK((cell[1] == 6 || cell[1] == 7));
  CHECK(m.block(6, 6, 2, 2).minCoeff() > 1.0 - 1e-12);
  for (int c = 6; c > 0; --c) CHECK(m(6, c - 1) <= m(6, c));
  for (int r = 7; r < 13; ++r) CHECK(m(r + 1, 7) <= m(r, 7));
  CHECK(m(6, 0) < m(6, 3));
}

TEST_CASE("smoothing width against a separate convolution") {
  // Cell counts and values from scipy.ndimage.gaussian_filter (nearest-edge
  // mode, truncate 3) on the same rasterized masks.
  const Eigen::MatrixXd narrow = rasterize_and_smooth(circle(0.5, 0.5, 0.15), 1.0);
  const Eigen::MatrixXd wide = rasterize_and_smooth(circle(0.5, 0.5, 0.15), 3.0);
  CHECK((narrow.array() > 0.1).count() == 32);
  CHECK((wide.array() > 0.1).count() == 148);
  CHECK(wide(6, 0) == doctest::Approx(0.12123808669121129).epsilon(1e-12));

  Ellipse e;
  e.center = {0.3, 0.6};
  e.semi_axes = {0.2, 0.08};
  e.rotation = 0.4;
  const Eigen::MatrixXd m = rasterize_and_smooth(e, 3.0);
  CHECK(m(8, 4) == 1.0);
  CHECK(m(2, 11) == doctest::Approx(0.009952324668693006).epsilon(1e-12));
  CHECK(m(13, 0) == doctest::Approx(0.12249130541994063).epsilon(1e-12));
}

TEST_CASE("build_attention on a single central landmark") {
  LandmarkSet l;
  l.points.setConstant(0.2);
  l.points.row(30) << 0.5, 0.5;
  AuRegionSpec spec;
  spec.landmark_ids = {30};
  const AttentionMap maps = build_attention(l, {spec});
  REQUIRE(maps.K() == 1);
  const auto cell = argmax_cell(maps.maps[0]);
  CHECK(cell[0] == 6);
  CHECK(cell[1] == 6);
  CHECK(maps.maps[0].maxCoeff() == 1.0);
}

TEST_CASE("identical landmark lists give identical maps") {
  const LandmarkSet l = landmark_template();
  const auto regions = default_au_regions(8);
  const AttentionMap maps = build_attention(l, {regions[2], regions[2]});
  CHECK(maps.maps[0] == maps.maps[1]);
}

TEST_CASE("each map of the synthetic face peaks inside its ellipse's bounding box") {
  const LandmarkSet l = landmark_template();
  for (int K : {8, 12}) {
    const auto regions = default_au_regions(K);
    const AttentionMap maps = build_attention(l, regions);
    for (int k = 0; k < K; ++k) {
      CAPTURE(k);
      const Ellipse e = fit_ellipse(region_points(l, regions[static_cast<std::size_t>(k)]));
      const auto cell = argmax_cell(maps.maps[static_cast<std::size_t>(k)]);
      const Eigen::Vector2d p((cell[1] + 0.5) / kAttentionGrid, (cell[0] + 0.5) / kAttentionGrid);
      const Eigen::Vector2d h = e.half_extent();
      CHECK(std::abs(p.x() - e.center.x()) <= h.x());
      CHECK(std::abs(p.y() - e.center.y()) <= h.y());
    }
  }
}

TEST_CASE("one-cell translation shifts the map by one cell") {
  const LandmarkSet l = landmark_template();
  const auto regions = default_au_regions(8);
  const double cell = 1.0 / kAttentionGrid;
  const AttentionMap a = build_attention(l, regions);
  const AttentionMap b = build_attention(l.translated(cell, cell), regions);
  // Nose region: far from the border in both positions.
  const Eigen::MatrixXd& ma = a.maps[4];
  const Eigen::MatrixXd& mb = b.maps[4];
  CHECK(argmax_cell(mb)[0] == argmax_cell(ma)[0] + 1);
  CHECK(argmax_cell(mb)[1] == argmax_cell(ma)[1] + 1);
  CHECK(ma(argmax_cell(ma)[0], argmax_cell(ma)[1]) == 1.0);
}

TEST_CASE("flipping landmarks mirrors x") {
  const LandmarkSet l = landmark_template();
  const LandmarkSet f = l.flipped_horizontally();
  for (int i = 0; i < kLandmarkCount; ++i) {
    CHECK(f.points(i, 0) == doctest::Approx(1.0 - l.points(i, 0)).epsilon(1e-15));
    CHECK(f.points(i, 1) == l.points(i, 1));
  }
}

TEST_CASE("landmark and region CSV round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "rrl_attention_test";
  std::filesystem::create_directories(dir);
  const std::vector<LandmarkSet> sets{landmark_template(), landmark_template().translated(0.01, -0.02)};
  write_landmarks_csv(dir / "lm.csv", sets);
  const auto back = read_landmarks_csv(dir / "lm.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].points == sets[1].points);

  const auto regions = default_au_regions(12);
  write_au_regions(dir / "regions.csv", regions);
  const auto r = read_au_regions(dir / "regions.csv");
  REQUIRE(r.size() == 12);
  for (std::size_t k = 0; k < r.size(); ++k) {
    CHECK(r[k].landmark_ids == regions[k].landmark_ids);
    CHECK(r[k].offset == regions[k].offset);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("contract errors") {
  CHECK_THROWS_AS(rasterize_and_smooth(circle(1.5, 0.5, 0.1)), ContractError);
  AuRegionSpec bad;
  bad.landmark_ids = {70};
  CHECK_THROWS_AS(build_attention(landmark_template(), {bad}), ContractError);
  CHECK_THROWS_AS(read_landmarks_csv("/nonexistent/landmarks.csv"), IoError);
}
