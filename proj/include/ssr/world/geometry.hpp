#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>

namespace ssr::world {

using Vec2 = Eigen::Vector2d;

struct Pose {
  double x = 0, y = 0;
  double heading = 0;  // radians, CCW from +x of the containing frame
};

// Rectangle with its length axis along `heading`.
struct OrientedBox {
  Vec2 center = Vec2::Zero();
  double heading = 0;
  double length = 0;
  double width = 0;

  bool contains(const Vec2& p) const;
  // Euclidean distance from p to the box (0 inside).
  double distance(const Vec2& p) const;
  std::array<Vec2, 4> corners() const;
};

// Separating-axis test for two oriented rectangles (touching counts).
bool overlaps(const OrientedBox& a, const OrientedBox& b);

// World point -> ego frame of `ego` (+x right, +y forward).
Vec2 to_ego(const Pose& ego, const Vec2& world);
// World heading -> heading in the ego frame (CCW from ego +x).
double heading_to_ego(const Pose& ego, double world_heading);

// Ego-centric square grid of side 2R. Row 0 is the forward edge (+y), column
// 0 the left edge (-x), so a raster printed top-down has the front up.
struct GridGeometry {
  double extent = 25.0;
  int rows = 32;
  int cols = 32;

  double cell_height() const { return 2 * extent / rows; }
  double cell_width() const { return 2 * extent / cols; }
  Vec2 cell_center(int row, int col) const;
  // Cell containing p, or nullopt outside the grid.
  std::optional<std::array<int, 2>> cell_of(const Vec2& p) const;
  OrientedBox cell_box(int row, int col) const;
};

// True if `footprint` overlaps any nonzero cell of the row-major `grid`.
bool footprint_hits(const OrientedBox& footprint, std::span<const std::uint8_t> grid, const GridGeometry& geometry);

}  // namespace ssr::world
