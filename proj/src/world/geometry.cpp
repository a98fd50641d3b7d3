#include "ssr/world/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ssr::world {

bool OrientedBox::contains(const Vec2& p) const {
  const Vec2 d = p - center;
  const double c = std::cos(heading), s = std::sin(heading);
  const double along = d.x() * c + d.y() * s;
  const double across = -d.x() * s + d.y() * c;
  return std::abs(along) <= length / 2 && std::abs(across) <= width / 2;
}

double OrientedBox::distance(const Vec2& p) const {
  const Vec2 d = p - center;
  const double c = std::cos(heading), s = std::sin(heading);
  const double along = std::max(std::abs(d.x() * c + d.y() * s) - length / 2, 0.0);
  const double across = std::max(std::abs(-d.x() * s + d.y() * c) - width / 2, 0.0);
  return std::hypot(along, across);
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 u(std::cos(heading), std::sin(heading));
  const Vec2 v(-u.y(), u.x());
  const Vec2 a = u * (length / 2), b = v * (width / 2);
  return {center + a + b, center - a + b, center - a - b, center + a - b};
}

bool overlaps(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes{Vec2(std::cos(a.heading), std::sin(a.heading)),
                                 Vec2(-std::sin(a.heading), std::cos(a.heading)),
                                 Vec2(std::cos(b.heading), std::sin(b.heading)),
                                 Vec2(-std::sin(b.heading), std::cos(b.heading))};
  for (const Vec2& axis : axes) {
    double amin = INFINITY, amax = -INFINITY, bmin = INFINITY, bmax = -INFINITY;
    for (const Vec2& p : ca) {
      const double t = p.dot(axis);
      amin = std::min(amin, t);
      amax = std::max(amax, t);
    }
    for (const Vec2& p : cb) {
      const double t = p.dot(axis);
      bmin = std::min(bmin, t);
      bmax = std::max(bmax, t);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

Vec2 to_ego(const Pose& ego, const Vec2& world) {
  const double dx = world.x() - ego.x, dy = world.y() - ego.y;
  const double c = std::cos(ego.heading), s = std::sin(ego.heading);
  // right = (sin, -cos), forward = (cos, sin)
  return {dx * s - dy * c, dx * c + dy * s};
}

double heading_to_ego(const Pose& ego, double world_heading) {
  // Ego forward (world heading ego.heading) maps to +y (pi/2).
  return world_heading - ego.heading + std::numbers::pi / 2;
}

Vec2 GridGeometry::cell_center(int row, int col) const {
  return {-extent + (col + 0.5) * cell_width(), extent - (row + 0.5) * cell_height()};
}

std::optional<std::array<int, 2>> GridGeometry::cell_of(const Vec2& p) const {
  const double c = (p.x() + extent) / cell_width();
  const double r = (extent - p.y()) / cell_height();
  if (c < 0 || r < 0 || c >= cols || r >= rows) return std::nullopt;
  return std::array<int, 2>{static_cast<int>(r), static_cast<int>(c)};
}

OrientedBox GridGeometry::cell_box(int row, int col) const {
  return OrientedBox{cell_center(row, col), 0.0, cell_width(), cell_height()};
}

bool footprint_hits(const OrientedBox& footprint, std::span<const std::uint8_t> grid, const GridGeometry& geometry) {
  // Only cells inside the footprint's axis-aligned bounds can overlap it.
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const Vec2& p : footprint.corners()) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const double cw = geometry.cell_width(), ch = geometry.cell_height();
  const int c0 = std::max(0, static_cast<int>(std::floor((xmin + geometry.extent) / cw)));
  const int c1 = std::min(geometry.cols - 1, static_cast<int>(std::floor((xmax + geometry.extent) / cw)));
  const int r0 = std::max(0, static_cast<int>(std::floor((geometry.extent - ymax) / ch)));
  const int r1 = std::min(geometry.rows - 1, static_cast<int>(std::floor((geometry.extent - ymin) / ch)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (grid[static_cast<std::size_t>(r * geometry.cols + c)] && overlaps(footprint, geometry.cell_box(r, c))) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace ssr::world
