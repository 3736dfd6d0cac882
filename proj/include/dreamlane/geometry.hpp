#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace dreamlane {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Rectangle with arbitrary heading; half extents along its own axes.
struct OrientedBox {
  Vec2 center;
  double half_length = 0.0;  // along heading
  double half_width = 0.0;   // across heading
  double heading = 0.0;

  Vec2 axis_u() const { return {std::cos(heading), std::sin(heading)}; }
  Vec2 axis_v() const { return {-std::sin(heading), std::cos(heading)}; }

  std::array<Vec2, 4> corners() const {
    const Vec2 u = half_length * axis_u();
    const Vec2 v = half_width * axis_v();
    return {center + u + v, center + u - v, center - u - v, center - u + v};
  }

  bool contains(Vec2 p) const {
    const Vec2 d = p - center;
    return std::abs(dot(d, axis_u())) <= half_length && std::abs(dot(d, axis_v())) <= half_width;
  }
};

/// Largest gap between the two boxes' projections over the four SAT axes.
/// Positive: separated by at least that distance along some axis.
/// Non-positive: overlapping (magnitude is the minimum penetration depth).
inline double box_separation(const OrientedBox& a, const OrientedBox& b) {
  const std::array<Vec2, 4> axes = {a.axis_u(), a.axis_v(), b.axis_u(), b.axis_v()};
  const auto ca = a.corners();
  const auto cb = b.corners();
  double best = -std::numeric_limits<double>::infinity();
  for (const Vec2& axis : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const Vec2& c : ca) {
      const double p = dot(c, axis);
      amin = std::min(amin, p);
      amax = std::max(amax, p);
    }
    for (const Vec2& c : cb) {
      const double p = dot(c, axis);
      bmin = std::min(bmin, p);
      bmax = std::max(bmax, p);
    }
    best = std::max(best, std::max(bmin - amax, amin - bmax));
  }
  return best;
}

/// Closed-set overlap (touching counts as overlap).
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) { return box_separation(a, b) <= 0.0; }

/// Distance from the box center to its boundary along direction `bearing`
/// (expressed in the box's own frame).
inline double box_radial_extent(double half_length, double half_width, double bearing) {
  const double c = std::abs(std::cos(bearing));
  const double s = std::abs(std::sin(bearing));
  const double along = c > 1e-12 ? half_length / c : std::numeric_limits<double>::infinity();
  const double across = s > 1e-12 ? half_width / s : std::numeric_limits<double>::infinity();
  return std::min(along, across);
}

}  // namespace dreamlane
