#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace bevrl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
  Vec2 normalized() const {
    double n = norm();
    return n > 1e-12 ? Vec2{x / n, y / n} : Vec2{1.0, 0.0};
  }
  Vec2 rotated(double angle) const {
    double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

// Oriented rectangle centered at (cx, cy), heading yaw, full extents
// length (along heading) and width (across).
struct Obb {
  double cx, cy, yaw, length, width;

  std::array<Vec2, 4> corners() const {
    Vec2 fwd{std::cos(yaw), std::sin(yaw)};
    Vec2 left{-fwd.y, fwd.x};
    Vec2 c{cx, cy};
    Vec2 dl = fwd * (length * 0.5);
    Vec2 dw = left * (width * 0.5);
    return {c + dl + dw, c + dl - dw, c - dl - dw, c - dl + dw};
  }

  bool contains(const Vec2& p) const {
    Vec2 d{p.x - cx, p.y - cy};
    Vec2 fwd{std::cos(yaw), std::sin(yaw)};
    Vec2 left{-fwd.y, fwd.x};
    return std::abs(d.dot(fwd)) <= length * 0.5 && std::abs(d.dot(left)) <= width * 0.5;
  }
};

// Separating-axis test for two oriented rectangles. Touching counts as
// overlap.
inline bool obb_overlap(const Obb& a, const Obb& b) {
  auto ca = a.corners();
  auto cb = b.corners();
  const Vec2 axes[4] = {
      Vec2{std::cos(a.yaw), std::sin(a.yaw)},
      Vec2{-std::sin(a.yaw), std::cos(a.yaw)},
      Vec2{std::cos(b.yaw), std::sin(b.yaw)},
      Vec2{-std::sin(b.yaw), std::cos(b.yaw)},
  };
  for (const Vec2& axis : axes) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (int i = 0; i < 4; ++i) {
      double pa = ca[i].dot(axis);
      double pb = cb[i].dot(axis);
      amin = std::min(amin, pa);
      amax = std::max(amax, pa);
      bmin = std::min(bmin, pb);
      bmax = std::max(bmax, pb);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab = b - a;
  double len2 = ab.dot(ab);
  if (len2 < 1e-18) return (p - a).norm();
  double t = (p - a).dot(ab) / len2;
  t = std::max(0.0, std::min(1.0, t));
  return (p - (a + ab * t)).norm();
}

inline double point_polyline_distance(const Vec2& p, const std::vector<Vec2>& pts) {
  if (pts.empty()) throw std::invalid_argument("point_polyline_distance: empty polyline");
  if (pts.size() == 1) return (p - pts[0]).norm();
  double best = 1e300;
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    best = std::min(best, point_segment_distance(p, pts[i], pts[i + 1]));
  return best;
}

}  // namespace bevrl
