#ifndef SPHCONV_GEOMETRY_HPP_
#define SPHCONV_GEOMETRY_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "sphconv/error.hpp"

namespace sphconv {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Point3& operator+=(const Point3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Point3& operator-=(const Point3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Point3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr Point3 operator+(Point3 a, const Point3& b) { return a += b; }
  friend constexpr Point3 operator-(Point3 a, const Point3& b) { return a -= b; }
  friend constexpr Point3 operator-(const Point3& a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Point3 operator*(Point3 a, double s) { return a *= s; }
  friend constexpr Point3 operator*(double s, Point3 a) { return a *= s; }
  friend constexpr bool operator==(const Point3&, const Point3&) = default;

  constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

using PointCloud = std::vector<Point3>;

inline double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Point3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Point3& a, const Point3& b) { return norm(a - b); }
inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

/// Azimuth theta in [-pi, pi] (the negative x axis maps to +pi), elevation phi in
/// [-pi/2, pi/2] measured from the xy-plane, radius r >= 0.
struct SphericalCoord {
  double theta = 0.0;
  double phi = 0.0;
  double r = 0.0;
};

/// Axis-aligned cube given by its two extreme corners.
struct BoundingCube {
  Point3 min_corner{-1.0, -1.0, -1.0};
  Point3 max_corner{1.0, 1.0, 1.0};

  Point3 center() const { return (min_corner + max_corner) * 0.5; }
  double edge() const { return max_corner.x - min_corner.x; }
  double diagonal() const { return distance(min_corner, max_corner); }

  bool contains(const Point3& p) const {
    return p.x >= min_corner.x && p.x <= max_corner.x && p.y >= min_corner.y &&
           p.y <= max_corner.y && p.z >= min_corner.z && p.z <= max_corner.z;
  }

  /// Octant `i` (bit 0: x, bit 1: y, bit 2: z; a set bit selects the upper half).
  BoundingCube octant(int i) const {
    const Point3 c = center();
    BoundingCube o;
    o.min_corner = {(i & 1) ? c.x : min_corner.x, (i & 2) ? c.y : min_corner.y,
                    (i & 4) ? c.z : min_corner.z};
    o.max_corner = {(i & 1) ? max_corner.x : c.x, (i & 2) ? max_corner.y : c.y,
                    (i & 4) ? max_corner.z : c.z};
    return o;
  }
};

inline SphericalCoord to_spherical(const Point3& delta) {
  const double r = norm(delta);
  if (r == 0.0) return {};
  double theta = std::atan2(delta.y, delta.x);
  // atan2(-0.0, x<0) yields -pi; keep the negative x axis on +pi.
  if (theta == -std::numbers::pi) theta = std::numbers::pi;
  const double phi = std::asin(std::clamp(delta.z / r, -1.0, 1.0));
  return {theta, phi, r};
}

inline Point3 from_spherical(const SphericalCoord& s) {
  const double c = std::cos(s.phi);
  return {s.r * c * std::cos(s.theta), s.r * c * std::sin(s.theta), s.r * std::sin(s.phi)};
}

/// Rotation by `angle` radians about the z axis.
inline Point3 rotate_z(const Point3& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

inline Point3 centroid(std::span<const Point3> cloud) {
  Point3 sum;
  for (const auto& p : cloud) sum += p;
  return sum * (1.0 / static_cast<double>(cloud.size()));
}

/// Centers the cloud on its center of mass and rescales it uniformly so that the
/// largest absolute coordinate becomes exactly 1.
inline PointCloud normalize_cloud(std::span<const Point3> cloud) {
  if (cloud.empty()) throw DataError("normalize_cloud: empty point cloud");
  for (const auto& p : cloud)
    if (!is_finite(p)) throw DataError("normalize_cloud: non-finite coordinate");

  const Point3 c = centroid(cloud);
  double max_abs = 0.0;
  for (const auto& p : cloud) {
    const Point3 d = p - c;
    max_abs = std::max({max_abs, std::abs(d.x), std::abs(d.y), std::abs(d.z)});
  }
  if (max_abs == 0.0) throw DataError("normalize_cloud: zero extent (all points identical)");

  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) {
    Point3 d = p - c;
    out.push_back({d.x / max_abs, d.y / max_abs, d.z / max_abs});
  }
  return out;
}

}  // namespace sphconv

#endif  // SPHCONV_GEOMETRY_HPP_
