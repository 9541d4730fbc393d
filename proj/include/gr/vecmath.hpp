#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <limits>

namespace gr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<int, 3>;

// Reverse-mode helpers for the few vector primitives the losses chain through.

/// u = a / |a|. Returns dL/da given dL/du.
inline Vec3 normalize_backward(const Vec3& a, const Vec3& grad_u) {
  const double len = a.norm();
  if (len <= 0.0) return Vec3::Zero();
  const Vec3 u = a / len;
  return (grad_u - grad_u.dot(u) * u) / len;
}

/// c = a x b. Accumulates dL/da and dL/db given dL/dc.
inline void cross_backward(const Vec3& a, const Vec3& b, const Vec3& grad_c, Vec3& grad_a, Vec3& grad_b) {
  grad_a += b.cross(grad_c);
  grad_b += grad_c.cross(a);
}

inline double logistic(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return lo.x() > hi.x(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
  double diagonal() const { return empty() ? 0.0 : (hi - lo).norm(); }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
    return d.squaredNorm();
  }
};

}  // namespace gr
