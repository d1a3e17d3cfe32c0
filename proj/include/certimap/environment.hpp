#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <variant>
#include <vector>

#include "certimap/camera.hpp"
#include "certimap/core.hpp"
#include "certimap/lie.hpp"
#include "certimap/polytope.hpp"

namespace certimap {

struct BoxObstacle {
  Vec3 min;
  Vec3 max;
};

// Halfspace obstacle {p : normal . p <= offset}; the free side is where
// normal . p > offset.
struct PlaneObstacle {
  Vec3 normal;  // unit, points into free space
  double offset;
};

using Obstacle = std::variant<BoxObstacle, PlaneObstacle>;

inline double signed_distance(const BoxObstacle& box, const Vec3& p) {
  const Vec3 d = (box.min - p).cwiseMax(p - box.max);
  const double outside = d.cwiseMax(0.0).norm();
  const double inside = std::min(0.0, d.maxCoeff());
  return outside + inside;
}

inline double signed_distance(const PlaneObstacle& plane, const Vec3& p) {
  return plane.normal.dot(p) - plane.offset;
}

// Ground-truth static world: analytic obstacles inside an axis-aligned
// working volume. Everything here is expressed in the inertial frame.
struct Environment {
  std::vector<Obstacle> obstacles;
  Aabb bounds;

  /// Signed distance to the obstacle set; positive in free space.
  double signed_distance(const Vec3& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const Obstacle& o : obstacles) {
      d = std::min(d, std::visit([&](const auto& ob) { return certimap::signed_distance(ob, p); }, o));
    }
    return d;
  }

  bool in_obstacle(const Vec3& p) const { return signed_distance(p) <= 0.0; }
};

namespace detail {

// Ray p(s) = origin + s * dir against one obstacle; returns the smallest
// s > 0 where the ray enters the obstacle, or +inf. dir need not be unit.
inline double ray_hit(const BoxObstacle& box, const Vec3& origin, const Vec3& dir) {
  double s_enter = 0.0;
  double s_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) {
        return std::numeric_limits<double>::infinity();
      }
      continue;
    }
    double t1 = (box.min[a] - origin[a]) / dir[a];
    double t2 = (box.max[a] - origin[a]) / dir[a];
    if (t1 > t2) std::swap(t1, t2);
    s_enter = std::max(s_enter, t1);
    s_exit = std::min(s_exit, t2);
  }
  if (s_enter > s_exit || s_exit <= 0.0) return std::numeric_limits<double>::infinity();
  return s_enter;
}

inline double ray_hit(const PlaneObstacle& plane, const Vec3& origin, const Vec3& dir) {
  const double side = plane.normal.dot(origin) - plane.offset;
  const double rate = plane.normal.dot(dir);
  if (side <= 0.0) return 0.0;  // origin already inside the obstacle halfspace
  if (rate >= -1e-15) return std::numeric_limits<double>::infinity();
  return -side / rate;
}

}  // namespace detail

/// Smallest s > 0 where origin + s * dir enters any obstacle; +inf on miss.
inline double raycast(const Environment& env, const Vec3& origin, const Vec3& dir) {
  double best = std::numeric_limits<double>::infinity();
  for (const Obstacle& o : env.obstacles) {
    best = std::min(best, std::visit([&](const auto& ob) { return detail::ray_hit(ob, origin, dir); }, o));
  }
  return best;
}

/// Render a depth image from a camera pose (camera frame -> inertial
/// frame). Rays are parametrized by z-depth, so hits beyond max_range read
/// as misses and hits closer than min_range invalidate the ray.
inline DepthImage raycast_depth(const Environment& env, const Transform& camera_pose,
                                const CameraModel& cam) {
  DepthImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.depth.assign(static_cast<std::size_t>(cam.width) * cam.height, DepthImage::kMiss);
  parallel_chunks(static_cast<std::size_t>(cam.height), [&](std::size_t vb, std::size_t ve, std::size_t) {
    for (std::size_t v = vb; v < ve; ++v) {
      for (int u = 0; u < cam.width; ++u) {
        const Vec3 dir_cam = cam.pixel_ray(static_cast<double>(u), static_cast<double>(v));
        const double z = raycast(env, camera_pose.t, camera_pose.R * dir_cam);
        double& out = img.at(u, static_cast<int>(v));
        if (!std::isfinite(z) || z > cam.max_range) {
          out = DepthImage::kMiss;
        } else if (z < cam.min_range) {
          out = std::numeric_limits<double>::quiet_NaN();
        } else {
          out = z;
        }
      }
    }
  });
  return img;
}

/// Dense samples of the obstacle boundary within the working volume, one
/// per (spacing x spacing) patch. Samples buried inside another obstacle
/// are dropped so every sample lies on the boundary of the union.
inline std::vector<Vec3> surface_samples(const Environment& env, double spacing) {
  if (spacing <= 0.0) throw std::invalid_argument("surface_samples: spacing must be positive");
  std::vector<Vec3> samples;

  auto keep = [&](const Vec3& p) {
    if (!env.bounds.contains(p)) return;
    if (env.signed_distance(p) < -1e-9) return;  // interior of some other obstacle
    samples.push_back(p);
  };

  auto grid_1d = [&](double lo, double hi) {
    std::vector<double> xs;
    const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / spacing)));
    for (int i = 0; i < n; ++i) xs.push_back(lo + (i + 0.5) * (hi - lo) / n);
    return xs;
  };

  for (const Obstacle& o : env.obstacles) {
    if (const auto* box = std::get_if<BoxObstacle>(&o)) {
      for (int axis = 0; axis < 3; ++axis) {
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        for (double w1 : grid_1d(box->min[a1], box->max[a1])) {
          for (double w2 : grid_1d(box->min[a2], box->max[a2])) {
            Vec3 p;
            p[a1] = w1;
            p[a2] = w2;
            p[axis] = box->min[axis];
            keep(p);
            p[axis] = box->max[axis];
            keep(p);
          }
        }
      }
    } else if (const auto* plane = std::get_if<PlaneObstacle>(&o)) {
      // Grid the rectangle where the plane crosses the working volume.
      const Vec3 n = plane->normal.normalized();
      Vec3 u = n.cross(Vec3::UnitX());
      if (u.norm() < 1e-6) u = n.cross(Vec3::UnitY());
      u.normalize();
      const Vec3 v = n.cross(u);
      const Vec3 base = plane->offset * n;
      double ulo = std::numeric_limits<double>::infinity(), uhi = -ulo;
      double vlo = ulo, vhi = -ulo;
      for (int corner = 0; corner < 8; ++corner) {
        Vec3 c;
        for (int a = 0; a < 3; ++a) {
          c[a] = (corner >> a) & 1 ? env.bounds.max[a] : env.bounds.min[a];
        }
        ulo = std::min(ulo, u.dot(c - base));
        uhi = std::max(uhi, u.dot(c - base));
        vlo = std::min(vlo, v.dot(c - base));
        vhi = std::max(vhi, v.dot(c - base));
      }
      for (double su : grid_1d(ulo, uhi)) {
        for (double sv : grid_1d(vlo, vhi)) {
          keep(base + su * u + sv * v);
        }
      }
    }
  }
  return samples;
}

}  // namespace certimap
