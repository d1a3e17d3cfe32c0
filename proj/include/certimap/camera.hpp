#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "certimap/core.hpp"

namespace certimap {

// Pinhole depth camera. Camera frame: x right, y down, z along the optical
// axis. Depth values are z-depths (distance along the optical axis), so the
// point seen at pixel (u, v) with depth z is z * pixel_ray(u, v).
struct CameraModel {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  double min_range = 0.1;
  double max_range = 8.0;

  static CameraModel from_hfov(int width, int height, double hfov_deg, double min_range,
                               double max_range) {
    if (width <= 0 || height <= 0 || hfov_deg <= 0.0 || hfov_deg >= 180.0 ||
        !(max_range > min_range) || !(min_range > 0.0)) {
      throw std::invalid_argument("CameraModel::from_hfov: bad parameters");
    }
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.fx = 0.5 * width / std::tan(0.5 * hfov_deg * M_PI / 180.0);
    cam.fy = cam.fx;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.min_range = min_range;
    cam.max_range = max_range;
    return cam;
  }

  // Direction through pixel (u, v), scaled so the z component is 1.
  Vec3 pixel_ray(double u, double v) const {
    return Vec3((u - cx) / fx, (v - cy) / fy, 1.0);
  }

  // Projects a camera-frame point; returns false when behind the camera or
  // outside the image. On success u/v are the nearest pixel indices.
  bool project(const Vec3& p_cam, int& u, int& v, double& z) const {
    z = p_cam.z();
    if (z <= 0.0) return false;
    const long lu = std::lround(fx * p_cam.x() / z + cx);
    const long lv = std::lround(fy * p_cam.y() / z + cy);
    if (lu < 0 || lu >= width || lv < 0 || lv >= height) return false;
    u = static_cast<int>(lu);
    v = static_cast<int>(lv);
    return true;
  }
};

// One rendered depth frame.
//   depth = z        : surface hit at z in [min_range, max_range]
//   depth = +inf     : no hit within max_range; the ray is free out to max_range
//   depth = NaN      : hit closer than min_range; the ray carries no information
struct DepthImage {
  int width = 0, height = 0;
  std::vector<double> depth;

  static constexpr double kMiss = std::numeric_limits<double>::infinity();

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }

  /// Camera-frame points of all surface hits, optionally decimated by a
  /// pixel stride in both directions.
  std::vector<Vec3> hit_points(const CameraModel& cam, int stride = 1) const {
    std::vector<Vec3> pts;
    for (int v = 0; v < height; v += stride) {
      for (int u = 0; u < width; u += stride) {
        const double z = at(u, v);
        if (std::isfinite(z)) pts.push_back(z * cam.pixel_ray(u, v));
      }
    }
    return pts;
  }
};

}  // namespace certimap
