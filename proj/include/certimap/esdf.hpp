#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "certimap/camera.hpp"
#include "certimap/core.hpp"
#include "certimap/corridor.hpp"
#include "certimap/lie.hpp"

namespace certimap {

// Sparse voxel keys: 21 bits per signed axis index packed into one int64.
// Sorting packed keys orders voxels lexicographically by (x, y, z).
using VoxelKey = std::int64_t;

inline constexpr std::int64_t kVoxelIndexBias = 1 << 20;

inline VoxelKey pack_voxel(int x, int y, int z) {
  return ((static_cast<std::int64_t>(x) + kVoxelIndexBias) << 42) |
         ((static_cast<std::int64_t>(y) + kVoxelIndexBias) << 21) |
         (static_cast<std::int64_t>(z) + kVoxelIndexBias);
}

inline void unpack_voxel(VoxelKey key, int& x, int& y, int& z) {
  x = static_cast<int>((key >> 42) & 0x1fffff) - kVoxelIndexBias;
  y = static_cast<int>((key >> 21) & 0x1fffff) - kVoxelIndexBias;
  z = static_cast<int>(key & 0x1fffff) - kVoxelIndexBias;
}

/// Largest eigenvalue of a symmetric 3x3 matrix, closed form.
inline double sym3_lambda_max(const Mat3& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  if (p1 <= 0.0) return a.diagonal().maxCoeff();
  const double q = a.trace() / 3.0;
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                    (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  if (p <= 0.0) return q;
  const Mat3 b = (a - q * Mat3::Identity()) / p;
  const double r = std::clamp(0.5 * b.determinant(), -1.0, 1.0);
  return q + 2.0 * p * std::cos(std::acos(r) / 3.0);
}

struct EsdfConfig {
  double voxel_size = 0.02;
  Vec3 origin = Vec3::Zero();     // mapping-frame position of voxel index (0,0,0)
  double truncation = 0.5;        // stored distances live in [-truncation, +truncation]
  MapPolicy policy = MapPolicy::kBaseline;
  double kappa = 8.9473;
  double heuristic_radius = 3.0;  // forgetting radius for the heuristic policy
};

// Sparse signed-distance grid in the mapping frame. A voxel is observed iff
// its key is present; est_pose is the current composed estimate B_k -> M
// used for queries and for the deflation moment arm.
struct CertifiedEsdfMap {
  EsdfConfig config;
  std::unordered_map<VoxelKey, double> cells;
  Transform est_pose;
  int frame = 0;

  Eigen::Vector3i index_of(const Vec3& p_map) const {
    const Vec3 s = (p_map - config.origin) / config.voxel_size;
    return Eigen::Vector3i(static_cast<int>(std::floor(s.x())), static_cast<int>(std::floor(s.y())),
                           static_cast<int>(std::floor(s.z())));
  }

  Vec3 center_of(VoxelKey key) const {
    int x, y, z;
    unpack_voxel(key, x, y, z);
    return config.origin + config.voxel_size * Vec3(x + 0.5, y + 0.5, z + 0.5);
  }

  /// Stored distance at the voxel containing est_pose * p_body, or nullopt
  /// when that voxel is Unknown. A value >= 0 means the point is claimed
  /// free with at least that much (certified) clearance.
  std::optional<double> query(const Vec3& p_body) const {
    const Eigen::Vector3i idx = index_of(est_pose.act(p_body));
    const auto it = cells.find(pack_voxel(idx.x(), idx.y(), idx.z()));
    if (it == cells.end()) return std::nullopt;
    return it->second;
  }

  double free_volume() const {
    std::size_t n = 0;
    for (const auto& [key, d] : cells) {
      if (d >= 0.0) ++n;
    }
    const double vs = config.voxel_size;
    return static_cast<double>(n) * vs * vs * vs;
  }
};

// One frame's worth of voxel observations, independent of map policy so the
// same observation can be merged into several maps.
//  - band: voxels with a definite signed distance below the truncation
//  - far:  observed voxels with no obstacle within the truncation band
struct FrameObservation {
  std::vector<std::pair<VoxelKey, double>> band;
  std::vector<VoxelKey> far;
  double truncation = 0.0;
};

namespace detail {

// Grid-bucketed nearest-point queries over one frame's obstacle points.
// Buckets are aligned with the ESDF voxel grid so that "does this voxel
// contain a point" is a single bucket probe. Queries are exact up to the
// cap distance.
class PointGridIndex {
 public:
  PointGridIndex(const std::vector<Vec3>& points, const Vec3& grid_origin, double cell,
                 double cap)
      : points_(points), cell_(cell), cap_(cap) {
    if (points.empty()) return;
    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    for (int a = 0; a < 3; ++a) {
      base_[a] = static_cast<int>(std::floor((lo[a] - grid_origin[a]) / cell));
      dims_[a] = static_cast<int>(std::floor((hi[a] - grid_origin[a]) / cell)) - base_[a] + 1;
    }
    origin_ = grid_origin;
    head_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], -1);
    next_.assign(points.size(), -1);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const int slot = slot_of(cell_index(points[i]));
      next_[i] = head_[static_cast<std::size_t>(slot)];
      head_[static_cast<std::size_t>(slot)] = static_cast<int>(i);
    }
    // Coarse occupancy at the cap scale for quick far-field rejection.
    coarse_cell_ = cap;
    for (int a = 0; a < 3; ++a) {
      coarse_base_[a] = static_cast<int>(std::floor((lo[a] - grid_origin[a]) / coarse_cell_));
      coarse_dims_[a] =
          static_cast<int>(std::floor((hi[a] - grid_origin[a]) / coarse_cell_)) - coarse_base_[a] + 1;
    }
    coarse_.assign(static_cast<std::size_t>(coarse_dims_[0]) * coarse_dims_[1] * coarse_dims_[2], 0);
    for (const Vec3& p : points) {
      Eigen::Vector3i c;
      for (int a = 0; a < 3; ++a) {
        c[a] = static_cast<int>(std::floor((p[a] - origin_[a]) / coarse_cell_)) - coarse_base_[a];
      }
      coarse_[coarse_slot(c)] = 1;
    }
  }

  bool empty() const { return points_.empty(); }

  /// True when any point maps into the grid cell (same indexing as the
  /// ESDF voxel grid).
  bool cell_occupied(const Eigen::Vector3i& idx) const {
    if (points_.empty()) return false;
    for (int a = 0; a < 3; ++a) {
      if (idx[a] < base_[a] || idx[a] >= base_[a] + dims_[a]) return false;
    }
    return head_[static_cast<std::size_t>(slot_of(idx))] >= 0;
  }

  /// Exact min distance from q to the point set when it is below cap;
  /// returns cap otherwise.
  double nearest(const Vec3& q) const {
    if (points_.empty()) return cap_;
    // Coarse 27-cell check: any point within cap lies in a neighbor cell.
    {
      Eigen::Vector3i c;
      for (int a = 0; a < 3; ++a) {
        c[a] = static_cast<int>(std::floor((q[a] - origin_[a]) / coarse_cell_)) - coarse_base_[a];
      }
      bool any = false;
      for (int dx = -1; dx <= 1 && !any; ++dx) {
        for (int dy = -1; dy <= 1 && !any; ++dy) {
          for (int dz = -1; dz <= 1 && !any; ++dz) {
            const Eigen::Vector3i n(c.x() + dx, c.y() + dy, c.z() + dz);
            if (n.x() < 0 || n.y() < 0 || n.z() < 0 || n.x() >= coarse_dims_[0] ||
                n.y() >= coarse_dims_[1] || n.z() >= coarse_dims_[2]) {
              continue;
            }
            any = coarse_[coarse_slot(n)] != 0;
          }
        }
      }
      if (!any) return cap_;
    }

    // Exact search over expanding cubic shells of fine cells. Points in a
    // cell at Chebyshev index distance r are at least (r - 1) * cell away,
    // so the scan can stop once that bound passes the best hit.
    const Eigen::Vector3i cq = cell_index(q);
    double best = cap_;
    const int r_max = static_cast<int>(std::ceil(cap_ / cell_)) + 1;
    for (int r = 0; r <= r_max; ++r) {
      if (static_cast<double>(r - 1) * cell_ >= best) break;
      scan_shell(q, cq, r, best);
    }
    return best;
  }

 private:
  Eigen::Vector3i cell_index(const Vec3& p) const {
    Eigen::Vector3i c;
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<int>(std::floor((p[a] - origin_[a]) / cell_));
    }
    return c;
  }

  int slot_of(const Eigen::Vector3i& idx) const {
    return ((idx.x() - base_[0]) * dims_[1] + (idx.y() - base_[1])) * dims_[2] +
           (idx.z() - base_[2]);
  }

  std::size_t coarse_slot(const Eigen::Vector3i& c) const {
    return (static_cast<std::size_t>(c.x()) * coarse_dims_[1] + c.y()) * coarse_dims_[2] + c.z();
  }

  void scan_cell(const Vec3& q, const Eigen::Vector3i& idx, double& best) const {
    for (int a = 0; a < 3; ++a) {
      if (idx[a] < base_[a] || idx[a] >= base_[a] + dims_[a]) return;
    }
    for (int i = head_[static_cast<std::size_t>(slot_of(idx))]; i >= 0; i = next_[i]) {
      best = std::min(best, (points_[static_cast<std::size_t>(i)] - q).norm());
    }
  }

  void scan_shell(const Vec3& q, const Eigen::Vector3i& c, int r, double& best) const {
    if (r == 0) {
      scan_cell(q, c, best);
      return;
    }
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        const bool face_x = std::abs(dx) == r;
        const bool face_y = std::abs(dy) == r;
        if (face_x || face_y) {
          for (int dz = -r; dz <= r; ++dz) {
            scan_cell(q, Eigen::Vector3i(c.x() + dx, c.y() + dy, c.z() + dz), best);
          }
        } else {
          scan_cell(q, Eigen::Vector3i(c.x() + dx, c.y() + dy, c.z() - r), best);
          scan_cell(q, Eigen::Vector3i(c.x() + dx, c.y() + dy, c.z() + r), best);
        }
      }
    }
  }

  const std::vector<Vec3>& points_;
  Vec3 origin_ = Vec3::Zero();
  double cell_ = 1.0;
  double cap_ = 1.0;
  int base_[3] = {0, 0, 0};
  int dims_[3] = {0, 0, 0};
  std::vector<int> head_;
  std::vector<int> next_;
  double coarse_cell_ = 1.0;
  int coarse_base_[3] = {0, 0, 0};
  int coarse_dims_[3] = {0, 0, 0};
  std::vector<std::uint8_t> coarse_;
};

}  // namespace detail

/// Render one depth frame into voxel observations. A voxel is observed iff
/// its center projects into the image, lies in [min_range, max_range] along
/// the optical axis, and no surface hit occurs strictly before it on that
/// pixel's ray. Observed voxels store the signed distance to the nearest
/// obstacle point (negative when the voxel itself contains a point),
/// clamped to the truncation band; rays with a hit inside min_range carry
/// no information and observe nothing.
inline FrameObservation build_observation(const DepthImage& img, const CameraModel& cam,
                                          const Transform& est_pose, const EsdfConfig& cfg,
                                          int point_stride = 1,
                                          const std::optional<Aabb>& clip = std::nullopt) {
  FrameObservation obs;
  obs.truncation = cfg.truncation;

  std::vector<Vec3> pts_map;
  for (const Vec3& p : img.hit_points(cam, point_stride)) pts_map.push_back(est_pose.act(p));
  const detail::PointGridIndex index(pts_map, cfg.origin, cfg.voxel_size, cfg.truncation);

  // Mapping-frame AABB of the view frustum.
  Aabb view;
  view.min = est_pose.t;
  view.max = est_pose.t;
  const double corners[4][2] = {{0.0, 0.0},
                                {static_cast<double>(cam.width - 1), 0.0},
                                {0.0, static_cast<double>(cam.height - 1)},
                                {static_cast<double>(cam.width - 1), static_cast<double>(cam.height - 1)}};
  for (const auto& c : corners) {
    const Vec3 far = est_pose.act(cam.max_range * cam.pixel_ray(c[0], c[1]));
    view.min = view.min.cwiseMin(far);
    view.max = view.max.cwiseMax(far);
  }
  if (clip) {
    view.min = view.min.cwiseMax(clip->min);
    view.max = view.max.cwiseMin(clip->max);
  }

  const double vs = cfg.voxel_size;
  Eigen::Vector3i lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = static_cast<int>(std::floor((view.min[a] - cfg.origin[a]) / vs));
    hi[a] = static_cast<int>(std::floor((view.max[a] - cfg.origin[a]) / vs));
  }

  const Transform inv = est_pose.inverse();
  for (int ix = lo.x(); ix <= hi.x(); ++ix) {
    for (int iy = lo.y(); iy <= hi.y(); ++iy) {
      for (int iz = lo.z(); iz <= hi.z(); ++iz) {
        const Vec3 c_map = cfg.origin + vs * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
        const Vec3 c_cam = inv.act(c_map);
        int u, v;
        double z;
        if (!cam.project(c_cam, u, v, z)) continue;
        if (z < cam.min_range) continue;
        const double d_pix = img.at(u, v);
        const double z_allowed = std::isinf(d_pix) ? cam.max_range : d_pix;
        if (!(z <= z_allowed + 1e-9)) continue;  // NaN depth observes nothing

        const VoxelKey key = pack_voxel(ix, iy, iz);
        const double dist = index.nearest(c_map);
        const bool occupied = index.cell_occupied(Eigen::Vector3i(ix, iy, iz));
        if (!occupied && dist >= cfg.truncation) {
          obs.far.push_back(key);
        } else {
          obs.band.emplace_back(key, occupied ? -dist : dist);
        }
      }
    }
  }
  return obs;
}

/// Merge a frame observation: new voxels are inserted, re-observed voxels
/// keep the minimum of old and new distance. est_pose is refreshed to the
/// pose the observation was built with.
inline void integrate_observation(CertifiedEsdfMap& map, const FrameObservation& obs,
                                  const Transform& camera_pose_est) {
  for (const auto& [key, d] : obs.band) {
    auto [it, inserted] = map.cells.try_emplace(key, d);
    if (!inserted) it->second = std::min(it->second, d);
  }
  // A far observation (distance = +truncation) can never lower a stored
  // value, so only insertion matters.
  for (const VoxelKey key : obs.far) map.cells.try_emplace(key, obs.truncation);
  map.est_pose = camera_pose_est;
}

/// Convenience form matching the map contract: build the observation from
/// the depth frame and merge it.
inline void integrate_observation(CertifiedEsdfMap& map, const DepthImage& img,
                                  const CameraModel& cam, const Transform& camera_pose_est,
                                  int point_stride = 1,
                                  const std::optional<Aabb>& clip = std::nullopt) {
  integrate_observation(map, build_observation(img, cam, camera_pose_est, map.config, point_stride, clip),
                        camera_pose_est);
}

/// Deflate every stored voxel by sqrt(lambda_max(kappa J Sigma J^T)), where
/// J's moment arm is the voxel center seen from the new body frame. ut maps
/// B_{k+1} to B_k; the map's composed pose advances accordingly. Voxels
/// whose distance drops below zero are dropped from storage.
inline void deflate_esdf(CertifiedEsdfMap& map, const UncertainTransform& ut, double kappa) {
  map.est_pose = map.est_pose * ut.mean;
  const Transform inv = map.est_pose.inverse();
  const Mat3 a = ut.cov.topLeftCorner<3, 3>();
  const Mat3 b = ut.cov.topRightCorner<3, 3>();
  const Mat3 d = ut.cov.bottomRightCorner<3, 3>();

  for (auto it = map.cells.begin(); it != map.cells.end();) {
    const Vec3 p_body = inv.act(map.center_of(it->first));
    const Mat3 h = hat3(p_body);
    const Mat3 m = b * h;
    // [I, -H] Sigma [I, -H]^T with H^T = -H.
    const Mat3 sigma_p = a + m + m.transpose() - h * d * h;
    const double delta = std::sqrt(std::max(0.0, kappa * sym3_lambda_max(sigma_p)));
    const double next = it->second - delta;
    if (delta > 0.0 && next < 0.0) {
      it = map.cells.erase(it);
    } else {
      it->second = next;
      ++it;
    }
  }
}

/// Drop observed voxels farther than radius from the estimated camera
/// position (heuristic distance-based forgetting).
inline void forget_beyond_radius(CertifiedEsdfMap& map, double radius) {
  const Vec3 cam = map.est_pose.t;
  for (auto it = map.cells.begin(); it != map.cells.end();) {
    if ((map.center_of(it->first) - cam).norm() > radius) {
      it = map.cells.erase(it);
    } else {
      ++it;
    }
  }
}

/// One mapping step: deflate (certified) or nothing (others), merge the new
/// observation if any, then apply heuristic forgetting.
inline void step_esdf(CertifiedEsdfMap& map, const UncertainTransform& ut,
                      const std::optional<FrameObservation>& obs,
                      const Transform& camera_pose_est, int frame) {
  if (map.config.policy == MapPolicy::kCertified) {
    deflate_esdf(map, ut, map.config.kappa);
  } else {
    map.est_pose = map.est_pose * ut.mean;
  }
  if (obs) integrate_observation(map, *obs, camera_pose_est);
  if (map.config.policy == MapPolicy::kHeuristic) {
    forget_beyond_radius(map, map.config.heuristic_radius);
  }
  map.frame = frame;
}

// 2D slice of the claimed map at a mapping-frame height.
//   0 = unknown, 1 = free (d > 0), 2 = obstacle / uncertifiable (d <= 0)
struct SliceRaster {
  int x0 = 0, y0 = 0;
  int nx = 0, ny = 0;
  std::vector<std::int8_t> cells;

  std::int8_t at(int ix, int iy) const {
    return cells[static_cast<std::size_t>(iy - y0) * nx + (ix - x0)];
  }
};

inline SliceRaster claimed_free_region_slice(const CertifiedEsdfMap& map, double height) {
  const int iz = static_cast<int>(std::floor((height - map.config.origin.z()) / map.config.voxel_size));
  SliceRaster out;
  int xmin = 0, xmax = -1, ymin = 0, ymax = -1;
  bool any = false;
  for (const auto& [key, d] : map.cells) {
    int x, y, z;
    unpack_voxel(key, x, y, z);
    if (z != iz) continue;
    if (!any) {
      xmin = xmax = x;
      ymin = ymax = y;
      any = true;
    } else {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!any) return out;
  out.x0 = xmin;
  out.y0 = ymin;
  out.nx = xmax - xmin + 1;
  out.ny = ymax - ymin + 1;
  out.cells.assign(static_cast<std::size_t>(out.nx) * out.ny, 0);
  for (const auto& [key, d] : map.cells) {
    int x, y, z;
    unpack_voxel(key, x, y, z);
    if (z != iz) continue;
    out.cells[static_cast<std::size_t>(y - ymin) * out.nx + (x - xmin)] = d > 0.0 ? 1 : 2;
  }
  return out;
}

}  // namespace certimap
