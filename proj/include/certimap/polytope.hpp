#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "certimap/core.hpp"
#include "certimap/lie.hpp"

namespace certimap {

// Numerical policy for polytope geometry, in meters at desk scale.
inline constexpr double kVertexFeasTol = 1e-7;   // slack for A v <= b at vertices
inline constexpr double kTripletDetTol = 1e-10;  // minimum |det| for a face triplet
inline constexpr double kVertexMergeTol = 1e-8;  // vertices closer than this are one

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p.array() >= min.array() - slack).all() && (p.array() <= max.array() + slack).all();
  }
  Vec3 extent() const { return max - min; }
};

struct Halfspace {
  Vec3 normal;   // unit length
  double offset; // points p with normal . p <= offset are inside
};

// Convex polytope {p : A p <= b} with unit-norm rows and, for every face,
// the set of vertices lying on it. The vertex sets are kept current by every
// operation so deflation can read them directly.
struct Polytope {
  Eigen::Matrix<double, Eigen::Dynamic, 3> A;
  Eigen::VectorXd b;
  std::vector<std::vector<Vec3>> face_vertices;
  std::vector<Vec3> vertices;
  int birth_frame = 0;

  bool is_empty() const { return vertices.empty(); }

  Aabb bounding_box() const {
    Aabb box;
    box.min = Vec3::Constant(std::numeric_limits<double>::infinity());
    box.max = -box.min;
    for (const Vec3& v : vertices) {
      box.min = box.min.cwiseMin(v);
      box.max = box.max.cwiseMax(v);
    }
    return box;
  }

  bool contains(const Vec3& p, double slack = 1e-9) const {
    return ((A * p - b).array() <= slack).all();
  }

  /// Distance from p to the nearest face plane, measured inward; 0 on the
  /// boundary, negative outside.
  double interior_margin(const Vec3& p) const { return (b - A * p).minCoeff(); }
};

namespace detail {

inline bool rows_positively_span(const Eigen::Matrix<double, Eigen::Dynamic, 3>& a) {
  // A polytope {A p <= b} is bounded iff its recession cone {d : A d <= 0}
  // is {0}. Any nonzero recession direction can be taken as either an
  // extreme ray (intersection of two active constraint planes, i.e. a
  // cross product of normals) or, when rank(A) < 3, a null direction.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  if (svd.rank() < 3) return false;
  const double tol = 1e-10;
  const auto recedes = [&](const Vec3& d) { return ((a * d).array() <= tol).all(); };
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = i + 1; j < a.rows(); ++j) {
      Vec3 d = a.row(i).cross(a.row(j));
      const double n = d.norm();
      if (n < 1e-12) continue;
      d /= n;
      if (recedes(d) || recedes(-d)) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Enumerate vertices by solving all face triplets with non-degenerate
/// determinant, keeping feasible solutions, and assign every vertex to each
/// face it lies on. Throws when the system is unbounded.
inline void recompute_face_vertices(Polytope& p) {
  const int n = static_cast<int>(p.A.rows());
  if (n < 3 || !detail::rows_positively_span(p.A)) {
    throw std::invalid_argument("recompute_face_vertices: polytope is unbounded");
  }
  p.vertices.clear();
  p.face_vertices.assign(n, {});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        Mat3 m;
        m.row(0) = p.A.row(i);
        m.row(1) = p.A.row(j);
        m.row(2) = p.A.row(k);
        const double det = m.determinant();
        if (std::abs(det) <= kTripletDetTol) continue;
        const Vec3 rhs(p.b[i], p.b[j], p.b[k]);
        const Vec3 x = m.partialPivLu().solve(rhs);
        if (!x.allFinite()) continue;
        if (((p.A * x - p.b).array() > kVertexFeasTol).any()) continue;
        bool duplicate = false;
        for (const Vec3& v : p.vertices) {
          if ((v - x).norm() <= kVertexMergeTol) {
            duplicate = true;
            break;
          }
        }
        if (!duplicate) p.vertices.push_back(x);
      }
    }
  }
  for (const Vec3& v : p.vertices) {
    for (int i = 0; i < n; ++i) {
      if (std::abs(p.A.row(i).dot(v) - p.b[i]) <= kVertexFeasTol * (1.0 + std::abs(p.b[i]))) {
        p.face_vertices[i].push_back(v);
      }
    }
  }
}

/// Drop faces supported by no vertex; keeps row order otherwise.
inline void drop_unsupported_faces(Polytope& p) {
  std::vector<int> keep;
  for (int i = 0; i < p.A.rows(); ++i) {
    if (!p.face_vertices[i].empty()) keep.push_back(i);
  }
  if (static_cast<int>(keep.size()) == p.A.rows()) return;
  Eigen::Matrix<double, Eigen::Dynamic, 3> a(keep.size(), 3);
  Eigen::VectorXd b(keep.size());
  std::vector<std::vector<Vec3>> fv(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    a.row(r) = p.A.row(keep[r]);
    b[r] = p.b[keep[r]];
    fv[r] = std::move(p.face_vertices[keep[r]]);
  }
  p.A = std::move(a);
  p.b = std::move(b);
  p.face_vertices = std::move(fv);
}

/// Build a polytope from halfspaces; normals are renormalized to unit
/// length, vertices enumerated and redundant faces removed.
inline Polytope make_polytope(const std::vector<Halfspace>& faces, int birth_frame = 0) {
  Polytope p;
  p.birth_frame = birth_frame;
  p.A.resize(faces.size(), 3);
  p.b.resize(faces.size());
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const double n = faces[i].normal.norm();
    if (n < 1e-12) throw std::invalid_argument("make_polytope: zero normal");
    p.A.row(i) = faces[i].normal / n;
    p.b[static_cast<int>(i)] = faces[i].offset / n;
  }
  recompute_face_vertices(p);
  drop_unsupported_faces(p);
  return p;
}

inline std::vector<Halfspace> aabb_halfspaces(const Aabb& box) {
  std::vector<Halfspace> faces;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 n = Vec3::Zero();
    n[axis] = 1.0;
    faces.push_back({n, box.max[axis]});
    faces.push_back({-n, -box.min[axis]});
  }
  return faces;
}

/// Grow an obstacle-free polytope around a seed: repeatedly cut a tangent
/// halfspace through the nearest remaining obstacle point (normal pointing
/// from the seed to the point), discard the points it excludes, and clip
/// the result to the bounds box plus any extra clip halfspaces. Ties on
/// distance resolve to the lower point index.
inline Polytope generate_polytope(const Vec3& seed, const std::vector<Vec3>& obstacles,
                                  const Aabb& bounds,
                                  const std::vector<Halfspace>& extra_clips = {},
                                  int birth_frame = 0, double seed_clearance = 1e-6) {
  if (!bounds.contains(seed)) {
    throw std::invalid_argument("generate_polytope: seed outside bounds");
  }
  for (const Halfspace& h : extra_clips) {
    if (h.normal.dot(seed) > h.offset) {
      throw std::invalid_argument("generate_polytope: seed outside clip halfspace");
    }
  }

  // Only points that could end up inside the clipped region can constrain it.
  std::vector<Vec3> work;
  work.reserve(obstacles.size());
  for (const Vec3& o : obstacles) {
    if (!bounds.contains(o, kVertexFeasTol)) continue;
    bool cut = false;
    for (const Halfspace& h : extra_clips) {
      if (h.normal.dot(o) > h.offset + kVertexFeasTol) {
        cut = true;
        break;
      }
    }
    if (!cut) work.push_back(o);
  }

  std::vector<Halfspace> faces;
  while (!work.empty()) {
    std::size_t nearest = 0;
    double best = (work[0] - seed).squaredNorm();
    for (std::size_t i = 1; i < work.size(); ++i) {
      const double d2 = (work[i] - seed).squaredNorm();
      if (d2 < best) {
        best = d2;
        nearest = i;
      }
    }
    if (best <= seed_clearance * seed_clearance) {
      throw std::invalid_argument("generate_polytope: seed inside obstacle clearance ball");
    }
    const Vec3 q = work[nearest];
    const Vec3 normal = (q - seed).normalized();
    const double offset = normal.dot(q);
    faces.push_back({normal, offset});
    std::vector<Vec3> rest;
    rest.reserve(work.size());
    for (const Vec3& o : work) {
      if (normal.dot(o) < offset - 1e-12) rest.push_back(o);
    }
    work = std::move(rest);
  }

  for (const Halfspace& h : aabb_halfspaces(bounds)) faces.push_back(h);
  for (const Halfspace& h : extra_clips) faces.push_back(h);
  return make_polytope(faces, birth_frame);
}

/// Rigid image of a polytope under the exact transform from its frame to a
/// new frame: A' = A R^T, b' = b + A R^T t. Vertices map exactly.
inline Polytope transform_polytope_exact(const Polytope& p, const Transform& tf) {
  Polytope out;
  out.birth_frame = p.birth_frame;
  out.A = p.A * tf.R.transpose();
  out.b = p.b + out.A * tf.t;
  out.vertices.reserve(p.vertices.size());
  for (const Vec3& v : p.vertices) out.vertices.push_back(tf.act(v));
  out.face_vertices.resize(p.face_vertices.size());
  for (std::size_t i = 0; i < p.face_vertices.size(); ++i) {
    out.face_vertices[i].reserve(p.face_vertices[i].size());
    for (const Vec3& v : p.face_vertices[i]) out.face_vertices[i].push_back(tf.act(v));
  }
  return out;
}

/// Offset r such that the halfspace {a^T p >= r} contains the ellipsoid
/// centered at p_hat with shape sigma_p.
inline double separating_offset(const Vec3& p_hat, const Mat3& sigma_p, const Vec3& a) {
  if (a.norm() < 1e-15) throw std::invalid_argument("separating_offset: zero direction");
  const double q = a.dot(sigma_p * a);
  return a.dot(p_hat) - std::sqrt(std::max(0.0, q));
}

/// Per-face deflation amounts: rho_i is the largest tangent-plane shift
/// needed over the face's vertices, where each vertex contributes the
/// quadratic form of [a_i; v x a_i] under kappa * cov. Expressed in the
/// source-frame quantities; equal to sqrt(a'^T Sigma_p a') for the rotated
/// normal a' = R a_i and the vertex's transformed-point covariance.
inline Eigen::VectorXd deflation_offsets(const Polytope& p, const Mat6& cov, double kappa) {
  Eigen::VectorXd rho(p.A.rows());
  for (int i = 0; i < p.A.rows(); ++i) {
    const Vec3 a = p.A.row(i);
    double worst = 0.0;
    for (const Vec3& v : p.face_vertices[i]) {
      Vec6 u;
      u.head<3>() = a;
      u.tail<3>() = v.cross(a);
      worst = std::max(worst, u.dot(cov * u));
    }
    rho[i] = std::sqrt(std::max(0.0, kappa * worst));
  }
  return rho;
}

/// Transform-and-deflate: the rigid image under the mean transform with
/// each face pulled in by rho_i, so that an obstacle-free polytope stays
/// obstacle-free under the truncated uncertainty of the transform. Returns
/// nullopt when the shrunk set has no feasible vertex left.
inline std::optional<Polytope> deflate_polytope(const Polytope& p, const UncertainTransform& ut,
                                                double kappa) {
  if (kappa <= 0.0) throw std::invalid_argument("deflate_polytope: kappa must be positive");
  const Eigen::VectorXd rho = deflation_offsets(p, ut.cov, kappa);
  Polytope out;
  out.birth_frame = p.birth_frame;
  out.A = p.A * ut.mean.R.transpose();
  out.b = p.b + out.A * ut.mean.t - rho;
  recompute_face_vertices(out);
  if (out.is_empty()) return std::nullopt;
  drop_unsupported_faces(out);
  return out;
}

/// Monte-Carlo volume of a polytope sampled inside its own bounding box.
inline double polytope_volume_mc(const Polytope& p, std::size_t samples, Rng& rng) {
  if (p.is_empty() || samples == 0) return 0.0;
  const Aabb box = p.bounding_box();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t inside = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    Vec3 q;
    for (int a = 0; a < 3; ++a) q[a] = box.min[a] + unit(rng) * (box.max[a] - box.min[a]);
    if (p.contains(q)) ++inside;
  }
  const Vec3 e = box.extent();
  return e.x() * e.y() * e.z() * static_cast<double>(inside) / static_cast<double>(samples);
}

}  // namespace certimap
