#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>

#include "certimap/core.hpp"

namespace certimap {

// Twist coordinates are ordered [rho; phi]: translational part first,
// rotational part second. This ordering is used for every 6-vector and for
// the block layout of every 6x6 covariance and adjoint in the library.
struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  Vec6 vec() const {
    Vec6 v;
    v.head<3>() = rho;
    v.tail<3>() = phi;
    return v;
  }
  static Twist from_vec(const Vec6& v) { return Twist{v.head<3>(), v.tail<3>()}; }
};

/// Skew-symmetric matrix such that hat3(a) * b == a.cross(b).
inline Mat3 hat3(const Vec3& phi) {
  Mat3 m;
  m << 0.0, -phi.z(), phi.y(),  //
      phi.z(), 0.0, -phi.x(),   //
      -phi.y(), phi.x(), 0.0;
  return m;
}

inline Vec3 vee3(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

/// Rodrigues formula. Exact for all phi; series below 1e-6 rad.
inline Mat3 exp_so3(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 w = hat3(phi);
  if (theta2 < 1e-12) {
    // 2nd-order series keeps the result orthonormal to machine precision.
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * w +
         ((1.0 - std::cos(theta)) / theta2) * w * w;
}

/// Inverse of exp_so3. Valid for any rotation matrix; the angle-pi case
/// recovers the axis from the dominant column of R + I.
inline Vec3 log_so3(const Mat3& r) {
  const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta < 1e-6) {
    // phi = 0.5 * (1 + theta^2/6) * vee(R - R^T) + O(theta^5)
    return (0.5 + theta * theta / 12.0) * vee3(r - r.transpose());
  }
  if (theta > M_PI - 1e-4) {
    // Near pi, sin(theta) ~ 0 and vee(R - R^T) loses the axis. R + I has
    // rank one with columns parallel to the axis; take the largest one.
    const Mat3 s = r + Mat3::Identity();
    int col = 0;
    s.diagonal().maxCoeff(&col);
    Vec3 axis = s.col(col).normalized();
    // Fix the sign so the small sin(theta) remainder agrees.
    const Vec3 w = vee3(r - r.transpose());
    if (axis.dot(w) < 0.0) axis = -axis;
    return theta * axis;
  }
  return (theta / (2.0 * std::sin(theta))) * vee3(r - r.transpose());
}

/// Left Jacobian of SO(3): Exp([rho; phi]) has translation V(phi) * rho.
inline Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 w = hat3(phi);
  if (theta2 < 1e-12) {
    return Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + ((1.0 - std::cos(theta)) / theta2) * w +
         ((theta - std::sin(theta)) / (theta2 * theta)) * w * w;
}

// A rigid transform: p_out = R * p_in + t. Composition is matrix
// composition of the homogeneous embedding [[R, t], [0, 1]].
struct Transform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Transform identity() { return Transform{}; }

  Vec3 act(const Vec3& p) const { return R * p + t; }

  Transform inverse() const { return Transform{R.transpose(), -(R.transpose() * t)}; }

  Transform operator*(const Transform& other) const {
    return Transform{R * other.R, R * other.t + t};
  }

  bool is_valid(double tol = 1e-9) const {
    return (R * R.transpose() - Mat3::Identity()).norm() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol && t.allFinite();
  }
};

inline Transform exp_se3(const Twist& xi) {
  Transform out;
  out.R = exp_so3(xi.phi);
  out.t = so3_left_jacobian(xi.phi) * xi.rho;
  return out;
}

inline Transform exp_se3(const Vec6& xi) { return exp_se3(Twist::from_vec(xi)); }

/// Inverse of exp_se3. rho is recovered by solving V(phi) rho = t directly;
/// V is invertible for all angles below 2*pi, so no series fallback is
/// needed near pi.
inline Twist log_se3(const Transform& tf) {
  Twist xi;
  xi.phi = log_so3(tf.R);
  xi.rho = so3_left_jacobian(xi.phi).partialPivLu().solve(tf.t);
  return xi;
}

/// Adjoint of SE(3) for the [rho; phi] ordering:
/// compose(T, Exp(xi)) == compose(Exp(adjoint(T) * xi), T).
inline Mat6 adjoint(const Transform& tf) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = tf.R;
  ad.topRightCorner<3, 3>() = hat3(tf.t) * tf.R;
  ad.bottomRightCorner<3, 3>() = tf.R;
  return ad;
}

/// Jacobian of the group action T * p with respect to a right perturbation
/// of T, evaluated at the source-frame point: J = [R, -R * hat3(p)].
inline Mat36 point_jacobian(const Transform& tf, const Vec3& p_source) {
  Mat36 j;
  j.leftCols<3>() = tf.R;
  j.rightCols<3>() = -tf.R * hat3(p_source);
  return j;
}

/// Symmetrize and clip negative eigenvalues to zero. First-order covariance
/// formulas can leave slightly indefinite results; inputs with eigenvalues
/// below -tol are rejected.
inline Mat6 project_psd(const Mat6& m, double tol = 1e-9) {
  const Mat6 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat6> es(sym);
  if (es.eigenvalues().minCoeff() < -tol) {
    throw std::invalid_argument("project_psd: matrix has a significant negative eigenvalue");
  }
  const Vec6 clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

/// Symmetric PSD square root: S with S*S = M. Rejects asymmetric input.
template <typename Mat>
inline Mat spd_sqrt(const Mat& m) {
  const double asym = (m - m.transpose()).norm();
  if (asym > 1e-9 * std::max(1.0, m.norm())) {
    throw std::invalid_argument("spd_sqrt: input is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, m.norm())) {
    throw std::invalid_argument("spd_sqrt: input is not positive semidefinite");
  }
  const auto clipped = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

// An SE(3) estimate with the covariance of its right perturbation:
// T = mean * Exp(tau), tau ~ N(0, cov), tau ordered [rho; phi].
struct UncertainTransform {
  Transform mean;
  Mat6 cov = Mat6::Zero();
};

// Containment ellipsoid of a transformed point (shape = kappa J cov J^T).
struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Mat3 shape = Mat3::Zero();

  /// Membership test ||shape^{-1/2} (p - center)|| <= 1. Rank-deficient
  /// shapes are regularized with eps*I so the test stays defined.
  bool contains(const Vec3& p, double eps = 1e-12) const {
    const Mat3 reg = shape + eps * Mat3::Identity();
    const Vec3 d = p - center;
    return d.dot(reg.ldlt().solve(d)) <= 1.0;
  }
};

/// Ellipsoid that contains T * p_source under Assumption-1 truncation with
/// scale kappa.
inline Ellipsoid point_covariance(const UncertainTransform& ut, const Vec3& p_source,
                                  double kappa) {
  if (kappa <= 0.0) throw std::invalid_argument("point_covariance: kappa must be positive");
  const Mat36 j = point_jacobian(ut.mean, p_source);
  return Ellipsoid{ut.mean.act(p_source), kappa * j * ut.cov * j.transpose()};
}

/// Draw tau ~ N(0, cov) using an eigendecomposition factor (works for
/// semidefinite cov) and the caller's RNG.
inline Vec6 sample_twist(const Mat6& cov, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<Mat6> es(0.5 * (cov + cov.transpose()));
  const Vec6 scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec6 z;
  for (int i = 0; i < 6; ++i) z[i] = gauss(rng);
  return es.eigenvectors() * (scale.asDiagonal() * z);
}

/// T_true * Exp(tau) with tau ~ N(0, sigma).
inline Transform sample_perturbed(const Transform& t_true, const Mat6& sigma, Rng& rng) {
  return t_true * exp_se3(Twist::from_vec(sample_twist(sigma, rng)));
}

/// Covariance of the relative transform between two odometry estimates that
/// share a base frame, assuming a scalar correlation rho between their
/// perturbations. The cross term rho (S_k S_{k+1}^T)^{1/2} is evaluated as
/// rho * spd_sqrt(S_k) * spd_sqrt(S_{k+1}) when the plain product is
/// asymmetric; the two coincide whenever S_k and S_{k+1} commute.
inline UncertainTransform extract_relative_covariance(const UncertainTransform& odom_k,
                                                      const UncertainTransform& odom_k1,
                                                      double rho) {
  if (rho < -1.0 || rho > 1.0) {
    throw std::invalid_argument("extract_relative_covariance: rho outside [-1, 1]");
  }
  auto check_input = [](const Mat6& c) {
    Eigen::SelfAdjointEigenSolver<Mat6> es(0.5 * (c + c.transpose()));
    if (es.eigenvalues().minCoeff() < -1e-9) {
      throw std::invalid_argument("extract_relative_covariance: covariance not PSD");
    }
  };
  check_input(odom_k.cov);
  check_input(odom_k1.cov);

  UncertainTransform rel;
  rel.mean = odom_k.mean.inverse() * odom_k1.mean;
  const Mat6 a = adjoint(rel.mean.inverse());

  Mat6 cross;
  const Mat6 prod = odom_k.cov * odom_k1.cov.transpose();
  if ((prod - prod.transpose()).norm() <= 1e-12 * std::max(1.0, prod.norm())) {
    cross = rho * spd_sqrt(prod);
  } else {
    cross = rho * (spd_sqrt(odom_k.cov) * spd_sqrt(odom_k1.cov)).eval();
  }

  const Mat6 raw = a * odom_k.cov * a.transpose() + odom_k1.cov - a * cross -
                   cross.transpose() * a.transpose();
  rel.cov = project_psd(raw);
  return rel;
}

}  // namespace certimap
