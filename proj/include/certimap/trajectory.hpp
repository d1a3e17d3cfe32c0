#pragma once

#include <stdexcept>
#include <vector>

#include "certimap/core.hpp"
#include "certimap/environment.hpp"
#include "certimap/lie.hpp"

namespace certimap {

// Poses that place ground truth and poses that come from (simulated)
// odometry are deliberately distinct types: map code only ever sees
// EstimatedPose values, metric code places obstacle samples only with
// TruePose values, and the two do not convert into each other.
struct TruePose {
  Transform tf;
};
struct EstimatedPose {
  Transform tf;
};

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;  // heading of the optical axis in the world x-y plane
};

/// World rotation of a camera whose optical axis (+z) points along yaw in
/// the horizontal plane, x right, y down.
inline Mat3 yaw_camera_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 r;
  r.col(0) = Vec3(s, -c, 0.0);   // camera x (right)
  r.col(1) = Vec3(0.0, 0.0, -1); // camera y (down)
  r.col(2) = Vec3(c, s, 0.0);    // camera z (forward)
  return r;
}

inline Transform waypoint_pose(const Waypoint& w) {
  return Transform{yaw_camera_rotation(w.yaw), w.position};
}

inline Transform interpolate_pose(const Transform& a, const Transform& b, double alpha) {
  Transform out;
  out.t = (1.0 - alpha) * a.t + alpha * b.t;
  out.R = a.R * exp_so3(alpha * log_so3(a.R.transpose() * b.R));
  return out;
}

struct TrajectoryStep {
  TruePose true_pose;                  // B_k -> I
  UncertainTransform est_incremental;  // B_{k+1} -> B_k (identity on the last step)
  EstimatedPose est_pose;              // B_k -> M, composed from the increments
  Mat6 cum_cov = Mat6::Zero();         // covariance of est_pose's right perturbation
  double rho_to_next = 1.0;            // scalar correlation best matching the true cross term
};

/// Interpolate the waypoint path at a fixed frame rate and perturb each
/// incremental transform with noise drawn from sigma. Also tracks the
/// cumulative pose covariance and, per step, the scalar correlation whose
/// square-root cross term best reproduces the true cross covariance.
/// Throws when the interpolated path leaves free space.
inline std::vector<TrajectoryStep> generate_trajectory(const Environment& env,
                                                       const std::vector<Waypoint>& waypoints,
                                                       int frames, const Mat6& sigma,
                                                       std::uint64_t root_seed,
                                                       double clearance = 0.0) {
  if (waypoints.size() < 2 && frames > 1) {
    throw std::invalid_argument("generate_trajectory: need at least two waypoints");
  }
  if (frames < 1) throw std::invalid_argument("generate_trajectory: need at least one frame");

  std::vector<Transform> truth(frames);
  const int segments = static_cast<int>(waypoints.size()) - 1;
  for (int k = 0; k < frames; ++k) {
    const double s = frames == 1 ? 0.0
                                 : static_cast<double>(k) / (frames - 1) * segments;
    const int seg = std::min(segments - 1, static_cast<int>(s));
    truth[k] = interpolate_pose(waypoint_pose(waypoints[seg]), waypoint_pose(waypoints[seg + 1]),
                                s - seg);
    if (env.signed_distance(truth[k].t) <= clearance) {
      throw std::invalid_argument("generate_trajectory: path leaves free space at frame " +
                                  std::to_string(k));
    }
  }

  Rng rng = make_rng(root_seed, RngStream::kTrajectoryNoise);
  std::vector<TrajectoryStep> steps(frames);
  Transform est_pose = Transform::identity();  // M coincides with B_0
  Mat6 cum = Mat6::Zero();
  for (int k = 0; k < frames; ++k) {
    steps[k].true_pose = TruePose{truth[k]};
    steps[k].est_pose = EstimatedPose{est_pose};
    steps[k].cum_cov = cum;
    if (k + 1 < frames) {
      const Transform true_inc = truth[k].inverse() * truth[k + 1];
      steps[k].est_incremental.mean = sample_perturbed(true_inc, sigma, rng);
      steps[k].est_incremental.cov = sigma;
      est_pose = est_pose * steps[k].est_incremental.mean;

      const Mat6 a = adjoint(steps[k].est_incremental.mean.inverse());
      const Mat6 next = a * cum * a.transpose() + sigma;
      const Mat6 cross_true = cum * a.transpose();
      const Mat6 s = spd_sqrt(cum) * spd_sqrt(next);
      const double denom = (s.array() * s.array()).sum();
      steps[k].rho_to_next = denom > 0.0 ? (s.array() * cross_true.array()).sum() / denom : 1.0;
      cum = next;
    }
  }
  return steps;
}

}  // namespace certimap
