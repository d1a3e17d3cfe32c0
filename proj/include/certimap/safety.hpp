#pragma once

#include <functional>

#include "certimap/core.hpp"
#include "certimap/lie.hpp"
#include "certimap/trajectory.hpp"

namespace certimap {

struct RobotCommand {
  double linear = 0.0;   // m/s, along the optical axis
  double angular = 0.0;  // rad/s, about the world vertical
};

// Planar robot state in the world x-y plane (camera height is fixed).
struct PlanarState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

inline PlanarState advance_planar(const PlanarState& s, const RobotCommand& cmd, double dt) {
  return PlanarState{s.x + cmd.linear * std::cos(s.theta) * dt,
                     s.y + cmd.linear * std::sin(s.theta) * dt, s.theta + cmd.angular * dt};
}

inline Transform planar_camera_pose(const PlanarState& s, double camera_height) {
  return Transform{yaw_camera_rotation(s.theta), Vec3(s.x, s.y, camera_height)};
}

/// A planar displacement (forward, left) relative to the robot, expressed
/// as a point in the camera/body frame (x right, y down, z forward) at the
/// camera's height plane.
inline Vec3 planar_to_body(double forward, double left) { return Vec3(-left, 0.0, forward); }

/// Forward-propagate the commanded motion over a short horizon and check
/// that every rollout sample is claimed free by the map; if not, zero the
/// linear command and reduce the angular one so the robot can still turn
/// in place to gather information.
inline RobotCommand safety_filter(const RobotCommand& cmd,
                                  const std::function<bool(const Vec3&)>& is_free_body,
                                  double horizon, double dt, double angular_scale = 0.5) {
  PlanarState rel;  // rollout in the robot's own planar frame
  for (double t = dt; t <= horizon + 1e-12; t += dt) {
    rel = advance_planar(rel, cmd, dt);
    if (!is_free_body(planar_to_body(rel.x, rel.y))) {
      return RobotCommand{0.0, cmd.angular * angular_scale};
    }
  }
  return cmd;
}

}  // namespace certimap
