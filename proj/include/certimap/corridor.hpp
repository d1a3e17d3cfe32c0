#pragma once

#include <optional>
#include <string>
#include <vector>

#include "certimap/polytope.hpp"

namespace certimap {

enum class MapPolicy { kBaseline, kHeuristic, kCertified };

inline const char* to_string(MapPolicy p) {
  switch (p) {
    case MapPolicy::kBaseline: return "baseline";
    case MapPolicy::kHeuristic: return "heuristic";
    case MapPolicy::kCertified: return "certified";
  }
  return "?";
}

struct CorridorConfig {
  MapPolicy policy = MapPolicy::kBaseline;
  int heuristic_window = 60;  // frames kept under the heuristic policy
  double kappa = 8.9473;
};

// Union-of-polytopes free-space map, maintained in the current body frame.
struct CorridorMap {
  CorridorConfig config;
  std::vector<Polytope> polytopes;
  int frame = 0;
};

// Per-frame input for growing one new polytope (everything in the new body
// frame). The clip halfspaces keep the polytope inside the space the sensor
// actually observed (field-of-view planes).
struct PolytopeSeed {
  Vec3 seed = Vec3::Zero();
  std::vector<Vec3> obstacles;
  Aabb bounds;
  std::vector<Halfspace> clips;
};

/// Advance the corridor map by one odometry step: move every polytope into
/// the new body frame (exactly for baseline/heuristic, deflating for
/// certified), apply the policy's forgetting rule, then append a polytope
/// grown from the new observation if one is provided.
inline CorridorMap step_corridor(const CorridorMap& map, const UncertainTransform& ut,
                                 const std::optional<PolytopeSeed>& observation, int frame) {
  CorridorMap out;
  out.config = map.config;
  out.frame = frame;
  out.polytopes.reserve(map.polytopes.size() + 1);

  switch (map.config.policy) {
    case MapPolicy::kBaseline:
      for (const Polytope& p : map.polytopes) {
        out.polytopes.push_back(transform_polytope_exact(p, ut.mean));
      }
      break;
    case MapPolicy::kHeuristic:
      for (const Polytope& p : map.polytopes) {
        if (frame - p.birth_frame >= map.config.heuristic_window) continue;
        out.polytopes.push_back(transform_polytope_exact(p, ut.mean));
      }
      break;
    case MapPolicy::kCertified:
      for (const Polytope& p : map.polytopes) {
        if (auto shrunk = deflate_polytope(p, ut, map.config.kappa)) {
          out.polytopes.push_back(std::move(*shrunk));
        }
      }
      break;
  }

  if (observation) {
    out.polytopes.push_back(generate_polytope(observation->seed, observation->obstacles,
                                              observation->bounds, observation->clips, frame));
  }
  return out;
}

inline bool corridor_contains(const CorridorMap& map, const Vec3& p) {
  for (const Polytope& poly : map.polytopes) {
    if (!poly.bounding_box().contains(p, 1e-9)) continue;
    if (poly.contains(p)) return true;
  }
  return false;
}

/// How far p sits inside the claimed free space: the largest interior
/// margin over all polytopes containing p, 0 when none does.
inline double corridor_penetration(const CorridorMap& map, const Vec3& p) {
  double depth = 0.0;
  for (const Polytope& poly : map.polytopes) {
    if (!poly.bounding_box().contains(p, 1e-9)) continue;
    depth = std::max(depth, poly.interior_margin(p));
  }
  return std::max(0.0, depth);
}

/// Monte-Carlo volume of the union of polytopes over a sampling box.
inline double corridor_free_volume_mc(const CorridorMap& map, const Aabb& bounds,
                                      std::size_t samples, Rng& rng) {
  if (map.polytopes.empty() || samples == 0) return 0.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t inside = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    Vec3 q;
    for (int a = 0; a < 3; ++a) q[a] = bounds.min[a] + unit(rng) * (bounds.max[a] - bounds.min[a]);
    if (corridor_contains(map, q)) ++inside;
  }
  const Vec3 e = bounds.extent();
  return e.x() * e.y() * e.z() * static_cast<double>(inside) / static_cast<double>(samples);
}

}  // namespace certimap
