#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "certimap/corridor.hpp"
#include "certimap/environment.hpp"
#include "certimap/esdf.hpp"
#include "certimap/io.hpp"
#include "certimap/safety.hpp"
#include "certimap/scenario.hpp"
#include "certimap/trajectory.hpp"

namespace certimap {

// Penetrations below this are sampling artifacts of the discrete depth
// image (order s^2 / 4d for pixel footprint s), not map errors; violation
// counting starts above it.
inline constexpr double kViolationDepthTol = 1e-4;

struct MetricSample {
  int frame = 0;
  double violation_rate = 0.0;  // fraction of surface samples claimed free
  double max_violation = 0.0;   // meters
  double free_volume = 0.0;     // cubic meters
};

struct DriveOutcome {
  int incursions = 0;            // frames whose true camera position is inside O
  double min_clearance = std::numeric_limits<double>::infinity();
  double final_clearance = 0.0;
  int blocked_tail_frames = 0;   // trailing frames where the filter pinned linear to 0
  bool halted = false;           // blocked for >= 0.5 s at the end, no incursion
};

struct PolicyResult {
  PolicySelector selector;
  std::vector<MetricSample> series;
  std::optional<DriveOutcome> drive;

  const MetricSample& summary() const { return series.back(); }
};

struct ExperimentReport {
  Json scenario_echo;
  std::size_t surface_sample_count = 0;
  std::vector<PolicyResult> policies;
  std::vector<std::string> assertion_failures;
};

/// Fraction of ground-truth surface samples that the map claims free, plus
/// the deepest violation. Samples are placed in the body frame with the
/// TRUE pose; the map is queried exactly as a planner would (through its
/// own estimated-pose interface). Throws on an empty sample set.
template <typename ViolatesFn, typename DepthFn>
inline std::pair<double, double> violation_metrics(const std::vector<Vec3>& samples_world,
                                                   const TruePose& pose, ViolatesFn&& violates,
                                                   DepthFn&& depth) {
  if (samples_world.empty()) {
    throw std::invalid_argument("violation_metrics: empty surface sample set");
  }
  const Transform world_to_body = pose.tf.inverse();
  const int workers = std::max(1, worker_count());
  std::vector<std::size_t> counts(static_cast<std::size_t>(workers), 0);
  std::vector<double> maxima(static_cast<std::size_t>(workers), 0.0);
  parallel_chunks(samples_world.size(), [&](std::size_t b, std::size_t e, std::size_t chunk) {
    std::size_t count = 0;
    double worst = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const Vec3 p_body = world_to_body.act(samples_world[i]);
      if (!violates(p_body)) continue;
      ++count;
      worst = std::max(worst, depth(p_body));
    }
    counts[chunk] += count;
    maxima[chunk] = std::max(maxima[chunk], worst);
  });
  std::size_t total = 0;
  double worst = 0.0;
  for (int c = 0; c < workers; ++c) {
    total += counts[static_cast<std::size_t>(c)];
    worst = std::max(worst, maxima[static_cast<std::size_t>(c)]);
  }
  return {static_cast<double>(total) / static_cast<double>(samples_world.size()), worst};
}

namespace detail {

// Uniform binning of polytope bounding boxes so per-sample containment
// tests only touch nearby polytopes.
class CorridorIndex {
 public:
  explicit CorridorIndex(const CorridorMap& map, double cell = 0.5) : map_(map), cell_(cell) {
    if (map.polytopes.empty()) return;
    boxes_.reserve(map.polytopes.size());
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Polytope& p : map.polytopes) {
      boxes_.push_back(p.bounding_box());
      lo = lo.cwiseMin(boxes_.back().min);
      hi = hi.cwiseMax(boxes_.back().max);
    }
    lo_ = lo;
    for (int a = 0; a < 3; ++a) {
      dims_[a] = std::max(1, static_cast<int>(std::floor((hi[a] - lo[a]) / cell_)) + 1);
    }
    bins_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], {});
    for (std::size_t pi = 0; pi < boxes_.size(); ++pi) {
      int blo[3], bhi[3];
      for (int a = 0; a < 3; ++a) {
        blo[a] = std::clamp(static_cast<int>(std::floor((boxes_[pi].min[a] - lo_[a]) / cell_)), 0,
                            dims_[a] - 1);
        bhi[a] = std::clamp(static_cast<int>(std::floor((boxes_[pi].max[a] - lo_[a]) / cell_)), 0,
                            dims_[a] - 1);
      }
      for (int x = blo[0]; x <= bhi[0]; ++x) {
        for (int y = blo[1]; y <= bhi[1]; ++y) {
          for (int z = blo[2]; z <= bhi[2]; ++z) {
            bins_[(static_cast<std::size_t>(x) * dims_[1] + y) * dims_[2] + z].push_back(
                static_cast<int>(pi));
          }
        }
      }
    }
  }

  double penetration(const Vec3& p) const {
    if (bins_.empty()) return 0.0;
    double depth = 0.0;
    for (const int pi : candidates(p)) {
      if (!boxes_[static_cast<std::size_t>(pi)].contains(p, 1e-9)) continue;
      depth = std::max(depth, map_.polytopes[static_cast<std::size_t>(pi)].interior_margin(p));
    }
    return std::max(0.0, depth);
  }

  bool contains(const Vec3& p) const {
    if (bins_.empty()) return false;
    for (const int pi : candidates(p)) {
      if (!boxes_[static_cast<std::size_t>(pi)].contains(p, 1e-9)) continue;
      if (map_.polytopes[static_cast<std::size_t>(pi)].contains(p)) return true;
    }
    return false;
  }

 private:
  static const std::vector<int>& no_candidates() {
    static const std::vector<int> none;
    return none;
  }

  const std::vector<int>& candidates(const Vec3& p) const {
    int c[3];
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<int>(std::floor((p[a] - lo_[a]) / cell_));
      if (c[a] < 0 || c[a] >= dims_[a]) return no_candidates();
    }
    return bins_[(static_cast<std::size_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2]];
  }

  const CorridorMap& map_;
  double cell_;
  Vec3 lo_ = Vec3::Zero();
  int dims_[3] = {0, 0, 0};
  std::vector<Aabb> boxes_;
  std::vector<std::vector<int>> bins_;
};

inline std::vector<Halfspace> fov_clip_halfspaces(const CameraModel& cam) {
  const double tan_x0 = (0.0 - cam.cx) / cam.fx;
  const double tan_x1 = (cam.width - 1 - cam.cx) / cam.fx;
  const double tan_y0 = (0.0 - cam.cy) / cam.fy;
  const double tan_y1 = (cam.height - 1 - cam.cy) / cam.fy;
  std::vector<Halfspace> clips;
  auto add = [&clips](const Vec3& n, double offset) {
    const double len = n.norm();
    clips.push_back({n / len, offset / len});
  };
  add(Vec3(-1.0, 0.0, tan_x0), 0.0);   // x/z >= tan_x0
  add(Vec3(1.0, 0.0, -tan_x1), 0.0);   // x/z <= tan_x1
  add(Vec3(0.0, -1.0, tan_y0), 0.0);   // y/z >= tan_y0
  add(Vec3(0.0, 1.0, -tan_y1), 0.0);   // y/z <= tan_y1
  add(Vec3(0.0, 0.0, -1.0), -cam.min_range);
  return clips;
}

/// Body-frame obstacle points for polytope generation: every surface hit at
/// full resolution, plus a conservative point at min_range on rays whose
/// return is invalid (those rays certify nothing).
inline std::vector<Vec3> sfc_obstacle_points(const DepthImage& img, const CameraModel& cam) {
  std::vector<Vec3> pts;
  pts.reserve(img.depth.size() / 4);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const double z = img.at(u, v);
      if (std::isfinite(z)) {
        pts.push_back(z * cam.pixel_ray(u, v));
      } else if (std::isnan(z)) {
        pts.push_back(cam.min_range * cam.pixel_ray(u, v));
      }
    }
  }
  return pts;
}

struct PolicyState {
  PolicySelector selector;
  CorridorMap corridor;
  CertifiedEsdfMap esdf;
};

inline PolicyState make_policy_state(const Scenario& sc, const PolicySelector& sel) {
  PolicyState st;
  st.selector = sel;
  if (sel.pipeline == Pipeline::kSfc) {
    st.corridor.config.policy = sel.policy;
    st.corridor.config.heuristic_window = sc.sfc_heuristic_window;
    st.corridor.config.kappa = sc.kappa;
  } else {
    st.esdf.config.voxel_size = sc.voxel_size;
    st.esdf.config.truncation = sc.truncation;
    st.esdf.config.policy = sel.policy;
    st.esdf.config.kappa = sc.kappa;
    st.esdf.config.heuristic_radius = sc.esdf_heuristic_radius;
  }
  return st;
}

inline MetricSample evaluate_policy(const PolicyState& st, const std::vector<Vec3>& samples,
                                    const TruePose& true_pose, const Aabb& world_bounds,
                                    std::uint64_t root_seed, int frame,
                                    std::size_t volume_samples) {
  MetricSample m;
  m.frame = frame;
  if (st.selector.pipeline == Pipeline::kSfc) {
    const CorridorIndex index(st.corridor);
    const auto [rate, worst] = violation_metrics(
        samples, true_pose,
        [&](const Vec3& p) { return index.penetration(p) > kViolationDepthTol; },
        [&](const Vec3& p) { return index.penetration(p); });
    m.violation_rate = rate;
    m.max_violation = worst;
    // The sampling box is the working volume seen from the current body
    // frame; sampling in the body frame keeps the estimate aligned with the
    // map it measures.
    Aabb body_bounds;
    body_bounds.min = Vec3::Constant(std::numeric_limits<double>::infinity());
    body_bounds.max = -body_bounds.min;
    const Transform world_to_body = true_pose.tf.inverse();
    for (int corner = 0; corner < 8; ++corner) {
      Vec3 c;
      for (int a = 0; a < 3; ++a) {
        c[a] = (corner >> a) & 1 ? world_bounds.max[a] : world_bounds.min[a];
      }
      const Vec3 cb = world_to_body.act(c);
      body_bounds.min = body_bounds.min.cwiseMin(cb);
      body_bounds.max = body_bounds.max.cwiseMax(cb);
    }
    Rng rng = make_rng(root_seed, RngStream::kEvalVolume, static_cast<std::uint64_t>(frame));
    double volume = 0.0;
    if (!st.corridor.polytopes.empty() && volume_samples > 0) {
      const CorridorIndex vol_index(st.corridor);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::size_t inside = 0;
      for (std::size_t s = 0; s < volume_samples; ++s) {
        Vec3 q;
        for (int a = 0; a < 3; ++a) {
          q[a] = body_bounds.min[a] + unit(rng) * (body_bounds.max[a] - body_bounds.min[a]);
        }
        if (vol_index.contains(q)) ++inside;
      }
      const Vec3 e = body_bounds.extent();
      volume = e.x() * e.y() * e.z() * static_cast<double>(inside) /
               static_cast<double>(volume_samples);
    }
    m.free_volume = volume;
  } else {
    const auto [rate, worst] = violation_metrics(
        samples, true_pose,
        [&](const Vec3& p) {
          const auto d = st.esdf.query(p);
          return d.has_value() && *d >= 0.0;
        },
        [&](const Vec3& p) {
          const auto d = st.esdf.query(p);
          return d.has_value() ? std::max(0.0, *d) : 0.0;
        });
    m.violation_rate = rate;
    m.max_violation = worst;
    m.free_volume = st.esdf.free_volume();
  }
  return m;
}

}  // namespace detail

using SnapshotWriter =
    std::function<void(const PolicySelector&, int frame, const CorridorMap*, const CertifiedEsdfMap*)>;

namespace detail {

inline void check_assertions(const Scenario& sc, ExperimentReport& report) {
  for (const auto& [key, bound] : sc.assertions) {
    const PolicyResult* match = nullptr;
    std::string rest;
    for (const PolicyResult& pr : report.policies) {
      const std::string prefix = pr.selector.name + "_";
      if (key.rfind(prefix, 0) == 0) {
        match = &pr;
        rest = key.substr(prefix.size());
        break;
      }
    }
    if (!match) {
      report.assertion_failures.push_back("assertion '" + key + "': unknown policy prefix");
      continue;
    }
    bool is_max = false;
    std::string metric = rest;
    if (rest.size() > 4 && rest.substr(rest.size() - 4) == "_max") {
      is_max = true;
      metric = rest.substr(0, rest.size() - 4);
    } else if (rest.size() > 4 && rest.substr(rest.size() - 4) == "_min") {
      metric = rest.substr(0, rest.size() - 4);
    } else {
      report.assertion_failures.push_back("assertion '" + key + "': expected _max or _min suffix");
      continue;
    }
    double value = 0.0;
    const MetricSample& s = match->summary();
    if (metric == "violation_rate") {
      value = s.violation_rate;
    } else if (metric == "max_violation_m") {
      value = s.max_violation;
    } else if (metric == "free_volume_m3") {
      value = s.free_volume;
    } else if (metric == "incursions" && match->drive) {
      value = match->drive->incursions;
    } else if (metric == "min_clearance_m" && match->drive) {
      value = match->drive->min_clearance;
    } else if (metric == "halted" && match->drive) {
      value = match->drive->halted ? 1.0 : 0.0;
    } else {
      report.assertion_failures.push_back("assertion '" + key + "': unknown metric '" + metric + "'");
      continue;
    }
    const bool ok = is_max ? value <= bound : value >= bound;
    if (!ok) {
      std::ostringstream msg;
      msg << "assertion '" << key << "' failed: value " << value << (is_max ? " > " : " < ")
          << bound;
      report.assertion_failures.push_back(msg.str());
    }
  }
}

inline ExperimentReport run_waypoint_experiment(const Scenario& sc, const SnapshotWriter& snapshot) {
  ExperimentReport report;
  report.scenario_echo = scenario_to_json(sc);

  const std::vector<Vec3> samples = surface_samples(sc.env, sc.surface_sample_spacing());
  if (samples.empty()) throw ScenarioError("scenario has no obstacle surface inside bounds");
  report.surface_sample_count = samples.size();

  const std::vector<TrajectoryStep> steps =
      generate_trajectory(sc.env, sc.waypoints, sc.frames, sc.sigma, sc.seed);

  std::vector<PolicyState> states;
  for (const PolicySelector& sel : sc.policies) states.push_back(make_policy_state(sc, sel));
  report.policies.resize(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) report.policies[i].selector = states[i].selector;

  const std::vector<Halfspace> fov_clips = fov_clip_halfspaces(sc.camera);
  const bool any_sfc = std::any_of(states.begin(), states.end(), [](const PolicyState& st) {
    return st.selector.pipeline == Pipeline::kSfc;
  });
  const bool any_esdf = std::any_of(states.begin(), states.end(), [](const PolicyState& st) {
    return st.selector.pipeline == Pipeline::kEsdf;
  });

  // Iteration clip for the observation builder: the working volume seen
  // from the mapping frame (= B_0), padded for drift.
  Aabb map_clip;
  {
    const Transform w2m = steps[0].true_pose.tf.inverse();
    map_clip.min = Vec3::Constant(std::numeric_limits<double>::infinity());
    map_clip.max = -map_clip.min;
    for (int corner = 0; corner < 8; ++corner) {
      Vec3 c;
      for (int a = 0; a < 3; ++a) {
        c[a] = (corner >> a) & 1 ? sc.env.bounds.max[a] : sc.env.bounds.min[a];
      }
      const Vec3 cm = w2m.act(c);
      map_clip.min = map_clip.min.cwiseMin(cm);
      map_clip.max = map_clip.max.cwiseMax(cm);
    }
    map_clip.min -= Vec3::Constant(0.5);
    map_clip.max += Vec3::Constant(0.5);
  }

  EsdfConfig obs_cfg;
  obs_cfg.voxel_size = sc.voxel_size;
  obs_cfg.truncation = sc.truncation;

  for (int k = 0; k < sc.frames; ++k) {
    const DepthImage depth = raycast_depth(sc.env, steps[k].true_pose.tf, sc.camera);

    std::optional<PolytopeSeed> poly_obs;
    if (any_sfc) {
      PolytopeSeed ps;
      ps.seed = Vec3(0.0, 0.0, sc.sfc_seed_forward_offset);
      ps.obstacles = sfc_obstacle_points(depth, sc.camera);
      ps.bounds.min = ps.seed - Vec3::Constant(sc.sfc_bounds_halfwidth);
      ps.bounds.max = ps.seed + Vec3::Constant(sc.sfc_bounds_halfwidth);
      ps.clips = fov_clips;
      poly_obs = std::move(ps);
    }
    std::optional<FrameObservation> esdf_obs;
    if (any_esdf) {
      esdf_obs = build_observation(depth, sc.camera, steps[k].est_pose.tf, obs_cfg,
                                   sc.esdf_point_stride, map_clip);
    }

    UncertainTransform ut;  // identity with zero covariance on the first frame
    if (k > 0) ut = steps[k - 1].est_incremental;

    for (PolicyState& st : states) {
      if (st.selector.pipeline == Pipeline::kSfc) {
        st.corridor = step_corridor(st.corridor, ut, poly_obs, k);
      } else {
        step_esdf(st.esdf, ut, esdf_obs, steps[k].est_pose.tf, k);
      }
    }

    const bool metric_frame = (k % sc.metric_stride == 0) || k == sc.frames - 1;
    if (metric_frame) {
      for (std::size_t i = 0; i < states.size(); ++i) {
        report.policies[i].series.push_back(evaluate_policy(states[i], samples,
                                                            steps[k].true_pose, sc.env.bounds,
                                                            sc.seed, k, sc.volume_samples));
      }
    }
    if (snapshot && sc.snapshot_every > 0 && (k % sc.snapshot_every == 0 || k == sc.frames - 1)) {
      for (const PolicyState& st : states) {
        snapshot(st.selector, k,
                 st.selector.pipeline == Pipeline::kSfc ? &st.corridor : nullptr,
                 st.selector.pipeline == Pipeline::kEsdf ? &st.esdf : nullptr);
      }
    }
  }

  check_assertions(sc, report);
  return report;
}

inline ExperimentReport run_drive_experiment(const Scenario& sc, const SnapshotWriter& snapshot) {
  ExperimentReport report;
  report.scenario_echo = scenario_to_json(sc);

  const std::vector<Vec3> samples = surface_samples(sc.env, sc.surface_sample_spacing());
  if (samples.empty()) throw ScenarioError("scenario has no obstacle surface inside bounds");
  report.surface_sample_count = samples.size();

  const DriveScript& drive = *sc.drive;
  const double frame_dt = 1.0 / sc.fps;
  const std::vector<Halfspace> fov_clips = fov_clip_halfspaces(sc.camera);

  EsdfConfig obs_cfg;
  obs_cfg.voxel_size = sc.voxel_size;
  obs_cfg.truncation = sc.truncation;

  // Closed-loop runs diverge per policy (the filter shapes the motion), so
  // each policy drives its own rollout with its own noise stream index.
  for (std::size_t pi = 0; pi < sc.policies.size(); ++pi) {
    PolicyState st = make_policy_state(sc, sc.policies[pi]);
    PolicyResult result;
    result.selector = st.selector;
    DriveOutcome outcome;

    Rng rng = make_rng(sc.seed, RngStream::kTrajectoryNoise, pi);
    PlanarState state = drive.start;
    Transform true_pose = planar_camera_pose(state, drive.camera_height);
    Transform est_pose = Transform::identity();
    Transform prev_true = true_pose;

    const auto is_free = [&st](const Vec3& p_body) {
      if (st.selector.pipeline == Pipeline::kSfc) return corridor_contains(st.corridor, p_body);
      const auto d = st.esdf.query(p_body);
      return d.has_value() && *d > 0.0;
    };

    int blocked_streak = 0;
    for (int k = 0; k < sc.frames; ++k) {
      true_pose = planar_camera_pose(state, drive.camera_height);
      UncertainTransform ut;
      if (k > 0) {
        const Transform true_inc = prev_true.inverse() * true_pose;
        ut.mean = sample_perturbed(true_inc, sc.sigma, rng);
        ut.cov = sc.sigma;
        est_pose = est_pose * ut.mean;
      }
      prev_true = true_pose;

      const DepthImage depth = raycast_depth(sc.env, true_pose, sc.camera);
      if (st.selector.pipeline == Pipeline::kSfc) {
        PolytopeSeed ps;
        ps.seed = Vec3(0.0, 0.0, sc.sfc_seed_forward_offset);
        ps.obstacles = sfc_obstacle_points(depth, sc.camera);
        ps.bounds.min = ps.seed - Vec3::Constant(sc.sfc_bounds_halfwidth);
        ps.bounds.max = ps.seed + Vec3::Constant(sc.sfc_bounds_halfwidth);
        ps.clips = fov_clips;
        st.corridor = step_corridor(st.corridor, ut, ps, k);
      } else {
        const FrameObservation obs =
            build_observation(depth, sc.camera, est_pose, obs_cfg, sc.esdf_point_stride);
        step_esdf(st.esdf, ut, obs, est_pose, k);
      }

      // Scripted command for this frame, passed through the safety filter.
      double t = k * frame_dt;
      RobotCommand wanted;
      for (const DrivePhase& ph : drive.phases) {
        if (t < ph.duration) {
          wanted = ph.command;
          break;
        }
        t -= ph.duration;
      }
      const RobotCommand applied =
          safety_filter(wanted, is_free, drive.horizon, drive.dt, drive.angular_scale);
      if (wanted.linear != 0.0 && applied.linear == 0.0) {
        ++blocked_streak;
      } else {
        blocked_streak = 0;
      }
      state = advance_planar(state, applied, frame_dt);

      const double clearance =
          sc.env.signed_distance(Vec3(state.x, state.y, drive.camera_height));
      outcome.min_clearance = std::min(outcome.min_clearance, clearance);
      outcome.final_clearance = clearance;
      if (clearance <= 0.0) ++outcome.incursions;

      const bool metric_frame = (k % sc.metric_stride == 0) || k == sc.frames - 1;
      if (metric_frame) {
        result.series.push_back(evaluate_policy(st, samples, TruePose{true_pose}, sc.env.bounds,
                                                sc.seed, k, sc.volume_samples));
      }
      if (snapshot && sc.snapshot_every > 0 && (k % sc.snapshot_every == 0 || k == sc.frames - 1)) {
        snapshot(st.selector, k, st.selector.pipeline == Pipeline::kSfc ? &st.corridor : nullptr,
                 st.selector.pipeline == Pipeline::kEsdf ? &st.esdf : nullptr);
      }
    }
    outcome.blocked_tail_frames = blocked_streak;
    outcome.halted = outcome.incursions == 0 && blocked_streak >= static_cast<int>(0.5 * sc.fps);
    result.drive = outcome;
    report.policies.push_back(std::move(result));
  }

  check_assertions(sc, report);
  return report;
}

}  // namespace detail

/// Drive the configured scenario end to end: simulate, feed every policy's
/// map in lockstep (or closed loop for drive scenarios), and collect the
/// metric series. Deterministic for a fixed scenario.
inline ExperimentReport run_experiment(const Scenario& sc, const SnapshotWriter& snapshot = {}) {
  return sc.drive ? detail::run_drive_experiment(sc, snapshot)
                  : detail::run_waypoint_experiment(sc, snapshot);
}

inline Json report_to_json(const ExperimentReport& report) {
  Json j;
  j["scenario"] = report.scenario_echo;
  j["surface_sample_count"] = report.surface_sample_count;
  j["policies"] = Json::object();
  for (const PolicyResult& pr : report.policies) {
    Json p;
    p["series"] = Json::array();
    for (const MetricSample& s : pr.series) {
      p["series"].push_back({{"frame", s.frame},
                             {"violation_rate", s.violation_rate},
                             {"max_violation_m", s.max_violation},
                             {"free_volume_m3", s.free_volume}});
    }
    const MetricSample& s = pr.summary();
    p["summary"] = {{"frame", s.frame},
                    {"violation_rate", s.violation_rate},
                    {"max_violation_m", s.max_violation},
                    {"free_volume_m3", s.free_volume}};
    if (pr.drive) {
      p["drive"] = {{"incursions", pr.drive->incursions},
                    {"min_clearance_m", pr.drive->min_clearance},
                    {"final_clearance_m", pr.drive->final_clearance},
                    {"blocked_tail_frames", pr.drive->blocked_tail_frames},
                    {"halted", pr.drive->halted}};
    }
    j["policies"][pr.selector.name] = std::move(p);
  }
  j["assertion_failures"] = report.assertion_failures;
  return j;
}

/// Summary table, one row per policy, in the units used by the paper's
/// tables (percent / millimeters / cubic meters).
inline std::string summary_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "policy,violation_rate_pct,max_violation_mm,free_volume_m3\n";
  for (const PolicyResult& pr : report.policies) {
    const MetricSample& s = pr.summary();
    out << pr.selector.name << "," << format_double(s.violation_rate * 100.0) << ","
        << format_double(s.max_violation * 1000.0) << "," << format_double(s.free_volume) << "\n";
  }
  return out.str();
}

inline std::string series_csv(const PolicyResult& pr) {
  std::ostringstream out;
  out << "frame,violation_rate,max_violation_m,free_volume_m3\n";
  for (const MetricSample& s : pr.series) {
    out << s.frame << "," << format_double(s.violation_rate) << ","
        << format_double(s.max_violation) << "," << format_double(s.free_volume) << "\n";
  }
  return out.str();
}

}  // namespace certimap
