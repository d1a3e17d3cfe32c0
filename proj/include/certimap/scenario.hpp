#pragma once

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "certimap/camera.hpp"
#include "certimap/environment.hpp"
#include "certimap/safety.hpp"
#include "certimap/stats.hpp"
#include "certimap/trajectory.hpp"

namespace certimap {

using Json = nlohmann::ordered_json;

struct ScenarioError : std::runtime_error {
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

enum class Pipeline { kSfc, kEsdf };

struct PolicySelector {
  Pipeline pipeline;
  MapPolicy policy;
  std::string name;  // e.g. "sfc_certified"
};

inline const std::vector<std::string>& known_policy_names() {
  static const std::vector<std::string> names = {"sfc_baseline",  "sfc_heuristic",  "sfc_certified",
                                                 "esdf_baseline", "esdf_heuristic", "esdf_certified"};
  return names;
}

inline PolicySelector parse_policy_name(const std::string& name) {
  for (const std::string& known : known_policy_names()) {
    if (name != known) continue;
    PolicySelector sel;
    sel.name = name;
    sel.pipeline = name.rfind("sfc_", 0) == 0 ? Pipeline::kSfc : Pipeline::kEsdf;
    const std::string suffix = name.substr(name.find('_') + 1);
    sel.policy = suffix == "baseline"    ? MapPolicy::kBaseline
                 : suffix == "heuristic" ? MapPolicy::kHeuristic
                                         : MapPolicy::kCertified;
    return sel;
  }
  std::ostringstream msg;
  msg << "unknown policy '" << name << "'; valid policies are:";
  for (const std::string& known : known_policy_names()) msg << " " << known;
  throw ScenarioError(msg.str());
}

// Free-driving script for closed-loop runs: piecewise-constant commands fed
// through the safety filter against the selected map.
struct DrivePhase {
  double duration = 0.0;  // seconds
  RobotCommand command;
};

struct DriveScript {
  PlanarState start;
  double camera_height = 0.3;
  double horizon = 0.5;
  double dt = 0.05;
  double angular_scale = 0.5;
  std::vector<DrivePhase> phases;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 0;
  int frames = 100;
  double fps = 30.0;
  Environment env;
  CameraModel camera;

  std::vector<Waypoint> waypoints;       // waypoint mode when non-empty
  std::optional<DriveScript> drive;      // closed-loop mode otherwise

  Mat6 sigma = Mat6::Zero();
  double rho = 0.99;
  std::string kappa_spec = "auto97";
  double kappa = 0.0;  // resolved value

  std::vector<PolicySelector> policies;

  // ESDF pipeline parameters.
  double voxel_size = 0.02;
  double truncation = 0.5;
  int esdf_point_stride = 1;
  double esdf_heuristic_radius = 3.0;

  // SFC pipeline parameters.
  double sfc_bounds_halfwidth = 1.5;
  double sfc_seed_forward_offset = 0.05;
  int sfc_heuristic_window = 60;

  // Metric evaluation.
  int metric_stride = 10;
  std::size_t volume_samples = 200000;
  double surface_spacing = 0.0;  // 0 -> voxel_size / 2

  int snapshot_every = 0;  // 0 disables map snapshots

  std::map<std::string, double> assertions;

  double surface_sample_spacing() const {
    return surface_spacing > 0.0 ? surface_spacing : 0.5 * voxel_size;
  }
};

inline double resolve_kappa(const std::string& spec) {
  if (spec.rfind("auto", 0) == 0) {
    const double pct = std::stod(spec.substr(4));
    if (pct <= 0.0 || pct >= 100.0) throw ScenarioError("kappa: autoP needs P in (0, 100)");
    return chi2_quantile(3, pct / 100.0);
  }
  const double v = std::stod(spec);
  if (v <= 0.0) throw ScenarioError("kappa must be positive");
  return v;
}

namespace detail {

inline Vec3 vec3_field(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ScenarioError(where + ": expected [x, y, z]");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline Mat6 parse_sigma(const Json& noise) {
  Mat6 sigma = Mat6::Zero();
  if (noise.contains("sigma_diag")) {
    const auto& d = noise.at("sigma_diag");
    if (!d.is_array() || d.size() != 6) throw ScenarioError("noise.sigma_diag: expected 6 entries");
    for (int i = 0; i < 6; ++i) sigma(i, i) = d[i].get<double>();
  } else if (noise.contains("sigma_tril")) {
    const auto& t = noise.at("sigma_tril");
    if (!t.is_array() || t.size() != 21) throw ScenarioError("noise.sigma_tril: expected 21 entries");
    int n = 0;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c <= r; ++c) {
        sigma(r, c) = t[n].get<double>();
        sigma(c, r) = sigma(r, c);
        ++n;
      }
    }
  } else if (noise.contains("sigma_iso")) {
    sigma = noise.at("sigma_iso").get<double>() * Mat6::Identity();
  } else {
    throw ScenarioError("noise: need one of sigma_iso, sigma_diag, sigma_tril");
  }
  return sigma;
}

}  // namespace detail

inline Scenario scenario_from_json(const Json& j) {
  Scenario sc;
  try {
    sc.name = detail::get_or<std::string>(j, "name", "scenario");
    sc.seed = j.at("seed").get<std::uint64_t>();
    sc.frames = j.at("frames").get<int>();
    if (sc.frames < 1) throw ScenarioError("frames must be >= 1");
    sc.fps = detail::get_or<double>(j, "fps", 30.0);

    const Json& bounds = j.at("bounds");
    sc.env.bounds.min = detail::vec3_field(bounds.at("min"), "bounds.min");
    sc.env.bounds.max = detail::vec3_field(bounds.at("max"), "bounds.max");

    for (const Json& o : j.at("obstacles")) {
      const std::string type = o.at("type").get<std::string>();
      if (type == "box") {
        sc.env.obstacles.emplace_back(BoxObstacle{detail::vec3_field(o.at("min"), "box.min"),
                                                  detail::vec3_field(o.at("max"), "box.max")});
      } else if (type == "plane") {
        sc.env.obstacles.emplace_back(PlaneObstacle{
            detail::vec3_field(o.at("normal"), "plane.normal").normalized(),
            o.at("offset").get<double>()});
      } else {
        throw ScenarioError("obstacles: unknown type '" + type + "'");
      }
    }

    const Json& cam = j.at("camera");
    sc.camera = CameraModel::from_hfov(cam.at("width").get<int>(), cam.at("height").get<int>(),
                                       cam.at("hfov_deg").get<double>(),
                                       cam.at("min_range").get<double>(),
                                       cam.at("max_range").get<double>());

    const Json& noise = j.at("noise");
    sc.sigma = detail::parse_sigma(noise);
    sc.rho = detail::get_or<double>(noise, "rho", 0.99);

    if (j.at("kappa").is_string()) {
      sc.kappa_spec = j.at("kappa").get<std::string>();
    } else {
      sc.kappa_spec = std::to_string(j.at("kappa").get<double>());
    }
    sc.kappa = resolve_kappa(sc.kappa_spec);

    for (const Json& p : j.at("policies")) {
      sc.policies.push_back(parse_policy_name(p.get<std::string>()));
    }
    if (sc.policies.empty()) throw ScenarioError("policies: need at least one");

    const Json& traj = j.at("trajectory");
    const std::string mode = traj.at("mode").get<std::string>();
    if (mode == "waypoints") {
      for (const Json& w : traj.at("waypoints")) {
        if (!w.is_array() || w.size() != 4) {
          throw ScenarioError("trajectory.waypoints: expected [x, y, z, yaw]");
        }
        sc.waypoints.push_back(
            Waypoint{Vec3(w[0].get<double>(), w[1].get<double>(), w[2].get<double>()),
                     w[3].get<double>()});
      }
      if (sc.waypoints.size() < 2) throw ScenarioError("trajectory.waypoints: need at least two");
    } else if (mode == "drive") {
      DriveScript drive;
      const Json& start = traj.at("start");
      drive.start = PlanarState{start[0].get<double>(), start[1].get<double>(),
                                start[2].get<double>()};
      drive.camera_height = detail::get_or<double>(traj, "camera_height", 0.3);
      drive.horizon = detail::get_or<double>(traj, "horizon", 0.5);
      drive.dt = detail::get_or<double>(traj, "dt", 0.05);
      drive.angular_scale = detail::get_or<double>(traj, "angular_scale", 0.5);
      for (const Json& ph : traj.at("script")) {
        drive.phases.push_back(DrivePhase{ph.at("duration").get<double>(),
                                          RobotCommand{ph.at("linear").get<double>(),
                                                       ph.at("angular").get<double>()}});
      }
      if (drive.phases.empty()) throw ScenarioError("trajectory.script: need at least one phase");
      sc.drive = drive;
    } else {
      throw ScenarioError("trajectory.mode: expected 'waypoints' or 'drive'");
    }

    if (j.contains("esdf")) {
      const Json& e = j.at("esdf");
      sc.voxel_size = detail::get_or<double>(e, "voxel_size", sc.voxel_size);
      sc.truncation = detail::get_or<double>(e, "truncation", sc.truncation);
      sc.esdf_point_stride = detail::get_or<int>(e, "point_stride", sc.esdf_point_stride);
      sc.esdf_heuristic_radius = detail::get_or<double>(e, "heuristic_radius", sc.esdf_heuristic_radius);
    }
    if (j.contains("sfc")) {
      const Json& s = j.at("sfc");
      sc.sfc_bounds_halfwidth = detail::get_or<double>(s, "bounds_halfwidth", sc.sfc_bounds_halfwidth);
      sc.sfc_seed_forward_offset =
          detail::get_or<double>(s, "seed_forward_offset", sc.sfc_seed_forward_offset);
      sc.sfc_heuristic_window = detail::get_or<int>(s, "heuristic_window", sc.sfc_heuristic_window);
    }
    if (j.contains("metrics")) {
      const Json& m = j.at("metrics");
      sc.metric_stride = detail::get_or<int>(m, "stride", sc.metric_stride);
      sc.volume_samples = detail::get_or<std::size_t>(m, "volume_samples", sc.volume_samples);
      sc.surface_spacing = detail::get_or<double>(m, "surface_spacing", sc.surface_spacing);
    }
    if (j.contains("snapshots")) {
      sc.snapshot_every = detail::get_or<int>(j.at("snapshots"), "every", 0);
    }
    if (j.contains("assertions")) {
      for (const auto& [key, value] : j.at("assertions").items()) {
        sc.assertions[key] = value.get<double>();
      }
    }

    if (sc.voxel_size <= 0.0) throw ScenarioError("esdf.voxel_size must be positive");
    if (sc.truncation <= sc.voxel_size) throw ScenarioError("esdf.truncation must exceed voxel_size");
    if (sc.esdf_point_stride < 1) throw ScenarioError("esdf.point_stride must be >= 1");
    if (sc.metric_stride < 1) throw ScenarioError("metrics.stride must be >= 1");
  } catch (const Json::exception& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  return sc;
}

/// Serialize the fully resolved configuration (defaults applied, kappa
/// resolved). Reports embed this echo; loading it back reproduces the run.
inline Json scenario_to_json(const Scenario& sc) {
  Json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["frames"] = sc.frames;
  j["fps"] = sc.fps;
  j["bounds"] = {{"min", {sc.env.bounds.min.x(), sc.env.bounds.min.y(), sc.env.bounds.min.z()}},
                 {"max", {sc.env.bounds.max.x(), sc.env.bounds.max.y(), sc.env.bounds.max.z()}}};
  j["obstacles"] = Json::array();
  for (const Obstacle& o : sc.env.obstacles) {
    if (const auto* box = std::get_if<BoxObstacle>(&o)) {
      j["obstacles"].push_back({{"type", "box"},
                                {"min", {box->min.x(), box->min.y(), box->min.z()}},
                                {"max", {box->max.x(), box->max.y(), box->max.z()}}});
    } else {
      const auto& plane = std::get<PlaneObstacle>(o);
      j["obstacles"].push_back({{"type", "plane"},
                                {"normal", {plane.normal.x(), plane.normal.y(), plane.normal.z()}},
                                {"offset", plane.offset}});
    }
  }
  j["camera"] = {{"width", sc.camera.width},   {"height", sc.camera.height},
                 {"hfov_deg", 2.0 * std::atan(0.5 * sc.camera.width / sc.camera.fx) * 180.0 / M_PI},
                 {"min_range", sc.camera.min_range}, {"max_range", sc.camera.max_range}};
  std::vector<double> tril;
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c <= r; ++c) tril.push_back(sc.sigma(r, c));
  }
  j["noise"] = {{"sigma_tril", tril}, {"rho", sc.rho}};
  j["kappa"] = sc.kappa_spec;
  j["kappa_resolved"] = sc.kappa;
  j["policies"] = Json::array();
  for (const PolicySelector& p : sc.policies) j["policies"].push_back(p.name);
  if (!sc.waypoints.empty()) {
    Json wps = Json::array();
    for (const Waypoint& w : sc.waypoints) {
      wps.push_back({w.position.x(), w.position.y(), w.position.z(), w.yaw});
    }
    j["trajectory"] = {{"mode", "waypoints"}, {"waypoints", wps}};
  } else if (sc.drive) {
    Json script = Json::array();
    for (const DrivePhase& ph : sc.drive->phases) {
      script.push_back({{"duration", ph.duration},
                        {"linear", ph.command.linear},
                        {"angular", ph.command.angular}});
    }
    j["trajectory"] = {{"mode", "drive"},
                       {"start", {sc.drive->start.x, sc.drive->start.y, sc.drive->start.theta}},
                       {"camera_height", sc.drive->camera_height},
                       {"horizon", sc.drive->horizon},
                       {"dt", sc.drive->dt},
                       {"angular_scale", sc.drive->angular_scale},
                       {"script", script}};
  }
  j["esdf"] = {{"voxel_size", sc.voxel_size},
               {"truncation", sc.truncation},
               {"point_stride", sc.esdf_point_stride},
               {"heuristic_radius", sc.esdf_heuristic_radius}};
  j["sfc"] = {{"bounds_halfwidth", sc.sfc_bounds_halfwidth},
              {"seed_forward_offset", sc.sfc_seed_forward_offset},
              {"heuristic_window", sc.sfc_heuristic_window}};
  j["metrics"] = {{"stride", sc.metric_stride},
                  {"volume_samples", sc.volume_samples},
                  {"surface_spacing", sc.surface_spacing}};
  j["snapshots"] = {{"every", sc.snapshot_every}};
  if (!sc.assertions.empty()) {
    Json a;
    for (const auto& [key, value] : sc.assertions) a[key] = value;
    j["assertions"] = a;
  }
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ScenarioError(std::string("scenario parse error in ") + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace certimap
