#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "certimap/eval.hpp"
#include "certimap/io.hpp"
#include "certimap/scenario.hpp"
#include "certimap/stats.hpp"

namespace fs = std::filesystem;
using namespace certimap;

namespace {

struct Overrides {
  double sigma_iso = -1.0;
  std::vector<double> sigma_diag;
  std::string kappa;
  std::int64_t seed = -1;
  double voxel_size = -1.0;
  std::vector<std::string> policies;
  int snapshot_every = -1;
  int frames = -1;
};

Scenario load_scenario_or_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ScenarioError(std::string("parse error in ") + path + ": " + e.what());
  }
  // A report embeds its resolved scenario; accept either form so a run can
  // be reproduced straight from its own output.
  if (j.contains("scenario") && j.contains("policies") && j["policies"].is_object()) {
    return scenario_from_json(j["scenario"]);
  }
  return scenario_from_json(j);
}

Scenario apply_overrides(Scenario sc, const Overrides& ov) {
  if (ov.sigma_iso >= 0.0) sc.sigma = ov.sigma_iso * Mat6::Identity();
  if (!ov.sigma_diag.empty()) {
    if (ov.sigma_diag.size() != 6) throw ScenarioError("--sigma-diag needs 6 values");
    sc.sigma = Mat6::Zero();
    for (int i = 0; i < 6; ++i) sc.sigma(i, i) = ov.sigma_diag[static_cast<std::size_t>(i)];
  }
  if (!ov.kappa.empty()) {
    sc.kappa_spec = ov.kappa;
    sc.kappa = resolve_kappa(ov.kappa);
  }
  if (ov.seed >= 0) sc.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.voxel_size > 0.0) sc.voxel_size = ov.voxel_size;
  if (!ov.policies.empty()) {
    sc.policies.clear();
    for (const std::string& name : ov.policies) sc.policies.push_back(parse_policy_name(name));
  }
  if (ov.snapshot_every >= 0) sc.snapshot_every = ov.snapshot_every;
  if (ov.frames > 0) sc.frames = ov.frames;
  return sc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void print_summary(const ExperimentReport& report) {
  std::printf("%-16s %18s %18s %16s\n", "policy", "violation_rate_pct", "max_violation_mm",
              "free_volume_m3");
  for (const PolicyResult& pr : report.policies) {
    const MetricSample& s = pr.summary();
    std::printf("%-16s %18.4f %18.2f %16.3f\n", pr.selector.name.c_str(),
                s.violation_rate * 100.0, s.max_violation * 1000.0, s.free_volume);
    if (pr.drive) {
      std::printf("    drive: incursions=%d min_clearance=%.3f m blocked_tail=%d halted=%s\n",
                  pr.drive->incursions, pr.drive->min_clearance, pr.drive->blocked_tail_frames,
                  pr.drive->halted ? "yes" : "no");
    }
  }
}

int write_report_files(const ExperimentReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "report.json", report_to_json(report).dump(2) + "\n");
  write_text(fs::path(out_dir) / "summary.csv", summary_csv(report));
  for (const PolicyResult& pr : report.policies) {
    write_text(fs::path(out_dir) / ("series_" + pr.selector.name + ".csv"), series_csv(pr));
  }
  print_summary(report);
  if (!report.assertion_failures.empty()) {
    for (const std::string& msg : report.assertion_failures) {
      std::cerr << "ASSERTION: " << msg << "\n";
    }
    return 1;
  }
  return 0;
}

SnapshotWriter make_snapshot_writer(const std::string& out_dir) {
  return [out_dir](const PolicySelector& sel, int frame, const CorridorMap* corridor,
                   const CertifiedEsdfMap* esdf) {
    fs::create_directories(fs::path(out_dir) / "snapshots");
    std::ostringstream stem;
    stem << sel.name << "_" << std::setw(6) << std::setfill('0') << frame;
    const fs::path base = fs::path(out_dir) / "snapshots" / stem.str();
    if (corridor) write_corridor_snapshot(base.string() + ".json", *corridor);
    if (esdf) write_esdf_snapshot(base.string() + ".bin", *esdf);
  };
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir, const Overrides& ov) {
  const Scenario sc = apply_overrides(load_scenario_or_report(scenario_path), ov);
  const SnapshotWriter writer = sc.snapshot_every > 0 ? make_snapshot_writer(out_dir)
                                                      : SnapshotWriter{};
  const ExperimentReport report = run_experiment(sc, writer);
  return write_report_files(report, out_dir);
}

int cmd_sweep(const std::string& scenario_path, const std::string& out_dir,
              const std::vector<double>& sigma_list, const Overrides& ov) {
  const Scenario base = apply_overrides(load_scenario_or_report(scenario_path), ov);
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "sigma2,policy,violation_rate_pct,max_violation_mm,free_volume_m3\n";
  bool any_failure = false;
  for (const double sigma2 : sigma_list) {
    Scenario sc = base;
    sc.sigma = sigma2 * Mat6::Identity();
    const ExperimentReport report = run_experiment(sc);
    std::ostringstream tag;
    tag << "sigma2_" << format_double(sigma2);
    const int rc = write_report_files(report, (fs::path(out_dir) / tag.str()).string());
    any_failure = any_failure || rc != 0;
    for (const PolicyResult& pr : report.policies) {
      const MetricSample& s = pr.summary();
      csv << format_double(sigma2) << "," << pr.selector.name << ","
          << format_double(s.violation_rate * 100.0) << ","
          << format_double(s.max_violation * 1000.0) << "," << format_double(s.free_volume)
          << "\n";
    }
  }
  write_text(fs::path(out_dir) / "sweep.csv", csv.str());
  return any_failure ? 1 : 0;
}

int cmd_validate(const std::string& scenario_path) {
  const Scenario sc = load_scenario_or_report(scenario_path);
  std::cout << "scenario '" << sc.name << "': " << sc.frames << " frames, "
            << sc.policies.size() << " policies, kappa=" << sc.kappa
            << " (spec " << sc.kappa_spec << "), seed=" << sc.seed << "\n";
  return 0;
}

int oracle_chi2(int dof, double p) {
  std::printf("%.6f\n", chi2_quantile(dof, p));
  return 0;
}

// Monte-Carlo estimate of the Assumption-1 containment probability: draw
// tau ~ N(0, sigma), map a fixed point through T_hat Exp(tau), count how
// often the image lands inside the kappa-truncation ellipsoid.
int oracle_containment(double sigma_iso, double kappa, std::size_t n, std::uint64_t seed) {
  UncertainTransform ut;
  ut.mean = exp_se3(Twist{Vec3(0.3, -0.2, 0.5), Vec3(0.2, 0.1, -0.3)});
  ut.cov = sigma_iso * Mat6::Identity();
  const Vec3 p_source(1.0, 0.5, -0.2);
  const Ellipsoid ell = point_covariance(ut, p_source, kappa);
  Rng rng = make_rng(seed, RngStream::kOracle);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Transform t = sample_perturbed(ut.mean, ut.cov, rng);
    if (ell.contains(t.act(p_source))) ++inside;
  }
  std::printf("%.6f\n", static_cast<double>(inside) / static_cast<double>(n));
  return 0;
}

int oracle_esdf(int grid, const std::string& points_path, double voxel, const std::string& out) {
  std::ifstream in(points_path);
  if (!in) throw std::runtime_error("cannot open " + points_path);
  const Json j = Json::parse(in);
  std::vector<Vec3> pts;
  for (const auto& row : j) pts.emplace_back(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());

  std::ostringstream csv;
  csv << "i,j,k,distance\n";
  for (int i = 0; i < grid; ++i) {
    for (int jdx = 0; jdx < grid; ++jdx) {
      for (int k = 0; k < grid; ++k) {
        const Vec3 c = voxel * Vec3(i + 0.5, jdx + 0.5, k + 0.5);
        double best = std::numeric_limits<double>::infinity();
        bool occupied = false;
        for (const Vec3& p : pts) {
          best = std::min(best, (p - c).norm());
          occupied = occupied ||
                     (std::floor(p.x() / voxel) == i && std::floor(p.y() / voxel) == jdx &&
                      std::floor(p.z() / voxel) == k);
        }
        csv << i << "," << jdx << "," << k << "," << format_double(occupied ? -best : best) << "\n";
      }
    }
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
  }
  return 0;
}

// Fine-stepped ray marching against the analytic environment; a slow
// reference for the closed-form raycaster.
int oracle_raymarch(const std::string& scenario_path, const std::vector<double>& pose_vals,
                    double step, int stride, const std::string& out) {
  const Scenario sc = load_scenario_or_report(scenario_path);
  const Transform pose = planar_camera_pose(
      PlanarState{pose_vals[0], pose_vals[1], pose_vals[3]}, pose_vals[2]);
  std::ostringstream csv;
  csv << "u,v,depth\n";
  for (int v = 0; v < sc.camera.height; v += stride) {
    for (int u = 0; u < sc.camera.width; u += stride) {
      const Vec3 dir = pose.R * sc.camera.pixel_ray(u, v);
      double hit = std::numeric_limits<double>::infinity();
      for (double z = sc.camera.min_range; z <= sc.camera.max_range; z += step) {
        if (sc.env.in_obstacle(pose.t + z * dir)) {
          hit = z;
          break;
        }
      }
      csv << u << "," << v << "," << format_double(hit) << "\n";
    }
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
  }
  return 0;
}

int oracle_volume(const std::string& polytope_path, std::size_t n, std::uint64_t seed) {
  std::ifstream in(polytope_path);
  if (!in) throw std::runtime_error("cannot open " + polytope_path);
  const Polytope poly = polytope_from_json(Json::parse(in));
  Rng rng = make_rng(seed, RngStream::kOracle);
  std::printf("%.9f\n", polytope_volume_mc(poly, n, rng));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certimap: certified obstacle mapping under odometry drift"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out";
  Overrides ov;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "scenario JSON (or a report.json to reproduce)")
        ->required();
    cmd->add_option("--sigma", ov.sigma_iso, "override noise with sigma^2 * I");
    cmd->add_option("--sigma-diag", ov.sigma_diag, "override noise diagonal (6 values)");
    cmd->add_option("--kappa", ov.kappa, "override kappa (number or autoP, e.g. auto97)");
    cmd->add_option("--seed", ov.seed, "override root seed");
    cmd->add_option("--voxel-size", ov.voxel_size, "override ESDF voxel size");
    cmd->add_option("--policies", ov.policies, "override policy list");
    cmd->add_option("--snapshot-every", ov.snapshot_every, "map snapshot cadence (frames)");
    cmd->add_option("--frames", ov.frames, "override frame count");
  };

  CLI::App* run = app.add_subcommand("run", "run one scenario and write the report");
  add_common(run);
  run->add_option("--out", out_dir, "output directory");

  CLI::App* sweep = app.add_subcommand("sweep", "run a covariance sweep (sigma^2 * I)");
  add_common(sweep);
  sweep->add_option("--out", out_dir, "output directory");
  std::vector<double> sigma_list;
  sweep->add_option("--sigma-list", sigma_list, "sigma^2 values")->required();

  CLI::App* validate = app.add_subcommand("validate", "validate a scenario file");
  validate->add_option("--scenario", scenario_path, "scenario JSON")->required();

  CLI::App* oracle = app.add_subcommand("oracle", "standalone brute-force oracles");
  oracle->require_subcommand(1);

  int dof = 3;
  double prob = 0.97;
  CLI::App* chi2 = oracle->add_subcommand("chi2", "chi-squared quantile");
  chi2->add_option("--dof", dof);
  chi2->add_option("--p", prob);

  double o_sigma = 1e-6, o_kappa = 8.9473;
  std::size_t o_n = 100000;
  std::uint64_t o_seed = 7;
  CLI::App* containment = oracle->add_subcommand("containment", "Monte-Carlo ellipsoid containment");
  containment->add_option("--sigma", o_sigma, "isotropic sigma^2");
  containment->add_option("--kappa", o_kappa);
  containment->add_option("--n", o_n);
  containment->add_option("--seed", o_seed);

  int grid = 16;
  double o_voxel = 0.05;
  std::string points_path, oracle_out;
  CLI::App* esdf = oracle->add_subcommand("esdf", "brute-force signed distances on a grid");
  esdf->add_option("--grid", grid);
  esdf->add_option("--points", points_path, "JSON list of [x,y,z]")->required();
  esdf->add_option("--voxel", o_voxel);
  esdf->add_option("--out", oracle_out);

  std::vector<double> pose_vals{0.0, 0.0, 0.3, 0.0};
  double march_step = 1e-4;
  int march_stride = 8;
  CLI::App* raymarch = oracle->add_subcommand("raymarch", "fine-step ray marching depth image");
  raymarch->add_option("--scenario", scenario_path)->required();
  raymarch->add_option("--pose", pose_vals, "x y height yaw")->expected(4);
  raymarch->add_option("--step", march_step);
  raymarch->add_option("--stride", march_stride);
  raymarch->add_option("--out", oracle_out);

  std::string polytope_path;
  CLI::App* volume = oracle->add_subcommand("volume", "Monte-Carlo polytope volume");
  volume->add_option("--polytope", polytope_path, "polytope JSON")->required();
  volume->add_option("--n", o_n);
  volume->add_option("--seed", o_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, out_dir, ov);
    if (sweep->parsed()) return cmd_sweep(scenario_path, out_dir, sigma_list, ov);
    if (validate->parsed()) return cmd_validate(scenario_path);
    if (oracle->parsed()) {
      if (chi2->parsed()) return oracle_chi2(dof, prob);
      if (containment->parsed()) return oracle_containment(o_sigma, o_kappa, o_n, o_seed);
      if (esdf->parsed()) return oracle_esdf(grid, points_path, o_voxel, oracle_out);
      if (raymarch->parsed()) {
        return oracle_raymarch(scenario_path, pose_vals, march_step, march_stride, oracle_out);
      }
      if (volume->parsed()) return oracle_volume(polytope_path, o_n, o_seed);
    }
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
