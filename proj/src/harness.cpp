#include "levyrds/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "levyrds/attractors.hpp"
#include "levyrds/linearization.hpp"

namespace levyrds {

namespace fs = std::filesystem;

bool RunManifest::all_passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw ParameterError("cannot create directory: " + path);
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open for checksum: " + path);
  char buf[8192];
  std::uint64_t h = 0xcbf29ce484222325ULL;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

void write_plot_script(const std::string& gp_file, const std::string& csv_file,
                       const std::string& title, int x_col, int y_col,
                       bool logscale_y) {
  std::ofstream out(gp_file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + gp_file);
  out << "set datafile separator ','\n";
  out << "set key autotitle columnhead\n";
  out << "set title '" << title << "'\n";
  if (logscale_y) out << "set logscale xy\n";
  out << "plot '" << csv_file << "' using " << x_col << ':' << y_col
      << " with linespoints\n";
  out << "pause -1\n";
}

// ---------------------------------------------------------------------------
// builtin systems
// ---------------------------------------------------------------------------

namespace {

SystemSpec build_ito_system(const SystemConfig& cfg) {
  if (cfg.name == "linear-1d") return linear_system_1d(cfg.beta);
  if (cfg.name == "scalar-hartman") {
    double beta = cfg.alpha + 0.5 * cfg.sigma_param * cfg.sigma_param;
    std::vector<double> drift(static_cast<std::size_t>(cfg.l) + 1, 0.0);
    drift[1] = beta;
    drift[static_cast<std::size_t>(cfg.l)] = -1.0;
    return scalar_poly_system(drift, {0.0, 1.0});
  }
  if (cfg.name == "custom") {
    if (cfg.drift_poly.empty() || cfg.sigma_poly.empty())
      throw ConfigError("custom system needs drift_poly and sigma_poly");
    return scalar_poly_system(cfg.drift_poly, cfg.sigma_poly);
  }
  throw ConfigError("system '" + cfg.name + "' is not an ito system");
}

MarcusSystem build_marcus_system(const SystemConfig& cfg) {
  if (cfg.name == "affine-marcus") {
    MarcusSystem sys;
    sys.flow_map = FlowMap::closed_form_linear(
        {Mat::Constant(1, 1, cfg.sigma_bar)}, {Vec::Constant(1, cfg.beta_off)});
    double cubic = cfg.cubic;
    sys.drift = [cubic](const Vec& x) {
      return Vec(Vec::Constant(1, -cubic * x[0] * x[0] * x[0]));
    };
    sys.drift_jacobian = [cubic](const Vec& x) {
      return Mat(Mat::Constant(1, 1, -3.0 * cubic * x[0] * x[0]));
    };
    sys.commutativity_certified = true;
    return sys;
  }
  if (cfg.name == "duffing-van-der-pol")
    return duffing_van_der_pol_system(cfg.gamma1, cfg.gamma2, cfg.sigma1,
                                      cfg.sigma2)
        .system;
  throw ConfigError("system '" + cfg.name + "' is not a marcus system");
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

void experiment_simulate_levy(const ExperimentConfig& cfg, RunManifest& manifest) {
  auto triplet = cfg.triplet.build();
  auto path = TwoSidedPath::sample(triplet, cfg.numeric.t_min, cfg.numeric.t_max,
                                   cfg.numeric.dt, cfg.seed);
  std::string csv = cfg.out_dir + "/path.csv";
  write_path_csv(csv, path_to_rows(path));
  write_plot_script(cfg.out_dir + "/path.gp", "path.csv", "levy path", 1, 2,
                    false);
  manifest.outputs.emplace_back(csv, file_checksum(csv));

  auto rows = read_path_csv(csv);
  std::string csv2 = cfg.out_dir + "/path_roundtrip.csv";
  write_path_csv(csv2, rows);
  bool roundtrip = file_checksum(csv) == file_checksum(csv2);
  manifest.outputs.emplace_back(csv2, file_checksum(csv2));
  manifest.checks.push_back({"csv round-trip", roundtrip, 0.0, ""});
}

void experiment_ito_conjugacy(const ExperimentConfig& cfg, RunManifest& manifest) {
  auto triplet = cfg.triplet.build();
  auto system = build_ito_system(cfg.system);
  auto path = TwoSidedPath::sample(triplet, cfg.numeric.t_min, cfg.numeric.t_max,
                                   cfg.numeric.dt, cfg.seed);
  TimeGrid grid(path, cfg.numeric.dt, -cfg.numeric.tail_horizon,
                cfg.numeric.t_end);
  AnchorLattice anchors = AnchorLattice::line(cfg.numeric.anchors);
  CohomologyBuildOptions opts;
  opts.T_h = cfg.numeric.tail_horizon;
  opts.newton_tol = cfg.numeric.newton_tol;
  opts.t_hi = cfg.numeric.t_end;

  auto field = build_cohomology(system, grid, anchors, opts);
  std::string field_csv = cfg.out_dir + "/cohomology.csv";
  write_cohomology_csv(field_csv, field);
  manifest.outputs.emplace_back(field_csv, file_checksum(field_csv));

  auto series = verify_conjugacy_ito(system, grid, anchors,
                                     Vec::Constant(1, cfg.numeric.x0),
                                     cfg.numeric.t_end, opts);
  std::string resid_csv = cfg.out_dir + "/residual.csv";
  write_residual_csv(resid_csv, series);
  write_plot_script(cfg.out_dir + "/residual.gp", "residual.csv",
                    "conjugacy residual", 1, 2, false);
  manifest.outputs.emplace_back(resid_csv, file_checksum(resid_csv));
  double max_r = series.max();
  manifest.checks.push_back({"conjugacy residual below tol",
                             max_r <= cfg.numeric.tol, cfg.numeric.tol - max_r,
                             "max residual " + std::to_string(max_r)});
}

void experiment_marcus_conjugacy(const ExperimentConfig& cfg,
                                 RunManifest& manifest) {
  auto triplet = cfg.triplet.build();
  auto sys = build_marcus_system(cfg.system);
  auto path = TwoSidedPath::sample(triplet, cfg.numeric.t_min, cfg.numeric.t_max,
                                   cfg.numeric.dt, cfg.seed);
  TimeGrid grid(path, cfg.numeric.dt, -cfg.numeric.tail_horizon,
                cfg.numeric.t_end);
  auto ou = ou_path(grid, cfg.numeric.mu, cfg.numeric.tail_horizon);
  std::string ou_csv = cfg.out_dir + "/ou.csv";
  write_ou_csv(ou_csv, ou);
  manifest.outputs.emplace_back(ou_csv, file_checksum(ou_csv));

  auto report = verify_conjugacy_marcus(sys, grid,
                                        Vec::Constant(1, cfg.numeric.x0),
                                        cfg.numeric.t_end, cfg.numeric.mu,
                                        cfg.numeric.tail_horizon);
  std::string resid_csv = cfg.out_dir + "/residual.csv";
  write_residual_csv(resid_csv, report.residuals);
  write_plot_script(cfg.out_dir + "/residual.gp", "residual.csv",
                    "marcus conjugacy residual", 1, 2, false);
  manifest.outputs.emplace_back(resid_csv, file_checksum(resid_csv));
  double max_r = report.residuals.max();
  manifest.checks.push_back({"marcus conjugacy residual below tol",
                             max_r <= cfg.numeric.tol, cfg.numeric.tol - max_r,
                             "max residual " + std::to_string(max_r)});
}

void experiment_attractor(const ExperimentConfig& cfg, RunManifest& manifest) {
  auto model = duffing_van_der_pol_system(cfg.system.gamma1, cfg.system.gamma2,
                                          cfg.system.sigma1, cfg.system.sigma2);
  TripletConfig tc = cfg.triplet;
  if (tc.dim != 2)
    throw ConfigError("attractor experiment needs a 2-dimensional triplet");
  auto triplet = tc.build();
  const double dt = cfg.numeric.dt, mu = cfg.numeric.mu;
  auto path = TwoSidedPath::sample(triplet, cfg.numeric.t_min, cfg.numeric.t_max,
                                   dt, cfg.seed);
  double grid_lo = cfg.numeric.t_min + 2.0;  // room for the shift window
  auto grid =
      std::make_shared<TimeGrid>(path, dt, grid_lo, cfg.numeric.t_max - 0.5);
  auto coh = build_marcus_cohomology(model.system.flow_map,
                                     ou_path(*grid, mu, -grid_lo));

  RdeField F = [&](double t, const Vec& y) {
    std::size_t ti = coh.time_index(t);
    Vec hy = coh.H(ti, y);
    Vec rhs = model.system.drift(hy);
    const Vec& z = coh.ou().trajectory[ti];
    for (int i = 0; i < model.system.flow_map.noise_count(); ++i)
      rhs += mu * model.system.flow_map.sigma_field(i, hy) * z[i];
    return coh.solve_dHdx(ti, y, rhs);
  };
  auto psi = make_rde_cocycle(F, grid);

  PullbackParams params;
  params.ball_radius = cfg.numeric.ball_radius;
  params.center = Vec::Zero(2);
  params.n_points = cfg.numeric.n_points;
  double t_deep = std::min(-grid_lo - cfg.numeric.tail_horizon, 20.0);
  for (int k = 1; k <= 10; ++k) params.t_schedule.push_back(t_deep * k / 10.0);
  params.tol = cfg.numeric.tol;

  auto run = estimate_attractor(psi, params);
  std::string clouds_csv = cfg.out_dir + "/clouds.csv";
  std::string summary_csv = cfg.out_dir + "/summary.csv";
  write_cloud_csv(clouds_csv, run);
  write_run_summary_csv(summary_csv, run);
  write_plot_script(cfg.out_dir + "/summary.gp", "summary.csv",
                    "pullback summary", 1, 3, true);
  manifest.outputs.emplace_back(clouds_csv, file_checksum(clouds_csv));
  manifest.outputs.emplace_back(summary_csv, file_checksum(summary_csv));
  manifest.checks.push_back(
      {"pullback converged", run.converged,
       run.successive_hausdorff.empty()
           ? 0.0
           : cfg.numeric.tol - run.successive_hausdorff.back(),
       ""});

  AnnulusGrid annulus{5.0, 50.0, 8, 128};
  try {
    auto scan = verify_lyapunov(model.certificate, model.system.drift, 2, annulus);
    std::ofstream rep(cfg.out_dir + "/certificate.txt");
    rep << "alpha_hat = " << scan.alpha_hat << "\n";
    rep << "eta_hat = " << scan.eta_hat << "\n";
    rep << "pass = " << (scan.eta_hat > 0 ? "yes" : "no") << "\n";
    manifest.checks.push_back({"certificate eta_hat > 0", scan.eta_hat > 0,
                               scan.eta_hat, ""});
  } catch (const CertificateError& ex) {
    manifest.checks.push_back({"certificate eta_hat > 0", false, 0.0, ex.what()});
  }
}

void experiment_linearize(const ExperimentConfig& cfg, RunManifest& manifest) {
  auto system = build_ito_system(cfg.system);
  auto linsys = linearize(system);
  auto triplet = cfg.triplet.build();

  LyapunovOptions lopts;
  lopts.T = std::max(100.0, cfg.numeric.t_max);
  lopts.dt = std::max(cfg.numeric.dt, 0.05);
  lopts.n_samples = cfg.numeric.n_samples;
  auto spec = lyapunov_exponents(linsys, triplet, lopts, cfg.seed);
  std::string spec_csv = cfg.out_dir + "/spectrum.csv";
  write_spectrum_csv(spec_csv, spec);
  manifest.outputs.emplace_back(spec_csv, file_checksum(spec_csv));
  manifest.checks.push_back(
      {"hyperbolic spectrum", spec.hyperbolic(),
       spec.exponents.empty() ? 0.0 : std::abs(spec.exponents[0]), ""});

  LevyTriplet silent;
  silent.dim = 1;
  silent.drift = Vec::Zero(1);
  silent.diffusion = Mat::Zero(1, 0);
  auto quiet = TwoSidedPath::sample(silent, -cfg.numeric.dt, 1.0,
                                    cfg.numeric.dt, cfg.seed);
  TimeGrid quiet_grid(quiet, cfg.numeric.dt, 0.0, 1.0);
  auto suite = scalar_example_suite(cfg.system.alpha, cfg.system.sigma_param,
                                    cfg.system.l, quiet_grid, 1.0,
                                    {1e-1, 1e-2, 1e-3, 1e-4});
  std::ofstream rep(cfg.out_dir + "/scalar_suite.txt");
  rep << "beta = " << suite.beta << "\n";
  rep << "zero fixed (nonlinear/linear) = " << suite.zero_fixed_nonlinear << "/"
      << suite.zero_fixed_linear << "\n";
  rep << "agreement ratios:";
  for (double r : suite.agreement_ratio) rep << ' ' << r;
  rep << "\nlinear exponent = " << suite.linear_exponent << "\n";
  if (!suite.note.empty()) rep << "note: " << suite.note << "\n";
  manifest.checks.push_back({"scalar ladder decreasing", suite.ratios_decreasing,
                             0.0, suite.note});
}

}  // namespace

RunManifest run(const ExperimentConfig& config) {
  auto start = std::chrono::steady_clock::now();
  ensure_directory(config.out_dir);

  RunManifest manifest;
  manifest.kind = kind_name(config.kind);
  manifest.seed = config.seed;
  manifest.code_version = kVersion;
  manifest.config_echo = dump_config(config);

  switch (config.kind) {
    case ExperimentKind::simulate_levy:
      experiment_simulate_levy(config, manifest);
      break;
    case ExperimentKind::ito_conjugacy:
      experiment_ito_conjugacy(config, manifest);
      break;
    case ExperimentKind::marcus_conjugacy:
      experiment_marcus_conjugacy(config, manifest);
      break;
    case ExperimentKind::attractor:
      experiment_attractor(config, manifest);
      break;
    case ExperimentKind::linearize:
      experiment_linearize(config, manifest);
      break;
    case ExperimentKind::verify_all: {
      auto results = run_acceptance(config.seed, config.out_dir);
      for (const auto& r : results)
        manifest.checks.push_back({"criterion " + std::to_string(r.id) + ": " +
                                       r.name,
                                   r.passed, r.measured, r.detail});
      break;
    }
  }

  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_manifest(config.out_dir + "/manifest.txt", manifest);
  return manifest;
}

void write_manifest(const std::string& file, const RunManifest& manifest) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  out << "# levy-rds run manifest\n";
  out << "kind = " << manifest.kind << '\n';
  out << "seed = " << manifest.seed << '\n';
  out << "code_version = " << manifest.code_version << '\n';
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", manifest.wall_time_s);
  out << "wall_time_s = " << buf << '\n';
  out << "[checks]\n";
  for (const auto& c : manifest.checks) {
    std::snprintf(buf, sizeof(buf), "%.6g", c.margin);
    out << (c.passed ? "pass" : "FAIL") << " | " << c.name << " | margin "
        << buf;
    if (!c.detail.empty()) out << " | " << c.detail;
    out << '\n';
  }
  out << "[outputs]\n";
  for (const auto& [path, hash] : manifest.outputs) {
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash));
    out << path << " fnv1a=" << buf << '\n';
  }
  out << "[config]\n" << manifest.config_echo;
}

bool validate_manifest(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return false;
  std::string line;
  bool in_outputs = false;
  while (std::getline(in, line)) {
    if (line == "[outputs]") {
      in_outputs = true;
      continue;
    }
    if (!line.empty() && line.front() == '[' && line != "[outputs]")
      in_outputs = false;
    if (!in_outputs || line.empty()) continue;
    auto pos = line.rfind(" fnv1a=");
    if (pos == std::string::npos) return false;
    std::string path = line.substr(0, pos);
    std::uint64_t expected =
        std::strtoull(line.substr(pos + 7).c_str(), nullptr, 16);
    try {
      if (file_checksum(path) != expected) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  return true;
}

}  // namespace levyrds
