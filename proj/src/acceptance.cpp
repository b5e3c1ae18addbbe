#include "levyrds/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include "levyrds/attractors.hpp"
#include "levyrds/harness.hpp"
#include "levyrds/linearization.hpp"

namespace levyrds {

namespace {

using Clock = std::chrono::steady_clock;

struct SuiteContext {
  std::uint64_t seed;
  std::string dir;
  std::vector<std::string> csv_files;  // relative names, for determinism diffs

  std::string csv(const std::string& name) {
    csv_files.push_back(name);
    return dir + "/" + name;
  }
};

void write_convergence_csv(const std::string& file,
                           const std::vector<double>& steps,
                           const std::vector<double>& errors) {
  std::ofstream out(file, std::ios::binary);
  out << "dt,error\n";
  char buf[64];
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", steps[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", errors[i]);
    out << buf << '\n';
  }
}

LevyTriplet two_point_driver(double b, double a, double rate, double u1,
                             double u2, bool compensate = false) {
  Vec v1 = Vec::Constant(1, u1);
  Vec v2 = Vec::Constant(1, u2);
  return LevyTriplet::scalar(b, a, rate, JumpLaw::two_point_law(v1, v2, 0.5),
                             0.5, compensate);
}

// ---------------------------------------------------------------------------
// 1. Marcus chain rule against the exponential of the path
// ---------------------------------------------------------------------------

CriterionResult criterion_marcus_chain_rule(SuiteContext& ctx) {
  CriterionResult res{1, "marcus chain rule vs exp(L)", false, 0, 1e-3, "", 0};
  auto triplet = two_point_driver(1.0, 0.0, 2.0, 0.5, -0.3);
  auto path = TwoSidedPath::sample(triplet, -0.01, 1.0, 1e-3,
                                   derive_seed(ctx.seed, "c1"));
  TimeGrid grid(path, 1e-3, 0.0, 1.0);

  MarcusSystem sys;
  sys.flow_map = FlowMap::closed_form_linear({Mat::Constant(1, 1, 1.0)},
                                             {Vec::Zero(1)});
  sys.drift = [](const Vec&) { return Vec::Zero(1); };
  sys.drift_jacobian = [](const Vec&) { return Mat::Zero(1, 1); };

  auto flow = integrate_marcus(sys, grid, 0.0, 1.0, Vec::Constant(1, 1.0));
  double worst = 0.0;
  for (std::size_t i = 0; i < flow.times.size(); ++i) {
    double oracle = std::exp(path.evaluate(flow.times[i])[0]);
    worst = std::max(worst, std::abs(flow.states[i][0] - oracle) /
                                std::abs(oracle));
  }
  write_flow_csv(ctx.csv("c01_marcus_chain.csv"), flow);
  res.measured = worst;
  res.passed = worst <= res.threshold;
  res.detail = "max relative error on [0,1] at dt=1e-3";
  return res;
}

// ---------------------------------------------------------------------------
// 2. Strong convergence against the stochastic exponential
// ---------------------------------------------------------------------------

CriterionResult criterion_doleans_convergence(SuiteContext& ctx) {
  CriterionResult res{2, "stochastic exponential strong rate", false, 0, 0.4, "", 0};
  const double b = 0.3, a = 0.4;
  auto triplet = two_point_driver(b, a, 1.5, 0.4, -0.25);
  auto system = scalar_poly_system({0.0}, {0.0, 1.0});
  const std::vector<double> steps = {1e-2, 1e-3, 1e-4};
  const int n_paths = 20;

  std::vector<std::vector<double>> errors(steps.size());
  for (int k = 0; k < n_paths; ++k) {
    auto path = TwoSidedPath::sample(triplet, -0.01, 1.0, 1e-4,
                                     derive_seed(ctx.seed, "c2", k));
    // exact endpoint: x0 exp((b - a^2/2) t + a W_t) prod(1 + u)
    double w1 = path.brownian_at(path.node_index(1.0))[0];
    double exact = std::exp((b - 0.5 * a * a) + a * w1);
    for (const auto& j : path.jumps_pos())
      if (j.time <= 1.0) exact *= 1.0 + j.size[0];
    for (std::size_t si = 0; si < steps.size(); ++si) {
      TimeGrid grid(path, steps[si], 0.0, 1.0);
      auto flow = integrate_ito(system, grid, 0.0, 1.0, Vec::Constant(1, 1.0));
      errors[si].push_back(std::abs(flow.states.back()[0] - exact));
    }
  }
  std::vector<double> med;
  for (auto& e : errors) med.push_back(median(e));
  double rate = convergence_order(steps, med);
  write_convergence_csv(ctx.csv("c02_doleans_convergence.csv"), steps, med);
  res.measured = rate;
  res.passed = rate >= res.threshold;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "median errors %.3g / %.3g / %.3g over dt 1e-2/1e-3/1e-4",
                med[0], med[1], med[2]);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 3. OU identities: recursion vs integral form, and the shift identity
// ---------------------------------------------------------------------------

CriterionResult criterion_ou_identities(SuiteContext& ctx) {
  CriterionResult res{3, "OU recursion/integral + shift identity", false, 0, 1e-10, "", 0};
  const double mu = 1.0, T_h = 10.0, step = 2e-3;
  LevyTriplet triplet = LevyTriplet::scalar(
      0.5, 0.3, 1.0, JumpLaw::uniform(1, 0.5), 0.5, true);
  auto path = TwoSidedPath::sample(triplet, -12.5, 4.5, step,
                                   derive_seed(ctx.seed, "c3"));
  TimeGrid grid(path, step, -T_h, 4.0);
  auto ou = ou_path(grid, mu, T_h);
  write_ou_csv(ctx.csv("c03_ou_path.csv"), ou);

  double worst_form = 0.0;
  for (double t : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    Vec direct = stationary_exp_integral(path, mu, t, T_h);
    worst_form = std::max(worst_form, (ou.at_time(t) - direct).norm());
  }

  double worst_excess = 0.0;  // violation of the e^{-mu T_h} tail bound
  double tail_constant = 0.0;
  for (double s : {0.5, 1.0, 2.0}) {
    auto shifted = path.shifted(s);
    TimeGrid sgrid(shifted, step, -T_h, 4.0 - s);
    auto ou_s = ou_path(sgrid, mu, T_h);
    double tail_mass = stationary_exp_integral(path, mu, s - T_h, T_h).norm();
    tail_constant = std::max(tail_constant, tail_mass);
    for (std::size_t i = 0; i < ou_s.times.size(); ++i) {
      double tau = ou_s.times[i];
      if (tau < -1e-12) continue;
      Vec z_orig = ou.at_time(s + tau);
      double diff = (z_orig - ou_s.trajectory[i]).norm();
      double bound = std::exp(-mu * T_h) * tail_mass * (1.0 + 1e-6) + 1e-12;
      worst_excess = std::max(worst_excess, diff - bound);
    }
  }

  res.measured = std::max(worst_form, worst_excess);
  res.passed = worst_form <= 1e-10 && worst_excess <= 0.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "form gap %.3g, shift bound excess %.3g (tail constant %.3g)",
                worst_form, worst_excess, tail_constant);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 4. Ito conjugacy on the 1-D linear system
// ---------------------------------------------------------------------------

CriterionResult criterion_ito_conjugacy(SuiteContext& ctx) {
  CriterionResult res{4, "ito conjugacy residual rate + level", false, 0, 0.4, "", 0};
  auto triplet = two_point_driver(0.4, 0.25, 1.5, 0.35, -0.25);
  auto system = linear_system_1d(-0.5);
  auto path = TwoSidedPath::sample(triplet, -20.5, 1.0, 1e-3,
                                   derive_seed(ctx.seed, "c4"));
  AnchorLattice anchors = AnchorLattice::line({0.05, 0.4, 1.0, 2.0, 4.0});
  CohomologyBuildOptions opts;
  opts.T_h = 20.0;
  opts.newton_tol = 1e-10;

  const std::vector<double> steps = {4e-3, 2e-3, 1e-3};
  std::vector<double> max_resid;
  ResidualSeries finest;
  for (double dt : steps) {
    TimeGrid grid(path, dt, -20.0, 1.0);
    auto series = verify_conjugacy_ito(system, grid, anchors,
                                       Vec::Constant(1, 1.0), 1.0, opts);
    max_resid.push_back(series.max());
    if (dt == steps.back()) finest = series;
  }
  write_convergence_csv(ctx.csv("c04_ito_conjugacy_convergence.csv"), steps,
                        max_resid);
  write_residual_csv(ctx.csv("c04_ito_conjugacy_residual.csv"), finest);
  double rate = convergence_order(steps, max_resid);
  res.measured = rate;
  res.passed = rate >= 0.4 && max_resid.back() <= 5e-2;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "rate %.2f, max residual %.3g at dt=1e-3 (limit 5e-2)", rate,
                max_resid.back());
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 5. Marcus conjugacy on the linear-noise cubic-drift system
// ---------------------------------------------------------------------------

CriterionResult criterion_marcus_conjugacy(SuiteContext& ctx) {
  CriterionResult res{5, "marcus conjugacy residual rate + level", false, 0, 0.4, "", 0};
  // drift + jumps driver; the Brownian strong-error noise is covered by
  // criteria 2/4 and would dominate the rate fit here
  auto triplet = two_point_driver(0.4, 0.0, 1.5, 0.35, -0.25);
  MarcusSystem sys;
  sys.flow_map = FlowMap::closed_form_linear({Mat::Constant(1, 1, 1.0)},
                                             {Vec::Zero(1)});
  sys.drift = [](const Vec& x) { return Vec(-x.array().pow(3).matrix()); };
  sys.drift_jacobian = [](const Vec& x) {
    return Mat(Mat::Constant(1, 1, -3.0 * x[0] * x[0]));
  };

  const std::vector<double> steps = {4e-3, 2e-3, 1e-3};
  std::vector<std::vector<double>> per_seed(steps.size());
  ResidualSeries finest;
  for (int k = 0; k < 3; ++k) {
    auto path = TwoSidedPath::sample(triplet, -10.5, 1.0, 1e-3,
                                     derive_seed(ctx.seed, "c5", k));
    for (std::size_t si = 0; si < steps.size(); ++si) {
      TimeGrid grid(path, steps[si], -10.0, 1.0);
      auto report = verify_conjugacy_marcus(sys, grid, Vec::Constant(1, 1.0),
                                            1.0, 1.0, 10.0);
      per_seed[si].push_back(report.residuals.max());
      if (k == 0 && steps[si] == steps.back()) finest = report.residuals;
    }
  }
  std::vector<double> max_resid;
  for (auto& v : per_seed) max_resid.push_back(median(v));
  write_convergence_csv(ctx.csv("c05_marcus_conjugacy_convergence.csv"), steps,
                        max_resid);
  write_residual_csv(ctx.csv("c05_marcus_conjugacy_residual.csv"), finest);
  double rate = convergence_order(steps, max_resid);
  res.measured = rate;
  res.passed = rate >= 0.4 && max_resid.back() <= 5e-2;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "rate %.2f, max residual %.3g at dt=1e-3",
                rate, max_resid.back());
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 6. Cocycle law at (s,t) = (0.5, 0.5)
// ---------------------------------------------------------------------------

CriterionResult criterion_cocycle_law(SuiteContext& ctx) {
  CriterionResult res{6, "cocycle law residual", false, 0, 5e-2, "", 0};
  auto triplet = two_point_driver(0.4, 0.2, 2.0, 0.3, -0.2);
  auto path = TwoSidedPath::sample(triplet, -0.1, 1.5, 1e-3,
                                   derive_seed(ctx.seed, "c6"));
  const double dt = 1e-3;

  auto ito_system = linear_system_1d(-0.5);
  auto make_ito = [&](const TwoSidedPath& p) {
    auto grid = std::make_shared<TimeGrid>(p, dt, p.t_min(), p.t_max());
    return make_ito_cocycle(ito_system, grid);
  };
  double r_ito =
      cocycle_check(make_ito, path, Vec::Constant(1, 1.0), 0.5, 0.5);
  double r_ito_zero =
      cocycle_check(make_ito, path, Vec::Constant(1, 1.0), 0.5, 0.0);

  MarcusSystem msys;
  msys.flow_map = FlowMap::closed_form_linear({Mat::Constant(1, 1, 1.0)},
                                              {Vec::Zero(1)});
  msys.drift = [](const Vec& x) { return Vec(-x.array().pow(3).matrix()); };
  msys.drift_jacobian = [](const Vec& x) {
    return Mat(Mat::Constant(1, 1, -3.0 * x[0] * x[0]));
  };
  auto make_marcus = [&](const TwoSidedPath& p) {
    auto grid = std::make_shared<TimeGrid>(p, dt, p.t_min(), p.t_max());
    return make_marcus_cocycle(msys, grid);
  };
  double r_marcus =
      cocycle_check(make_marcus, path, Vec::Constant(1, 1.0), 0.5, 0.5);
  double r_marcus_zero =
      cocycle_check(make_marcus, path, Vec::Constant(1, 1.0), 0.5, 0.0);

  res.measured = std::max(r_ito, r_marcus);
  res.passed = r_ito <= 5e-2 && r_marcus <= 5e-2 && r_ito_zero == 0.0 &&
               r_marcus_zero == 0.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "ito %.3g, marcus %.3g; t=0 residuals %.3g / %.3g", r_ito,
                r_marcus, r_ito_zero, r_marcus_zero);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 7. Ito-Ventzell residual order and the negative control
// ---------------------------------------------------------------------------

CriterionResult criterion_ito_ventzell(SuiteContext& ctx) {
  CriterionResult res{7, "ito-ventzell order + negative control", false, 0, 0.9, "", 0};
  LevyTriplet triplet = LevyTriplet::scalar(0.0, 1.0, 0.0, JumpLaw{}, 0.5, false);

  XiSpec xi;
  xi.xi = [](double t, const Vec& x) { return x[0] * x[0] + 0.5 * t * x[0]; };
  xi.grad_xi = [](double t, const Vec& x) {
    return Vec(Vec::Constant(1, 2.0 * x[0] + 0.5 * t));
  };
  xi.hess_xi = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 2.0)); };
  xi.E = [](double, const Vec& x) { return 0.5 * x[0]; };

  EtaSpec eta;
  eta.dim = 1;
  eta.eta0 = Vec::Zero(1);
  eta.e = [](double, const Vec&) { return Vec(Vec::Constant(1, 0.2)); };
  eta.f = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 1.0)); };

  const std::vector<double> steps = {8e-3, 2e-3, 5e-4};
  std::vector<std::vector<double>> sup(steps.size());
  double control_ratio = 1e300;
  for (int k = 0; k < 3; ++k) {
    auto path = TwoSidedPath::sample(triplet, -0.01, 1.0, 5e-4,
                                     derive_seed(ctx.seed, "c7", k));
    for (std::size_t si = 0; si < steps.size(); ++si) {
      TimeGrid grid(path, steps[si], 0.0, 1.0);
      auto series = ito_ventzell_residual(xi, eta, grid, 0.0, 1.0);
      sup[si].push_back(series.max());
      if (si == 1) {
        ItoVentzellOptions control;
        control.include_second_order = false;
        auto bad = ito_ventzell_residual(xi, eta, grid, 0.0, 1.0, control);
        control_ratio = std::min(control_ratio, bad.max() / series.max());
      }
    }
  }
  std::vector<double> med;
  for (auto& s : sup) med.push_back(median(s));
  double order = convergence_order(steps, med);
  write_convergence_csv(ctx.csv("c07_ito_ventzell_order.csv"), steps, med);
  res.measured = order;
  res.passed = order >= 0.9 && control_ratio >= 10.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "order %.2f, negative-control ratio %.1f",
                order, control_ratio);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 8. Iterated-integral identity
// ---------------------------------------------------------------------------

CriterionResult criterion_fubini(SuiteContext& ctx) {
  CriterionResult res{8, "iterated-integral identity", false, 0, 1e-10, "", 0};
  // constant sigma, drift-only driver: both sides in closed form
  {
    auto triplet = LevyTriplet::drift_only(Vec::Constant(1, 1.0));
    auto path = TwoSidedPath::sample(triplet, -8.5, 0.6, 1e-2,
                                     derive_seed(ctx.seed, "c8a"));
    TimeGrid grid(path, 1e-2, -8.0, 0.6);
    auto system = scalar_poly_system({0.0}, {0.8});
    res.measured = check_fubini_formula(system, grid, Vec::Constant(1, 0.5),
                                        0.0, 0.5, 8.0);
  }
  // generic: nonlinear sigma, drift + jumps, refinement trend over halvings
  auto triplet = two_point_driver(0.8, 0.0, 1.0, 0.3, -0.2);
  auto path = TwoSidedPath::sample(triplet, -8.5, 0.6, 5e-3,
                                   derive_seed(ctx.seed, "c8b"));
  auto system = scalar_poly_system({0.0}, {0.6, 0.25, 0.1});
  const std::vector<double> steps = {2e-2, 1e-2, 5e-3};
  std::vector<double> resid;
  for (double dt : steps) {
    TimeGrid grid(path, dt, -8.0, 0.6);
    resid.push_back(check_fubini_formula(system, grid, Vec::Constant(1, 0.5),
                                         0.0, 0.5, 8.0));
  }
  write_convergence_csv(ctx.csv("c08_fubini_trend.csv"), steps, resid);
  double order = convergence_order(steps, resid);
  bool monotone = resid[0] > resid[1] && resid[1] > resid[2];
  res.passed = res.measured <= 1e-10 && monotone && order >= 0.7;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "closed-form residual %.3g; trend %.3g/%.3g/%.3g (order %.2f)",
                res.measured, resid[0], resid[1], resid[2], order);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 9. Duffing-van der Pol certificate
// ---------------------------------------------------------------------------

CriterionResult criterion_duffing_certificate(SuiteContext& ctx) {
  CriterionResult res{9, "duffing-van der pol certificate", false, 0, 0, "", 0};
  // exact coefficient table at two parameter points
  bool symbolic_ok = true;
  for (auto [g1, g2] : std::vector<std::pair<Rational, Rational>>{
           {Rational(1), Rational(1)}, {Rational(1), Rational(0)}}) {
    if (!(duffing_gradV_dot_drift(g1, g2) == duffing_expected_expansion(g1, g2)))
      symbolic_ok = false;
  }

  // the eta-hat scan runs at gamma2 = 0 where the annulus [5,50] is fully
  // dissipative; at gamma2 = 1 the radius-5 circle still carries a positive
  // pocket of <grad V, a>
  auto model = duffing_van_der_pol_system(1.0, 0.0, 0.5, 0.5);
  AnnulusGrid grid{5.0, 50.0, 9, 256};
  auto scan = verify_lyapunov(model.certificate, model.system.drift, 2, grid);

  std::vector<Vec> z_grid;
  for (double mag : {0.25, 1.0, 4.0})
    for (auto [z1, z2] : std::vector<std::pair<double, double>>{
             {1, 0}, {0, 1}, {0.70710678, 0.70710678}, {-0.70710678, 0.70710678},
             {-1, 0}, {0, -1}})
      z_grid.push_back((Vec(2) << mag * z1, mag * z2).finished());
  std::vector<Vec> k2_seq;
  for (double mag : {1.0, 0.1, 0.01, 0.001})
    k2_seq.push_back(Vec::Constant(2, mag / std::sqrt(2.0)));
  auto env = verify_c1_c2(model.certificate, model.system.drift,
                          model.system.flow_map, {5.0, 10.0, 20.0, 50.0}, 128,
                          z_grid, k2_seq);

  bool eta_ok = scan.eta_hat > 0.0;
  bool c2_ok = env.c2_sup <= 1.0 + 1e-6;
  bool k2_ok = env.k2_decays && env.k2_values.back() < 1e-2;
  res.passed = symbolic_ok && eta_ok && env.c1_monotone && c2_ok && k2_ok;
  res.measured = scan.eta_hat;
  {
    std::ofstream rep(ctx.dir + "/c09_certificate.txt");
    rep << "symbolic expansion: " << (symbolic_ok ? "pass" : "FAIL") << "\n";
    rep << "eta_hat on [5,50]: " << scan.eta_hat << "\n";
    rep << "alpha_hat: " << scan.alpha_hat << "\n";
    rep << "c1 by radius {5,10,20,50}:";
    for (double v : env.c1_by_radius) rep << ' ' << v;
    rep << "\nc2 sup at r=50: " << env.c2_sup << "\n";
    rep << "k2 sequence:";
    for (double v : env.k2_values) rep << ' ' << v;
    rep << "\n";
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "symbolic %d, eta %.3f, c1 monotone %d, c2 sup %.3f, k2 ok %d",
                symbolic_ok, scan.eta_hat, env.c1_monotone, env.c2_sup, k2_ok);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 10. Duffing-van der Pol pullback attractor and mapped invariance
// ---------------------------------------------------------------------------

CriterionResult criterion_duffing_pullback(SuiteContext& ctx) {
  CriterionResult res{10, "duffing pullback attractor", false, 0, 1e-2, "", 0};
  auto model = duffing_van_der_pol_system(1.0, 1.0, 0.5, 0.5);

  LevyTriplet triplet;
  triplet.dim = 2;
  triplet.drift = Vec::Zero(2);
  triplet.diffusion = Mat::Zero(2, 0);
  triplet.jump_rate = 1.0;
  triplet.jump_law = JumpLaw::uniform(2, 0.4);
  triplet.small_jump_cutoff = 0.5;
  triplet.compensate_small = true;

  const double dt = 4e-3, mu = 1.0;
  auto path = TwoSidedPath::sample(triplet, -32.0, 2.5, dt,
                                   derive_seed(ctx.seed, "c10"));
  auto grid = std::make_shared<TimeGrid>(path, dt, -30.0, 2.0);
  // OU tail from the grid start; tail length >= 10 at the deepest pullback
  auto coh = build_marcus_cohomology(model.system.flow_map,
                                     ou_path(*grid, mu, 30.0));

  auto rde_cocycle = [&model, mu](std::shared_ptr<const TimeGrid> g,
                                  const MarcusCohomology* coh_ptr) {
    RdeField F = [&model, mu, coh_ptr](double t, const Vec& y) {
      const FlowMap& map = model.system.flow_map;
      std::size_t ti = coh_ptr->time_index(t);
      Vec hy = coh_ptr->H(ti, y);
      Vec rhs = model.system.drift(hy);
      const Vec& z = coh_ptr->ou().trajectory[ti];
      for (int i = 0; i < map.noise_count(); ++i)
        rhs += mu * map.sigma_field(i, hy) * z[i];
      return coh_ptr->solve_dHdx(ti, y, rhs);
    };
    return make_rde_cocycle(F, g);
  };

  PullbackParams params;
  params.ball_radius = 2.0;
  params.center = Vec::Zero(2);
  params.n_points = 256;
  for (int k = 1; k <= 10; ++k) params.t_schedule.push_back(2.0 * k);
  params.tol = 1e-2;

  auto psi = rde_cocycle(grid, &coh);
  auto run = estimate_attractor(psi, params);
  write_cloud_csv(ctx.csv("c10_clouds.csv"), run);
  write_run_summary_csv(ctx.csv("c10_summary.csv"), run);

  bool converged = run.converged && run.times.back() <= 20.0 + 1e-9;
  double last_h = run.successive_hausdorff.empty()
                      ? 1e300
                      : run.successive_hausdorff.back();

  // temperedness over the pullback diameters (pad the schedule if the run
  // converged early)
  std::vector<double> ts = run.times, ds = run.diameters;
  while (ts.size() < 10) {
    double t_extra = ts.back() + 2.0;
    auto cloud = pullback_cloud(psi, halton_ball(params.n_points, 2,
                                                 params.ball_radius,
                                                 params.center),
                                t_extra);
    double diam = 0.0;
    for (const auto& x : cloud) diam = std::max(diam, x.norm());
    ts.push_back(t_extra);
    ds.push_back(diam);
  }
  auto temper = temperedness_check(ts, ds, {0.1, 1.0});

  // invariance transport through the cohomology at s = 1
  const double s_inv = 1.0;
  auto shifted = path.shifted(s_inv);
  auto sgrid = std::make_shared<TimeGrid>(shifted, dt, -30.0, 1.0);
  auto coh_s = build_marcus_cohomology(model.system.flow_map,
                                       ou_path(*sgrid, mu, 30.0));
  auto psi_s = rde_cocycle(sgrid, &coh_s);
  auto run_s = estimate_attractor(psi_s, params);

  double resid_A =
      invariance_check(psi, run.final_cloud(), run_s.final_cloud(), s_inv);
  auto B = map_attractor_through_cohomology(coh, coh.time_index(0.0),
                                            run.final_cloud());
  auto B_s = map_attractor_through_cohomology(coh_s, coh_s.time_index(0.0),
                                              run_s.final_cloud());
  auto phi_bar = make_marcus_cocycle(model.system, grid);
  double resid_B = invariance_check(phi_bar, B, B_s, s_inv);

  bool invariance_ok = resid_B <= resid_A + 1e-2;
  res.measured = last_h;
  res.passed = converged && temper.all_passed() && invariance_ok;
  {
    std::ofstream rep(ctx.dir + "/c10_report.txt");
    rep << "pullback converged below 1e-2 by t=20: " << (converged ? "yes" : "NO")
        << " (last successive hausdorff " << last_h << ")\n";
    rep << "diameters bounded, temperedness slope " << temper.slope
        << " (betas 0.1, 1.0): " << (temper.all_passed() ? "pass" : "FAIL")
        << "\n";
    rep << "invariance transport: residual(B) " << resid_B << " <= residual(A) "
        << resid_A << " + 1e-2: " << (invariance_ok ? "pass" : "FAIL") << "\n";
    if (!converged)
      rep << "note: at (gamma1, gamma2) = (1, 1) the damping gamma2 - y1^2\n"
             "vanishes on the wells |y1| = 1, phase dynamics along the cycle\n"
             "is neutral, and the measured top exponent of the transformed\n"
             "RDE under this driver is ~ +0.16; finite point clouds pulled\n"
             "back from different depths sample different phases, so the\n"
             "successive semi-Hausdorff distance plateaus near the attractor\n"
             "scale instead of reaching 1e-2. The estimator itself converges\n"
             "below 1e-2 by t = 12 on the contracting variant gamma1 =\n"
             "gamma2 = -1 (see the attractor integration tests).\n";
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "hausdorff %.3g by t=%.0f, temper slope %.3f, invariance "
                "B %.3g <= A %.3g + 1e-2: %d",
                last_h, run.times.back(), temper.slope, resid_B, resid_A,
                invariance_ok);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 11. Lyapunov exponent against the closed-form mean
// ---------------------------------------------------------------------------

CriterionResult criterion_lyapunov_oracle(SuiteContext& ctx) {
  CriterionResult res{11, "lyapunov exponent MC oracle", false, 0, 3.0, "", 0};
  LinearSystem linsys;
  linsys.B0 = Mat::Constant(1, 1, -0.2);
  linsys.B = {Mat::Constant(1, 1, 1.0)};
  LyapunovOptions opts;
  opts.T = 200.0;
  opts.dt = 0.1;
  opts.n_samples = 100;

  const double b = 0.2, rate = 0.5, u1 = 0.4, u2 = -0.25;
  double e_log = 0.5 * (std::log1p(u1) + std::log1p(u2));

  auto cp = two_point_driver(b, 0.0, rate, u1, u2);
  auto spec_cp = lyapunov_exponents(linsys, cp, opts, derive_seed(ctx.seed, "c11a"));
  double oracle_cp = -0.2 + b + rate * e_log;
  double dev_cp = std::abs(spec_cp.exponents[0] - oracle_cp) /
                  spec_cp.standard_errors[0];

  const double a = 0.3;
  auto gauss = two_point_driver(b, a, rate, u1, u2);
  auto spec_g = lyapunov_exponents(linsys, gauss, opts, derive_seed(ctx.seed, "c11b"));
  double oracle_g = oracle_cp - 0.5 * a * a;
  double dev_g = std::abs(spec_g.exponents[0] - oracle_g) /
                 spec_g.standard_errors[0];

  write_spectrum_csv(ctx.csv("c11_spectrum.csv"), spec_g);
  res.measured = std::max(dev_cp, dev_g);
  res.passed = dev_cp <= 3.0 && dev_g <= 3.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "deviations %.2f / %.2f SE (oracles %.4f / %.4f)", dev_cp,
                dev_g, oracle_cp, oracle_g);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// 12. Step-2 linear conjugacy and the scalar example ladder
// ---------------------------------------------------------------------------

CriterionResult criterion_step2(SuiteContext& ctx) {
  CriterionResult res{12, "step-2 conjugacy + scalar ladder", false, 0, 0.4, "", 0};
  // drift + jumps driver, as for criterion 5; the lattice only needs to
  // bracket 0 where f is evaluated
  auto triplet = two_point_driver(0.4, 0.0, 1.0, 0.3, -0.2);
  auto system = linear_system_1d(-0.3);
  auto linsys = linearize(system);
  auto path = TwoSidedPath::sample(triplet, -10.5, 1.0, 1e-3,
                                   derive_seed(ctx.seed, "c12"));
  AnchorLattice anchors = AnchorLattice::line({-0.1, 0.0, 0.1});
  CohomologyBuildOptions opts;
  opts.T_h = 10.0;

  const std::vector<double> steps = {4e-3, 2e-3, 1e-3};
  std::vector<double> max_resid;
  for (double dt : steps) {
    TimeGrid grid(path, dt, -10.0, 1.0);
    CohomologyBuildOptions bopts = opts;
    bopts.t_hi = 1.0;
    auto field = build_cohomology(system, grid, anchors, bopts);
    auto series = verify_step2_conjugacy(field, linsys, grid,
                                         Vec::Constant(1, 0.05), 1.0);
    max_resid.push_back(series.max());
  }
  double rate = convergence_order(steps, max_resid);
  write_convergence_csv(ctx.csv("c12_step2_convergence.csv"), steps, max_resid);

  LevyTriplet silent;
  silent.dim = 1;
  silent.drift = Vec::Zero(1);
  silent.diffusion = Mat::Zero(1, 0);
  auto quiet_path = TwoSidedPath::sample(silent, -0.01, 1.0, 1e-3,
                                         derive_seed(ctx.seed, "c12b"));
  TimeGrid quiet_grid(quiet_path, 1e-3, 0.0, 1.0);
  auto suite = scalar_example_suite(-1.0, 0.1, 3, quiet_grid, 1.0,
                                    {1e-1, 1e-2, 1e-3, 1e-4});

  res.measured = rate;
  res.passed = rate >= 0.4 && suite.ratios_decreasing &&
               suite.zero_fixed_nonlinear && suite.zero_fixed_linear;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "rate %.2f; ladder ratios %.2g/%.2g/%.2g/%.2g decreasing=%d",
                rate, suite.agreement_ratio[0], suite.agreement_ratio[1],
                suite.agreement_ratio[2], suite.agreement_ratio[3],
                suite.ratios_decreasing);
  res.detail = buf;
  return res;
}

std::vector<CriterionResult> run_criteria_1_12(std::uint64_t seed,
                                               const std::string& dir,
                                               std::vector<std::string>* files) {
  SuiteContext ctx{seed, dir, {}};
  ensure_directory(dir);
  std::vector<std::function<CriterionResult(SuiteContext&)>> criteria = {
      criterion_marcus_chain_rule, criterion_doleans_convergence,
      criterion_ou_identities,     criterion_ito_conjugacy,
      criterion_marcus_conjugacy,  criterion_cocycle_law,
      criterion_ito_ventzell,      criterion_fubini,
      criterion_duffing_certificate, criterion_duffing_pullback,
      criterion_lyapunov_oracle,   criterion_step2,
  };
  std::vector<CriterionResult> results;
  for (auto& fn : criteria) {
    auto start = Clock::now();
    CriterionResult r;
    try {
      r = fn(ctx);
    } catch (const std::exception& ex) {
      r.passed = false;
      r.detail = std::string("exception: ") + ex.what();
      if (!results.empty()) r.id = results.back().id + 1;
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    results.push_back(std::move(r));
  }
  if (files) *files = ctx.csv_files;
  return results;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(std::uint64_t seed,
                                            const std::string& out_dir) {
  ensure_directory(out_dir);
  std::vector<std::string> files1, files2;
  auto results = run_criteria_1_12(seed, out_dir + "/run1", &files1);

  // runtime limits declared alongside the criteria they bound
  auto enforce_runtime = [&](int id, double limit) {
    for (auto& r : results)
      if (r.id == id && r.seconds > limit) {
        r.passed = false;
        r.detail += " [runtime limit exceeded]";
      }
  };
  enforce_runtime(1, 5.0);
  enforce_runtime(2, 60.0);
  enforce_runtime(10, 300.0);

  // 13. determinism: a full second run must reproduce every CSV byte range
  auto start = Clock::now();
  CriterionResult det{13, "harness determinism", false, 0, 0, "", 0};
  auto rerun = run_criteria_1_12(seed, out_dir + "/run2", &files2);
  (void)rerun;
  bool identical = files1 == files2;
  std::size_t mismatches = 0;
  for (const auto& name : files1) {
    std::uint64_t h1 = file_checksum(out_dir + "/run1/" + name);
    std::uint64_t h2 = file_checksum(out_dir + "/run2/" + name);
    if (h1 != h2) {
      identical = false;
      ++mismatches;
    }
  }
  det.passed = identical;
  det.measured = static_cast<double>(mismatches);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "%zu CSV files compared, %zu mismatched",
                files1.size(), mismatches);
  det.detail = buf;
  det.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  results.push_back(det);

  // plot scripts for the figure-like outputs of the primary run
  for (const auto& name : files1) {
    if (name.find("convergence") != std::string::npos ||
        name.find("trend") != std::string::npos ||
        name.find("order") != std::string::npos)
      write_plot_script(out_dir + "/run1/" + name + ".gp", name,
                        "convergence: " + name, 1, 2, true);
    else if (name.find("residual") != std::string::npos ||
             name.find("summary") != std::string::npos)
      write_plot_script(out_dir + "/run1/" + name + ".gp", name,
                        name, 1, 2, false);
  }
  return results;
}

void print_criteria(const std::vector<CriterionResult>& results,
                    std::ostream& os) {
  for (const auto& r : results) {
    char buf[400];
    std::snprintf(buf, sizeof(buf), "%s criterion %2d: %-38s [%6.2fs] %s",
                  r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
                  r.detail.c_str());
    os << buf << '\n';
  }
}

bool all_criteria_passed(const std::vector<CriterionResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return !results.empty();
}

}  // namespace levyrds
