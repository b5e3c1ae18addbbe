#include <doctest.h>

#include <cmath>

#include "levyrds/conjugacy.hpp"

using namespace levyrds;

namespace {
TwoSidedPath driver_path(std::uint64_t seed, double a = 0.0, double t_min = -8.5,
                         double t_max = 1.0, double step = 1e-2) {
  Vec u1 = Vec::Constant(1, 0.3), u2 = Vec::Constant(1, -0.2);
  auto t = LevyTriplet::scalar(0.6, a, 1.5, JumpLaw::two_point_law(u1, u2, 0.5),
                               0.5, false);
  return TwoSidedPath::sample(t, t_min, t_max, step, seed);
}
}  // namespace

TEST_CASE("solve_h") {
  SUBCASE("vanishing sigma returns the anchor immediately") {
    auto path = driver_path(1);
    TimeGrid grid(path, 1e-2, -8.0, 1.0);
    auto sys = scalar_poly_system({0.0}, {0.0});
    auto traj = solve_h(sys, grid, Vec::Constant(1, 1.3), 0.5, 0.5, 8.0);
    CHECK(traj.sweeps <= 2);
    for (const auto& h : traj.h) CHECK(h[0] == 1.3);
  }
  SUBCASE("constant sigma with unit drift has the exponential closed form") {
    auto path = TwoSidedPath::sample(LevyTriplet::drift_only(Vec::Constant(1, 1.0)),
                                     -12.5, 1.0, 1e-2, 2);
    TimeGrid grid(path, 1e-2, -12.0, 1.0);
    const double c = 0.7, T_h = 12.0;
    auto sys = scalar_poly_system({0.0}, {c});
    for (double tau : {0.0, 0.5}) {
      auto traj = solve_h(sys, grid, Vec::Constant(1, 0.4), tau, tau, T_h);
      double exact = 0.4 + c * (std::exp(tau - tau) - std::exp(-T_h - tau));
      CHECK(traj.h.back()[0] == doctest::Approx(exact).epsilon(1e-12));
      CHECK(std::abs(traj.h.back()[0] - (0.4 + c * std::exp(tau - tau))) <=
            c * std::exp(-T_h) + 1e-12);
    }
  }
  SUBCASE("doubling the tail horizon changes h_0 exponentially little") {
    auto path = driver_path(3, 0.0, -16.5, 1.0);
    auto sys = scalar_poly_system({0.0}, {0.2, 0.3});
    TimeGrid grid(path, 1e-2, -16.0, 1.0);
    auto a = solve_h(sys, grid, Vec::Constant(1, 1.0), 0.0, 0.0, 8.0);
    auto b = solve_h(sys, grid, Vec::Constant(1, 1.0), 0.0, 0.0, 16.0);
    CHECK(std::abs(a.h.back()[0] - b.h.back()[0]) <= 5.0 * std::exp(-8.0));
  }
}

TEST_CASE("solve_D") {
  auto path = driver_path(4);
  TimeGrid grid(path, 1e-2, -8.0, 1.0);
  SUBCASE("vanishing sigma gives zero") {
    auto sys = scalar_poly_system({0.0}, {0.0});
    auto traj = solve_h(sys, grid, Vec::Constant(1, 1.0), 0.3, 0.3, 8.0);
    auto d = solve_D(sys, grid, traj);
    for (const auto& v : d.D) CHECK(v[0] == 0.0);
  }
  SUBCASE("constant sigma: D = -(h - x) exactly") {
    auto sys = scalar_poly_system({0.0}, {0.8});
    auto traj = solve_h(sys, grid, Vec::Constant(1, 1.0), 0.4, 0.4, 8.0);
    auto d = solve_D(sys, grid, traj);
    for (std::size_t i = 0; i < d.D.size(); ++i)
      CHECK(d.D[i][0] == doctest::Approx(-(traj.h[i][0] - 1.0)).epsilon(1e-12));
  }
  SUBCASE("finite differences in tau reproduce D") {
    auto sys = scalar_poly_system({0.0}, {0.3, 0.25});
    const double tau = 0.3, eps = 1e-4, dt = 1e-2;
    auto traj = solve_h(sys, grid, Vec::Constant(1, 1.0), tau, tau, 8.0);
    auto d = solve_D(sys, grid, traj);
    auto plus = solve_h(sys, grid, Vec::Constant(1, 1.0), tau + eps, tau, 8.0);
    auto minus = solve_h(sys, grid, Vec::Constant(1, 1.0), tau - eps, tau, 8.0);
    double fd = (plus.h.back()[0] - minus.h.back()[0]) / (2 * eps);
    double rel = std::abs(d.D.back()[0] - fd) / std::max(1e-6, std::abs(fd));
    CHECK(rel <= std::max(10.0 * dt, 1e3 * eps * eps));
  }
}

TEST_CASE("cohomology field") {
  SUBCASE("identity when sigma vanishes") {
    auto path = driver_path(5);
    TimeGrid grid(path, 1e-2, -8.0, 0.5);
    auto sys = scalar_poly_system({0.0, -1.0}, {0.0});
    CohomologyBuildOptions opts;
    opts.T_h = 8.0;
    opts.t_hi = 0.5;
    auto field = build_cohomology(sys, grid, AnchorLattice::line({0.5, 1.0, 2.0}),
                                  opts);
    for (std::size_t ti = 0; ti < field.times().size(); ++ti)
      for (std::size_t ai = 0; ai < field.anchors().size(); ++ai) {
        CHECK(field.H_sample(ti, ai)[0] ==
              field.anchors().point(ai)[0]);
        CHECK(field.Gamma_sample(ti, ai)[0] == 0.0);
      }
  }
  SUBCASE("stationarity through the shift") {
    auto path = driver_path(6, 0.0, -12.5, 2.0);
    auto sys = linear_system_1d(-0.5);
    double r = stationarity_residual(sys, path, 1e-2, Vec::Constant(1, 1.0),
                                     0.5, 0.5, 10.0);
    CHECK(r <= 1e-3);
  }
  SUBCASE("telescoped identity residual shrinks with the step") {
    auto path = driver_path(7, 0.0, -8.5, 1.0, 2.5e-3);
    auto sys = linear_system_1d(-0.5);
    std::vector<double> resid;
    for (double dt : {1e-2, 2.5e-3}) {
      TimeGrid grid(path, dt, -8.0, 0.5);
      CohomologyBuildOptions opts;
      opts.T_h = 8.0;
      opts.t_hi = 0.5;
      auto field = build_cohomology(sys, grid,
                                    AnchorLattice::line({0.5, 1.0, 2.0}), opts);
      auto series = sde_identity_residual(sys, grid, field, Vec::Constant(1, 1.0));
      resid.push_back(series.max());
    }
    CHECK(resid[1] < resid[0]);
    CHECK(resid[0] <= 0.2);
  }
}

TEST_CASE("inversion of H_0") {
  auto path = driver_path(8);
  TimeGrid grid(path, 1e-2, -8.0, 0.5);
  auto sys = linear_system_1d(-0.5);
  CohomologyBuildOptions opts;
  opts.T_h = 8.0;
  opts.t_hi = 0.5;
  auto field = build_cohomology(sys, grid, AnchorLattice::line({0.2, 1.0, 3.0}),
                                opts);
  SUBCASE("round trip within ten newton tolerances") {
    for (double x : {0.5, 1.0, 2.0}) {
      Vec y = field.H(0, Vec::Constant(1, x));
      Vec back = invert_H0(field, y);
      CHECK(std::abs(back[0] - x) <= 10.0 * field.newton_tol());
    }
  }
  SUBCASE("matches the closed-form inverse of the linear transform") {
    double e0 = field.dHdx(0, Vec::Constant(1, 1.0))(0, 0);
    Vec inv = invert_H0(field, Vec::Constant(1, 1.2));
    CHECK(inv[0] == doctest::Approx(1.2 / e0).epsilon(1e-8));
  }
  SUBCASE("identity system inverts to the argument") {
    auto sys0 = scalar_poly_system({0.0}, {0.0});
    auto f0 = build_cohomology(sys0, grid, AnchorLattice::line({0.2, 1.0, 3.0}),
                               opts);
    Vec y = Vec::Constant(1, 0.77);
    CHECK(invert_H0(f0, y)[0] == doctest::Approx(0.77).epsilon(1e-12));
  }
}

TEST_CASE("transformed drift") {
  auto path = driver_path(9);
  TimeGrid grid(path, 1e-2, -8.0, 0.5);
  CohomologyBuildOptions opts;
  opts.T_h = 8.0;
  opts.t_hi = 0.5;
  SUBCASE("sigma = 0 returns the plain drift") {
    auto sys = scalar_poly_system({0.1, -0.4}, {0.0});
    auto field = build_cohomology(sys, grid, AnchorLattice::line({0.2, 1.0, 3.0}),
                                  opts);
    Vec y = Vec::Constant(1, 0.8);
    Vec v = transformed_drift(field, sys, 3, y);
    CHECK(v[0] == doctest::Approx(sys.drift(y)[0]).epsilon(1e-12));
  }
  SUBCASE("constant sigma and zero drift reduce to minus Gamma") {
    auto sys = scalar_poly_system({0.0}, {0.8});
    auto field = build_cohomology(sys, grid, AnchorLattice::line({0.2, 1.0, 3.0}),
                                  opts);
    std::size_t ti = 5;
    Vec y = Vec::Constant(1, 1.0);
    Vec v = transformed_drift(field, sys, ti, y);
    // dH/dx = 1 and Gamma = -(h - x) for constant sigma
    CHECK(v[0] == doctest::Approx(-field.Gamma(ti, y)[0]).epsilon(1e-12));
  }
  SUBCASE("linear system agrees with the sampled symbolic form") {
    auto sys = scalar_poly_system({0.0, -1.0}, {0.0, 1.0});
    auto field = build_cohomology(sys, grid, AnchorLattice::line({0.2, 1.0, 3.0}),
                                  opts);
    std::size_t ti = 7;
    double e = field.dHdx(ti, Vec::Constant(1, 1.0))(0, 0);
    double g = field.Gamma(ti, Vec::Constant(1, 1.0))[0];
    double y = 0.9;
    // (dH/dx)^{-1} [a(H) - Gamma] with H = e*y, Gamma = g*y for linear sigma
    double expected = (-e * y - g * y) / e;
    CHECK(transformed_drift(field, sys, ti, Vec::Constant(1, y))[0] ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("conjugacy verification") {
  CohomologyBuildOptions opts;
  opts.T_h = 8.0;
  SUBCASE("identity cohomology leaves only scheme mismatch") {
    auto path = driver_path(10);
    TimeGrid grid(path, 1e-3, -8.0, 1.0);
    auto sys = scalar_poly_system({0.3, -1.0}, {0.0});
    auto series = verify_conjugacy_ito(sys, grid,
                                       AnchorLattice::line({0.2, 1.0, 3.0}),
                                       Vec::Constant(1, 1.0), 1.0, opts);
    CHECK(series.residuals.front() == 0.0);
    CHECK(series.max() <= 1e-2);
  }
  SUBCASE("linear system stays small at a coarse step") {
    auto path = driver_path(11, 0.2);
    TimeGrid grid(path, 2e-3, -8.0, 1.0);
    auto sys = linear_system_1d(-0.5);
    auto series = verify_conjugacy_ito(sys, grid,
                                       AnchorLattice::line({0.05, 0.4, 1.0, 2.0, 4.0}),
                                       Vec::Constant(1, 1.0), 1.0, opts);
    CHECK(series.residuals.front() == 0.0);
    CHECK(series.max() <= 5e-2);
  }
}

TEST_CASE("ito-ventzell residual") {
  LevyTriplet brownian = LevyTriplet::scalar(0.0, 1.0, 0.0, JumpLaw{});
  auto path = TwoSidedPath::sample(brownian, -0.1, 1.0, 1e-3, 12);
  TimeGrid grid(path, 1e-3, 0.0, 1.0);

  SUBCASE("identity field leaves no residual") {
    XiSpec xi;
    xi.xi = [](double, const Vec& x) { return x[0]; };
    xi.grad_xi = [](double, const Vec&) { return Vec(Vec::Constant(1, 1.0)); };
    EtaSpec eta;
    eta.dim = 1;
    eta.eta0 = Vec::Zero(1);
    eta.e = [](double, const Vec&) { return Vec(Vec::Constant(1, 0.3)); };
    eta.f = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 1.0)); };
    auto series = ito_ventzell_residual(xi, eta, grid, 0.0, 1.0);
    CHECK(series.max() <= 1e-12);
  }
  SUBCASE("quadratic field on brownian motion needs the second-order term") {
    XiSpec xi;
    xi.xi = [](double, const Vec& x) { return x[0] * x[0]; };
    xi.grad_xi = [](double, const Vec& x) { return Vec(2.0 * x); };
    xi.hess_xi = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 2.0)); };
    EtaSpec eta;
    eta.dim = 1;
    eta.eta0 = Vec::Zero(1);
    eta.f = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 1.0)); };
    auto good = ito_ventzell_residual(xi, eta, grid, 0.0, 1.0);
    CHECK(good.max() <= 1e-12);
    ItoVentzellOptions control;
    control.include_second_order = false;
    auto bad = ito_ventzell_residual(xi, eta, grid, 0.0, 1.0, control);
    CHECK(bad.max() >= 10.0 * std::max(good.max(), 1e-3));
  }
  SUBCASE("single forced jump is accounted exactly") {
    LevyTriplet t = LevyTriplet::drift_only(Vec::Zero(1));
    t.jump_rate = 1.0;
    t.jump_law = JumpLaw::uniform(1, 0.5);
    auto jpath = TwoSidedPath::from_records(t, -0.1, 1.0, 0.05,
                                            {{0.4, Vec::Constant(1, 0.3)}}, 0);
    TimeGrid jgrid(jpath, 0.05, 0.0, 1.0);
    XiSpec xi;
    xi.xi = [](double, const Vec& x) { return x[0] * x[0]; };
    xi.grad_xi = [](double, const Vec& x) { return Vec(2.0 * x); };
    xi.hess_xi = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 2.0)); };
    EtaSpec eta;
    eta.dim = 1;
    eta.eta0 = Vec::Constant(1, 0.5);
    eta.g = [](double, const Vec&, const Vec& u) { return u; };
    auto series = ito_ventzell_residual(xi, eta, jgrid, 0.0, 1.0);
    CHECK(series.max() <= 1e-12);
  }
  SUBCASE("field driven by the same brownian motion") {
    // xi_t(x) = x W_t exercises the F and cross terms exactly
    const TwoSidedPath* p = &path;
    XiSpec xi;
    xi.xi = [p](double tt, const Vec& x) { return x[0] * p->evaluate(tt)[0]; };
    xi.grad_xi = [p](double tt, const Vec&) {
      return Vec(Vec::Constant(1, p->evaluate(tt)[0]));
    };
    xi.hess_xi = [](double, const Vec&) { return Mat(Mat::Zero(1, 1)); };
    xi.F = [](double, const Vec& x) { return Vec(Vec::Constant(1, x[0])); };
    xi.grad_F = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 1.0)); };
    EtaSpec eta;
    eta.dim = 1;
    eta.eta0 = Vec::Constant(1, 0.2);
    eta.e = [](double, const Vec&) { return Vec(Vec::Constant(1, 0.1)); };
    eta.f = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, 1.0)); };
    auto series = ito_ventzell_residual(xi, eta, grid, 0.0, 1.0);
    CHECK(series.max() <= 1e-12);
  }
}

TEST_CASE("iterated-integral identity") {
  SUBCASE("vanishing sigma makes both sides zero") {
    auto path = driver_path(13);
    TimeGrid grid(path, 1e-2, -8.0, 0.5);
    auto sys = scalar_poly_system({0.0}, {0.0});
    CHECK(check_fubini_formula(sys, grid, Vec::Constant(1, 0.5), 0.0, 0.5, 8.0) ==
          0.0);
  }
  SUBCASE("constant sigma, drift-only driver is exact") {
    auto path = TwoSidedPath::sample(LevyTriplet::drift_only(Vec::Constant(1, 1.0)),
                                     -8.5, 0.6, 1e-2, 14);
    TimeGrid grid(path, 1e-2, -8.0, 0.6);
    auto sys = scalar_poly_system({0.0}, {0.8});
    CHECK(check_fubini_formula(sys, grid, Vec::Constant(1, 0.5), 0.0, 0.5, 8.0) <=
          1e-10);
  }
  SUBCASE("generic case refines to zero") {
    auto path = driver_path(15, 0.0, -8.5, 0.6, 5e-3);
    auto sys = scalar_poly_system({0.0}, {0.6, 0.25, 0.1});
    double coarse, fine;
    {
      TimeGrid grid(path, 2e-2, -8.0, 0.6);
      coarse = check_fubini_formula(sys, grid, Vec::Constant(1, 0.5), 0.0, 0.5, 8.0);
    }
    {
      TimeGrid grid(path, 5e-3, -8.0, 0.6);
      fine = check_fubini_formula(sys, grid, Vec::Constant(1, 0.5), 0.0, 0.5, 8.0);
    }
    CHECK(fine < coarse);
  }
}
