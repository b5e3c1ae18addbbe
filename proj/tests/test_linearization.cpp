#include <doctest.h>

#include <cmath>

#include "levyrds/linearization.hpp"

using namespace levyrds;

namespace {
TwoSidedPath jump_driver(std::uint64_t seed, double b = 0.4, double a = 0.0,
                         double rate = 1.0, double t_min = -8.5,
                         double t_max = 1.0, double step = 1e-3) {
  Vec u1 = Vec::Constant(1, 0.3), u2 = Vec::Constant(1, -0.2);
  auto t = LevyTriplet::scalar(b, a, rate, JumpLaw::two_point_law(u1, u2, 0.5),
                               0.5, false);
  return TwoSidedPath::sample(t, t_min, t_max, step, seed);
}
}  // namespace

TEST_CASE("linearize") {
  SUBCASE("cubic-perturbed linear drift") {
    double beta = 0.7;
    auto sys = scalar_poly_system({0.0, beta, 0.0, -1.0}, {0.0, 1.0});
    auto lin = linearize(sys);
    CHECK(lin.B0(0, 0) == doctest::Approx(beta).epsilon(1e-14));
    CHECK(lin.B[0](0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("purely quadratic drift has zero derivative") {
    auto sys = scalar_poly_system({0.0, 0.0, 1.0}, {0.0, 1.0});
    CHECK(linearize(sys).B0(0, 0) == 0.0);
  }
  SUBCASE("fixed-point hypothesis is enforced") {
    auto sys = scalar_poly_system({0.5, 1.0}, {0.0, 1.0});  // a(0) = 0.5
    CHECK_THROWS_AS(linearize(sys), HypothesisError);
    auto sys2 = scalar_poly_system({0.0, 1.0}, {0.3, 1.0});  // sigma(0) = 0.3
    CHECK_THROWS_AS(linearize(sys2), HypothesisError);
  }
}

TEST_CASE("linear integration") {
  SUBCASE("zero matrices stay constant") {
    auto path = jump_driver(1);
    TimeGrid grid(path, 1e-2, 0.0, 1.0);
    LinearSystem lin{Mat::Zero(1, 1), {Mat::Zero(1, 1)}};
    auto flow = integrate_linear(lin, grid, 0.0, 1.0, Vec::Constant(1, 0.9));
    for (const auto& s : flow.states) CHECK(s[0] == 0.9);
  }
  SUBCASE("pure-jump product formula is exact") {
    LevyTriplet t = LevyTriplet::drift_only(Vec::Zero(1));
    t.jump_rate = 1.0;
    t.jump_law = JumpLaw::uniform(1, 0.5);
    auto path = TwoSidedPath::from_records(
        t, -0.1, 1.0, 0.05,
        {{0.3, Vec::Constant(1, 0.2)}, {0.7, Vec::Constant(1, -0.1)}}, 0);
    TimeGrid grid(path, 0.05, 0.0, 1.0);
    LinearSystem lin{Mat::Constant(1, 1, 0.4), {Mat::Constant(1, 1, 1.0)}};
    auto flow = integrate_linear(lin, grid, 0.0, 1.0, Vec::Constant(1, 2.0));
    double exact = 2.0 * std::exp(0.4) * 1.2 * 0.9;
    CHECK(flow.at_time(1.0)[0] == doctest::Approx(exact).epsilon(1e-13));
  }
  SUBCASE("homogeneity is exact") {
    auto path = jump_driver(2, 0.4, 0.3, 2.0);
    TimeGrid grid(path, 1e-3, 0.0, 1.0);
    LinearSystem lin{Mat::Constant(1, 1, -0.2), {Mat::Constant(1, 1, 1.0)}};
    auto one = integrate_linear(lin, grid, 0.0, 1.0, Vec::Constant(1, 1.0));
    auto two = integrate_linear(lin, grid, 0.0, 1.0, Vec::Constant(1, 2.0));
    for (std::size_t i = 0; i < one.states.size(); ++i)
      CHECK(two.states[i][0] == 2.0 * one.states[i][0]);
  }
  SUBCASE("multi-dimensional euler tracks the matrix exponential") {
    LevyTriplet silent;
    silent.dim = 2;
    silent.drift = Vec::Zero(2);
    silent.diffusion = Mat::Zero(2, 0);
    auto path = TwoSidedPath::sample(silent, -0.01, 1.0, 1e-3, 3);
    TimeGrid grid(path, 1e-3, 0.0, 1.0);
    Mat b0 = (Mat(2, 2) << -0.3, 0.2, 0.0, -0.6).finished();
    LinearSystem lin{b0, {Mat::Zero(2, 2)}};
    auto flow = integrate_linear(lin, grid, 0.0, 1.0, (Vec(2) << 1, 1).finished());
    Vec exact = expm(b0) * (Vec(2) << 1, 1).finished();
    CHECK((flow.at_time(1.0) - exact).norm() <= 2e-3);
  }
}

TEST_CASE("lyapunov exponents") {
  SUBCASE("noise-free scalar system recovers the drift rate") {
    LinearSystem lin{Mat::Constant(1, 1, -0.45), {Mat::Constant(1, 1, 1.0)}};
    auto triplet = LevyTriplet::drift_only(Vec::Zero(1));
    LyapunovOptions opts;
    opts.T = 50;
    opts.dt = 0.1;
    opts.n_samples = 4;
    auto spec = lyapunov_exponents(lin, triplet, opts, 11);
    CHECK(spec.exponents[0] == doctest::Approx(-0.45).epsilon(1e-12));
    CHECK(spec.hyperbolic());
  }
  SUBCASE("compound-poisson oracle within three standard errors") {
    LinearSystem lin{Mat::Constant(1, 1, -0.2), {Mat::Constant(1, 1, 1.0)}};
    Vec u1 = Vec::Constant(1, 0.4), u2 = Vec::Constant(1, -0.25);
    auto triplet = LevyTriplet::scalar(0.2, 0.0, 0.5,
                                       JumpLaw::two_point_law(u1, u2, 0.5), 0.5,
                                       false);
    LyapunovOptions opts;
    opts.T = 120;
    opts.dt = 0.1;
    opts.n_samples = 60;
    auto spec = lyapunov_exponents(lin, triplet, opts, 12);
    double oracle = -0.2 + 0.2 + 0.5 * 0.5 * (std::log1p(0.4) + std::log1p(-0.25));
    CHECK(std::abs(spec.exponents[0] - oracle) <= 3.0 * spec.standard_errors[0]);
  }
  SUBCASE("gaussian part contributes the ito correction") {
    LinearSystem lin{Mat::Constant(1, 1, 0.1), {Mat::Constant(1, 1, 1.0)}};
    auto triplet = LevyTriplet::scalar(0.0, 0.5, 0.0, JumpLaw{});
    LyapunovOptions opts;
    opts.T = 120;
    opts.dt = 0.05;
    opts.n_samples = 60;
    auto spec = lyapunov_exponents(lin, triplet, opts, 13);
    double oracle = 0.1 - 0.5 * 0.5 * 0.5;
    CHECK(std::abs(spec.exponents[0] - oracle) <= 3.0 * spec.standard_errors[0]);
  }
  SUBCASE("zero system is flagged non-hyperbolic") {
    LinearSystem lin{Mat::Zero(1, 1), {Mat::Zero(1, 1)}};
    auto triplet = LevyTriplet::drift_only(Vec::Zero(1));
    LyapunovOptions opts;
    opts.T = 20;
    opts.dt = 0.1;
    opts.n_samples = 4;
    auto spec = lyapunov_exponents(lin, triplet, opts, 14);
    CHECK(spec.exponents[0] == 0.0);
    CHECK_FALSE(spec.hyperbolic());
  }
  SUBCASE("diagonal two-dimensional spectrum via reorthogonalization") {
    Mat b0 = (Mat(2, 2) << -0.3, 0.0, 0.0, -0.7).finished();
    LinearSystem lin{b0, {Mat::Zero(2, 2)}};
    LevyTriplet silent;
    silent.dim = 2;
    silent.drift = Vec::Zero(2);
    silent.diffusion = Mat::Zero(2, 0);
    LyapunovOptions opts;
    opts.T = 40;
    opts.dt = 0.05;
    opts.n_samples = 2;
    auto spec = lyapunov_exponents(lin, silent, opts, 15);
    CHECK(spec.exponents[0] == doctest::Approx(-0.3).epsilon(1e-3));
    CHECK(spec.exponents[1] == doctest::Approx(-0.7).epsilon(1e-3));
  }
}

TEST_CASE("linearized RDE coefficient") {
  auto path = jump_driver(21, 0.4, 0.0, 1.0, -8.5, 1.0, 2e-3);
  TimeGrid grid(path, 2e-3, -8.0, 1.0);
  CohomologyBuildOptions opts;
  opts.T_h = 8.0;
  opts.t_hi = 1.0;
  AnchorLattice anchors = AnchorLattice::line({-0.1, 0.0, 0.1});

  SUBCASE("sigma = 0 reduces to B0") {
    auto sys = scalar_poly_system({0.0, -0.6}, {0.0});
    auto field = build_cohomology(sys, grid, anchors, opts);
    auto lin = linearize(sys);
    Mat f = linearized_rde_coefficient(field, lin, 4);
    CHECK(f(0, 0) == doctest::Approx(-0.6).epsilon(1e-12));
  }
  SUBCASE("two evaluation routes agree for the linear family") {
    auto sys = linear_system_1d(-0.4);
    auto field = build_cohomology(sys, grid, anchors, opts);
    auto lin = linearize(sys);
    std::size_t ti = 6;
    Mat f = linearized_rde_coefficient(field, lin, ti);
    const double eps = 1e-3;
    double fd = (transformed_drift(field, sys, ti, Vec::Constant(1, eps))[0] -
                 transformed_drift(field, sys, ti, Vec::Constant(1, -eps))[0]) /
                (2 * eps);
    CHECK(f(0, 0) == doctest::Approx(fd).epsilon(1e-6));
  }
  SUBCASE("stationarity of the coefficient through the shift") {
    auto sys = linear_system_1d(-0.4);
    auto field = build_cohomology(sys, grid, anchors, opts);
    auto lin = linearize(sys);
    const double s = 0.5;
    Mat direct = linearized_rde_coefficient(field, lin, field.time_index(s));
    auto shifted = path.shifted(s);
    TimeGrid sgrid(shifted, 2e-3, -8.0, 0.5);
    CohomologyBuildOptions sopts = opts;
    sopts.t_hi = 0.5;
    auto sfield = build_cohomology(sys, sgrid, anchors, sopts);
    Mat via_shift = linearized_rde_coefficient(sfield, lin, 0);
    CHECK(std::abs(direct(0, 0) - via_shift(0, 0)) <= 1e-3);
  }
}

TEST_CASE("step-2 conjugacy residual") {
  auto path = jump_driver(22, 0.4, 0.0, 1.0, -8.5, 1.0, 1e-3);
  CohomologyBuildOptions opts;
  opts.T_h = 8.0;
  opts.t_hi = 1.0;
  AnchorLattice anchors = AnchorLattice::line({-0.1, 0.0, 0.1});

  SUBCASE("identity cohomology leaves scheme mismatch only") {
    TimeGrid grid(path, 1e-2, -8.0, 1.0);
    auto sys = scalar_poly_system({0.0, -0.5}, {0.0});
    auto field = build_cohomology(sys, grid, anchors, opts);
    auto lin = linearize(sys);
    auto series =
        verify_step2_conjugacy(field, lin, grid, Vec::Constant(1, 0.05), 1.0);
    CHECK(series.residuals.front() == 0.0);
    CHECK(series.max() <= 1e-4);
  }
  SUBCASE("residual shrinks under refinement for the linear family") {
    auto sys = linear_system_1d(-0.3);
    auto lin = linearize(sys);
    double coarse, fine;
    {
      TimeGrid grid(path, 4e-3, -8.0, 1.0);
      auto field = build_cohomology(sys, grid, anchors, opts);
      coarse = verify_step2_conjugacy(field, lin, grid, Vec::Constant(1, 0.05),
                                      1.0)
                   .max();
    }
    {
      TimeGrid grid(path, 1e-3, -8.0, 1.0);
      auto field = build_cohomology(sys, grid, anchors, opts);
      fine = verify_step2_conjugacy(field, lin, grid, Vec::Constant(1, 0.05), 1.0)
                 .max();
    }
    CHECK(fine < coarse);
  }
}

TEST_CASE("scalar example suite") {
  LevyTriplet silent;
  silent.dim = 1;
  silent.drift = Vec::Zero(1);
  silent.diffusion = Mat::Zero(1, 0);
  auto path = TwoSidedPath::sample(silent, -0.01, 1.0, 1e-3, 30);
  TimeGrid grid(path, 1e-3, 0.0, 1.0);

  SUBCASE("zero initial condition is fixed by both flows") {
    auto rep = scalar_example_suite(-1.0, 0.1, 3, grid, 1.0, {1e-1, 1e-2});
    CHECK(rep.zero_fixed_nonlinear);
    CHECK(rep.zero_fixed_linear);
  }
  SUBCASE("stable case: agreement improves down the ladder") {
    auto rep = scalar_example_suite(-1.0, 0.1, 3, grid, 1.0,
                                    {1e-1, 1e-2, 1e-3, 1e-4});
    CHECK(rep.ratios_decreasing);
    CHECK(rep.agreement_ratio[1] <= 0.05 * rep.agreement_ratio[0]);
    CHECK(rep.linear_exponent == doctest::Approx(rep.beta).epsilon(1e-12));
    CHECK(rep.linear_exponent < 0.0);
  }
  SUBCASE("unstable case is flagged as local") {
    auto rep = scalar_example_suite(0.5, 0.1, 3, grid, 1.0, {1e-1, 1e-2});
    CHECK(rep.note.find("local") != std::string::npos);
    CHECK(rep.linear_exponent > 0.0);
  }
  SUBCASE("l must exceed one") {
    CHECK_THROWS_AS(scalar_example_suite(-1.0, 0.1, 1, grid, 1.0, {1e-1}),
                    ParameterError);
  }
}
