#include <doctest.h>

#include <cmath>
#include <fstream>
#include <memory>

#include "levyrds/flows.hpp"

using namespace levyrds;

namespace {
TwoSidedPath jump_diffusion_path(std::uint64_t seed, double a = 0.4) {
  Vec u1 = Vec::Constant(1, 0.3), u2 = Vec::Constant(1, -0.2);
  auto t = LevyTriplet::scalar(0.5, a, 2.0, JumpLaw::two_point_law(u1, u2, 0.5),
                               0.5, false);
  return TwoSidedPath::sample(t, -1.5, 1.5, 1e-3, seed);
}
}  // namespace

TEST_CASE("zero coefficients give a constant trajectory") {
  auto path = jump_diffusion_path(1);
  TimeGrid grid(path, 1e-2, 0.0, 1.0);
  auto sys = scalar_poly_system({0.0}, {0.0});
  auto flow = integrate_ito(sys, grid, 0.0, 1.0, Vec::Constant(1, 0.7));
  for (const auto& s : flow.states) CHECK(s[0] == 0.7);
}

TEST_CASE("additive noise integrates the path exactly") {
  auto path = jump_diffusion_path(2);
  TimeGrid grid(path, 1e-3, 0.0, 1.0);
  auto sys = scalar_poly_system({0.0}, {1.0});  // sigma = 1
  auto flow = integrate_ito(sys, grid, 0.0, 1.0, Vec::Constant(1, 0.3));
  for (std::size_t i = 0; i < flow.times.size(); ++i) {
    double expected = 0.3 + path.evaluate(flow.times[i])[0];
    CHECK(flow.states[i][0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("a single jump applies the pre-jump coefficient") {
  LevyTriplet t = LevyTriplet::drift_only(Vec::Zero(1));
  t.jump_rate = 1.0;
  t.jump_law = JumpLaw::uniform(1, 0.5);
  auto path = TwoSidedPath::from_records(t, -0.1, 1.0, 0.05,
                                         {{0.4, Vec::Constant(1, 0.25)}}, 0);
  TimeGrid grid(path, 0.05, 0.0, 1.0);
  auto sys = scalar_poly_system({0.0}, {0.0, 1.0});  // sigma(x) = x
  auto flow = integrate_ito(sys, grid, 0.0, 1.0, Vec::Constant(1, 2.0));
  CHECK(flow.at_time(1.0)[0] == doctest::Approx(2.0 * 1.25).epsilon(1e-13));
}

TEST_CASE("heun integrates smooth fields to second order") {
  auto path = TwoSidedPath::sample(LevyTriplet::drift_only(Vec::Zero(1)), -0.1,
                                   1.0, 1e-2, 3);
  TimeGrid grid(path, 1e-2, 0.0, 1.0);
  SUBCASE("zero field is constant") {
    auto flow = integrate_rde([](double, const Vec& y) { return Vec(0 * y); },
                              grid, 0.0, 1.0, Vec::Constant(1, 0.4));
    for (const auto& s : flow.states) CHECK(s[0] == 0.4);
  }
  SUBCASE("scalar linear field matches the exponential") {
    auto flow = integrate_rde([](double, const Vec& y) { return y; }, grid,
                              0.0, 1.0, Vec::Constant(1, 1.0));
    CHECK(flow.at_time(1.0)[0] ==
          doctest::Approx(std::exp(1.0)).epsilon(1e-4));
  }
  SUBCASE("piecewise-constant forcing has a kink without overshoot") {
    auto g = [](double tt, const Vec&) {
      return Vec(Vec::Constant(1, tt >= 0.5 ? 1.0 : 0.0));
    };
    auto flow = integrate_rde(g, grid, 0.0, 1.0, Vec::Zero(1));
    for (std::size_t i = 0; i < flow.times.size(); ++i) {
      double exact = std::max(0.0, flow.times[i] - 0.5);
      CHECK(flow.states[i][0] >= -1e-15);
      CHECK(std::abs(flow.states[i][0] - exact) <= 1e-2);
      if (i) CHECK(flow.states[i][0] >= flow.states[i - 1][0]);  // monotone
    }
  }
}

TEST_CASE("variational flow") {
  auto path = jump_diffusion_path(4);
  TimeGrid grid(path, 1e-3, 0.0, 1.0);
  SUBCASE("zero system keeps the identity jacobian") {
    auto sys = scalar_poly_system({0.0}, {0.0});
    auto flow = integrate_variational(sys, grid, 0.0, 1.0, Vec::Constant(1, 1.0));
    CHECK(flow.jacobians.back()(0, 0) == 1.0);
  }
  SUBCASE("linear noise: jacobian equals state over start") {
    auto sys = scalar_poly_system({0.0}, {0.0, 1.0});
    auto flow = integrate_variational(sys, grid, 0.0, 1.0, Vec::Constant(1, 0.8));
    for (std::size_t i = 0; i < flow.states.size(); ++i)
      CHECK(flow.jacobians[i](0, 0) ==
            doctest::Approx(flow.states[i][0] / 0.8).epsilon(1e-12));
  }
  SUBCASE("jacobian matches finite differences of the state flow") {
    auto sys = scalar_poly_system({0.0, -0.5, 0.0, -0.2}, {0.2, 0.3});
    const double h = 1e-5;
    auto var = integrate_variational(sys, grid, 0.0, 1.0, Vec::Constant(1, 0.6));
    auto plus = integrate_ito(sys, grid, 0.0, 1.0, Vec::Constant(1, 0.6 + h));
    auto minus = integrate_ito(sys, grid, 0.0, 1.0, Vec::Constant(1, 0.6 - h));
    double fd = (plus.at_time(1.0)[0] - minus.at_time(1.0)[0]) / (2 * h);
    double rel = std::abs(var.jacobians.back()(0, 0) - fd) /
                 std::max(1.0, std::abs(fd));
    CHECK(rel <= std::max(10.0 * 1e-3, 1e3 * h * h));
  }
}

TEST_CASE("cocycle law") {
  auto path = jump_diffusion_path(5);
  auto sys = scalar_poly_system({0.0, -0.5}, {0.0, 1.0});
  auto make = [&](const TwoSidedPath& p) {
    auto grid = std::make_shared<TimeGrid>(p, 1e-3, p.t_min(), p.t_max());
    return make_ito_cocycle(sys, grid);
  };
  SUBCASE("t = 0 gives exactly zero") {
    CHECK(cocycle_check(make, path, Vec::Constant(1, 1.0), 0.5, 0.0) == 0.0);
  }
  SUBCASE("drift-only flow composes to floating accuracy") {
    auto quiet = TwoSidedPath::sample(LevyTriplet::drift_only(Vec::Constant(1, 0.4)),
                                      -0.5, 1.5, 1e-3, 6);
    CHECK(cocycle_check(make, quiet, Vec::Constant(1, 1.0), 0.5, 0.5) <= 1e-10);
  }
  SUBCASE("jump system stays within scheme error") {
    CHECK(cocycle_check(make, path, Vec::Constant(1, 1.0), 0.5, 0.5) <= 5e-2);
  }
}

TEST_CASE("blow-up raises a divergence error with the last time") {
  auto path = TwoSidedPath::sample(LevyTriplet::drift_only(Vec::Zero(1)), -0.1,
                                   4.0, 1e-2, 7);
  TimeGrid grid(path, 1e-2, 0.0, 4.0);
  auto sys = scalar_poly_system({0.0, 0.0, 0.0, 1.0}, {0.0});  // a = x^3
  try {
    integrate_ito(sys, grid, 0.0, 4.0, Vec::Constant(1, 3.0));
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& ex) {
    CHECK(ex.last_time > 0.0);
    CHECK(ex.last_time <= 4.0);
  }
}

TEST_CASE("jacobian self-test accepts analytic jacobians") {
  auto sys = scalar_poly_system({0.1, -0.5, 0.0, -0.2}, {0.2, 0.3});
  std::vector<Vec> pts = {Vec::Constant(1, -1.0), Vec::Constant(1, 0.3),
                          Vec::Constant(1, 1.7)};
  CHECK(sys.jacobian_selftest(pts) <= 1e-8);
}

TEST_CASE("leftward integration roughly inverts the forward run") {
  auto quiet = TwoSidedPath::sample(LevyTriplet::drift_only(Vec::Constant(1, 0.3)),
                                    -0.5, 1.5, 1e-3, 8);
  TimeGrid grid(quiet, 1e-3, 0.0, 1.0);
  auto sys = scalar_poly_system({0.0, -0.7}, {0.0});
  auto fwd = integrate_ito(sys, grid, 0.0, 1.0, Vec::Constant(1, 1.0));
  auto back = integrate_ito(sys, grid, 1.0, 0.0, fwd.at_time(1.0));
  CHECK(std::abs(back.states.back()[0] - 1.0) <= 5e-3);
}

TEST_CASE("flow CSV carries states and jacobians") {
  auto path = jump_diffusion_path(9);
  TimeGrid grid(path, 1e-2, 0.0, 0.2);
  auto sys = scalar_poly_system({0.0, -0.5}, {0.0, 1.0});
  auto flow = integrate_variational(sys, grid, 0.0, 0.2, Vec::Constant(1, 1.0));
  std::string f = "/tmp/levyrds_test_flow.csv";
  write_flow_csv(f, flow);
  std::ifstream in(f);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x_1,J_11");
  std::remove(f.c_str());
}
