#pragma once

#include <string>
#include <vector>

#include "levyrds/conjugacy.hpp"

namespace levyrds {

// ---------------------------------------------------------------------------
// Linearized system at the fixed point 0: B_0 = da(0), B_i = dsigma_i(0).
// ---------------------------------------------------------------------------

struct LinearSystem {
  Mat B0;
  std::vector<Mat> B;
  int dim() const { return static_cast<int>(B0.rows()); }
};

// Requires a(0) = 0 and sigma_i(0) = 0 within 1e-10.
LinearSystem linearize(const SystemSpec& system);

// dX = B0 X dt + B_i X dL^i.  d = 1 uses the exact per-cell stochastic
// exponential update; general d falls back to jump-adapted Euler.
FlowResult integrate_linear(const LinearSystem& linsys, const TimeGrid& grid,
                            double t0, double t1, const Vec& x0);

// ---------------------------------------------------------------------------
// Lyapunov spectrum of the linear cocycle.
// ---------------------------------------------------------------------------

struct LyapunovSpectrum {
  std::vector<double> exponents;        // sorted descending
  std::vector<double> standard_errors;  // across sample paths
  double horizon = 0.0;
  int n_samples = 0;
  bool hyperbolic() const;  // min |exponent| > 3 SE
};

struct LyapunovOptions {
  double T = 200.0;
  double dt = 0.1;
  int n_samples = 100;
  int reorth_period = 10;  // QR cadence for d > 1
};

LyapunovSpectrum lyapunov_exponents(const LinearSystem& linsys,
                                    const LevyTriplet& triplet,
                                    const LyapunovOptions& opts,
                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Linearized RDE coefficient
//   f = (dH/dx)(.,0)^{-1} [ B0 (dH/dx)(.,0) - (dGamma/dx)(.,0) ]
// with dGamma/dx from central differences over the anchor lattice.
// ---------------------------------------------------------------------------

Mat linearized_rde_coefficient(const CohomologyField& field,
                               const LinearSystem& linsys, std::size_t t_idx);

// Residual |M_t y_t - x_t| where y solves dy = f(theta_t omega) y dt,
// M_t = (dH_t/dx)(.,0) and x solves the linear stochastic equation with
// x_0 = M_0 y_0.
ResidualSeries verify_step2_conjugacy(const CohomologyField& field,
                                      const LinearSystem& linsys,
                                      const TimeGrid& grid, const Vec& y0,
                                      double t_end);

// ---------------------------------------------------------------------------
// Scalar example suite: nonlinear a(x) = beta x - x^l against its
// linearization, run from a ladder of initial conditions.
// ---------------------------------------------------------------------------

struct ScalarSuiteReport {
  double beta = 0.0;
  int l = 3;
  bool zero_fixed_nonlinear = false;
  bool zero_fixed_linear = false;
  std::vector<double> ladder;            // initial conditions
  std::vector<double> agreement_ratio;   // sup_t |phi - phi0| / x0
  double linear_exponent = 0.0;          // log|x_T/x_0| / T of the linear flow
  bool ratios_decreasing = false;
  std::string note;
};

ScalarSuiteReport scalar_example_suite(double alpha, double sigma_param, int l,
                                       const TimeGrid& grid, double t_end,
                                       const std::vector<double>& ladder);

void write_spectrum_csv(const std::string& file, const LyapunovSpectrum& spec);

}  // namespace levyrds
