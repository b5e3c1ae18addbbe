#include "levyrds/linearization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/QR>

namespace levyrds {

// ---------------------------------------------------------------------------
// linearize
// ---------------------------------------------------------------------------

LinearSystem linearize(const SystemSpec& system) {
  const Vec zero = Vec::Zero(system.dim);
  if (system.drift(zero).lpNorm<Eigen::Infinity>() > 1e-10)
    throw HypothesisError("linearize: a(0) != 0");
  for (int i = 0; i < system.noise_count(); ++i)
    if (system.noise_fields[i].value(zero).lpNorm<Eigen::Infinity>() > 1e-10)
      throw HypothesisError("linearize: sigma(0) != 0");
  LinearSystem lin;
  lin.B0 = system.drift_jac(zero);
  for (int i = 0; i < system.noise_count(); ++i)
    lin.B.push_back(system.noise_jac(i, zero));
  return lin;
}

// ---------------------------------------------------------------------------
// integrate_linear
// ---------------------------------------------------------------------------

namespace {

// d = 1 per-cell exact factors: log x gains
//   (B0 + B.b_eff - 1/2 B^T Q B) dt + B . noise  and  log|1 + B.u| at jumps.
struct ScalarLinear {
  double b0;
  Vec B;        // m scalars
  double ito_drift;  // B0 + B.b_eff - 1/2 B^T Q B
};

ScalarLinear scalar_coeffs(const LinearSystem& linsys, const TimeGrid& grid) {
  ScalarLinear c;
  c.b0 = linsys.B0(0, 0);
  const int m = static_cast<int>(linsys.B.size());
  c.B = Vec(m);
  for (int i = 0; i < m; ++i) c.B[i] = linsys.B[i](0, 0);
  const Mat q = grid.path().triplet().gaussian_cov();
  c.ito_drift = c.b0 + c.B.dot(grid.effective_drift()) - 0.5 * c.B.dot(q * c.B);
  return c;
}

}  // namespace

FlowResult integrate_linear(const LinearSystem& linsys, const TimeGrid& grid,
                            double t0, double t1, const Vec& x0) {
  FlowResult res;
  std::size_t i0 = grid.index_of(t0);
  std::size_t i1 = grid.index_of(t1);
  const int d = linsys.dim();

  if (d == 1) {
    res.meta.integrator = "stochastic-exponential";
    auto c = scalar_coeffs(linsys, grid);
    double x = x0[0];
    res.times.push_back(grid.nodes()[i0]);
    res.states.push_back(Vec::Constant(1, x));
    auto jump_factor = [&](const Vec& u) { return 1.0 + c.B.dot(u); };
    auto cont_factor = [&](const Cell& cell) {
      return std::exp(c.ito_drift * cell.dt + c.B.dot(cell.noise));
    };
    if (i0 <= i1) {
      for (std::size_t i = i0; i < i1; ++i) {
        const Cell& cell = grid.cells()[i];
        if (cell.jump && cell.jump_at_left) x *= jump_factor(*cell.jump);
        x *= cont_factor(cell);
        if (cell.jump && !cell.jump_at_left) x *= jump_factor(*cell.jump);
        res.times.push_back(cell.t1);
        res.states.push_back(Vec::Constant(1, x));
        ++res.meta.steps;
      }
    } else {
      for (std::size_t i = i0; i-- > i1;) {
        const Cell& cell = grid.cells()[i];
        if (cell.jump && !cell.jump_at_left) x /= jump_factor(*cell.jump);
        x /= cont_factor(cell);
        if (cell.jump && cell.jump_at_left) x /= jump_factor(*cell.jump);
        res.times.push_back(cell.t0);
        res.states.push_back(Vec::Constant(1, x));
        ++res.meta.steps;
      }
    }
    return res;
  }

  res.meta.integrator = "euler-linear";
  const Vec& b = grid.effective_drift();
  const Mat eye = Mat::Identity(d, d);
  auto step_mat = [&](const Cell& cell) {
    Mat m = eye + linsys.B0 * cell.dt;
    Vec dl = b * cell.dt + cell.noise;
    for (std::size_t i = 0; i < linsys.B.size(); ++i) m += linsys.B[i] * dl[i];
    return m;
  };
  auto jump_mat = [&](const Vec& u) {
    Mat m = eye;
    for (std::size_t i = 0; i < linsys.B.size(); ++i) m += linsys.B[i] * u[i];
    return m;
  };
  Vec x = x0;
  res.times.push_back(grid.nodes()[i0]);
  res.states.push_back(x);
  if (i1 < i0) throw ParameterError("integrate_linear: d > 1 forward runs only");
  for (std::size_t i = i0; i < i1; ++i) {
    const Cell& cell = grid.cells()[i];
    if (cell.jump && cell.jump_at_left) x = jump_mat(*cell.jump) * x;
    x = step_mat(cell) * x;
    if (cell.jump && !cell.jump_at_left) x = jump_mat(*cell.jump) * x;
    res.times.push_back(cell.t1);
    res.states.push_back(x);
    ++res.meta.steps;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Lyapunov spectrum
// ---------------------------------------------------------------------------

bool LyapunovSpectrum::hyperbolic() const {
  for (std::size_t i = 0; i < exponents.size(); ++i)
    if (std::abs(exponents[i]) <= 3.0 * standard_errors[i]) return false;
  return !exponents.empty();
}

LyapunovSpectrum lyapunov_exponents(const LinearSystem& linsys,
                                    const LevyTriplet& triplet,
                                    const LyapunovOptions& opts,
                                    std::uint64_t seed) {
  const int d = linsys.dim();
  const int n = opts.n_samples;
  std::vector<std::vector<double>> per_sample(static_cast<std::size_t>(n));

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
    auto path = TwoSidedPath::sample(triplet, 0.0, opts.T, opts.dt,
                                     derive_seed(seed, "lyapunov", k));
    TimeGrid grid(path, opts.dt, 0.0, opts.T);
    if (d == 1) {
      auto c = scalar_coeffs(linsys, grid);
      double acc = 0.0;
      for (const Cell& cell : grid.cells()) {
        acc += c.ito_drift * cell.dt + c.B.dot(cell.noise);
        if (cell.jump) acc += std::log(std::abs(1.0 + c.B.dot(*cell.jump)));
      }
      per_sample[k] = {acc / opts.T};
      return;
    }
    const Vec& b = grid.effective_drift();
    const Mat eye = Mat::Identity(d, d);
    Mat frame = eye;
    Vec logs = Vec::Zero(d);
    int since_qr = 0;
    auto reorth = [&]() {
      Eigen::HouseholderQR<Mat> qr(frame);
      Mat q = qr.householderQ() * Mat::Identity(d, d);
      Mat r = q.transpose() * frame;
      for (int c = 0; c < d; ++c) {
        double diag = r(c, c);
        if (diag < 0) q.col(c) *= -1.0;
        logs[c] += std::log(std::abs(diag));
      }
      frame = q;
      since_qr = 0;
    };
    for (const Cell& cell : grid.cells()) {
      Mat m = eye + linsys.B0 * cell.dt;
      Vec dl = b * cell.dt + cell.noise;
      for (std::size_t i = 0; i < linsys.B.size(); ++i) m += linsys.B[i] * dl[i];
      if (cell.jump) {
        Mat jm = eye;
        for (std::size_t i = 0; i < linsys.B.size(); ++i)
          jm += linsys.B[i] * (*cell.jump)[i];
        m = cell.jump_at_left ? m * jm : jm * m;
      }
      frame = m * frame;
      if (++since_qr >= opts.reorth_period) reorth();
    }
    reorth();
    std::vector<double> exps(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) exps[static_cast<std::size_t>(c)] = logs[c] / opts.T;
    std::sort(exps.begin(), exps.end(), std::greater<>());
    per_sample[k] = std::move(exps);
  });

  LyapunovSpectrum spec;
  spec.horizon = opts.T;
  spec.n_samples = n;
  for (int c = 0; c < d; ++c) {
    double mean = 0.0;
    for (const auto& s : per_sample) mean += s[static_cast<std::size_t>(c)];
    mean /= n;
    double var = 0.0;
    for (const auto& s : per_sample) {
      double dv = s[static_cast<std::size_t>(c)] - mean;
      var += dv * dv;
    }
    var = n > 1 ? var / (n - 1) : 0.0;
    spec.exponents.push_back(mean);
    spec.standard_errors.push_back(std::sqrt(var / n));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Linearized RDE coefficient and the step-2 check
// ---------------------------------------------------------------------------

namespace {

Mat gamma_jacobian_at_zero(const CohomologyField& field, std::size_t t_idx) {
  const int d = field.anchors().dim();
  Mat jac(d, d);
  for (int a = 0; a < d; ++a) {
    const auto& axis = field.anchors().axes()[static_cast<std::size_t>(a)];
    auto it = std::lower_bound(axis.begin(), axis.end(), -1e-15);
    if (it == axis.end())
      throw ParameterError("linearized_rde_coefficient: lattice does not cover 0");
    double gap_r = (it + 1 != axis.end()) ? *(it + 1) - *it : *it - *(it - 1);
    double gap_l = (it != axis.begin()) ? *it - *(it - 1) : gap_r;
    double h = 0.5 * std::min(gap_l, gap_r);
    Vec ep = Vec::Zero(d), em = Vec::Zero(d);
    ep[a] = h;
    em[a] = -h;
    jac.col(a) = (field.Gamma(t_idx, ep) - field.Gamma(t_idx, em)) / (2.0 * h);
  }
  return jac;
}

}  // namespace

Mat linearized_rde_coefficient(const CohomologyField& field,
                               const LinearSystem& linsys, std::size_t t_idx) {
  const int d = linsys.dim();
  const Vec zero = Vec::Zero(d);
  Mat M = field.dHdx(t_idx, zero);
  Mat dGamma = gamma_jacobian_at_zero(field, t_idx);
  Eigen::PartialPivLU<Mat> lu(M);
  Mat f = lu.solve(linsys.B0 * M - dGamma);
  if (!f.allFinite())
    throw InversionError("linearized_rde_coefficient: singular dH/dx at 0");
  return f;
}

ResidualSeries verify_step2_conjugacy(const CohomologyField& field,
                                      const LinearSystem& linsys,
                                      const TimeGrid& grid, const Vec& y0,
                                      double t_end) {
  const auto& times = field.times();
  std::size_t n_end = field.time_index(t_end);
  const int d = linsys.dim();
  const Vec zero = Vec::Zero(d);

  std::vector<Mat> f_at(n_end + 1), M_at(n_end + 1);
  for (std::size_t k = 0; k <= n_end; ++k) {
    f_at[k] = linearized_rde_coefficient(field, linsys, k);
    M_at[k] = field.dHdx(k, zero);
  }

  // Heun on dy = f(theta_t omega) y dt
  std::vector<Vec> y(n_end + 1);
  y[0] = y0;
  for (std::size_t k = 0; k < n_end; ++k) {
    double dt = times[k + 1] - times[k];
    Vec fy = f_at[k] * y[k];
    Vec pred = y[k] + dt * fy;
    y[k + 1] = y[k] + 0.5 * dt * (fy + f_at[k + 1] * pred);
  }

  Vec x0 = M_at[0] * y0;
  auto linear_flow = integrate_linear(linsys, grid, times[0], times[n_end], x0);

  ResidualSeries series;
  for (std::size_t k = 0; k <= n_end; ++k) {
    series.times.push_back(times[k]);
    series.residuals.push_back((M_at[k] * y[k] - linear_flow.states[k]).norm());
  }
  return series;
}

// ---------------------------------------------------------------------------
// Scalar example suite
// ---------------------------------------------------------------------------

ScalarSuiteReport scalar_example_suite(double alpha, double sigma_param, int l,
                                       const TimeGrid& grid, double t_end,
                                       const std::vector<double>& ladder) {
  if (l <= 1) throw ParameterError("scalar_example_suite: l must exceed 1");
  ScalarSuiteReport report;
  report.l = l;
  report.beta = alpha + 0.5 * sigma_param * sigma_param;
  report.ladder = ladder;

  std::vector<double> drift_coeffs(static_cast<std::size_t>(l) + 1, 0.0);
  drift_coeffs[1] = report.beta;
  drift_coeffs[static_cast<std::size_t>(l)] = -1.0;
  auto system = scalar_poly_system(drift_coeffs, {0.0, 1.0});
  auto linsys = linearize(system);

  {
    Vec zero = Vec::Zero(1);
    auto nonlinear = integrate_ito(system, grid, 0.0, t_end, zero);
    auto linear = integrate_linear(linsys, grid, 0.0, t_end, zero);
    double worst_nl = 0.0, worst_li = 0.0;
    for (const auto& s : nonlinear.states) worst_nl = std::max(worst_nl, s.norm());
    for (const auto& s : linear.states) worst_li = std::max(worst_li, s.norm());
    report.zero_fixed_nonlinear = worst_nl == 0.0;
    report.zero_fixed_linear = worst_li == 0.0;
  }

  // same Euler discretization on both legs so the ratio isolates the
  // nonlinear remainder instead of the scheme error
  auto linear_leg = scalar_poly_system({0.0, report.beta}, {0.0, 1.0});
  for (double x0 : ladder) {
    Vec start = Vec::Constant(1, x0);
    double worst = 0.0;
    bool diverged = false;
    try {
      auto nonlinear = integrate_ito(system, grid, 0.0, t_end, start);
      auto linear = integrate_ito(linear_leg, grid, 0.0, t_end, start);
      for (std::size_t i = 0; i < nonlinear.states.size(); ++i)
        worst = std::max(worst,
                         (nonlinear.states[i] - linear.states[i]).norm());
    } catch (const DivergenceError&) {
      diverged = true;
      worst = std::numeric_limits<double>::infinity();
    }
    report.agreement_ratio.push_back(worst / std::abs(x0));
    if (diverged)
      report.note += "divergence at x0=" + std::to_string(x0) + "; ";
  }

  report.ratios_decreasing = true;
  for (std::size_t i = 0; i + 1 < report.agreement_ratio.size(); ++i)
    if (report.agreement_ratio[i + 1] >= report.agreement_ratio[i])
      report.ratios_decreasing = false;

  {
    auto c = scalar_coeffs(linsys, grid);
    double acc = 0.0, T = 0.0;
    std::size_t i1 = grid.index_of(t_end);
    for (std::size_t i = grid.index_of(0.0); i < i1; ++i) {
      const Cell& cell = grid.cells()[i];
      acc += c.ito_drift * cell.dt + c.B.dot(cell.noise);
      if (cell.jump) acc += std::log(std::abs(1.0 + c.B.dot(*cell.jump)));
      T += cell.dt;
    }
    report.linear_exponent = T > 0 ? acc / T : 0.0;
  }
  if (report.beta > 0)
    report.note +=
        "beta > 0: linear flow grows while the nonlinear flow saturates; "
        "agreement is local only";
  return report;
}

void write_spectrum_csv(const std::string& file, const LyapunovSpectrum& spec) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  out << "exponent_rank,value,stderr\n";
  char buf[64];
  for (std::size_t i = 0; i < spec.exponents.size(); ++i) {
    out << i << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", spec.exponents[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", spec.standard_errors[i]);
    out << buf << '\n';
  }
}

}  // namespace levyrds
