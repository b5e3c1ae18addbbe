#include "levyrds/conjugacy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace levyrds {

namespace {

Vec sigma_combine(const SystemSpec& system, const Vec& x, const Vec& dl) {
  Vec out = Vec::Zero(system.dim);
  for (int i = 0; i < system.noise_count(); ++i)
    out += system.noise_fields[i].value(x) * dl[i];
  return out;
}

Mat sigma_jac_combine(const SystemSpec& system, const Vec& x, const Vec& dl) {
  Mat out = Mat::Zero(system.dim, system.dim);
  for (int i = 0; i < system.noise_count(); ++i)
    out += system.noise_jac(i, x) * dl[i];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// solve_h
// ---------------------------------------------------------------------------

HTrajectory solve_h(const SystemSpec& system, const TimeGrid& grid, const Vec& x,
                    double tau, double t_end, double T_h,
                    const HSolveOptions& opts) {
  const std::size_t i_lo = grid.index_of(-T_h);
  const std::size_t i_hi = grid.index_of(t_end);
  if (i_hi < i_lo) throw ParameterError("solve_h: t_end below -T_h");
  const std::size_t n_cells = i_hi - i_lo;

  HTrajectory traj;
  traj.tau = tau;
  traj.T_h = T_h;
  traj.grid_lo = i_lo;
  traj.times.assign(grid.nodes().begin() + i_lo, grid.nodes().begin() + i_hi + 1);
  traj.h.assign(n_cells + 1, x);
  traj.cont_state.assign(n_cells, x);
  traj.jump_state.assign(n_cells, Vec());
  if (opts.variational) {
    traj.dh_dx.assign(n_cells + 1, Mat::Identity(system.dim, system.dim));
    traj.cont_jac.assign(n_cells, Mat::Identity(system.dim, system.dim));
    traj.jump_jac.assign(n_cells, Mat());
  }

  const double scale = std::exp(-tau);
  const Vec& b_eff = grid.effective_drift();
  const bool scalar =
      system.scalar_sigma.has_value() && system.dim == 1 && system.noise_count() == 1;

  // One sweep of the truncated equation; integrand evaluations happen in
  // forward order so causality makes the sweep a direct substitution.
  auto sweep_scalar = [&]() {
    const auto& sig = system.scalar_sigma->sigma;
    const auto& dsig = system.scalar_sigma->dsigma;
    const double x0 = x[0];
    const double b = b_eff[0];
    double change = 0.0;
    double S = 0.0, SJ = 0.0;
    double state = x0, jac = 1.0;
    for (std::size_t k = 0; k < n_cells; ++k) {
      const Cell& c = grid.cells()[i_lo + k];
      const double ea = scale * grid.exp_node(i_lo + k);
      const double eb = scale * grid.exp_node(i_lo + k + 1);
      const double em = scale * grid.exp_mid(i_lo + k);
      if (c.jump && c.jump_at_left) {
        const double u = (*c.jump)[0];
        if (traj.jump_state[k].size() == 0) traj.jump_state[k].resize(1);
        traj.jump_state[k][0] = state;
        if (opts.variational) {
          if (traj.jump_jac[k].size() == 0) traj.jump_jac[k].resize(1, 1);
          traj.jump_jac[k](0, 0) = jac;
        }
        SJ += ea * dsig(state) * u * jac;
        S += ea * sig(state) * u;
        state = x0 + S;
        jac = 1.0 + SJ;
      }
      traj.cont_state[k][0] = state;
      if (opts.variational) traj.cont_jac[k](0, 0) = jac;
      const double wd = (eb - ea) * b;
      const double wn = em * c.noise[0];
      SJ += dsig(state) * (wd + wn) * jac;
      S += sig(state) * (wd + wn);
      state = x0 + S;
      jac = 1.0 + SJ;
      if (c.jump && !c.jump_at_left) {
        const double u = (*c.jump)[0];
        if (traj.jump_state[k].size() == 0) traj.jump_state[k].resize(1);
        traj.jump_state[k][0] = state;
        if (opts.variational) {
          if (traj.jump_jac[k].size() == 0) traj.jump_jac[k].resize(1, 1);
          traj.jump_jac[k](0, 0) = jac;
        }
        SJ += eb * dsig(state) * u * jac;
        S += eb * sig(state) * u;
        state = x0 + S;
        jac = 1.0 + SJ;
      }
      change = std::max(change, std::abs(traj.h[k + 1][0] - state));
      traj.h[k + 1][0] = state;
      if (opts.variational) traj.dh_dx[k + 1](0, 0) = jac;
    }
    return change;
  };

  auto sweep_generic = [&]() {
    const int d = system.dim;
    const Mat eye = Mat::Identity(d, d);
    double change = 0.0;
    Vec S = Vec::Zero(d);
    Mat SJ = Mat::Zero(d, d);
    Vec state = x;
    Mat jac = eye;
    for (std::size_t k = 0; k < n_cells; ++k) {
      const Cell& c = grid.cells()[i_lo + k];
      const double ea = scale * grid.exp_node(i_lo + k);
      const double eb = scale * grid.exp_node(i_lo + k + 1);
      const double em = scale * grid.exp_mid(i_lo + k);
      if (c.jump && c.jump_at_left) {
        traj.jump_state[k] = state;
        if (opts.variational) traj.jump_jac[k] = jac;
        if (opts.variational) SJ += ea * sigma_jac_combine(system, state, *c.jump) * jac;
        S += ea * sigma_combine(system, state, *c.jump);
        state = x + S;
        jac = eye + SJ;
      }
      traj.cont_state[k] = state;
      if (opts.variational) traj.cont_jac[k] = jac;
      Vec dl = (eb - ea) * b_eff + em * c.noise;
      if (opts.variational) SJ += sigma_jac_combine(system, state, dl) * jac;
      S += sigma_combine(system, state, dl);
      state = x + S;
      jac = eye + SJ;
      if (c.jump && !c.jump_at_left) {
        traj.jump_state[k] = state;
        if (opts.variational) traj.jump_jac[k] = jac;
        if (opts.variational) SJ += eb * sigma_jac_combine(system, state, *c.jump) * jac;
        S += eb * sigma_combine(system, state, *c.jump);
        state = x + S;
        jac = eye + SJ;
      }
      change = std::max(change, (traj.h[k + 1] - state).lpNorm<Eigen::Infinity>());
      traj.h[k + 1] = state;
      if (opts.variational) traj.dh_dx[k + 1] = jac;
    }
    return change;
  };

  double change = 0.0;
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    change = scalar ? sweep_scalar() : sweep_generic();
    traj.sweeps = sweep + 1;
    if (change < opts.tol) return traj;
  }
  throw IterationError("solve_h: no convergence after max sweeps", change);
}

// ---------------------------------------------------------------------------
// solve_D: forward substitution of the linear equation
//   D(t) = -(h_t - x) + e^{-tau} int e^s (dsigma_i)(h_s) D(s) dL^i_s
// ---------------------------------------------------------------------------

DTrajectory solve_D(const SystemSpec& system, const TimeGrid& grid,
                    const HTrajectory& h_traj) {
  const std::size_t i_lo = h_traj.grid_lo;
  const std::size_t n_cells = h_traj.times.size() - 1;
  const Vec x = h_traj.h.front();
  const double scale = std::exp(-h_traj.tau);
  const Vec& b_eff = grid.effective_drift();
  const int d = system.dim;
  const bool scalar =
      system.scalar_sigma.has_value() && d == 1 && system.noise_count() == 1;

  DTrajectory out;
  out.tau = h_traj.tau;
  out.times = h_traj.times;
  out.D.assign(n_cells + 1, Vec::Zero(d));
  out.cont_state.assign(n_cells, Vec::Zero(d));
  out.jump_state.assign(n_cells, Vec());

  if (scalar) {
    const auto& dsig = system.scalar_sigma->dsigma;
    const double x0 = x[0];
    double SD = 0.0;
    for (std::size_t k = 0; k < n_cells; ++k) {
      const Cell& c = grid.cells()[i_lo + k];
      const double ea = scale * grid.exp_node(i_lo + k);
      const double eb = scale * grid.exp_node(i_lo + k + 1);
      const double em = scale * grid.exp_mid(i_lo + k);
      double Dstate = out.D[k][0];
      if (c.jump && c.jump_at_left) {
        if (out.jump_state[k].size() == 0) out.jump_state[k].resize(1);
        out.jump_state[k][0] = Dstate;
        SD += ea * dsig(h_traj.jump_state[k][0]) * (*c.jump)[0] * Dstate;
        Dstate = -(h_traj.cont_state[k][0] - x0) + SD;
      }
      out.cont_state[k][0] = Dstate;
      const double hc = h_traj.cont_state[k][0];
      SD += dsig(hc) * ((eb - ea) * b_eff[0] + em * c.noise[0]) * Dstate;
      const double h_after_cont =
          (c.jump && !c.jump_at_left) ? h_traj.jump_state[k][0] : h_traj.h[k + 1][0];
      Dstate = -(h_after_cont - x0) + SD;
      if (c.jump && !c.jump_at_left) {
        if (out.jump_state[k].size() == 0) out.jump_state[k].resize(1);
        out.jump_state[k][0] = Dstate;
        SD += eb * dsig(h_traj.jump_state[k][0]) * (*c.jump)[0] * Dstate;
        Dstate = -(h_traj.h[k + 1][0] - x0) + SD;
      }
      out.D[k + 1][0] = Dstate;
    }
    return out;
  }

  Vec SD = Vec::Zero(d);
  for (std::size_t k = 0; k < n_cells; ++k) {
    const Cell& c = grid.cells()[i_lo + k];
    const double ea = scale * grid.exp_node(i_lo + k);
    const double eb = scale * grid.exp_node(i_lo + k + 1);
    const double em = scale * grid.exp_mid(i_lo + k);
    Vec Dstate = out.D[k];
    if (c.jump && c.jump_at_left) {
      out.jump_state[k] = Dstate;
      SD += ea * sigma_jac_combine(system, h_traj.jump_state[k], *c.jump) * Dstate;
      Dstate = -(h_traj.cont_state[k] - x) + SD;
    }
    out.cont_state[k] = Dstate;
    Vec dl = (eb - ea) * b_eff + em * c.noise;
    SD += sigma_jac_combine(system, h_traj.cont_state[k], dl) * Dstate;
    Vec h_after_cont =
        (c.jump && !c.jump_at_left) ? h_traj.jump_state[k] : h_traj.h[k + 1];
    Dstate = -(h_after_cont - x) + SD;
    if (c.jump && !c.jump_at_left) {
      out.jump_state[k] = Dstate;
      SD += eb * sigma_jac_combine(system, h_traj.jump_state[k], *c.jump) * Dstate;
      Dstate = -(h_traj.h[k + 1] - x) + SD;
    }
    out.D[k + 1] = Dstate;
  }
  return out;
}

// ---------------------------------------------------------------------------
// AnchorLattice
// ---------------------------------------------------------------------------

AnchorLattice::AnchorLattice(std::vector<std::vector<double>> axes)
    : axes_(std::move(axes)) {
  if (axes_.empty()) throw ParameterError("AnchorLattice: no axes");
  total_ = 1;
  strides_.resize(axes_.size());
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    auto& axis = axes_[a];
    if (axis.empty()) throw ParameterError("AnchorLattice: empty axis");
    if (!std::is_sorted(axis.begin(), axis.end()))
      throw ParameterError("AnchorLattice: axis not sorted");
    strides_[a] = total_;
    total_ *= axis.size();
  }
}

AnchorLattice AnchorLattice::line(std::vector<double> coords) {
  return AnchorLattice({std::move(coords)});
}

Vec AnchorLattice::point(std::size_t flat) const {
  Vec p(dim());
  for (std::size_t a = 0; a < axes_.size(); ++a)
    p[static_cast<int>(a)] =
        axes_[a][(flat / strides_[a]) % axes_[a].size()];
  return p;
}

bool AnchorLattice::weights(const Vec& y,
                            std::vector<std::pair<std::size_t, double>>& out) const {
  out.clear();
  bool inside = true;
  std::vector<std::size_t> lo(axes_.size());
  std::vector<double> lam(axes_.size());
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const auto& axis = axes_[a];
    double v = y[static_cast<int>(a)];
    if (v < axis.front() || v > axis.back()) inside = false;
    if (axis.size() == 1) {
      lo[a] = 0;
      lam[a] = 0.0;
      continue;
    }
    auto it = std::upper_bound(axis.begin(), axis.end(), v);
    std::size_t hi = std::clamp<std::size_t>(
        static_cast<std::size_t>(it - axis.begin()), 1, axis.size() - 1);
    lo[a] = hi - 1;
    lam[a] = std::clamp((v - axis[lo[a]]) / (axis[hi] - axis[lo[a]]), 0.0, 1.0);
  }
  const std::size_t corners = std::size_t{1} << axes_.size();
  for (std::size_t c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
      bool upper = (c >> a) & 1u;
      if (axes_[a].size() == 1 && upper) {
        w = 0.0;
        break;
      }
      w *= upper ? lam[a] : 1.0 - lam[a];
      flat += (lo[a] + (upper ? 1 : 0)) * strides_[a];
    }
    if (w != 0.0) out.emplace_back(flat, w);
  }
  return inside;
}

// ---------------------------------------------------------------------------
// CohomologyField
// ---------------------------------------------------------------------------

CohomologyField::CohomologyField(std::vector<double> times, AnchorLattice anchors,
                                 double T_h, double newton_tol)
    : times_(std::move(times)),
      anchors_(std::move(anchors)),
      T_h_(T_h),
      newton_tol_(newton_tol) {}

std::size_t CohomologyField::time_index(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12);
  if (it == times_.end() || std::abs(*it - t) > 1e-9)
    throw RangeError("CohomologyField: t is not a sampled node");
  return static_cast<std::size_t>(it - times_.begin());
}

const Vec& CohomologyField::H_sample(std::size_t ti, std::size_t ai) const {
  return H_data[ti][ai];
}
const Vec& CohomologyField::Gamma_sample(std::size_t ti, std::size_t ai) const {
  return Gamma_data[ti][ai];
}
const Mat& CohomologyField::dHdx_sample(std::size_t ti, std::size_t ai) const {
  return dHdx_data[ti][ai];
}

namespace {
thread_local std::vector<std::pair<std::size_t, double>> g_weights;
}

Vec CohomologyField::H(std::size_t ti, const Vec& y) const {
  if (!anchors_.weights(y, g_weights)) ++(*extrapolations_);
  Vec out = Vec::Zero(y.size());
  for (auto& [idx, w] : g_weights) out += w * H_data[ti][idx];
  return out;
}

Vec CohomologyField::Gamma(std::size_t ti, const Vec& y) const {
  if (!anchors_.weights(y, g_weights)) ++(*extrapolations_);
  Vec out = Vec::Zero(y.size());
  for (auto& [idx, w] : g_weights) out += w * Gamma_data[ti][idx];
  return out;
}

Mat CohomologyField::dHdx(std::size_t ti, const Vec& y) const {
  if (!anchors_.weights(y, g_weights)) ++(*extrapolations_);
  Mat out = Mat::Zero(y.size(), y.size());
  for (auto& [idx, w] : g_weights) out += w * dHdx_data[ti][idx];
  return out;
}

void CohomologyField::finalize() {
  jacobian_ok_ = true;
  for (const auto& per_time : dHdx_data)
    for (const auto& jac : per_time)
      if (std::abs(jac.determinant()) < 1e-12) jacobian_ok_ = false;
}

CohomologyField build_cohomology(const SystemSpec& system, const TimeGrid& grid,
                                 const AnchorLattice& anchors,
                                 const CohomologyBuildOptions& opts) {
  if (anchors.size() == 0) throw ParameterError("build_cohomology: no anchors");
  std::vector<double> times;
  for (double t : grid.nodes())
    if (t >= opts.t_lo - 1e-12 && t <= opts.t_hi + 1e-12) times.push_back(t);
  if (times.empty()) throw ParameterError("build_cohomology: empty time window");

  CohomologyField field(times, anchors, opts.T_h, opts.newton_tol);
  const std::size_t nt = times.size(), na = anchors.size();
  field.H_data.assign(nt, std::vector<Vec>(na));
  field.Gamma_data.assign(nt, std::vector<Vec>(na));
  field.dHdx_data.assign(nt, std::vector<Mat>(na));

  HSolveOptions solver = opts.solver;
  solver.variational = true;

  parallel_for(na, [&](std::size_t ai) {
    const Vec x = anchors.point(ai);
    for (std::size_t ti = 0; ti < nt; ++ti) {
      const double t = times[ti];
      auto h_traj = solve_h(system, grid, x, t, t, opts.T_h, solver);
      auto d_traj = solve_D(system, grid, h_traj);
      field.H_data[ti][ai] = h_traj.h.back();
      field.Gamma_data[ti][ai] = d_traj.D.back();
      field.dHdx_data[ti][ai] = h_traj.dh_dx.back();
    }
  });
  field.finalize();
  return field;
}

// ---------------------------------------------------------------------------
// Inversion and the transformed RDE drift
// ---------------------------------------------------------------------------

Vec invert_H0(const CohomologyField& field, const Vec& y) {
  const double tol = field.newton_tol();
  Vec x = y;
  for (int iter = 0; iter < 100; ++iter) {
    Vec r = field.H(0, x) - y;
    if (r.lpNorm<Eigen::Infinity>() < tol) return x;
    Mat jac = field.dHdx(0, x);
    Eigen::PartialPivLU<Mat> lu(jac);
    Vec step = lu.solve(r);
    if (!step.allFinite()) break;
    x -= step;
    if (!x.allFinite()) break;
  }
  // 1-D bisection fallback over the anchor hull
  if (y.size() == 1 && field.anchors().dim() == 1) {
    const auto& axis = field.anchors().axes()[0];
    double lo = axis.front(), hi = axis.back();
    auto f = [&](double v) {
      return field.H(0, Vec::Constant(1, v))[0] - y[0];
    };
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return Vec::Constant(1, lo);
    if (fhi == 0.0) return Vec::Constant(1, hi);
    if (flo * fhi < 0) {
      for (int iter = 0; iter < 200; ++iter) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if (std::abs(fm) < tol) return Vec::Constant(1, mid);
        if (flo * fm <= 0) {
          hi = mid;
        } else {
          lo = mid;
          flo = fm;
        }
      }
      return Vec::Constant(1, 0.5 * (lo + hi));
    }
  }
  throw InversionError("invert_H0: Newton diverged and no bracket available");
}

Vec transformed_drift(const CohomologyField& field, const SystemSpec& system,
                      std::size_t t_idx, const Vec& y) {
  Vec hy = field.H(t_idx, y);
  Vec rhs = system.drift(hy) - field.Gamma(t_idx, y);
  Mat jac = field.dHdx(t_idx, y);
  Eigen::PartialPivLU<Mat> lu(jac);
  Vec v = lu.solve(rhs);
  if (!v.allFinite())
    throw InversionError("transformed_drift: singular dH/dx");
  return v;
}

// ---------------------------------------------------------------------------
// Conjugacy verification
// ---------------------------------------------------------------------------

double ResidualSeries::max() const {
  double m = 0.0;
  for (double r : residuals) m = std::max(m, r);
  return m;
}

ResidualSeries verify_conjugacy_ito(const SystemSpec& system, const TimeGrid& grid,
                                    const AnchorLattice& anchors, const Vec& x0,
                                    double t_end, const CohomologyBuildOptions& opts) {
  CohomologyBuildOptions bopts = opts;
  bopts.t_lo = 0.0;
  bopts.t_hi = t_end;
  auto field = build_cohomology(system, grid, anchors, bopts);

  Vec y0 = invert_H0(field, x0);
  RdeField F = [&](double t, const Vec& y) {
    return transformed_drift(field, system, field.time_index(t), y);
  };
  auto psi = integrate_rde(F, grid, 0.0, t_end, y0);
  auto phi = integrate_ito(system, grid, 0.0, t_end, x0);

  ResidualSeries series;
  for (std::size_t i = 0; i < phi.times.size(); ++i) {
    double t = phi.times[i];
    std::size_t ti = field.time_index(t);
    Vec mapped = field.H(ti, psi.states[i]);
    series.times.push_back(t);
    series.residuals.push_back((phi.states[i] - mapped).norm());
  }
  return series;
}

double stationarity_residual(const SystemSpec& system, const TwoSidedPath& path,
                             double step, const Vec& x, double s, double t,
                             double T_h) {
  TimeGrid grid(path, step, -T_h, s + t);
  auto direct = solve_h(system, grid, x, s + t, s + t, T_h, {});
  auto shifted_path = path.shifted(s);
  TimeGrid shifted_grid(shifted_path, step, -T_h, std::max(t, step));
  auto via_shift = solve_h(system, shifted_grid, x, t, t, T_h, {});
  return (direct.h.back() - via_shift.h.back()).norm();
}

ResidualSeries sde_identity_residual(const SystemSpec& system,
                                     const TimeGrid& grid,
                                     const CohomologyField& field, const Vec& x) {
  // Telescoped residual of H_{t+dt} - H_t = Gamma dt + sigma_i(H) dL^i with
  // left-node coefficients.
  ResidualSeries series;
  const auto& times = field.times();
  std::size_t gi = grid.index_of(times.front());
  Vec acc = Vec::Zero(system.dim);
  series.times.push_back(times.front());
  series.residuals.push_back(0.0);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const Cell& c = grid.cells()[gi + k];
    Vec Ht = field.H(k, x);
    Vec Gt = field.Gamma(k, x);
    Vec dl = grid.effective_drift() * c.dt + c.noise;
    if (c.jump) dl += *c.jump;
    Vec model = Gt * c.dt + sigma_combine(system, Ht, dl);
    Vec actual = field.H(k + 1, x) - Ht;
    acc += actual - model;
    series.times.push_back(times[k + 1]);
    series.residuals.push_back(acc.norm());
  }
  return series;
}

// ---------------------------------------------------------------------------
// Ito-Ventzell residual
// ---------------------------------------------------------------------------

ResidualSeries ito_ventzell_residual(const XiSpec& xi, const EtaSpec& eta,
                                     const TimeGrid& grid, double t0, double t1,
                                     const ItoVentzellOptions& opts) {
  std::size_t i0 = grid.index_of(t0);
  std::size_t i1 = grid.index_of(t1);
  if (i1 <= i0) throw ParameterError("ito_ventzell_residual: empty window");
  const int d = eta.dim;

  Vec state = eta.eta0;
  double rhs = xi.xi(grid.nodes()[i0], state);
  ResidualSeries series;
  series.times.push_back(grid.nodes()[i0]);
  series.residuals.push_back(0.0);

  auto zero_vec = [&](double, const Vec&) { return Vec::Zero(d); };
  auto e_fn = eta.e ? eta.e : zero_vec;
  auto nu_g = eta.nu_mean_g ? eta.nu_mean_g : zero_vec;

  for (std::size_t i = i0; i < i1; ++i) {
    const Cell& c = grid.cells()[i];
    const double ta = c.t0, tb = c.t1, dt = c.dt;

    if (c.jump && c.jump_at_left) {
      // caglad side: jump first
      Vec g = eta.g ? eta.g(ta, state, *c.jump) : Vec::Zero(d);
      double Gval = xi.G ? xi.G(ta, state, *c.jump) : 0.0;
      rhs += xi.xi(ta, state + g) - xi.xi(ta, state) + Gval;
      state += g;
    }

    Vec drift = e_fn(ta, state) - nu_g(ta, state);
    Vec deta_c = drift * dt;
    Vec dw = c.dw;
    Mat f;
    if (eta.f) {
      f = eta.f(ta, state);
      if (dw.size() > 0) deta_c += f * dw;
    }

    Vec grad = xi.grad_xi(ta, state);
    rhs += grad.dot(e_fn(ta, state)) * dt;
    if (eta.f && dw.size() > 0) rhs += grad.dot(f * dw);
    if (opts.include_second_order && xi.hess_xi)
      rhs += 0.5 * deta_c.dot(xi.hess_xi(ta, state) * deta_c);
    if (xi.nu_xi_remainder) rhs += xi.nu_xi_remainder(ta, state) * dt;
    if (xi.E) rhs += xi.E(ta, state) * dt;
    if (xi.F && dw.size() > 0) {
      rhs += xi.F(ta, state).dot(dw);
      if (xi.grad_F) rhs += (xi.grad_F(ta, state) * deta_c).dot(dw);
    }
    if (xi.nu_G_diff) rhs += xi.nu_G_diff(ta, state) * dt;
    if (xi.nu_jump_comp) rhs -= xi.nu_jump_comp(ta, state) * dt;

    state += deta_c;

    if (c.jump && !c.jump_at_left) {
      Vec g = eta.g ? eta.g(tb, state, *c.jump) : Vec::Zero(d);
      double Gval = xi.G ? xi.G(tb, state, *c.jump) : 0.0;
      rhs += xi.xi(tb, state + g) - xi.xi(tb, state) + Gval;
      state += g;
    }

    series.times.push_back(tb);
    series.residuals.push_back(std::abs(xi.xi(tb, state) - rhs));
  }
  return series;
}

// ---------------------------------------------------------------------------
// Iterated-integral identity (two-route check)
// ---------------------------------------------------------------------------

double check_fubini_formula(const SystemSpec& system, const TimeGrid& grid,
                            const Vec& x, double s, double t, double T_h,
                            const HSolveOptions& solver_in) {
  if (t <= s) throw ParameterError("check_fubini_formula: need s < t");
  HSolveOptions solver = solver_in;
  solver.variational = false;

  const std::size_t ks = grid.index_of(s);
  const std::size_t kt = grid.index_of(t);
  const std::size_t K = kt - ks;
  const int d = system.dim;
  const Vec& b_eff = grid.effective_drift();

  // Weighted integral of sigma(h) over (s, r_k] with weight e^{r - r_k},
  // reconstructed from the trajectory staging.
  auto weighted_sigma_sum = [&](const HTrajectory& traj, double upto) {
    Vec acc = Vec::Zero(d);
    const double scale = std::exp(-upto);
    for (std::size_t c = 0; c + 1 < traj.times.size(); ++c) {
      double a = traj.times[c], b = traj.times[c + 1];
      if (b <= s + 1e-15 || a >= upto - 1e-15) continue;
      std::size_t gk = traj.grid_lo + c;
      const Cell& cell = grid.cells()[gk];
      const double ea = scale * grid.exp_node(gk);
      const double eb = scale * grid.exp_node(gk + 1);
      const double em = scale * grid.exp_mid(gk);
      if (cell.jump && cell.jump_at_left)
        acc += ea * sigma_combine(system, traj.jump_state[c], *cell.jump);
      acc += sigma_combine(system, traj.cont_state[c],
                           (eb - ea) * b_eff + em * cell.noise);
      if (cell.jump && !cell.jump_at_left)
        acc += eb * sigma_combine(system, traj.jump_state[c], *cell.jump);
    }
    return acc;
  };

  auto weighted_dsigma_D_sum = [&](const HTrajectory& traj, const DTrajectory& dtr,
                                   double upto) {
    Vec acc = Vec::Zero(d);
    const double scale = std::exp(-upto);
    for (std::size_t c = 0; c + 1 < traj.times.size(); ++c) {
      double a = traj.times[c], b = traj.times[c + 1];
      if (b <= s + 1e-15 || a >= upto - 1e-15) continue;
      std::size_t gk = traj.grid_lo + c;
      const Cell& cell = grid.cells()[gk];
      const double ea = scale * grid.exp_node(gk);
      const double eb = scale * grid.exp_node(gk + 1);
      const double em = scale * grid.exp_mid(gk);
      if (cell.jump && cell.jump_at_left)
        acc += ea * sigma_jac_combine(system, traj.jump_state[c], *cell.jump) *
               dtr.jump_state[c];
      acc += sigma_jac_combine(system, traj.cont_state[c],
                               (eb - ea) * b_eff + em * cell.noise) *
             dtr.cont_state[c];
      if (cell.jump && !cell.jump_at_left)
        acc += eb * sigma_jac_combine(system, traj.jump_state[c], *cell.jump) *
               dtr.jump_state[c];
    }
    return acc;
  };

  // Per-node solves along the diagonal.
  std::vector<Vec> M_hat(K + 1), N_hat(K + 1), H_diag(K + 1), G_diag(K + 1);
  std::vector<Vec> H_pre(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    double rk = grid.nodes()[ks + k];
    auto traj = solve_h(system, grid, x, rk, rk, T_h, solver);
    auto dtr = solve_D(system, grid, traj);
    M_hat[k] = weighted_sigma_sum(traj, rk);
    N_hat[k] = weighted_dsigma_D_sum(traj, dtr, rk);
    H_diag[k] = traj.h.back();
    G_diag[k] = dtr.D.back();
    // pre-jump diagonal value when rk carries a positive-side jump
    H_pre[k] = H_diag[k];
    if (!traj.times.empty() && traj.times.size() >= 2) {
      std::size_t last = traj.times.size() - 2;
      std::size_t gk = traj.grid_lo + last;
      const Cell& cell = grid.cells()[gk];
      if (cell.jump && !cell.jump_at_left) H_pre[k] = traj.jump_state[last];
    }
  }

  // LHS: the tau = t weighted integral minus the diagonal integral.
  Vec lhs = M_hat[K];
  for (std::size_t k = 0; k < K; ++k) {
    const Cell& cell = grid.cells()[ks + k];
    lhs -= sigma_combine(system, H_diag[k], b_eff * cell.dt + cell.noise);
    if (cell.jump && !cell.jump_at_left)
      lhs -= sigma_combine(system, H_pre[k + 1], *cell.jump);
    if (cell.jump && cell.jump_at_left)
      lhs -= sigma_combine(system, H_diag[k], *cell.jump);
  }

  // RHS: outer du integral with the exponential weight handled in closed
  // form and the state dependence frozen at the cell's left node.
  Vec rhs = Vec::Zero(d);
  for (std::size_t k = 0; k < K; ++k) {
    const Cell& cell = grid.cells()[ks + k];
    const double du = cell.dt;
    const double w_base = 1.0 - std::exp(-du);       // int e^{u_k - u} du
    const double w_drift = du - w_base;              // int (1 - e^{u_k - u}) du
    const double w_noise = 1.0 - std::exp(-0.5 * du);  // from the midpoint on

    Vec inner1 = N_hat[k] * w_base +
                 sigma_jac_combine(system, H_diag[k],
                                   b_eff * w_drift + cell.noise * w_noise) *
                     G_diag[k];
    Vec inner2 = M_hat[k] * w_base +
                 sigma_combine(system, H_diag[k],
                               b_eff * w_drift + cell.noise * w_noise);
    if (cell.jump && cell.jump_at_left) {
      inner1 += sigma_jac_combine(system, H_diag[k], *cell.jump) * G_diag[k] * w_base;
      inner2 += sigma_combine(system, H_diag[k], *cell.jump) * w_base;
    }
    rhs += inner1 - inner2;
  }

  return (lhs - rhs).norm();
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_cohomology_csv(const std::string& file, const CohomologyField& field) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  const int d = field.anchors().dim();
  out << "t,x_anchor_id";
  for (int c = 1; c <= d; ++c) out << ",H_" << c;
  for (int c = 1; c <= d; ++c) out << ",Gamma_" << c;
  out << '\n';
  char buf[64];
  for (std::size_t ti = 0; ti < field.times().size(); ++ti)
    for (std::size_t ai = 0; ai < field.anchors().size(); ++ai) {
      std::snprintf(buf, sizeof(buf), "%.17g", field.times()[ti]);
      out << buf << ',' << ai;
      for (int c = 0; c < d; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", field.H_sample(ti, ai)[c]);
        out << ',' << buf;
      }
      for (int c = 0; c < d; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", field.Gamma_sample(ti, ai)[c]);
        out << ',' << buf;
      }
      out << '\n';
    }
}

void write_residual_csv(const std::string& file, const ResidualSeries& series) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  out << "t,residual\n";
  char buf[64];
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", series.times[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", series.residuals[i]);
    out << buf << '\n';
  }
}

}  // namespace levyrds
