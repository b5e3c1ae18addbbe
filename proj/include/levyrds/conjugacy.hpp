#pragma once

#include <atomic>
#include <memory>
#include <functional>
#include <string>
#include <vector>

#include "levyrds/flows.hpp"

namespace levyrds {

// ---------------------------------------------------------------------------
// Exponentially weighted integral equation
//   h_t = x + e^{-tau} int_{-T_h}^{t} e^s sigma_i(h_s) dL^i_s
// solved on the jump-adapted grid by sweeping the truncated equation until
// successive sup-distance drops below tol.  Staged per-cell states are kept
// so that linear follow-up equations can reuse the same quadrature.
// ---------------------------------------------------------------------------

struct HSolveOptions {
  int max_sweeps = 50;
  double tol = 1e-12;
  bool variational = true;  // co-integrate dh/dx
};

struct HTrajectory {
  double tau = 0.0, T_h = 0.0;
  std::size_t grid_lo = 0;        // grid node index of times.front()
  std::vector<double> times;      // grid nodes in [-T_h, t_end]
  std::vector<Vec> h;             // node values (cadlag t>0 / caglad t<0)
  std::vector<Mat> dh_dx;         // empty unless variational
  // integrand staging per cell (index aligned with cells between times):
  std::vector<Vec> cont_state;    // state entering the continuous segment
  std::vector<Vec> jump_state;    // state at which the jump coefficient acts
  std::vector<Mat> cont_jac, jump_jac;
  int sweeps = 0;
};

struct DTrajectory {
  double tau = 0.0;
  std::vector<double> times;
  std::vector<Vec> D;
  std::vector<Vec> cont_state;    // D entering the continuous segment
  std::vector<Vec> jump_state;    // D at which the jump coefficient acts
};

HTrajectory solve_h(const SystemSpec& system, const TimeGrid& grid, const Vec& x,
                    double tau, double t_end, double T_h,
                    const HSolveOptions& opts = {});

DTrajectory solve_D(const SystemSpec& system, const TimeGrid& grid,
                    const HTrajectory& h_traj);

// ---------------------------------------------------------------------------
// Anchor lattice with multilinear interpolation.
// ---------------------------------------------------------------------------

class AnchorLattice {
 public:
  explicit AnchorLattice(std::vector<std::vector<double>> axes);
  static AnchorLattice line(std::vector<double> coords);  // d = 1

  int dim() const { return static_cast<int>(axes_.size()); }
  std::size_t size() const { return total_; }
  Vec point(std::size_t flat) const;
  const std::vector<std::vector<double>>& axes() const { return axes_; }

  // Multilinear weights at y; false when y lies outside the hull (weights of
  // the clamped query are still produced).
  bool weights(const Vec& y,
               std::vector<std::pair<std::size_t, double>>& out) const;

 private:
  std::vector<std::vector<double>> axes_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// CohomologyField: H_t(omega, x), Gamma_t(omega, x) and dH/dx sampled at grid
// nodes of [0, t_end] on an anchor lattice; immutable once built.
// ---------------------------------------------------------------------------

class CohomologyField {
 public:
  CohomologyField(std::vector<double> times, AnchorLattice anchors,
                  double T_h, double newton_tol);

  const std::vector<double>& times() const { return times_; }
  const AnchorLattice& anchors() const { return anchors_; }
  double tail_horizon() const { return T_h_; }
  double newton_tol() const { return newton_tol_; }

  std::size_t time_index(double t) const;

  const Vec& H_sample(std::size_t ti, std::size_t ai) const;
  const Vec& Gamma_sample(std::size_t ti, std::size_t ai) const;
  const Mat& dHdx_sample(std::size_t ti, std::size_t ai) const;

  Vec H(std::size_t ti, const Vec& y) const;
  Vec Gamma(std::size_t ti, const Vec& y) const;
  Mat dHdx(std::size_t ti, const Vec& y) const;

  long extrapolation_count() const { return extrapolations_->load(); }
  bool jacobian_nonsingular() const { return jacobian_ok_; }

  // filled by build_cohomology
  std::vector<std::vector<Vec>> H_data, Gamma_data;
  std::vector<std::vector<Mat>> dHdx_data;
  void finalize();

 private:
  std::vector<double> times_;
  AnchorLattice anchors_;
  double T_h_, newton_tol_;
  bool jacobian_ok_ = true;
  std::shared_ptr<std::atomic<long>> extrapolations_ =
      std::make_shared<std::atomic<long>>(0);
};

struct CohomologyBuildOptions {
  double t_lo = 0.0;   // first sampled node
  double t_hi = 1.0;   // last sampled node
  double T_h = 20.0;
  double newton_tol = 1e-10;
  HSolveOptions solver;
};

CohomologyField build_cohomology(const SystemSpec& system, const TimeGrid& grid,
                                 const AnchorLattice& anchors,
                                 const CohomologyBuildOptions& opts);

// Newton inversion of x -> H_0(omega, x) with 1-D bisection fallback.
Vec invert_H0(const CohomologyField& field, const Vec& y);

// RDE right-hand side (dH/dx)^{-1} [a(H) - Gamma] via linear solve.
Vec transformed_drift(const CohomologyField& field, const SystemSpec& system,
                      std::size_t t_idx, const Vec& y);

// ---------------------------------------------------------------------------
// Conjugacy verification: r(t) = |phi_t(omega,x0) - H_t(omega, psi_t(y0))|
// with y0 = H_0^{-1}(x0); H_0(theta_t omega, .) is read off as H_t(omega, .)
// by stationarity.
// ---------------------------------------------------------------------------

struct ResidualSeries {
  std::vector<double> times;
  std::vector<double> residuals;
  double max() const;
};

ResidualSeries verify_conjugacy_ito(const SystemSpec& system, const TimeGrid& grid,
                                    const AnchorLattice& anchors, const Vec& x0,
                                    double t_end,
                                    const CohomologyBuildOptions& opts);

// |H_{s+t}(omega, x) - H_t(theta_s omega, x)| at a single probe.
double stationarity_residual(const SystemSpec& system, const TwoSidedPath& path,
                             double step, const Vec& x, double s, double t,
                             double T_h);

// Telescoped residual of dH = Gamma dt + sigma_i(H) dL^i over [0, t_end].
ResidualSeries sde_identity_residual(const SystemSpec& system,
                                     const TimeGrid& grid,
                                     const CohomologyField& field, const Vec& x);

// ---------------------------------------------------------------------------
// Ito-Ventzell residual.  eta and xi are given by their integrands; xi is
// also supplied in closed form so the left-hand side is exact.  The dt-terms
// of second order are closed with realized continuous increments.
// ---------------------------------------------------------------------------

struct EtaSpec {
  int dim = 1;
  Vec eta0;
  std::function<Vec(double, const Vec&)> e;                    // drift
  std::function<Mat(double, const Vec&)> f;                    // d x m'
  std::function<Vec(double, const Vec&, const Vec&)> g;        // jump g(t,x,u)
  std::function<Vec(double, const Vec&)> nu_mean_g;            // int g dnu
};

struct XiSpec {
  std::function<double(double, const Vec&)> xi;                // exact field
  std::function<Vec(double, const Vec&)> grad_xi;
  std::function<Mat(double, const Vec&)> hess_xi;
  std::function<double(double, const Vec&)> E;
  std::function<Vec(double, const Vec&)> F;                    // m'-vector
  std::function<Mat(double, const Vec&)> grad_F;               // m' x d
  std::function<double(double, const Vec&, const Vec&)> G;     // field jump
  std::function<double(double, const Vec&)> nu_xi_remainder;   // int [xi(x+g)-xi(x)-grad.g] dnu
  std::function<double(double, const Vec&)> nu_jump_comp;      // int [xi(x+g)-xi(x)+G(x+g)] dnu
  std::function<double(double, const Vec&)> nu_G_diff;         // int [G(x+g)-G(x)] dnu
};

struct ItoVentzellOptions {
  bool include_second_order = true;  // negative control switch
};

ResidualSeries ito_ventzell_residual(const XiSpec& xi, const EtaSpec& eta,
                                     const TimeGrid& grid, double t0, double t1,
                                     const ItoVentzellOptions& opts = {});

// ---------------------------------------------------------------------------
// Two-route evaluation of the iterated-integral identity relating the
// tau-weighted kernel to its diagonal; returns |LHS - RHS|.
// ---------------------------------------------------------------------------

double check_fubini_formula(const SystemSpec& system, const TimeGrid& grid,
                            const Vec& x, double s, double t, double T_h,
                            const HSolveOptions& solver = {});

// CSV: t, x_anchor_id, H_1..H_d, Gamma_1..Gamma_d
void write_cohomology_csv(const std::string& file, const CohomologyField& field);
void write_residual_csv(const std::string& file, const ResidualSeries& series);

}  // namespace levyrds
