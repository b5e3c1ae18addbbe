#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "levyrds/levy.hpp"
#include "levyrds/types.hpp"

namespace levyrds {

// ---------------------------------------------------------------------------
// Coefficient fields a, sigma_i with optional analytic Jacobians (central
// differences are substituted when absent).
// ---------------------------------------------------------------------------

using Field = std::function<Vec(const Vec&)>;
using FieldJac = std::function<Mat(const Vec&)>;

struct NoiseField {
  Field value;
  FieldJac jacobian;  // may be empty
};

// Allocation-free callbacks for the d = m = 1 case; the weighted integral
// solves spend almost all their time in sigma evaluations.
struct ScalarSigmaHooks {
  std::function<double(double)> sigma;
  std::function<double(double)> dsigma;
};

struct SystemSpec {
  int dim = 1;  // d
  Field drift;
  FieldJac drift_jacobian;  // may be empty
  std::vector<NoiseField> noise_fields;
  std::optional<ScalarSigmaHooks> scalar_sigma;
  std::string regularity_tag = "C_b^{1,gamma}";

  int noise_count() const { return static_cast<int>(noise_fields.size()); }
  Mat drift_jac(const Vec& x) const;
  Mat noise_jac(int i, const Vec& x) const;

  // Max relative mismatch between declared Jacobians and central differences
  // over the given probe points.
  double jacobian_selftest(const std::vector<Vec>& points, double h = 1e-5) const;
};

Mat central_difference_jacobian(const Field& f, const Vec& x, double h);

// Common 1-D builders used across tests and the CLI.
SystemSpec linear_system_1d(double beta);                     // a=beta x, sigma=x
SystemSpec scalar_poly_system(std::vector<double> drift_coeffs,
                              std::vector<double> sigma_coeffs);

// ---------------------------------------------------------------------------
// Jump-adapted grid over a path window.  Cells carry the continuous noise
// increment A*(W(t1)-W(t0)) and the jump attached to the cell: at the right
// endpoint on the cadlag side (t >= 0), at the left endpoint on the caglad
// side (t <= 0).
// ---------------------------------------------------------------------------

struct Cell {
  double t0, t1, dt;
  Vec noise;              // R^m continuous increment A*(W(t1)-W(t0))
  Vec dw;                 // raw Brownian increment, R^{m'}
  const Vec* jump = nullptr;
  bool jump_at_left = false;
};

class TimeGrid {
 public:
  // step must be an integer multiple of path.base_step so grid nodes are
  // path nodes (jump times always included).
  TimeGrid(const TwoSidedPath& path, double step, double t_lo, double t_hi);

  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<Cell>& cells() const { return cells_; }
  const TwoSidedPath& path() const { return *path_; }
  double step() const { return step_; }
  const Vec& effective_drift() const { return b_eff_; }

  // e^{node} / e^{cell midpoint}, cached for the weighted integral solves
  double exp_node(std::size_t i) const { return exp_node_[i]; }
  double exp_mid(std::size_t cell) const { return exp_mid_[cell]; }

  std::size_t index_of(double t) const;  // throws RangeError when absent

 private:
  const TwoSidedPath* path_;
  double step_;
  Vec b_eff_;
  std::vector<double> nodes_;
  std::vector<Cell> cells_;
  std::vector<double> exp_node_, exp_mid_;
};

// ---------------------------------------------------------------------------
// FlowResult: states (and optional Jacobians) at grid nodes spanned by one
// integration run.
// ---------------------------------------------------------------------------

struct FlowResult {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Mat> jacobians;  // empty unless variational

  struct Meta {
    std::string integrator;
    std::size_t steps = 0;
    bool jacobian_flagged = false;  // |det J| fell below threshold
    double min_abs_det = 1.0;
  } meta;

  const Vec& at_time(double t) const;
};

// Jump-adapted Euler-Maruyama for dX = a(X)dt + sigma_i(X) dL^i.  Ito
// convention at jumps (pre-jump coefficient); integration may start at any
// node; t0 > t1 integrates leftward with the explicit one-step inversion.
FlowResult integrate_ito(const SystemSpec& system, const TimeGrid& grid,
                         double t0, double t1, const Vec& x0);

// Heun predictor-corrector for dY = F(t, Y)dt; jump discontinuities enter
// only through the time argument of F.
using RdeField = std::function<Vec(double, const Vec&)>;
FlowResult integrate_rde(const RdeField& field, const TimeGrid& grid,
                         double t0, double t1, const Vec& y0);

// Euler state flow co-integrated with its Jacobian J = dX/dx0.
FlowResult integrate_variational(const SystemSpec& system, const TimeGrid& grid,
                                 double t0, double t1, const Vec& x0);

// One-step closure used by cocycle and attractor machinery: maps x at time
// t0 to the state at time t1 along the given driving path.
using Cocycle = std::function<Vec(double t0, double t1, const Vec& x0)>;

Cocycle make_ito_cocycle(const SystemSpec& system,
                         std::shared_ptr<const TimeGrid> grid);
Cocycle make_rde_cocycle(RdeField field, std::shared_ptr<const TimeGrid> grid);

// |phi_{s+t}(omega, x0) - phi_t(theta_s omega, phi_s(omega, x0))| where the
// shifted leg runs on a materialized shifted path with its own grid.  The
// factory owns the grid step.
double cocycle_check(const std::function<Cocycle(const TwoSidedPath&)>& make_cocycle,
                     const TwoSidedPath& path, const Vec& x0, double s, double t);

// FlowResult CSV: t, x_1..x_d[, J_11..J_dd]
void write_flow_csv(const std::string& file, const FlowResult& flow);

}  // namespace levyrds
