#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "levyrds/conjugacy.hpp"
#include "levyrds/flows.hpp"

namespace levyrds {

// exp(S) by Pade(6) with scaling and squaring; phi1(S) = S^{-1}(e^S - I)
// extended through the doubling identity phi1(2S) = (e^S + I) phi1(S) / 2.
Mat expm(const Mat& S);
void expm_phi1(const Mat& S, Mat& E, Mat& P);

// ---------------------------------------------------------------------------
// FlowMap: solution x -> Phi(z, x) of dPhi/dz_i = sigma_i(Phi), Phi(0,x)=x.
// closed_form_linear covers commuting affine fields sigma_i(x)=S_i x + beta_i
// via Phi(z,x) = e^{S(z)} x + phi1(S(z)) B(z); numeric_ode integrates the ray
// s -> s z with classical fourth-order steps.
// ---------------------------------------------------------------------------

class FlowMap {
 public:
  FlowMap() = default;  // empty map; configure via the factories

  static FlowMap closed_form_linear(std::vector<Mat> sigma_mats,
                                    std::vector<Vec> offsets);
  static FlowMap numeric_ode(int dim, std::vector<NoiseField> fields,
                             int n_sub = 8);

  int dim() const { return dim_; }
  int noise_count() const { return m_; }
  bool is_closed_form() const { return closed_form_; }

  Vec phi(const Vec& z, const Vec& x) const;
  Mat phi_jacobian_x(const Vec& z, const Vec& x) const;
  Vec phi_inverse(const Vec& z, const Vec& y) const;  // Phi(z, .)^{-1}

  // sigma_i as a field (affine in closed form mode)
  Vec sigma_field(int i, const Vec& x) const;
  Mat sigma_field_jac(int i, const Vec& x) const;

  const std::vector<Mat>& sigma_mats() const { return sigma_mats_; }
  const std::vector<Vec>& offsets() const { return offsets_; }
  const std::vector<Mat>& pseudo_inverses() const { return pinv_; }

  // Precomputed affine representation of Phi(z, .) for a fixed z.
  struct Affine {
    Mat linear, linear_inv;
    Vec offset;
    Vec apply(const Vec& x) const { return linear * x + offset; }
    Vec invert(const Vec& y) const { return linear_inv * (y - offset); }
  };
  Affine affine_at(const Vec& z) const;  // closed form mode only

  double max_commutator_defect() const { return commutator_defect_; }

 private:
  int dim_ = 0, m_ = 0, n_sub_ = 8;
  bool closed_form_ = true;
  std::vector<Mat> sigma_mats_;
  std::vector<Vec> offsets_;
  std::vector<Mat> pinv_;
  std::vector<NoiseField> fields_;
  double commutator_defect_ = 0.0;
};

// ---------------------------------------------------------------------------
// OUState: Z_t = e^{-mu t} int_{-T_h}^t e^{mu s} dL_s at grid nodes, built by
// the exact per-cell recursion Z_{t+dt} = e^{-mu dt} Z_t + weighted increment.
// ---------------------------------------------------------------------------

struct OUState {
  double mu = 1.0;
  double tail_horizon = 0.0;
  std::vector<double> times;
  std::vector<Vec> trajectory;

  const Vec& at_time(double t) const;
  std::size_t time_index(double t) const;
};

OUState ou_path(const TimeGrid& grid, double mu, double T_h);

// ---------------------------------------------------------------------------
// MarcusSystem
// ---------------------------------------------------------------------------

struct MarcusSystem {
  Field drift;          // a-bar
  FieldJac drift_jacobian;
  FlowMap flow_map;
  bool commutativity_certified = false;

  Mat drift_jac(const Vec& x) const;
};

// Marcus integration: Stratonovich continuous part realized as Ito plus the
// analytic correction, jumps applied through the flow map.
FlowResult integrate_marcus(const MarcusSystem& system, const TimeGrid& grid,
                            double t0, double t1, const Vec& x0);

Cocycle make_marcus_cocycle(const MarcusSystem& system,
                            std::shared_ptr<const TimeGrid> grid);

// ---------------------------------------------------------------------------
// Marcus cohomology H-bar_t(x) = Phi(Z_t, x); per-node affine data is
// precomputed in closed-form mode so RDE right-hand sides are matvecs.
// ---------------------------------------------------------------------------

class MarcusCohomology {
 public:
  MarcusCohomology(const FlowMap& map, OUState ou);

  const OUState& ou() const { return ou_; }
  const FlowMap& map() const { return map_; }

  Vec H(std::size_t t_idx, const Vec& x) const;
  Mat dHdx(std::size_t t_idx, const Vec& x) const;
  Vec H_inverse(std::size_t t_idx, const Vec& y) const;
  // (dH/dx)^{-1} rhs, using the precomputed inverse in closed-form mode
  Vec solve_dHdx(std::size_t t_idx, const Vec& x, const Vec& rhs) const;
  std::size_t time_index(double t) const { return ou_.time_index(t); }

 private:
  FlowMap map_;
  OUState ou_;
  std::vector<FlowMap::Affine> affine_;  // closed form mode
};

MarcusCohomology build_marcus_cohomology(const FlowMap& map, OUState ou);

// (dH/dx)^{-1} [a(H) + mu sigma_i(H) Z^i] via linear solve.
Vec transformed_drift_marcus(const FlowMap& map, const MarcusSystem& system,
                             double mu, const Vec& z, const Vec& y);

struct MarcusConjugacyReport {
  ResidualSeries residuals;
  double mu;
};

MarcusConjugacyReport verify_conjugacy_marcus(const MarcusSystem& system,
                                              const TimeGrid& grid,
                                              const Vec& x0, double t_end,
                                              double mu, double T_h);

// max over sample points and pairs of |grad(sigma_j) sigma_i - grad(sigma_i) sigma_j|
double lie_bracket_check(const std::vector<NoiseField>& fields,
                         const std::vector<Vec>& sample_points);

// CSV: t, Z_1..Z_m
void write_ou_csv(const std::string& file, const OUState& ou);

}  // namespace levyrds
