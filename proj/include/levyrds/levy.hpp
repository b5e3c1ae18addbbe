#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "levyrds/types.hpp"

namespace levyrds {

// ---------------------------------------------------------------------------
// Jump-size laws.  All laws are supported away from 0.  uniform_ball and
// trunc_gauss are isotropic (mean zero), so the small-jump compensator mean
// vanishes exactly; two_point carries an exact finite-sum mean.
// ---------------------------------------------------------------------------

enum class JumpLawKind { uniform_ball, two_point, trunc_gauss };

struct JumpLaw {
  JumpLawKind kind = JumpLawKind::uniform_ball;
  int dim = 1;
  double radius = 1.0;  // uniform_ball radius / trunc_gauss truncation
  double sigma = 1.0;   // trunc_gauss coordinate std
  double p = 0.5;       // two_point: P(u = u1)
  Vec u1, u2;           // two_point atoms

  static JumpLaw uniform(int dim, double radius);
  static JumpLaw two_point_law(Vec u1, Vec u2, double p);
  static JumpLaw truncated_gaussian(int dim, double sigma, double radius);

  void validate() const;
  Vec sample(std::mt19937_64& rng) const;

  // E[u 1{|u| <= delta}], exact per law.
  Vec mean_small(double delta) const;

  // E[exp(i<z,u>)], exact for two_point, radial quadrature otherwise.
  std::complex<double> char_fn(const Vec& z) const;

  // E[<z,u> 1{|u| <= delta}] as needed by the compensated exponent.
  double mean_inner_small(const Vec& z, double delta) const;
};

// ---------------------------------------------------------------------------
// LevyTriplet: the law (b, A, nu, delta) with nu = jump_rate * jump_law
// (finite activity).  compensate_small selects whether jumps of size <= delta
// enter in compensated (martingale) form; for finite activity this folds the
// exact mean into the linear drift.
// ---------------------------------------------------------------------------

struct LevyTriplet {
  int dim = 1;          // m
  Vec drift;            // b
  Mat diffusion;        // A, m x m'
  double jump_rate = 0.0;
  JumpLaw jump_law;
  double small_jump_cutoff = 0.5;  // delta in (0,1)
  bool compensate_small = true;

  void validate() const;
  Vec effective_drift() const;  // b - rate * E[u 1{|u|<=delta}] when compensated
  Mat gaussian_cov() const;     // Q = A A^T
  int noise_dim() const { return static_cast<int>(diffusion.cols()); }

  // Characteristic exponent Psi(z) for the compound-Poisson + Gaussian law.
  std::complex<double> characteristic_exponent(const Vec& z) const;

  static LevyTriplet drift_only(Vec b);
  static LevyTriplet scalar(double b, double a, double rate, JumpLaw law,
                            double delta = 0.5, bool compensate = true);
};

struct JumpRecord {
  double time;
  Vec size;
};

// ---------------------------------------------------------------------------
// TwoSidedPath: one realization of the driving noise on [t_min, t_max] with
// 0 inside.  Evaluation is cadlag for t >= 0 and caglad for t <= 0.  Nodes
// are the uniform base_step lattice plus every jump time plus the horizon
// endpoints; Brownian values are stored at nodes (W(0) = 0) and interpolated
// linearly in between.  Immutable after construction.
// ---------------------------------------------------------------------------

class TwoSidedPath {
 public:
  static TwoSidedPath sample(const LevyTriplet& triplet, double t_min,
                             double t_max, double base_step,
                             std::uint64_t seed);

  // Test fixture: prescribed jump record, optional zeroed Brownian part.
  static TwoSidedPath from_records(const LevyTriplet& triplet, double t_min,
                                   double t_max, double base_step,
                                   std::vector<JumpRecord> jumps,
                                   std::uint64_t seed,
                                   bool zero_brownian = true);

  Vec evaluate(double t) const;
  // Value just before a positive-time jump / just after a negative-time one.
  Vec pre_jump_value(double t) const;

  const LevyTriplet& triplet() const { return triplet_; }
  double t_min() const { return t_min_; }
  double t_max() const { return t_max_; }
  double base_step() const { return base_step_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<double>& nodes() const { return nodes_; }
  // Uniform lattice index of node i (k such that t = k*base_step), or
  // INT64_MIN for jump/endpoint nodes.
  std::int64_t uniform_index(std::size_t i) const { return uniform_idx_[i]; }
  const Vec* jump_at_node(std::size_t i) const;
  bool is_jump_node(std::size_t i) const { return jump_slot_[i] >= 0; }

  const std::vector<JumpRecord>& jumps_pos() const { return jumps_pos_; }
  const std::vector<JumpRecord>& jumps_neg() const { return jumps_neg_; }

  // Raw Brownian value W(node) in R^{m'}.
  const Vec& brownian_at(std::size_t i) const { return w_[i]; }

  // Nearest node index for t (tolerance a fraction of base_step); throws
  // RangeError when t is not a node.
  std::size_t node_index(double t) const;
  std::optional<std::size_t> try_node_index(double t) const;

  // theta_s: materialized shifted path on [t_min - s, t_max - s]; s must be a
  // uniform (non-jump) node.
  TwoSidedPath shifted(double s) const;

  // Brownian-bridge refinement to a finer uniform step (must divide
  // base_step); existing node values are preserved exactly.
  TwoSidedPath refined(double new_step) const;

 private:
  TwoSidedPath() = default;
  void build_nodes_and_brownian(std::mt19937_64& rng_neg,
                                std::mt19937_64& rng_pos, bool zero_brownian);
  void index_jumps();

  LevyTriplet triplet_;
  double t_min_ = 0, t_max_ = 0, base_step_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<JumpRecord> jumps_pos_, jumps_neg_;
  std::vector<Vec> jump_prefix_pos_, jump_prefix_neg_;  // cumulative sums
  std::vector<double> nodes_;
  std::vector<std::int64_t> uniform_idx_;
  std::vector<int> jump_slot_;  // index into jumps_pos_/neg_ or -1
  std::vector<Vec> w_;          // W at nodes, R^{m'}
};

// ---------------------------------------------------------------------------
// Wiener shift as a view: evaluate(view, t) = L(s + t) - L(s) exactly.
// ---------------------------------------------------------------------------

struct ShiftView {
  const TwoSidedPath* base = nullptr;
  double offset = 0.0;

  Vec evaluate(double t) const {
    return base->evaluate(offset + t) - base->evaluate(offset);
  }
  ShiftView shift(double s) const { return ShiftView{base, offset + s}; }
};

ShiftView shift(const TwoSidedPath& path, double s);

// e^{-mu t} int_{-T_h}^{t} e^{mu s} dL_s, cell-exact for drift and jumps,
// Brownian increments weighted at cell midpoints.
Vec stationary_exp_integral(const TwoSidedPath& path, double mu, double t,
                            double tail_horizon);

// Max over z_grid of |empirical CF of L_t - exp(t Psi(z))| using n_samples
// independently sampled paths.
double empirical_characteristic_check(const LevyTriplet& triplet, double t,
                                      const std::vector<Vec>& z_grid,
                                      int n_samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV dump: columns t, L_1..L_m, is_jump; exact round-trip.
// ---------------------------------------------------------------------------

struct PathCsvRow {
  double t;
  Vec value;
  bool is_jump;
};

std::vector<PathCsvRow> path_to_rows(const TwoSidedPath& path);
void write_path_csv(const std::string& file, const std::vector<PathCsvRow>& rows);
std::vector<PathCsvRow> read_path_csv(const std::string& file);

}  // namespace levyrds
