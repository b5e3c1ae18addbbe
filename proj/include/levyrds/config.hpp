#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "levyrds/levy.hpp"

namespace levyrds {

enum class ExperimentKind {
  simulate_levy,
  ito_conjugacy,
  marcus_conjugacy,
  attractor,
  linearize,
  verify_all,
};

std::string kind_name(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

struct TripletConfig {
  int dim = 1;
  std::vector<double> drift = {0.5};
  std::vector<double> diffusion = {0.2};  // row-major dim x diffusion_cols
  int diffusion_cols = 1;
  double jump_rate = 2.0;
  std::string jump_law = "two_point";
  std::vector<double> law_u1 = {0.3};
  std::vector<double> law_u2 = {-0.2};
  double law_p = 0.5;
  double law_radius = 0.5;
  double law_sigma = 0.3;
  double small_jump_cutoff = 0.5;
  bool compensate_small = true;

  LevyTriplet build() const;
};

struct SystemConfig {
  std::string name = "linear-1d";
  // linear-1d
  double beta = -0.5;
  // affine-marcus: drift -cubic x^3, field sigma_bar x + beta_off
  double sigma_bar = 1.0;
  double beta_off = 0.0;
  double cubic = 1.0;
  // duffing-van-der-pol
  double gamma1 = 1.0, gamma2 = 1.0, sigma1 = 0.5, sigma2 = 0.5;
  // scalar-hartman
  double alpha = -1.0;
  double sigma_param = 0.1;
  int l = 3;
  // custom scalar polynomials
  std::vector<double> drift_poly;
  std::vector<double> sigma_poly;
};

struct NumericConfig {
  double dt = 1e-3;
  double t_min = -21.0;
  double t_max = 1.0;
  double t_end = 1.0;
  double tail_horizon = 20.0;
  double mu = 1.0;
  double newton_tol = 1e-10;
  std::vector<double> anchors = {0.1, 0.3, 0.6, 1.0, 1.6, 2.5, 4.0};
  int n_points = 256;
  int n_samples = 100;
  double tol = 1e-2;
  double ball_radius = 2.0;
  double x0 = 1.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::simulate_levy;
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  TripletConfig triplet;
  SystemConfig system;
  NumericConfig numeric;
};

// Sectioned key-value text: `key = value` lines, `[section]` headers, `#`
// comments.  Unknown keys are errors carrying the line number; arrays are
// whitespace- or comma-separated.
ExperimentConfig load_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

std::string dump_config(const ExperimentConfig& config);

}  // namespace levyrds
