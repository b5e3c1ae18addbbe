#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "levyrds/marcus.hpp"

namespace levyrds {

// dist(A, B) = sup_{x in A} inf_{y in B} |x - y|, exact over finite sets.
double semi_hausdorff(const std::vector<Vec>& a, const std::vector<Vec>& b);

// Low-discrepancy (Halton) points on a ball.
std::vector<Vec> halton_ball(int n, int dim, double radius, const Vec& center);

// ---------------------------------------------------------------------------
// Pullback attractor estimation
// ---------------------------------------------------------------------------

struct PullbackParams {
  double ball_radius = 1.0;
  Vec center;  // defaults to 0
  int n_points = 64;
  std::vector<double> t_schedule;
  double tol = 1e-2;
};

struct PullbackRun {
  std::vector<double> times;
  std::vector<std::vector<Vec>> clouds;
  std::vector<double> diameters;             // d(A) = sup |x|
  std::vector<double> successive_hausdorff;  // max of both directions
  bool converged = false;
  int dropped_points = 0;

  const std::vector<Vec>& final_cloud() const;
};

// phi_t(theta_{-t} omega, cloud), realized as integration over [-t, 0].
std::vector<Vec> pullback_cloud(const Cocycle& cocycle,
                                const std::vector<Vec>& initial_cloud, double t,
                                int* dropped = nullptr);

PullbackRun estimate_attractor(const Cocycle& cocycle, const PullbackParams& params);

// dist(phi_t(omega, cloud), target) where target approximates A(theta_t omega).
double invariance_check(const Cocycle& cocycle, const std::vector<Vec>& cloud,
                        const std::vector<Vec>& target_at_t, double t);

// {H_0(omega, a) : a in cloud} at the given cohomology node.
std::vector<Vec> map_attractor_through_cohomology(const MarcusCohomology& coh,
                                                  std::size_t t_idx,
                                                  const std::vector<Vec>& cloud);

// ---------------------------------------------------------------------------
// Temperedness: fit of log d(B(theta_{-t} omega)) against t; passes a beta
// when the fitted slope stays below it.
// ---------------------------------------------------------------------------

struct TemperednessReport {
  double slope = 0.0;
  std::vector<double> betas;
  std::vector<bool> passed;
  bool all_passed() const;
};

TemperednessReport temperedness_check(const std::vector<double>& times,
                                      const std::vector<double>& diameters,
                                      const std::vector<double>& betas);

// ---------------------------------------------------------------------------
// Lyapunov certificates
// ---------------------------------------------------------------------------

struct LyapunovCertificate {
  std::function<double(const Vec&)> V;
  std::function<Vec(const Vec&)> grad_V;
  std::function<double(const Vec&)> kappa;     // comparison scale
  std::function<double(const Vec&)> k1;        // of z
  std::function<double(const Vec&)> k2;        // of z
  std::function<Vec(const Vec&, const Vec&)> l_field;  // l(z, y)
  double subexp_c = 1.0;  // envelope rate for the subexponential check
};

struct AnnulusGrid {
  double r_min = 5.0, r_max = 50.0;
  int n_radii = 8;
  int n_directions = 128;
};

std::vector<Vec> annulus_points(int dim, const AnnulusGrid& grid,
                                std::uint64_t seed = 7);

struct LyapunovScan {
  double alpha_hat = 0.0;  // -max <grad log V, a>
  double eta_hat = 0.0;    // -max <grad V, a> / kappa
  double v_min = 0.0;
};

LyapunovScan verify_lyapunov(const LyapunovCertificate& cert, const Field& drift,
                             int dim, const AnnulusGrid& grid);

struct EnvelopeScan {
  std::vector<double> radii;
  std::vector<double> c1_by_radius;  // sup_z |<grad log V, l/k1>| per radius
  double c2_sup = 0.0;               // signed sup of the ratio at r_max
  std::vector<double> k2_values;     // along the shrinking z sequence
  bool c1_monotone = false;
  bool k2_decays = false;
};

EnvelopeScan verify_c1_c2(const LyapunovCertificate& cert, const Field& drift,
                          const FlowMap& map, const std::vector<double>& radii,
                          int n_directions, const std::vector<Vec>& z_grid,
                          const std::vector<Vec>& k2_sequence);

// ---------------------------------------------------------------------------
// Exact rational bivariate polynomials for the certificate arithmetic check.
// ---------------------------------------------------------------------------

struct Rational {
  long long num = 0, den = 1;
  Rational() = default;
  Rational(long long n, long long d = 1);
  Rational operator+(const Rational&) const;
  Rational operator-(const Rational&) const;
  Rational operator*(const Rational&) const;
  bool operator==(const Rational&) const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

using Poly2 = std::map<std::pair<int, int>, Rational>;  // (y1-power, y2-power)

Poly2 poly_add(const Poly2& a, const Poly2& b);
Poly2 poly_mul(const Poly2& a, const Poly2& b);
double poly_eval(const Poly2& p, double y1, double y2);

// ---------------------------------------------------------------------------
// Duffing-van der Pol case study (transformed coordinates)
// ---------------------------------------------------------------------------

struct DuffingModel {
  double gamma1 = 1.0, gamma2 = 1.0, sigma1 = 0.5, sigma2 = 0.5;
  double k1_constant = 1.0;
  MarcusSystem system;
  LyapunovCertificate certificate;

  // closed form l(z,y) = (0, sigma1 y1 z1 + sigma2 z2)
  Vec l_closed_form(const Vec& z, const Vec& y) const;
};

DuffingModel duffing_van_der_pol_system(double gamma1, double gamma2,
                                        double sigma1, double sigma2,
                                        double k1_constant = 1.0);

// <grad V, a-bar> expanded symbolically, and the displayed coefficient table.
Poly2 duffing_gradV_dot_drift(const Rational& gamma1, const Rational& gamma2);
Poly2 duffing_expected_expansion(const Rational& gamma1, const Rational& gamma2);

// CSV writers: clouds and run summaries.
void write_cloud_csv(const std::string& file, const PullbackRun& run);
void write_run_summary_csv(const std::string& file, const PullbackRun& run);

}  // namespace levyrds
