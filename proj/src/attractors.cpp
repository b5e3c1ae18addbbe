#include "levyrds/attractors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace levyrds {

// ---------------------------------------------------------------------------
// Set distance and point clouds
// ---------------------------------------------------------------------------

double semi_hausdorff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.empty() || b.empty())
    throw ParameterError("semi_hausdorff: empty point set");
  double worst = 0.0;
  for (const auto& x : a) {
    double best = 1e300;
    for (const auto& y : b) best = std::min(best, (x - y).norm());
    worst = std::max(worst, best);
  }
  return worst;
}

namespace {
double halton(std::size_t index, int base) {
  double f = 1.0, r = 0.0;
  std::size_t i = index;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}
}  // namespace

std::vector<Vec> halton_ball(int n, int dim, double radius, const Vec& center) {
  static const int primes[] = {2, 3, 5, 7, 11, 13};
  if (dim > 6) throw ParameterError("halton_ball: dim > 6 unsupported");
  std::vector<Vec> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    if (dim == 1) {
      double u = halton(static_cast<std::size_t>(k + 1), 2);
      Vec p = Vec::Constant(1, center.size() ? center[0] : 0.0);
      p[0] += radius * (2.0 * u - 1.0);
      pts.push_back(p);
      continue;
    }
    if (dim == 2) {
      double u1 = halton(static_cast<std::size_t>(k + 1), 2);
      double u2 = halton(static_cast<std::size_t>(k + 1), 3);
      double r = radius * std::sqrt(u1);
      double th = 2.0 * M_PI * u2;
      Vec p(2);
      p << r * std::cos(th), r * std::sin(th);
      if (center.size() == 2) p += center;
      pts.push_back(p);
      continue;
    }
    // generic: Box-Muller-free rejection from the Halton cube
    Vec p(dim);
    bool ok = false;
    for (int tries = 0; tries < 64 && !ok; ++tries) {
      for (int c = 0; c < dim; ++c)
        p[c] = 2.0 * halton(static_cast<std::size_t>((k + 1) * 64 + tries + 1),
                            primes[c]) -
               1.0;
      ok = p.norm() <= 1.0;
    }
    p *= radius;
    if (center.size() == dim) p += center;
    pts.push_back(p);
  }
  return pts;
}

std::vector<Vec> pullback_cloud(const Cocycle& cocycle,
                                const std::vector<Vec>& initial_cloud, double t,
                                int* dropped) {
  if (t < 0) throw ParameterError("pullback_cloud: t must be nonnegative");
  if (dropped) *dropped = 0;
  if (t == 0.0) return initial_cloud;
  std::vector<Vec> out;
  out.reserve(initial_cloud.size());
  for (const auto& x : initial_cloud) {
    try {
      out.push_back(cocycle(-t, 0.0, x));
    } catch (const DivergenceError&) {
      if (dropped) ++(*dropped);
    }
  }
  if (out.empty()) throw ParameterError("pullback_cloud: all points diverged");
  return out;
}

const std::vector<Vec>& PullbackRun::final_cloud() const {
  if (clouds.empty()) throw ParameterError("PullbackRun: no clouds");
  return clouds.back();
}

PullbackRun estimate_attractor(const Cocycle& cocycle, const PullbackParams& params) {
  if (params.t_schedule.empty())
    throw ParameterError("estimate_attractor: empty schedule");
  if (!std::is_sorted(params.t_schedule.begin(), params.t_schedule.end()))
    throw ParameterError("estimate_attractor: schedule must be increasing");
  Vec center = params.center.size() ? params.center : Vec();
  auto ball = halton_ball(params.n_points,
                          center.size() ? static_cast<int>(center.size()) : 0,
                          params.ball_radius, center);
  PullbackRun run;
  for (double t : params.t_schedule) {
    int dropped = 0;
    auto cloud = pullback_cloud(cocycle, ball, t, &dropped);
    run.dropped_points += dropped;
    double diam = 0.0;
    for (const auto& x : cloud) diam = std::max(diam, x.norm());
    if (!run.clouds.empty()) {
      double d1 = semi_hausdorff(cloud, run.clouds.back());
      double d2 = semi_hausdorff(run.clouds.back(), cloud);
      run.successive_hausdorff.push_back(std::max(d1, d2));
    }
    run.times.push_back(t);
    run.clouds.push_back(std::move(cloud));
    run.diameters.push_back(diam);
    if (!run.successive_hausdorff.empty() &&
        run.successive_hausdorff.back() < params.tol) {
      run.converged = true;
      break;
    }
  }
  return run;
}

double invariance_check(const Cocycle& cocycle, const std::vector<Vec>& cloud,
                        const std::vector<Vec>& target_at_t, double t) {
  if (t == 0.0) return semi_hausdorff(cloud, cloud);
  std::vector<Vec> moved;
  moved.reserve(cloud.size());
  for (const auto& x : cloud) moved.push_back(cocycle(0.0, t, x));
  return semi_hausdorff(moved, target_at_t);
}

std::vector<Vec> map_attractor_through_cohomology(const MarcusCohomology& coh,
                                                  std::size_t t_idx,
                                                  const std::vector<Vec>& cloud) {
  std::vector<Vec> out;
  out.reserve(cloud.size());
  for (const auto& x : cloud) out.push_back(coh.H(t_idx, x));
  return out;
}

// ---------------------------------------------------------------------------
// Temperedness
// ---------------------------------------------------------------------------

bool TemperednessReport::all_passed() const {
  for (bool p : passed)
    if (!p) return false;
  return !passed.empty();
}

TemperednessReport temperedness_check(const std::vector<double>& times,
                                      const std::vector<double>& diameters,
                                      const std::vector<double>& betas) {
  if (times.size() < 10)
    throw ParameterError("temperedness_check: need at least 10 samples");
  if (times.size() != diameters.size())
    throw ParameterError("temperedness_check: size mismatch");
  std::vector<double> logd;
  logd.reserve(diameters.size());
  for (double d : diameters) logd.push_back(std::log(std::max(d, 1e-300)));
  TemperednessReport report;
  report.slope = fit_slope(times, logd);
  report.betas = betas;
  for (double beta : betas) report.passed.push_back(report.slope < beta);
  return report;
}

// ---------------------------------------------------------------------------
// Annulus scans
// ---------------------------------------------------------------------------

std::vector<Vec> annulus_points(int dim, const AnnulusGrid& grid,
                                std::uint64_t seed) {
  std::vector<double> radii;
  for (int r = 0; r < grid.n_radii; ++r) {
    double f = grid.n_radii == 1
                   ? 0.0
                   : static_cast<double>(r) / (grid.n_radii - 1);
    radii.push_back(grid.r_min * std::pow(grid.r_max / grid.r_min, f));
  }
  std::vector<Vec> pts;
  if (dim == 1) {
    for (double r : radii) {
      pts.push_back(Vec::Constant(1, r));
      pts.push_back(Vec::Constant(1, -r));
    }
    return pts;
  }
  if (dim == 2) {
    for (double r : radii)
      for (int k = 0; k < grid.n_directions; ++k) {
        double th = 2.0 * M_PI * k / grid.n_directions;
        Vec p(2);
        p << r * std::cos(th), r * std::sin(th);
        pts.push_back(p);
      }
    return pts;
  }
  auto rng = make_rng(seed, "annulus");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double r : radii)
    for (int k = 0; k < grid.n_directions; ++k) {
      Vec dir(dim);
      do {
        for (int c = 0; c < dim; ++c) dir[c] = gauss(rng);
      } while (dir.norm() == 0);
      pts.push_back(r * dir / dir.norm());
    }
  return pts;
}

LyapunovScan verify_lyapunov(const LyapunovCertificate& cert, const Field& drift,
                             int dim, const AnnulusGrid& grid) {
  auto pts = annulus_points(dim, grid);
  LyapunovScan scan;
  scan.v_min = 1e300;
  double max_log = -1e300, max_ratio = -1e300;
  for (const auto& y : pts) {
    double v = cert.V(y);
    scan.v_min = std::min(scan.v_min, v);
    if (v <= 0)
      throw CertificateError("verify_lyapunov: V vanishes on the annulus");
    Vec g = cert.grad_V(y);
    double inner = g.dot(drift(y));
    max_log = std::max(max_log, inner / v);
    if (cert.kappa) {
      double kap = cert.kappa(y);
      if (kap > 0) max_ratio = std::max(max_ratio, inner / kap);
    }
  }
  scan.alpha_hat = -max_log;
  scan.eta_hat = cert.kappa ? -max_ratio : 0.0;
  return scan;
}

EnvelopeScan verify_c1_c2(const LyapunovCertificate& cert, const Field& drift,
                          const FlowMap& map, const std::vector<double>& radii,
                          int n_directions, const std::vector<Vec>& z_grid,
                          const std::vector<Vec>& k2_sequence) {
  EnvelopeScan scan;
  scan.radii = radii;
  const int dim = map.dim();

  auto directions = [&](double r) {
    AnnulusGrid one{r, r, 1, n_directions};
    return annulus_points(dim, one);
  };

  for (double r : radii) {
    double worst = 0.0;
    for (const auto& y : directions(r)) {
      double v = cert.V(y);
      if (v <= 0) throw CertificateError("verify_c1_c2: V vanishes");
      Vec g = cert.grad_V(y);
      for (const auto& z : z_grid) {
        double k1 = cert.k1(z);
        if (k1 <= 0)
          throw ParameterError("verify_c1_c2: k1 must be positive away from 0");
        Vec l = cert.l_field ? cert.l_field(z, y) : Vec(Vec::Zero(dim));
        worst = std::max(worst, std::abs(g.dot(l) / (k1 * v)));
      }
    }
    scan.c1_by_radius.push_back(worst);
  }
  scan.c1_monotone = true;
  for (std::size_t i = 0; i + 1 < scan.c1_by_radius.size(); ++i)
    if (scan.c1_by_radius[i + 1] >= scan.c1_by_radius[i]) scan.c1_monotone = false;

  // signed (c2) ratio at the largest radius
  double r_max = radii.back();
  double sup = -1e300;
  for (const auto& y : directions(r_max)) {
    double v = cert.V(y);
    Vec g = cert.grad_V(y);
    double denom_inner = std::abs(g.dot(drift(y)) / v);
    for (const auto& z : z_grid) {
      double k2 = cert.k2(z);
      if (k2 <= 0) continue;
      Vec phi_y = map.phi(z, y);
      Mat jac = map.phi_jacobian_x(z, y);
      Vec pulled = jac.partialPivLu().solve(drift(phi_y));
      double num = g.dot(drift(y) - pulled) / v;
      sup = std::max(sup, num / (denom_inner * k2));
    }
  }
  scan.c2_sup = sup;

  for (const auto& z : k2_sequence) scan.k2_values.push_back(cert.k2(z));
  scan.k2_decays = true;
  for (std::size_t i = 0; i + 1 < scan.k2_values.size(); ++i)
    if (scan.k2_values[i + 1] >= scan.k2_values[i]) scan.k2_decays = false;
  return scan;
}

// ---------------------------------------------------------------------------
// Rational polynomials
// ---------------------------------------------------------------------------

namespace {
long long gcd_ll(long long a, long long b) {
  a = std::llabs(a);
  b = std::llabs(b);
  while (b) {
    long long t = a % b;
    a = b;
    b = t;
  }
  return a ? a : 1;
}
}  // namespace

Rational::Rational(long long n, long long d) : num(n), den(d) {
  if (den == 0) throw ParameterError("Rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  long long g = gcd_ll(num, den);
  num /= g;
  den /= g;
}

Rational Rational::operator+(const Rational& o) const {
  return Rational(num * o.den + o.num * den, den * o.den);
}
Rational Rational::operator-(const Rational& o) const {
  return Rational(num * o.den - o.num * den, den * o.den);
}
Rational Rational::operator*(const Rational& o) const {
  return Rational(num * o.num, den * o.den);
}
bool Rational::operator==(const Rational& o) const {
  return num == o.num && den == o.den;
}

Poly2 poly_add(const Poly2& a, const Poly2& b) {
  Poly2 out = a;
  for (const auto& [mono, coef] : b) {
    auto it = out.find(mono);
    if (it == out.end())
      out[mono] = coef;
    else {
      it->second = it->second + coef;
      if (it->second.num == 0) out.erase(it);
    }
  }
  return out;
}

Poly2 poly_mul(const Poly2& a, const Poly2& b) {
  Poly2 out;
  for (const auto& [ma, ca] : a)
    for (const auto& [mb, cb] : b) {
      auto mono = std::make_pair(ma.first + mb.first, ma.second + mb.second);
      auto it = out.find(mono);
      Rational prod = ca * cb;
      if (it == out.end())
        out[mono] = prod;
      else {
        it->second = it->second + prod;
        if (it->second.num == 0) out.erase(it);
      }
    }
  return out;
}

double poly_eval(const Poly2& p, double y1, double y2) {
  double acc = 0.0;
  for (const auto& [mono, coef] : p)
    acc += coef.value() * std::pow(y1, mono.first) * std::pow(y2, mono.second);
  return acc;
}

// ---------------------------------------------------------------------------
// Duffing-van der Pol
// ---------------------------------------------------------------------------

DuffingModel duffing_van_der_pol_system(double gamma1, double gamma2,
                                        double sigma1, double sigma2,
                                        double k1_constant) {
  DuffingModel model;
  model.gamma1 = gamma1;
  model.gamma2 = gamma2;
  model.sigma1 = sigma1;
  model.sigma2 = sigma2;
  model.k1_constant = k1_constant;

  Mat s1 = Mat::Zero(2, 2);
  s1(1, 0) = sigma1;
  Mat s2 = Mat::Zero(2, 2);
  Vec b1 = Vec::Zero(2);
  Vec b2(2);
  b2 << 0.0, sigma2;
  auto map = FlowMap::closed_form_linear({s1, s2}, {b1, b2});

  MarcusSystem sys;
  sys.flow_map = map;
  sys.commutativity_certified = map.max_commutator_defect() < 1e-12;
  sys.drift = [gamma1, gamma2](const Vec& y) {
    Vec out(2);
    out << gamma2 * y[0] - y[0] * y[0] * y[0] / 3.0 + y[1],
        gamma1 * y[0] - y[0] * y[0] * y[0];
    return out;
  };
  sys.drift_jacobian = [gamma1, gamma2](const Vec& y) {
    Mat jac(2, 2);
    jac << gamma2 - y[0] * y[0], 1.0, gamma1 - 3.0 * y[0] * y[0], 0.0;
    return jac;
  };
  model.system = std::move(sys);

  LyapunovCertificate cert;
  cert.V = [](const Vec& y) {
    double y1 = y[0], y2 = y[1];
    return 7.0 / 24.0 * y1 * y1 * y1 * y1 + 0.25 * y1 * y1 + 0.25 * y2 * y2 +
           0.5 * (y1 - y2) * (y1 - y2);
  };
  cert.grad_V = [](const Vec& y) {
    double y1 = y[0], y2 = y[1];
    Vec g(2);
    g << 7.0 / 6.0 * y1 * y1 * y1 + 1.5 * y1 - y2, 1.5 * y2 - y1;
    return g;
  };
  cert.kappa = [](const Vec& y) {
    double y1 = y[0], y2 = y[1];
    return std::pow(y1, 6) + y2 * y2;
  };
  cert.k1 = [k1_constant](const Vec& z) { return k1_constant * z.norm(); };
  cert.k2 = [sigma1, sigma2, gamma2](const Vec& z) {
    double s1z = std::abs(sigma1) * z.norm();
    double s2z = std::abs(sigma2) * z.norm();
    return (std::sqrt(2.0) + std::abs(gamma2) + s1z) * s1z + (1.0 + s1z) * s2z +
           s1z;
  };
  auto flow_map = model.system.flow_map;
  cert.l_field = [flow_map](const Vec& z, const Vec& y) {
    Vec rhs = Vec::Zero(flow_map.dim());
    Vec phi_y = flow_map.phi(z, y);
    for (int i = 0; i < flow_map.noise_count(); ++i)
      rhs += flow_map.sigma_field(i, phi_y) * z[i];
    Mat jac = flow_map.phi_jacobian_x(z, y);
    return Vec(jac.partialPivLu().solve(rhs));
  };
  model.certificate = std::move(cert);
  return model;
}

Vec DuffingModel::l_closed_form(const Vec& z, const Vec& y) const {
  Vec out(2);
  out << 0.0, sigma1 * y[0] * z[0] + sigma2 * z[1];
  return out;
}

Poly2 duffing_gradV_dot_drift(const Rational& gamma1, const Rational& gamma2) {
  auto mono = [](int i, int j, Rational c) {
    Poly2 p;
    p[{i, j}] = c;
    return p;
  };
  // grad V = (7/6 y1^3 + 3/2 y1 - y2, 3/2 y2 - y1)
  Poly2 g1 = poly_add(poly_add(mono(3, 0, Rational(7, 6)), mono(1, 0, Rational(3, 2))),
                      mono(0, 1, Rational(-1)));
  Poly2 g2 = poly_add(mono(0, 1, Rational(3, 2)), mono(1, 0, Rational(-1)));
  // a-bar = (gamma2 y1 - y1^3/3 + y2, gamma1 y1 - y1^3)
  Poly2 a1 = poly_add(poly_add(mono(1, 0, gamma2), mono(3, 0, Rational(-1, 3))),
                      mono(0, 1, Rational(1)));
  Poly2 a2 = poly_add(mono(1, 0, gamma1), mono(3, 0, Rational(-1)));
  return poly_add(poly_mul(g1, a1), poly_mul(g2, a2));
}

Poly2 duffing_expected_expansion(const Rational& gamma1, const Rational& gamma2) {
  Poly2 p;
  p[{6, 0}] = Rational(-7, 18);
  p[{4, 0}] = Rational(7, 6) * gamma2 + Rational(1, 2);
  Rational c20 = Rational(3, 2) * gamma2 - gamma1;
  if (c20.num != 0) p[{2, 0}] = c20;
  Rational c11 = Rational(3, 2) - gamma2 + Rational(3, 2) * gamma1;
  if (c11.num != 0) p[{1, 1}] = c11;
  p[{0, 2}] = Rational(-1);
  return p;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_cloud_csv(const std::string& file, const PullbackRun& run) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  const int d = run.clouds.empty() || run.clouds[0].empty()
                    ? 0
                    : static_cast<int>(run.clouds[0][0].size());
  out << "t_pullback,point_id";
  for (int c = 1; c <= d; ++c) out << ",x_" << c;
  out << '\n';
  char buf[64];
  for (std::size_t ti = 0; ti < run.times.size(); ++ti)
    for (std::size_t pi = 0; pi < run.clouds[ti].size(); ++pi) {
      std::snprintf(buf, sizeof(buf), "%.17g", run.times[ti]);
      out << buf << ',' << pi;
      for (int c = 0; c < d; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", run.clouds[ti][pi][c]);
        out << ',' << buf;
      }
      out << '\n';
    }
}

void write_run_summary_csv(const std::string& file, const PullbackRun& run) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  out << "t_pullback,diameter,hausdorff_step\n";
  char buf[64];
  for (std::size_t i = 0; i < run.times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", run.times[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", run.diameters[i]);
    out << buf << ',';
    double h = i == 0 ? 0.0 : run.successive_hausdorff[i - 1];
    std::snprintf(buf, sizeof(buf), "%.17g", h);
    out << buf << '\n';
  }
}

}  // namespace levyrds
