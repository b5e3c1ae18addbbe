#include "levyrds/marcus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/SVD>

namespace levyrds {

// ---------------------------------------------------------------------------
// Matrix exponential and phi1
// ---------------------------------------------------------------------------

namespace {

// diagonal Pade(6) approximant of e^S, valid after scaling to ||S|| <= 0.5
Mat expm_pade6(const Mat& S) {
  const int d = static_cast<int>(S.rows());
  static const double c[7] = {1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0,
                              1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};
  Mat S2 = S * S;
  Mat U = c[1] * Mat::Identity(d, d) + c[3] * S2 + c[5] * S2 * S2;
  U = S * U;
  Mat V = c[0] * Mat::Identity(d, d) + c[2] * S2 + c[4] * S2 * S2 +
          c[6] * S2 * S2 * S2;
  return (V - U).partialPivLu().solve(V + U);
}

Mat phi1_series(const Mat& S) {
  const int d = static_cast<int>(S.rows());
  Mat term = Mat::Identity(d, d);
  Mat acc = term;
  for (int k = 1; k <= 14; ++k) {
    term = (term * S) / static_cast<double>(k + 1);
    acc += term;
  }
  return acc;
}

}  // namespace

Mat expm(const Mat& S) {
  double nrm = S.lpNorm<Eigen::Infinity>();
  int squarings = 0;
  Mat A = S;
  if (nrm > 0.5) {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / 0.5))));
    A /= std::pow(2.0, squarings);
  }
  Mat E = expm_pade6(A);
  for (int k = 0; k < squarings; ++k) E = E * E;
  return E;
}

void expm_phi1(const Mat& S, Mat& E, Mat& P) {
  const int d = static_cast<int>(S.rows());
  double nrm = S.lpNorm<Eigen::Infinity>();
  int squarings = 0;
  Mat A = S;
  if (nrm > 0.5) {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / 0.5))));
    A /= std::pow(2.0, squarings);
  }
  E = expm_pade6(A);
  P = phi1_series(A);
  const Mat eye = Mat::Identity(d, d);
  for (int k = 0; k < squarings; ++k) {
    P = 0.5 * (E + eye) * P;  // phi1(2A) = (e^A + I) phi1(A) / 2
    E = E * E;
  }
}

// ---------------------------------------------------------------------------
// FlowMap
// ---------------------------------------------------------------------------

FlowMap FlowMap::closed_form_linear(std::vector<Mat> sigma_mats,
                                    std::vector<Vec> offsets) {
  if (sigma_mats.empty()) throw ParameterError("FlowMap: no noise matrices");
  if (offsets.size() != sigma_mats.size())
    throw ParameterError("FlowMap: offsets/matrices count mismatch");
  FlowMap map;
  map.closed_form_ = true;
  map.dim_ = static_cast<int>(sigma_mats[0].rows());
  map.m_ = static_cast<int>(sigma_mats.size());
  map.sigma_mats_ = std::move(sigma_mats);
  map.offsets_ = std::move(offsets);

  // commutation requirements checked to round-off at construction
  double defect = 0.0;
  for (int i = 0; i < map.m_; ++i)
    for (int j = i + 1; j < map.m_; ++j) {
      defect = std::max(defect, (map.sigma_mats_[i] * map.sigma_mats_[j] -
                                 map.sigma_mats_[j] * map.sigma_mats_[i])
                                    .lpNorm<Eigen::Infinity>());
      defect = std::max(defect, (map.sigma_mats_[i] * map.offsets_[j] -
                                 map.sigma_mats_[j] * map.offsets_[i])
                                    .lpNorm<Eigen::Infinity>());
    }
  map.commutator_defect_ = defect;
  if (defect > 1e-10)
    throw ParameterError("FlowMap: affine fields do not commute");

  for (const auto& S : map.sigma_mats_) {
    Eigen::JacobiSVD<Mat> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double cutoff = 1e-12 * std::max(1.0, svd.singularValues()(0));
    Vec inv_sv = svd.singularValues();
    for (int k = 0; k < inv_sv.size(); ++k)
      inv_sv[k] = inv_sv[k] > cutoff ? 1.0 / inv_sv[k] : 0.0;
    map.pinv_.push_back(svd.matrixV() * inv_sv.asDiagonal() *
                        svd.matrixU().transpose());
  }
  return map;
}

FlowMap FlowMap::numeric_ode(int dim, std::vector<NoiseField> fields, int n_sub) {
  if (fields.empty()) throw ParameterError("FlowMap: no noise fields");
  FlowMap map;
  map.closed_form_ = false;
  map.dim_ = dim;
  map.m_ = static_cast<int>(fields.size());
  map.fields_ = std::move(fields);
  map.n_sub_ = std::max(1, n_sub);
  return map;
}

FlowMap::Affine FlowMap::affine_at(const Vec& z) const {
  if (!closed_form_) throw ParameterError("FlowMap: affine_at needs closed form");
  Mat S = Mat::Zero(dim_, dim_);
  Vec B = Vec::Zero(dim_);
  for (int i = 0; i < m_; ++i) {
    S += sigma_mats_[i] * z[i];
    B += offsets_[i] * z[i];
  }
  Affine a;
  Mat P;
  expm_phi1(S, a.linear, P);
  a.offset = P * B;
  Mat Pm;
  expm_phi1(Mat(-S), a.linear_inv, Pm);
  return a;
}

Vec FlowMap::phi(const Vec& z, const Vec& x) const {
  if (closed_form_) {
    auto a = affine_at(z);
    return a.apply(x);
  }
  // integrate d xi / ds = sum_i sigma_i(xi) z^i over s in [0,1]
  int steps = std::max(n_sub_, static_cast<int>(std::ceil(z.norm() / 0.1)));
  double h = 1.0 / steps;
  auto rhs = [&](const Vec& v) {
    Vec out = Vec::Zero(dim_);
    for (int i = 0; i < m_; ++i) out += fields_[i].value(v) * z[i];
    return out;
  };
  Vec xi = x;
  for (int k = 0; k < steps; ++k) {
    Vec k1 = rhs(xi);
    Vec k2 = rhs(xi + 0.5 * h * k1);
    Vec k3 = rhs(xi + 0.5 * h * k2);
    Vec k4 = rhs(xi + h * k3);
    xi += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return xi;
}

Mat FlowMap::phi_jacobian_x(const Vec& z, const Vec& x) const {
  if (closed_form_) return affine_at(z).linear;
  int steps = std::max(n_sub_, static_cast<int>(std::ceil(z.norm() / 0.1)));
  double h = 1.0 / steps;
  auto rhs = [&](const Vec& v) {
    Vec out = Vec::Zero(dim_);
    for (int i = 0; i < m_; ++i) out += fields_[i].value(v) * z[i];
    return out;
  };
  auto jac_rhs = [&](const Vec& v) {
    Mat out = Mat::Zero(dim_, dim_);
    for (int i = 0; i < m_; ++i) {
      if (fields_[i].jacobian)
        out += fields_[i].jacobian(v) * z[i];
      else
        out += central_difference_jacobian(fields_[i].value, v, 1e-6) * z[i];
    }
    return out;
  };
  Vec xi = x;
  Mat J = Mat::Identity(dim_, dim_);
  for (int k = 0; k < steps; ++k) {
    Vec k1 = rhs(xi);
    Mat j1 = jac_rhs(xi) * J;
    Vec x2 = xi + 0.5 * h * k1;
    Vec k2 = rhs(x2);
    Mat j2 = jac_rhs(x2) * (J + 0.5 * h * j1);
    Vec x3 = xi + 0.5 * h * k2;
    Vec k3 = rhs(x3);
    Mat j3 = jac_rhs(x3) * (J + 0.5 * h * j2);
    Vec x4 = xi + h * k3;
    Vec k4 = rhs(x4);
    Mat j4 = jac_rhs(x4) * (J + h * j3);
    xi += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    J += (h / 6.0) * (j1 + 2 * j2 + 2 * j3 + j4);
  }
  return J;
}

Vec FlowMap::phi_inverse(const Vec& z, const Vec& y) const {
  // flow reversal, then a Newton polish for the numeric mode
  Vec x = phi(Vec(-z), y);
  if (closed_form_) return x;
  for (int iter = 0; iter < 8; ++iter) {
    Vec r = phi(z, x) - y;
    if (r.lpNorm<Eigen::Infinity>() < 1e-13) break;
    Mat J = phi_jacobian_x(z, x);
    x -= J.partialPivLu().solve(r);
  }
  return x;
}

Vec FlowMap::sigma_field(int i, const Vec& x) const {
  if (closed_form_) return sigma_mats_[i] * x + offsets_[i];
  return fields_[i].value(x);
}

Mat FlowMap::sigma_field_jac(int i, const Vec& x) const {
  if (closed_form_) return sigma_mats_[i];
  if (fields_[i].jacobian) return fields_[i].jacobian(x);
  return central_difference_jacobian(fields_[i].value, x, 1e-6);
}

// ---------------------------------------------------------------------------
// OUState
// ---------------------------------------------------------------------------

const Vec& OUState::at_time(double t) const { return trajectory[time_index(t)]; }

std::size_t OUState::time_index(double t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t - 1e-12);
  if (it == times.end() || std::abs(*it - t) > 1e-9)
    throw RangeError("OUState: t is not a sampled node");
  return static_cast<std::size_t>(it - times.begin());
}

OUState ou_path(const TimeGrid& grid, double mu, double T_h) {
  if (mu <= 0) throw ParameterError("ou_path: mu must be positive");
  const auto& path = grid.path();
  if (-T_h < path.t_min() - 1e-12)
    throw RangeError("ou_path: tail horizon outside path horizon");

  OUState ou;
  ou.mu = mu;
  ou.tail_horizon = T_h;
  ou.times = grid.nodes();
  ou.trajectory.resize(ou.times.size());

  // seed value at the first grid node from the cell-sum integral, then the
  // exact per-cell recursion
  double t0 = ou.times.front();
  ou.trajectory[0] =
      t0 > -T_h + 1e-12
          ? stationary_exp_integral(path, mu, t0, T_h)
          : Vec::Zero(path.triplet().dim);
  const Vec& b_eff = grid.effective_drift();
  for (std::size_t k = 0; k + 1 < ou.times.size(); ++k) {
    const Cell& c = grid.cells()[k];
    double decay = std::exp(-mu * c.dt);
    Vec z = decay * ou.trajectory[k];
    z += b_eff * ((1.0 - decay) / mu);
    z += std::exp(-mu * 0.5 * c.dt) * c.noise;  // midpoint weight
    if (c.jump) {
      if (c.jump_at_left)
        z += decay * (*c.jump);
      else
        z += *c.jump;
    }
    ou.trajectory[k + 1] = z;
  }
  return ou;
}

// ---------------------------------------------------------------------------
// Marcus integration
// ---------------------------------------------------------------------------

Mat MarcusSystem::drift_jac(const Vec& x) const {
  if (drift_jacobian) return drift_jacobian(x);
  return central_difference_jacobian(drift, x, 1e-6);
}

FlowResult integrate_marcus(const MarcusSystem& system, const TimeGrid& grid,
                            double t0, double t1, const Vec& x0) {
  FlowResult res;
  res.meta.integrator = "marcus-euler";
  std::size_t i0 = grid.index_of(t0);
  std::size_t i1 = grid.index_of(t1);
  const Vec& b = grid.effective_drift();
  const FlowMap& map = system.flow_map;
  const int m = map.noise_count();
  const Mat cov = grid.path().triplet().gaussian_cov();
  const bool has_gauss = cov.lpNorm<Eigen::Infinity>() > 0;

  // Stratonovich correction 1/2 sum_ij cov_ij (grad sigma_i) sigma_j
  auto strato_drift = [&](const Vec& x) {
    Vec out = system.drift(x);
    if (has_gauss) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          if (cov(i, j) != 0.0)
            out += 0.5 * cov(i, j) * (map.sigma_field_jac(i, x) * map.sigma_field(j, x));
    }
    return out;
  };

  Vec x = x0;
  res.times.push_back(grid.nodes()[i0]);
  res.states.push_back(x);
  auto cont_step = [&](const Cell& c, int dir) {
    Vec dl = b * c.dt + c.noise;
    Vec incr = strato_drift(x) * c.dt;
    for (int i = 0; i < m; ++i) incr += map.sigma_field(i, x) * dl[i];
    x += dir * incr;
  };
  if (i0 <= i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const Cell& c = grid.cells()[i];
      if (c.jump && c.jump_at_left) x = map.phi(*c.jump, x);
      cont_step(c, +1);
      if (c.jump && !c.jump_at_left) x = map.phi(*c.jump, x);
      if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > kBlowupThreshold)
        throw DivergenceError("integrate_marcus: blow-up", c.t1, x);
      res.times.push_back(c.t1);
      res.states.push_back(x);
      ++res.meta.steps;
    }
  } else {
    for (std::size_t i = i0; i-- > i1;) {
      const Cell& c = grid.cells()[i];
      if (c.jump && !c.jump_at_left) x = map.phi_inverse(*c.jump, x);
      cont_step(c, -1);
      if (c.jump && c.jump_at_left) x = map.phi_inverse(*c.jump, x);
      if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > kBlowupThreshold)
        throw DivergenceError("integrate_marcus: blow-up", c.t0, x);
      res.times.push_back(c.t0);
      res.states.push_back(x);
      ++res.meta.steps;
    }
  }
  return res;
}

Cocycle make_marcus_cocycle(const MarcusSystem& system,
                            std::shared_ptr<const TimeGrid> grid) {
  return [system, grid](double t0, double t1, const Vec& x0) {
    if (t0 == t1) return x0;
    auto flow = integrate_marcus(system, *grid, t0, t1, x0);
    return flow.states.back();
  };
}

// ---------------------------------------------------------------------------
// Marcus cohomology
// ---------------------------------------------------------------------------

MarcusCohomology::MarcusCohomology(const FlowMap& map, OUState ou)
    : map_(map), ou_(std::move(ou)) {
  if (map_.is_closed_form()) {
    affine_.reserve(ou_.trajectory.size());
    for (const auto& z : ou_.trajectory) affine_.push_back(map_.affine_at(z));
  }
}

Vec MarcusCohomology::H(std::size_t t_idx, const Vec& x) const {
  if (!affine_.empty()) return affine_[t_idx].apply(x);
  return map_.phi(ou_.trajectory[t_idx], x);
}

Mat MarcusCohomology::dHdx(std::size_t t_idx, const Vec& x) const {
  if (!affine_.empty()) return affine_[t_idx].linear;
  return map_.phi_jacobian_x(ou_.trajectory[t_idx], x);
}

Vec MarcusCohomology::H_inverse(std::size_t t_idx, const Vec& y) const {
  if (!affine_.empty()) return affine_[t_idx].invert(y);
  return map_.phi_inverse(ou_.trajectory[t_idx], y);
}

Vec MarcusCohomology::solve_dHdx(std::size_t t_idx, const Vec& x,
                                 const Vec& rhs) const {
  if (!affine_.empty()) return affine_[t_idx].linear_inv * rhs;
  return map_.phi_jacobian_x(ou_.trajectory[t_idx], x).partialPivLu().solve(rhs);
}

MarcusCohomology build_marcus_cohomology(const FlowMap& map, OUState ou) {
  return MarcusCohomology(map, std::move(ou));
}

Vec transformed_drift_marcus(const FlowMap& map, const MarcusSystem& system,
                             double mu, const Vec& z, const Vec& y) {
  Vec hy = map.phi(z, y);
  Vec rhs = system.drift(hy);
  for (int i = 0; i < map.noise_count(); ++i)
    rhs += mu * map.sigma_field(i, hy) * z[i];
  Mat jac = map.phi_jacobian_x(z, y);
  Vec v = jac.partialPivLu().solve(rhs);
  if (!v.allFinite())
    throw InversionError("transformed_drift_marcus: singular dH/dx");
  return v;
}

MarcusConjugacyReport verify_conjugacy_marcus(const MarcusSystem& system,
                                              const TimeGrid& grid,
                                              const Vec& x0, double t_end,
                                              double mu, double T_h) {
  auto ou = ou_path(grid, mu, T_h);
  MarcusCohomology coh(system.flow_map, ou);

  std::size_t zero_idx = coh.time_index(0.0);
  Vec y0 = coh.H_inverse(zero_idx, x0);

  const FlowMap& map = system.flow_map;
  RdeField F = [&](double t, const Vec& y) {
    std::size_t ti = coh.time_index(t);
    const Vec& z = ou.trajectory[ti];
    Vec hy = coh.H(ti, y);
    Vec rhs = system.drift(hy);
    for (int i = 0; i < map.noise_count(); ++i)
      rhs += mu * map.sigma_field(i, hy) * z[i];
    return coh.solve_dHdx(ti, y, rhs);
  };
  auto psi = integrate_rde(F, grid, 0.0, t_end, y0);
  auto phi_flow = integrate_marcus(system, grid, 0.0, t_end, x0);

  MarcusConjugacyReport report;
  report.mu = mu;
  for (std::size_t i = 0; i < phi_flow.times.size(); ++i) {
    double t = phi_flow.times[i];
    std::size_t ti = coh.time_index(t);
    Vec mapped = coh.H(ti, psi.states[i]);
    report.residuals.times.push_back(t);
    report.residuals.residuals.push_back((phi_flow.states[i] - mapped).norm());
  }
  return report;
}

double lie_bracket_check(const std::vector<NoiseField>& fields,
                         const std::vector<Vec>& sample_points) {
  double worst = 0.0;
  for (std::size_t i = 0; i < fields.size(); ++i)
    for (std::size_t j = i + 1; j < fields.size(); ++j)
      for (const auto& x : sample_points) {
        Mat ji = fields[i].jacobian
                     ? fields[i].jacobian(x)
                     : central_difference_jacobian(fields[i].value, x, 1e-6);
        Mat jj = fields[j].jacobian
                     ? fields[j].jacobian(x)
                     : central_difference_jacobian(fields[j].value, x, 1e-6);
        Vec bracket = jj * fields[i].value(x) - ji * fields[j].value(x);
        worst = std::max(worst, bracket.lpNorm<Eigen::Infinity>());
      }
  return worst;
}

void write_ou_csv(const std::string& file, const OUState& ou) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  const int m = ou.trajectory.empty() ? 0 : static_cast<int>(ou.trajectory[0].size());
  out << "t";
  for (int c = 1; c <= m; ++c) out << ",Z_" << c;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < ou.times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", ou.times[i]);
    out << buf;
    for (int c = 0; c < m; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ou.trajectory[i][c]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace levyrds
