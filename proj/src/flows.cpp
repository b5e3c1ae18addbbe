#include "levyrds/flows.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace levyrds {

// ---------------------------------------------------------------------------
// SystemSpec
// ---------------------------------------------------------------------------

Mat central_difference_jacobian(const Field& f, const Vec& x, double h) {
  const int d_out = static_cast<int>(f(x).size());
  const int d_in = static_cast<int>(x.size());
  Mat jac(d_out, d_in);
  Vec xp = x, xm = x;
  for (int j = 0; j < d_in; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    jac.col(j) = (f(xp) - f(xm)) / (2 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return jac;
}

Mat SystemSpec::drift_jac(const Vec& x) const {
  if (drift_jacobian) return drift_jacobian(x);
  return central_difference_jacobian(drift, x, 1e-6);
}

Mat SystemSpec::noise_jac(int i, const Vec& x) const {
  if (noise_fields[i].jacobian) return noise_fields[i].jacobian(x);
  return central_difference_jacobian(noise_fields[i].value, x, 1e-6);
}

double SystemSpec::jacobian_selftest(const std::vector<Vec>& points, double h) const {
  double worst = 0.0;
  auto check = [&](const Field& f, const FieldJac& jac) {
    if (!jac) return;
    for (const auto& x : points) {
      Mat a = jac(x);
      Mat b = central_difference_jacobian(f, x, h);
      double scale = std::max(1.0, a.norm());
      worst = std::max(worst, (a - b).norm() / scale);
    }
  };
  check(drift, drift_jacobian);
  for (const auto& nf : noise_fields) check(nf.value, nf.jacobian);
  return worst;
}

SystemSpec linear_system_1d(double beta) {
  SystemSpec s;
  s.dim = 1;
  s.drift = [beta](const Vec& x) { return Vec(beta * x); };
  s.drift_jacobian = [beta](const Vec&) { return Mat::Constant(1, 1, beta); };
  s.noise_fields.push_back(
      {[](const Vec& x) { return x; },
       [](const Vec&) { return Mat::Constant(1, 1, 1.0); }});
  s.scalar_sigma = ScalarSigmaHooks{[](double x) { return x; },
                                    [](double) { return 1.0; }};
  return s;
}

SystemSpec scalar_poly_system(std::vector<double> drift_coeffs,
                              std::vector<double> sigma_coeffs) {
  auto poly = [](const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * x + c[k];
    return acc;
  };
  auto dpoly = [](const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 1;) acc = acc * x + c[k] * static_cast<double>(k);
    return acc;
  };
  SystemSpec s;
  s.dim = 1;
  s.drift = [=](const Vec& x) { return Vec(Vec::Constant(1, poly(drift_coeffs, x[0]))); };
  s.drift_jacobian = [=](const Vec& x) {
    return Mat(Mat::Constant(1, 1, dpoly(drift_coeffs, x[0])));
  };
  s.noise_fields.push_back(
      {[=](const Vec& x) { return Vec(Vec::Constant(1, poly(sigma_coeffs, x[0]))); },
       [=](const Vec& x) { return Mat(Mat::Constant(1, 1, dpoly(sigma_coeffs, x[0]))); }});
  s.scalar_sigma =
      ScalarSigmaHooks{[=](double x) { return poly(sigma_coeffs, x); },
                       [=](double x) { return dpoly(sigma_coeffs, x); }};
  return s;
}

// ---------------------------------------------------------------------------
// TimeGrid
// ---------------------------------------------------------------------------

TimeGrid::TimeGrid(const TwoSidedPath& path, double step, double t_lo, double t_hi)
    : path_(&path), step_(step) {
  if (t_hi <= t_lo) throw ParameterError("TimeGrid: empty window");
  if (t_lo < path.t_min() - 1e-12 || t_hi > path.t_max() + 1e-12)
    throw RangeError("TimeGrid: window outside path horizon");
  double ratio = step / path.base_step();
  auto n = static_cast<std::int64_t>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9)
    throw ParameterError("TimeGrid: step must be a multiple of the path base step");

  const auto& pn = path.nodes();
  for (std::size_t i = 0; i < pn.size(); ++i) {
    if (pn[i] < t_lo - 1e-12 || pn[i] > t_hi + 1e-12) continue;
    std::int64_t k = path.uniform_index(i);
    bool keep = path.is_jump_node(i) || std::abs(pn[i]) < 1e-15 ||
                std::abs(pn[i] - t_lo) < 1e-12 || std::abs(pn[i] - t_hi) < 1e-12;
    if (!keep && k != INT64_MIN) {
      std::int64_t r = k % n;
      keep = (r == 0);
    }
    if (keep) nodes_.push_back(pn[i]);
  }
  if (nodes_.size() < 2) throw ParameterError("TimeGrid: fewer than two nodes");

  b_eff_ = path.triplet().effective_drift();
  cells_.reserve(nodes_.size() - 1);
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
    Cell cell;
    cell.t0 = nodes_[i];
    cell.t1 = nodes_[i + 1];
    cell.dt = cell.t1 - cell.t0;
    std::size_t p0 = path.node_index(cell.t0);
    std::size_t p1 = path.node_index(cell.t1);
    if (path.triplet().noise_dim() > 0) {
      cell.dw = path.brownian_at(p1) - path.brownian_at(p0);
      cell.noise = path.triplet().diffusion * cell.dw;
    } else {
      cell.dw = Vec::Zero(0);
      cell.noise = Vec::Zero(path.triplet().dim);
    }
    // side convention: jumps on the cadlag side attach to the right node,
    // on the caglad side to the left node
    if (cell.t1 <= 0.0) {
      cell.jump = path.jump_at_node(p0);
      cell.jump_at_left = true;
    } else {
      cell.jump = path.jump_at_node(p1);
      cell.jump_at_left = false;
    }
    cells_.push_back(std::move(cell));
  }

  exp_node_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) exp_node_[i] = std::exp(nodes_[i]);
  exp_mid_.resize(cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i)
    exp_mid_[i] = std::exp(0.5 * (cells_[i].t0 + cells_[i].t1));
}

std::size_t TimeGrid::index_of(double t) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - 1e-12);
  if (it == nodes_.end() || std::abs(*it - t) > 0.25 * path_->base_step() + 1e-12)
    throw RangeError("TimeGrid: time is not a grid node");
  return static_cast<std::size_t>(it - nodes_.begin());
}

const Vec& FlowResult::at_time(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::abs(times[i] - t) < 1e-10) return states[i];
  throw RangeError("FlowResult: no state at requested time");
}

// ---------------------------------------------------------------------------
// Integrators
// ---------------------------------------------------------------------------

namespace {

void check_finite(const Vec& x, double t, const char* who) {
  if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > kBlowupThreshold)
    throw DivergenceError(std::string(who) + ": trajectory blow-up", t, x);
}

Vec sigma_apply(const SystemSpec& system, const Vec& x, const Vec& dl) {
  Vec out = Vec::Zero(system.dim);
  for (int i = 0; i < system.noise_count(); ++i)
    out += system.noise_fields[i].value(x) * dl[i];
  return out;
}

Mat sigma_jac_apply(const SystemSpec& system, const Vec& x, const Vec& dl) {
  Mat out = Mat::Zero(system.dim, system.dim);
  for (int i = 0; i < system.noise_count(); ++i)
    out += system.noise_jac(i, x) * dl[i];
  return out;
}

}  // namespace

FlowResult integrate_ito(const SystemSpec& system, const TimeGrid& grid,
                         double t0, double t1, const Vec& x0) {
  FlowResult res;
  res.meta.integrator = "euler-maruyama";
  std::size_t i0 = grid.index_of(t0);
  std::size_t i1 = grid.index_of(t1);
  const Vec& b = grid.effective_drift();

  Vec x = x0;
  res.times.push_back(grid.nodes()[i0]);
  res.states.push_back(x);
  if (i0 <= i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const Cell& c = grid.cells()[i];
      if (c.jump && c.jump_at_left) x += sigma_apply(system, x, *c.jump);
      Vec dl = b * c.dt + c.noise;
      x += system.drift(x) * c.dt + sigma_apply(system, x, dl);
      if (c.jump && !c.jump_at_left) x += sigma_apply(system, x, *c.jump);
      check_finite(x, c.t1, "integrate_ito");
      res.times.push_back(c.t1);
      res.states.push_back(x);
      ++res.meta.steps;
    }
  } else {
    // leftward run: explicit one-step inversion of the forward rule
    for (std::size_t i = i0; i-- > i1;) {
      const Cell& c = grid.cells()[i];
      if (c.jump && !c.jump_at_left) x -= sigma_apply(system, x, *c.jump);
      Vec dl = b * c.dt + c.noise;
      x -= system.drift(x) * c.dt + sigma_apply(system, x, dl);
      if (c.jump && c.jump_at_left) x -= sigma_apply(system, x, *c.jump);
      check_finite(x, c.t0, "integrate_ito");
      res.times.push_back(c.t0);
      res.states.push_back(x);
      ++res.meta.steps;
    }
  }
  return res;
}

FlowResult integrate_rde(const RdeField& field, const TimeGrid& grid,
                         double t0, double t1, const Vec& y0) {
  FlowResult res;
  res.meta.integrator = "heun";
  std::size_t i0 = grid.index_of(t0);
  std::size_t i1 = grid.index_of(t1);

  Vec y = y0;
  res.times.push_back(grid.nodes()[i0]);
  res.states.push_back(y);
  auto step = [&](double ta, double tb) {
    double dt = tb - ta;
    Vec fa = field(ta, y);
    Vec pred = y + dt * fa;
    Vec fb = field(tb, pred);
    y += 0.5 * dt * (fa + fb);
    check_finite(y, tb, "integrate_rde");
    res.times.push_back(tb);
    res.states.push_back(y);
    ++res.meta.steps;
  };
  if (i0 <= i1) {
    for (std::size_t i = i0; i < i1; ++i) step(grid.nodes()[i], grid.nodes()[i + 1]);
  } else {
    for (std::size_t i = i0; i-- > i1;) step(grid.nodes()[i + 1], grid.nodes()[i]);
  }
  return res;
}

FlowResult integrate_variational(const SystemSpec& system, const TimeGrid& grid,
                                 double t0, double t1, const Vec& x0) {
  FlowResult res;
  res.meta.integrator = "euler-variational";
  std::size_t i0 = grid.index_of(t0);
  std::size_t i1 = grid.index_of(t1);
  if (i1 < i0) throw ParameterError("integrate_variational: forward runs only");
  const Vec& b = grid.effective_drift();
  const int d = system.dim;
  const Mat eye = Mat::Identity(d, d);

  Vec x = x0;
  Mat jac = eye;
  res.times.push_back(grid.nodes()[i0]);
  res.states.push_back(x);
  res.jacobians.push_back(jac);
  auto apply_jump = [&](const Vec& u) {
    jac = (eye + sigma_jac_apply(system, x, u)) * jac;
    x += sigma_apply(system, x, u);
  };
  for (std::size_t i = i0; i < i1; ++i) {
    const Cell& c = grid.cells()[i];
    if (c.jump && c.jump_at_left) apply_jump(*c.jump);
    Vec dl = b * c.dt + c.noise;
    jac = (eye + system.drift_jac(x) * c.dt + sigma_jac_apply(system, x, dl)) * jac;
    x += system.drift(x) * c.dt + sigma_apply(system, x, dl);
    if (c.jump && !c.jump_at_left) apply_jump(*c.jump);
    check_finite(x, c.t1, "integrate_variational");
    double det = std::abs(jac.determinant());
    res.meta.min_abs_det = std::min(res.meta.min_abs_det, det);
    if (det < 1e-12) res.meta.jacobian_flagged = true;
    res.times.push_back(c.t1);
    res.states.push_back(x);
    res.jacobians.push_back(jac);
    ++res.meta.steps;
  }
  return res;
}

Cocycle make_ito_cocycle(const SystemSpec& system,
                         std::shared_ptr<const TimeGrid> grid) {
  return [system, grid](double t0, double t1, const Vec& x0) {
    if (t0 == t1) return x0;
    auto flow = integrate_ito(system, *grid, t0, t1, x0);
    return flow.states.back();
  };
}

Cocycle make_rde_cocycle(RdeField field, std::shared_ptr<const TimeGrid> grid) {
  return [field = std::move(field), grid](double t0, double t1, const Vec& y0) {
    if (t0 == t1) return y0;
    auto flow = integrate_rde(field, *grid, t0, t1, y0);
    return flow.states.back();
  };
}

double cocycle_check(const std::function<Cocycle(const TwoSidedPath&)>& make_cocycle,
                     const TwoSidedPath& path, const Vec& x0, double s, double t) {
  auto direct_cocycle = make_cocycle(path);
  Vec through = direct_cocycle(0.0, s + t, x0);
  Vec mid = direct_cocycle(0.0, s, x0);
  if (t == 0.0) return (through - mid).norm();
  auto shifted = path.shifted(s);
  auto shifted_cocycle = make_cocycle(shifted);
  Vec two_leg = shifted_cocycle(0.0, t, mid);
  return (through - two_leg).norm();
}

void write_flow_csv(const std::string& file, const FlowResult& flow) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  const int d = flow.states.empty() ? 0 : static_cast<int>(flow.states[0].size());
  out << "t";
  for (int c = 1; c <= d; ++c) out << ",x_" << c;
  if (!flow.jacobians.empty())
    for (int r = 1; r <= d; ++r)
      for (int c = 1; c <= d; ++c) out << ",J_" << r << c;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < flow.times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", flow.times[i]);
    out << buf;
    for (int c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", flow.states[i][c]);
      out << ',' << buf;
    }
    if (!flow.jacobians.empty())
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) {
          std::snprintf(buf, sizeof(buf), "%.17g", flow.jacobians[i](r, c));
          out << ',' << buf;
        }
    out << '\n';
  }
}

}  // namespace levyrds
