#include "levyrds/levy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace levyrds {

namespace {

constexpr std::int64_t kNoUniform = INT64_MIN;

double gauss_legendre_64(const std::function<double(double)>& f, double a, double b) {
  // 32-point nodes/weights on [0,1] mirrored to 64 points via symmetry would
  // be overkill; a composite 16-panel 4-point rule reaches ~1e-13 on the
  // smooth radial integrands used here.
  static const double xs[4] = {0.069431844202973712, 0.33000947820757187,
                               0.66999052179242813, 0.93056815579702623};
  static const double ws[4] = {0.17392742256872692, 0.32607257743127305,
                               0.32607257743127305, 0.17392742256872692};
  const int panels = 16;
  double h = (b - a) / panels, total = 0.0;
  for (int p = 0; p < panels; ++p) {
    double lo = a + p * h;
    for (int k = 0; k < 4; ++k) total += ws[k] * f(lo + xs[k] * h) * h;
  }
  return total;
}

// E[exp(i q <e, v>)] over v uniform on the unit sphere S^{m-1}.
double sphere_cf(int m, double q) {
  q = std::abs(q);
  if (q < 1e-12) return 1.0;
  switch (m) {
    case 1:
      return std::cos(q);
    case 2:
      return std::cyl_bessel_j(0.0, q);
    case 3:
      return std::sin(q) / q;
    default: {
      double nu = 0.5 * m - 1.0;
      return std::tgamma(0.5 * m) * std::pow(2.0 / q, nu) *
             std::cyl_bessel_j(nu, q);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// JumpLaw
// ---------------------------------------------------------------------------

JumpLaw JumpLaw::uniform(int dim, double radius) {
  JumpLaw law;
  law.kind = JumpLawKind::uniform_ball;
  law.dim = dim;
  law.radius = radius;
  return law;
}

JumpLaw JumpLaw::two_point_law(Vec u1, Vec u2, double p) {
  JumpLaw law;
  law.kind = JumpLawKind::two_point;
  law.dim = static_cast<int>(u1.size());
  law.u1 = std::move(u1);
  law.u2 = std::move(u2);
  law.p = p;
  return law;
}

JumpLaw JumpLaw::truncated_gaussian(int dim, double sigma, double radius) {
  JumpLaw law;
  law.kind = JumpLawKind::trunc_gauss;
  law.dim = dim;
  law.sigma = sigma;
  law.radius = radius;
  return law;
}

void JumpLaw::validate() const {
  if (dim < 1) throw ParameterError("jump law: dim must be positive");
  switch (kind) {
    case JumpLawKind::uniform_ball:
      if (radius <= 0) throw ParameterError("uniform_ball: radius must be positive");
      break;
    case JumpLawKind::two_point:
      if (u1.size() != dim || u2.size() != dim)
        throw ParameterError("two_point: atom dimension mismatch");
      if (p < 0 || p > 1) throw ParameterError("two_point: p outside [0,1]");
      if (u1.norm() == 0 || u2.norm() == 0)
        throw ParameterError("two_point: atoms must avoid 0");
      break;
    case JumpLawKind::trunc_gauss:
      if (sigma <= 0 || radius <= 0)
        throw ParameterError("trunc_gauss: sigma and radius must be positive");
      break;
  }
}

Vec JumpLaw::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  switch (kind) {
    case JumpLawKind::uniform_ball: {
      // direction uniform on the sphere, radius ~ R * U^{1/m}
      Vec dir(dim);
      double n2 = 0;
      do {
        for (int i = 0; i < dim; ++i) dir[i] = gauss(rng);
        n2 = dir.norm();
      } while (n2 == 0);
      double r = radius * std::pow(unif(rng), 1.0 / dim);
      return (r / n2) * dir;
    }
    case JumpLawKind::two_point:
      return unif(rng) < p ? u1 : u2;
    case JumpLawKind::trunc_gauss: {
      Vec u(dim);
      for (int tries = 0; tries < 10000; ++tries) {
        for (int i = 0; i < dim; ++i) u[i] = sigma * gauss(rng);
        double n = u.norm();
        if (n > 0 && n <= radius) return u;
      }
      throw IterationError("trunc_gauss: rejection sampling failed", 0.0);
    }
  }
  throw ParameterError("unknown jump law");
}

Vec JumpLaw::mean_small(double delta) const {
  Vec mean = Vec::Zero(dim);
  if (kind == JumpLawKind::two_point) {
    if (u1.norm() <= delta) mean += p * u1;
    if (u2.norm() <= delta) mean += (1.0 - p) * u2;
  }
  // isotropic laws have mean zero on any centered ball
  return mean;
}

std::complex<double> JumpLaw::char_fn(const Vec& z) const {
  using cd = std::complex<double>;
  switch (kind) {
    case JumpLawKind::two_point:
      return p * std::exp(cd(0, z.dot(u1))) +
             (1.0 - p) * std::exp(cd(0, z.dot(u2)));
    case JumpLawKind::uniform_ball: {
      // radial density ~ rho^{m-1} on [0, R]
      double q = z.norm();
      double norm = std::pow(radius, dim) / dim;
      double val = gauss_legendre_64(
          [&](double r) { return std::pow(r, dim - 1) * sphere_cf(dim, q * r); },
          0.0, radius);
      return cd(val / norm, 0.0);
    }
    case JumpLawKind::trunc_gauss: {
      double q = z.norm();
      auto dens = [&](double r) {
        return std::pow(r, dim - 1) * std::exp(-0.5 * r * r / (sigma * sigma));
      };
      double norm = gauss_legendre_64(dens, 0.0, radius);
      double val = gauss_legendre_64(
          [&](double r) { return dens(r) * sphere_cf(dim, q * r); }, 0.0,
          radius);
      return cd(val / norm, 0.0);
    }
  }
  throw ParameterError("unknown jump law");
}

double JumpLaw::mean_inner_small(const Vec& z, double delta) const {
  return z.dot(mean_small(delta));
}

// ---------------------------------------------------------------------------
// LevyTriplet
// ---------------------------------------------------------------------------

void LevyTriplet::validate() const {
  if (dim < 1) throw ParameterError("triplet: dim must be positive");
  if (drift.size() != dim) throw ParameterError("triplet: drift dimension mismatch");
  if (diffusion.rows() != dim)
    throw ParameterError("triplet: diffusion must have m rows");
  if (jump_rate < 0) throw ParameterError("triplet: jump_rate must be >= 0");
  if (!(small_jump_cutoff > 0 && small_jump_cutoff < 1))
    throw ParameterError("triplet: small_jump_cutoff must lie in (0,1)");
  if (jump_rate > 0) {
    if (jump_law.dim != dim) throw ParameterError("triplet: jump law dimension mismatch");
    jump_law.validate();
  }
}

Vec LevyTriplet::effective_drift() const {
  Vec b = drift;
  if (compensate_small && jump_rate > 0)
    b -= jump_rate * jump_law.mean_small(small_jump_cutoff);
  return b;
}

Mat LevyTriplet::gaussian_cov() const { return diffusion * diffusion.transpose(); }

std::complex<double> LevyTriplet::characteristic_exponent(const Vec& z) const {
  using cd = std::complex<double>;
  cd psi = cd(0, z.dot(drift)) - cd(0.5 * z.dot(gaussian_cov() * z), 0);
  if (jump_rate > 0) {
    cd jump_term = jump_law.char_fn(z) - 1.0;
    if (compensate_small)
      jump_term -= cd(0, jump_law.mean_inner_small(z, small_jump_cutoff));
    psi += jump_rate * jump_term;
  }
  return psi;
}

LevyTriplet LevyTriplet::drift_only(Vec b) {
  LevyTriplet t;
  t.dim = static_cast<int>(b.size());
  t.drift = std::move(b);
  t.diffusion = Mat::Zero(t.dim, 0);
  return t;
}

LevyTriplet LevyTriplet::scalar(double b, double a, double rate, JumpLaw law,
                                double delta, bool compensate) {
  LevyTriplet t;
  t.dim = 1;
  t.drift = Vec::Constant(1, b);
  if (a != 0.0)
    t.diffusion = Mat::Constant(1, 1, a);
  else
    t.diffusion = Mat::Zero(1, 0);
  t.jump_rate = rate;
  t.jump_law = std::move(law);
  t.small_jump_cutoff = delta;
  t.compensate_small = compensate;
  return t;
}

// ---------------------------------------------------------------------------
// TwoSidedPath
// ---------------------------------------------------------------------------

TwoSidedPath TwoSidedPath::sample(const LevyTriplet& triplet, double t_min,
                                  double t_max, double base_step,
                                  std::uint64_t seed) {
  triplet.validate();
  if (!(t_min <= 0.0 && 0.0 <= t_max) || t_min == t_max)
    throw ParameterError("sample_path: horizon must contain 0");
  if (base_step <= 0) throw ParameterError("sample_path: base_step must be positive");

  TwoSidedPath path;
  path.triplet_ = triplet;
  path.t_min_ = t_min;
  path.t_max_ = t_max;
  path.base_step_ = base_step;
  path.seed_ = seed;

  // Jump times on each side are a Poisson process of rate jump_rate; disjoint
  // streams keep the sides independent by construction.
  if (triplet.jump_rate > 0) {
    auto draw_side = [&](double lo, double hi, const std::string& tag,
                         std::vector<JumpRecord>& out) {
      if (hi <= lo) return;
      auto rng_t = make_rng(seed, tag + ".times");
      auto rng_u = make_rng(seed, tag + ".sizes");
      std::poisson_distribution<int> pois(triplet.jump_rate * (hi - lo));
      std::uniform_real_distribution<double> unif(lo, hi);
      int n = pois(rng_t);
      std::vector<double> times(n);
      for (int i = 0; i < n; ++i) times[i] = unif(rng_t);
      std::sort(times.begin(), times.end());
      for (int i = 0; i < n; ++i)
        out.push_back({times[i], triplet.jump_law.sample(rng_u)});
    };
    draw_side(t_min, 0.0, "levy.neg", path.jumps_neg_);
    draw_side(0.0, t_max, "levy.pos", path.jumps_pos_);
  }

  auto rng_wn = make_rng(seed, "levy.brownian.neg");
  auto rng_wp = make_rng(seed, "levy.brownian.pos");
  path.build_nodes_and_brownian(rng_wn, rng_wp, triplet.noise_dim() == 0);
  path.index_jumps();
  return path;
}

TwoSidedPath TwoSidedPath::from_records(const LevyTriplet& triplet,
                                        double t_min, double t_max,
                                        double base_step,
                                        std::vector<JumpRecord> jumps,
                                        std::uint64_t seed,
                                        bool zero_brownian) {
  triplet.validate();
  TwoSidedPath path;
  path.triplet_ = triplet;
  path.t_min_ = t_min;
  path.t_max_ = t_max;
  path.base_step_ = base_step;
  path.seed_ = seed;
  for (auto& j : jumps) {
    if (j.time == 0.0) throw ParameterError("from_records: jump at t=0 not supported");
    if (j.time < t_min || j.time > t_max)
      throw ParameterError("from_records: jump outside horizon");
    (j.time > 0 ? path.jumps_pos_ : path.jumps_neg_).push_back(std::move(j));
  }
  auto by_time = [](const JumpRecord& a, const JumpRecord& b) {
    return a.time < b.time;
  };
  std::sort(path.jumps_pos_.begin(), path.jumps_pos_.end(), by_time);
  std::sort(path.jumps_neg_.begin(), path.jumps_neg_.end(), by_time);

  auto rng_wn = make_rng(seed, "levy.brownian.neg");
  auto rng_wp = make_rng(seed, "levy.brownian.pos");
  path.build_nodes_and_brownian(rng_wn, rng_wp,
                                zero_brownian || triplet.noise_dim() == 0);
  path.index_jumps();
  return path;
}

void TwoSidedPath::build_nodes_and_brownian(std::mt19937_64& rng_neg,
                                            std::mt19937_64& rng_pos,
                                            bool zero_brownian) {
  // Uniform lattice k*base_step clipped to the horizon, then jump times and
  // endpoints merged in.
  const double h = base_step_;
  const double tol = 0.25 * h;
  std::vector<std::pair<double, std::int64_t>> pts;  // (time, uniform index)
  auto k_lo = static_cast<std::int64_t>(std::ceil(t_min_ / h - 1e-9));
  auto k_hi = static_cast<std::int64_t>(std::floor(t_max_ / h + 1e-9));
  for (std::int64_t k = k_lo; k <= k_hi; ++k)
    pts.emplace_back(static_cast<double>(k) * h, k);
  auto add_irregular = [&](double t) {
    for (auto& p : pts)
      if (std::abs(p.first - t) < 1e-12) return;  // duplicate guard
    pts.emplace_back(t, kNoUniform);
  };
  if (std::abs(k_lo * h - t_min_) > 1e-12) add_irregular(t_min_);
  if (std::abs(k_hi * h - t_max_) > 1e-12) add_irregular(t_max_);
  for (const auto& j : jumps_neg_) pts.emplace_back(j.time, kNoUniform);
  for (const auto& j : jumps_pos_) pts.emplace_back(j.time, kNoUniform);
  std::sort(pts.begin(), pts.end());
  // collapse accidental coincidences between jump times and lattice nodes
  std::vector<std::pair<double, std::int64_t>> merged;
  for (auto& p : pts) {
    if (!merged.empty() && std::abs(p.first - merged.back().first) < tol * 1e-6) {
      if (merged.back().second == kNoUniform) merged.back().second = p.second;
      continue;
    }
    merged.push_back(p);
  }
  nodes_.clear();
  uniform_idx_.clear();
  for (auto& p : merged) {
    nodes_.push_back(p.first);
    uniform_idx_.push_back(p.second);
  }

  // Brownian values at nodes, W(0) = 0, disjoint streams per side.
  const int mprime = triplet_.noise_dim();
  w_.assign(nodes_.size(), Vec::Zero(mprime));
  if (!zero_brownian && mprime > 0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::size_t zero_idx = node_index(0.0);
    for (std::size_t i = zero_idx; i + 1 < nodes_.size(); ++i) {
      double dt = nodes_[i + 1] - nodes_[i];
      Vec inc(mprime);
      for (int c = 0; c < mprime; ++c) inc[c] = std::sqrt(dt) * gauss(rng_pos);
      w_[i + 1] = w_[i] + inc;
    }
    for (std::size_t i = zero_idx; i > 0; --i) {
      double dt = nodes_[i] - nodes_[i - 1];
      Vec inc(mprime);
      for (int c = 0; c < mprime; ++c) inc[c] = std::sqrt(dt) * gauss(rng_neg);
      w_[i - 1] = w_[i] - inc;
    }
  }
}

void TwoSidedPath::index_jumps() {
  jump_slot_.assign(nodes_.size(), -1);
  auto mark = [&](const std::vector<JumpRecord>& jumps, bool positive) {
    for (std::size_t j = 0; j < jumps.size(); ++j) {
      std::size_t i = node_index(jumps[j].time);
      jump_slot_[i] = static_cast<int>(j) + (positive ? 0 : (1 << 30));
    }
  };
  mark(jumps_neg_, false);
  mark(jumps_pos_, true);

  const int m = triplet_.dim;
  jump_prefix_pos_.assign(jumps_pos_.size() + 1, Vec::Zero(m));
  for (std::size_t j = 0; j < jumps_pos_.size(); ++j)
    jump_prefix_pos_[j + 1] = jump_prefix_pos_[j] + jumps_pos_[j].size;
  jump_prefix_neg_.assign(jumps_neg_.size() + 1, Vec::Zero(m));
  for (std::size_t j = 0; j < jumps_neg_.size(); ++j)
    jump_prefix_neg_[j + 1] = jump_prefix_neg_[j] + jumps_neg_[j].size;
}

const Vec* TwoSidedPath::jump_at_node(std::size_t i) const {
  int slot = jump_slot_[i];
  if (slot < 0) return nullptr;
  if (slot >= (1 << 30)) return &jumps_neg_[slot - (1 << 30)].size;
  return &jumps_pos_[slot].size;
}

std::size_t TwoSidedPath::node_index(double t) const {
  auto idx = try_node_index(t);
  if (!idx) throw RangeError("time is not a path node: " + std::to_string(t));
  return *idx;
}

std::optional<std::size_t> TwoSidedPath::try_node_index(double t) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
  std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
  double best = 1e300;
  std::size_t best_i = 0;
  for (std::size_t c : {i > 0 ? i - 1 : i, i, i + 1 < nodes_.size() ? i + 1 : i}) {
    if (c < nodes_.size() && std::abs(nodes_[c] - t) < best) {
      best = std::abs(nodes_[c] - t);
      best_i = c;
    }
  }
  if (best < 0.25 * base_step_ + 1e-12) return best_i;
  return std::nullopt;
}

namespace {
// Sum of jump sizes per side convention (see evaluate).
Vec jump_sum(const std::vector<JumpRecord>& jumps, const std::vector<Vec>& prefix,
             int m, double lo, double hi, bool incl_lo, bool incl_hi) {
  if (jumps.empty()) return Vec::Zero(m);
  auto cmp = [](const JumpRecord& j, double t) { return j.time < t; };
  auto first = std::lower_bound(jumps.begin(), jumps.end(), lo, cmp);
  if (!incl_lo)
    while (first != jumps.end() && first->time <= lo) ++first;
  auto last = std::lower_bound(jumps.begin(), jumps.end(), hi, cmp);
  if (incl_hi)
    while (last != jumps.end() && last->time <= hi) ++last;
  auto i0 = static_cast<std::size_t>(first - jumps.begin());
  auto i1 = static_cast<std::size_t>(last - jumps.begin());
  if (i1 <= i0) return Vec::Zero(m);
  return prefix[i1] - prefix[i0];
}
}  // namespace

Vec TwoSidedPath::evaluate(double t) const {
  if (t < t_min_ - 1e-12 || t > t_max_ + 1e-12)
    throw RangeError("evaluate: t outside horizon");
  t = std::clamp(t, t_min_, t_max_);
  const int m = triplet_.dim;
  Vec value = triplet_.effective_drift() * t;

  if (triplet_.noise_dim() > 0) {
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    std::size_t hi = std::min<std::size_t>(
        static_cast<std::size_t>(it - nodes_.begin()), nodes_.size() - 1);
    std::size_t lo = hi > 0 ? hi - 1 : 0;
    Vec wt;
    if (auto idx = try_node_index(t)) {
      wt = w_[*idx];
    } else {
      double a = nodes_[lo], b = nodes_[hi];
      double lam = (b > a) ? (t - a) / (b - a) : 0.0;
      wt = (1.0 - lam) * w_[lo] + lam * w_[hi];
    }
    value += triplet_.diffusion * wt;
  }

  if (t > 0) {
    // cadlag: jumps with 0 < s <= t
    value += jump_sum(jumps_pos_, jump_prefix_pos_, m, 0.0, t, false, true);
  } else if (t < 0) {
    // caglad: the jump at s materializes just after s, so L(t) for t <= 0
    // subtracts jumps with t <= s < 0.
    value -= jump_sum(jumps_neg_, jump_prefix_neg_, m, t, 0.0, true, false);
  }
  return value;
}

Vec TwoSidedPath::pre_jump_value(double t) const {
  Vec v = evaluate(t);
  auto idx = try_node_index(t);
  if (idx && is_jump_node(*idx) && nodes_[*idx] > 0) v -= *jump_at_node(*idx);
  return v;
}

ShiftView shift(const TwoSidedPath& path, double s) {
  if (s < path.t_min() || s > path.t_max())
    throw RangeError("shift: offset outside horizon");
  return ShiftView{&path, s};
}

TwoSidedPath TwoSidedPath::shifted(double s) const {
  std::size_t si = node_index(s);
  if (uniform_idx_[si] == kNoUniform)
    throw ParameterError("shifted: s must be a uniform lattice node");
  const std::int64_t kshift = uniform_idx_[si];
  const double s_exact = nodes_[si];

  TwoSidedPath out;
  out.triplet_ = triplet_;
  out.t_min_ = t_min_ - s_exact;
  out.t_max_ = t_max_ - s_exact;
  out.base_step_ = base_step_;
  out.seed_ = splitmix64(seed_ ^ (static_cast<std::uint64_t>(kshift) * 0x9e37));

  for (const auto& j : jumps_neg_) out.jumps_neg_.push_back({j.time - s_exact, j.size});
  for (const auto& j : jumps_pos_) {
    double tn = j.time - s_exact;
    if (tn == 0.0)
      throw ParameterError("shifted: jump coincides with the shift offset");
    (tn > 0 ? out.jumps_pos_ : out.jumps_neg_).push_back({tn, j.size});
  }
  std::sort(out.jumps_neg_.begin(), out.jumps_neg_.end(),
            [](const JumpRecord& a, const JumpRecord& b) { return a.time < b.time; });

  out.nodes_.reserve(nodes_.size());
  out.uniform_idx_.reserve(nodes_.size());
  const Vec ws = w_[si];
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    out.nodes_.push_back(nodes_[i] - s_exact);
    out.uniform_idx_.push_back(uniform_idx_[i] == kNoUniform
                                   ? kNoUniform
                                   : uniform_idx_[i] - kshift);
    out.w_.push_back(w_[i] - ws);
  }
  out.index_jumps();
  return out;
}

TwoSidedPath TwoSidedPath::refined(double new_step) const {
  double ratio = base_step_ / new_step;
  auto n = static_cast<std::int64_t>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9)
    throw ParameterError("refined: new_step must divide base_step");
  if (n == 1) return *this;

  TwoSidedPath out;
  out.triplet_ = triplet_;
  out.t_min_ = t_min_;
  out.t_max_ = t_max_;
  out.base_step_ = new_step;
  out.seed_ = seed_;
  out.jumps_pos_ = jumps_pos_;
  out.jumps_neg_ = jumps_neg_;

  // Existing nodes keep their values; new lattice nodes are bridged in
  // ascending order, each conditioned on its current neighbours.  The bridge
  // draw is keyed by the bit pattern of the new node time, so the result does
  // not depend on insertion order.
  const double h = new_step;
  std::vector<std::pair<double, std::int64_t>> pts;
  auto k_lo = static_cast<std::int64_t>(std::ceil(t_min_ / h - 1e-9));
  auto k_hi = static_cast<std::int64_t>(std::floor(t_max_ / h + 1e-9));
  for (std::int64_t k = k_lo; k <= k_hi; ++k)
    pts.emplace_back(static_cast<double>(k) * h, k);
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (uniform_idx_[i] == kNoUniform) pts.emplace_back(nodes_[i], kNoUniform);
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, std::int64_t>> merged;
  for (auto& p : pts) {
    if (!merged.empty() && std::abs(p.first - merged.back().first) < 1e-12) {
      if (merged.back().second == kNoUniform) merged.back().second = p.second;
      continue;
    }
    merged.push_back(p);
  }

  const int mprime = triplet_.noise_dim();
  out.nodes_.reserve(merged.size());
  out.uniform_idx_.reserve(merged.size());
  out.w_.assign(merged.size(), Vec::Zero(mprime));
  std::vector<bool> known(merged.size(), false);
  for (std::size_t i = 0; i < merged.size(); ++i) {
    out.nodes_.push_back(merged[i].first);
    out.uniform_idx_.push_back(merged[i].second);
    if (auto old = try_node_index(merged[i].first)) {
      out.w_[i] = w_[*old];
      known[i] = true;
    }
  }
  if (mprime > 0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < merged.size(); ++i) {
      if (known[i]) continue;
      std::size_t lo = i, hi = i;
      while (lo > 0 && !known[lo]) --lo;
      while (hi + 1 < merged.size() && !known[hi]) ++hi;
      double a = out.nodes_[lo], b = out.nodes_[hi], t = out.nodes_[i];
      std::uint64_t key;
      double tt = t;
      std::memcpy(&key, &tt, sizeof(key));
      auto rng = make_rng(seed_, "levy.bridge", key);
      double lam = (t - a) / (b - a);
      double var = (t - a) * (b - t) / (b - a);
      Vec mean = (1.0 - lam) * out.w_[lo] + lam * out.w_[hi];
      Vec draw(mprime);
      for (int c = 0; c < mprime; ++c) draw[c] = std::sqrt(var) * gauss(rng);
      out.w_[i] = mean + draw;
      known[i] = true;
    }
  }
  out.index_jumps();
  return out;
}

// ---------------------------------------------------------------------------
// Exponentially weighted tail integral
// ---------------------------------------------------------------------------

Vec stationary_exp_integral(const TwoSidedPath& path, double mu, double t,
                            double tail_horizon) {
  if (mu <= 0) throw ParameterError("stationary_exp_integral: mu must be positive");
  double lo = -tail_horizon;
  if (lo < path.t_min() - 1e-12 || t > path.t_max() + 1e-12)
    throw RangeError("stationary_exp_integral: [-T_h, t] not inside horizon");
  const auto& triplet = path.triplet();
  const int m = triplet.dim;
  Vec total = Vec::Zero(m);
  if (t <= lo) return total;

  // Accumulate K = sum e^{mu (s - t)} dL over cells clipped to [lo, t].
  const Vec b_eff = triplet.effective_drift();
  const auto& nodes = path.nodes();
  auto it = std::lower_bound(nodes.begin(), nodes.end(), lo - 1e-12);
  std::size_t i0 = static_cast<std::size_t>(it - nodes.begin());
  if (i0 > 0 && nodes[i0] > lo) --i0;

  // drift part in closed form over the whole window
  total += b_eff * ((1.0 - std::exp(mu * (lo - t))) / mu);

  // Brownian part, midpoint-weighted per clipped cell
  if (triplet.noise_dim() > 0) {
    auto w_of = [&](double s) {
      auto idx = path.try_node_index(s);
      if (idx) return path.brownian_at(*idx);
      auto jt = std::upper_bound(nodes.begin(), nodes.end(), s);
      std::size_t hi = static_cast<std::size_t>(jt - nodes.begin());
      std::size_t lo_i = hi > 0 ? hi - 1 : 0;
      double a = nodes[lo_i], b = nodes[hi];
      double lam = (b > a) ? (s - a) / (b - a) : 0.0;
      return Vec(((1.0 - lam) * path.brownian_at(lo_i) + lam * path.brownian_at(hi)).eval());
    };
    double a = lo;
    Vec wa = w_of(a);
    for (std::size_t i = i0; i + 1 < nodes.size() && nodes[i] < t; ++i) {
      double b = std::min(nodes[i + 1], t);
      if (b <= a) continue;
      Vec wb = w_of(b);
      double mid = 0.5 * (a + b);
      total += std::exp(mu * (mid - t)) * (triplet.diffusion * (wb - wa));
      a = b;
      wa = wb;
      if (b >= t) break;
    }
  }

  // jumps in (lo, t]
  for (const auto& jumps : {&path.jumps_neg(), &path.jumps_pos()}) {
    for (const auto& j : *jumps) {
      if (j.time > lo && j.time <= t)
        total += std::exp(mu * (j.time - t)) * j.size;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Empirical characteristic function check
// ---------------------------------------------------------------------------

double empirical_characteristic_check(const LevyTriplet& triplet, double t,
                                      const std::vector<Vec>& z_grid,
                                      int n_samples, std::uint64_t seed) {
  if (n_samples < 1000)
    throw ParameterError("empirical_characteristic_check: n_samples >= 1000 required");
  if (t <= 0) throw ParameterError("empirical_characteristic_check: t must be positive");
  using cd = std::complex<double>;
  std::vector<std::vector<cd>> sums(z_grid.size());
  for (auto& s : sums) s.assign(1, cd(0, 0));

  std::vector<Vec> endpoints(static_cast<std::size_t>(n_samples));
  parallel_for(static_cast<std::size_t>(n_samples), [&](std::size_t k) {
    // single-cell horizon: exact in law at the endpoint node
    auto path = TwoSidedPath::sample(triplet, 0.0, t, t, derive_seed(seed, "cf", k));
    endpoints[k] = path.evaluate(t);
  });

  double worst = 0.0;
  for (std::size_t zi = 0; zi < z_grid.size(); ++zi) {
    cd acc(0, 0);
    for (const auto& x : endpoints) acc += std::exp(cd(0, z_grid[zi].dot(x)));
    acc /= static_cast<double>(n_samples);
    cd expected = std::exp(t * triplet.characteristic_exponent(z_grid[zi]));
    worst = std::max(worst, std::abs(acc - expected));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// CSV io
// ---------------------------------------------------------------------------

std::vector<PathCsvRow> path_to_rows(const TwoSidedPath& path) {
  std::vector<PathCsvRow> rows;
  rows.reserve(path.nodes().size());
  for (std::size_t i = 0; i < path.nodes().size(); ++i) {
    double t = path.nodes()[i];
    rows.push_back({t, path.evaluate(t), path.is_jump_node(i)});
  }
  return rows;
}

void write_path_csv(const std::string& file, const std::vector<PathCsvRow>& rows) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + file);
  int m = rows.empty() ? 1 : static_cast<int>(rows[0].value.size());
  out << "t";
  for (int c = 1; c <= m; ++c) out << ",L_" << c;
  out << ",is_jump\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.t);
    out << buf;
    for (int c = 0; c < m; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.value[c]);
      out << ',' << buf;
    }
    out << ',' << (r.is_jump ? 1 : 0) << '\n';
  }
}

std::vector<PathCsvRow> read_path_csv(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParameterError("cannot open for reading: " + file);
  std::string line;
  if (!std::getline(in, line)) throw ParameterError("empty CSV: " + file);
  int m = 0;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("L_", 0) == 0) ++m;
    }
  }
  std::vector<PathCsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    PathCsvRow row;
    row.value = Vec::Zero(m);
    std::getline(ss, cell, ',');
    row.t = std::strtod(cell.c_str(), nullptr);
    for (int c = 0; c < m; ++c) {
      std::getline(ss, cell, ',');
      row.value[c] = std::strtod(cell.c_str(), nullptr);
    }
    std::getline(ss, cell, ',');
    row.is_jump = (cell == "1");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace levyrds
