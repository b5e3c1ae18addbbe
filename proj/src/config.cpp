#include "levyrds/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace levyrds {

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::simulate_levy: return "simulate-levy";
    case ExperimentKind::ito_conjugacy: return "ito-conjugacy";
    case ExperimentKind::marcus_conjugacy: return "marcus-conjugacy";
    case ExperimentKind::attractor: return "attractor";
    case ExperimentKind::linearize: return "linearize";
    case ExperimentKind::verify_all: return "verify-all";
  }
  return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
  if (name == "simulate-levy") return ExperimentKind::simulate_levy;
  if (name == "ito-conjugacy") return ExperimentKind::ito_conjugacy;
  if (name == "marcus-conjugacy") return ExperimentKind::marcus_conjugacy;
  if (name == "attractor") return ExperimentKind::attractor;
  if (name == "linearize") return ExperimentKind::linearize;
  if (name == "verify-all") return ExperimentKind::verify_all;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

LevyTriplet TripletConfig::build() const {
  LevyTriplet t;
  t.dim = dim;
  if (static_cast<int>(drift.size()) != dim)
    throw ConfigError("triplet.drift must have dim entries");
  t.drift = Eigen::Map<const Vec>(drift.data(), dim);
  if (diffusion_cols < 0) throw ConfigError("triplet.diffusion_cols must be >= 0");
  if (diffusion_cols == 0 ||
      std::all_of(diffusion.begin(), diffusion.end(),
                  [](double v) { return v == 0.0; })) {
    t.diffusion = Mat::Zero(dim, 0);
  } else {
    if (static_cast<int>(diffusion.size()) != dim * diffusion_cols)
      throw ConfigError("triplet.diffusion must have dim*diffusion_cols entries");
    t.diffusion = Mat(dim, diffusion_cols);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < diffusion_cols; ++c)
        t.diffusion(r, c) = diffusion[static_cast<std::size_t>(r * diffusion_cols + c)];
  }
  t.jump_rate = jump_rate;
  t.small_jump_cutoff = small_jump_cutoff;
  t.compensate_small = compensate_small;
  if (jump_rate > 0) {
    if (jump_law == "uniform_ball") {
      t.jump_law = JumpLaw::uniform(dim, law_radius);
    } else if (jump_law == "two_point") {
      if (static_cast<int>(law_u1.size()) != dim ||
          static_cast<int>(law_u2.size()) != dim)
        throw ConfigError("triplet.law_u1/u2 must have dim entries");
      t.jump_law = JumpLaw::two_point_law(Eigen::Map<const Vec>(law_u1.data(), dim),
                                          Eigen::Map<const Vec>(law_u2.data(), dim),
                                          law_p);
    } else if (jump_law == "trunc_gauss") {
      t.jump_law = JumpLaw::truncated_gaussian(dim, law_sigma, law_radius);
    } else {
      throw ConfigError("unknown jump_law '" + jump_law + "'");
    }
  }
  t.validate();
  return t;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, int line) {
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("expected a number, got '" + v + "'", line);
  return x;
}

int parse_int(const std::string& v, int line) {
  double x = parse_double(v, line);
  auto i = static_cast<long long>(x);
  if (static_cast<double>(i) != x)
    throw ConfigError("expected an integer, got '" + v + "'", line);
  return static_cast<int>(i);
}

std::uint64_t parse_u64(const std::string& v, int line) {
  char* end = nullptr;
  unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("expected a nonnegative integer, got '" + v + "'", line);
  return x;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'", line);
}

std::vector<double> parse_array(const std::string& v, int line) {
  std::vector<double> out;
  std::string token;
  std::stringstream ss(v);
  std::string piece;
  while (std::getline(ss, piece, ',')) {
    std::stringstream ws(piece);
    while (ws >> token) out.push_back(parse_double(token, line));
  }
  if (out.empty()) throw ConfigError("expected at least one number", line);
  return out;
}

std::vector<double> parse_sorted_unique(const std::string& v, int line) {
  auto out = parse_array(v, line);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

ExperimentConfig load_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  bool saw_kind = false;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("malformed section header '" + line + "'", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (section != "triplet" && section != "system" && section != "numeric")
        throw ConfigError("unknown section '" + section + "'", line_no);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("empty key or value", line_no);

    if (section.empty()) {
      if (key == "kind") {
        cfg.kind = parse_kind(value);
        saw_kind = true;
      } else if (key == "seed") {
        cfg.seed = parse_u64(value, line_no);
      } else if (key == "out") {
        cfg.out_dir = value;
      } else {
        throw ConfigError("unknown key '" + key + "'", line_no);
      }
      continue;
    }

    if (section == "triplet") {
      auto& t = cfg.triplet;
      if (key == "dim") t.dim = parse_int(value, line_no);
      else if (key == "drift") t.drift = parse_array(value, line_no);
      else if (key == "diffusion") t.diffusion = parse_array(value, line_no);
      else if (key == "diffusion_cols") t.diffusion_cols = parse_int(value, line_no);
      else if (key == "jump_rate") t.jump_rate = parse_double(value, line_no);
      else if (key == "jump_law") t.jump_law = value;
      else if (key == "law_u1") t.law_u1 = parse_array(value, line_no);
      else if (key == "law_u2") t.law_u2 = parse_array(value, line_no);
      else if (key == "law_p") t.law_p = parse_double(value, line_no);
      else if (key == "law_radius") t.law_radius = parse_double(value, line_no);
      else if (key == "law_sigma") t.law_sigma = parse_double(value, line_no);
      else if (key == "small_jump_cutoff") t.small_jump_cutoff = parse_double(value, line_no);
      else if (key == "compensate_small") t.compensate_small = parse_bool(value, line_no);
      else throw ConfigError("unknown key 'triplet." + key + "'", line_no);
      continue;
    }

    if (section == "system") {
      auto& s = cfg.system;
      if (key == "name") s.name = value;
      else if (key == "beta") s.beta = parse_double(value, line_no);
      else if (key == "sigma_bar") s.sigma_bar = parse_double(value, line_no);
      else if (key == "beta_off") s.beta_off = parse_double(value, line_no);
      else if (key == "cubic") s.cubic = parse_double(value, line_no);
      else if (key == "gamma1") s.gamma1 = parse_double(value, line_no);
      else if (key == "gamma2") s.gamma2 = parse_double(value, line_no);
      else if (key == "sigma1") s.sigma1 = parse_double(value, line_no);
      else if (key == "sigma2") s.sigma2 = parse_double(value, line_no);
      else if (key == "alpha") s.alpha = parse_double(value, line_no);
      else if (key == "sigma_param") s.sigma_param = parse_double(value, line_no);
      else if (key == "l") s.l = parse_int(value, line_no);
      else if (key == "drift_poly") s.drift_poly = parse_array(value, line_no);
      else if (key == "sigma_poly") s.sigma_poly = parse_array(value, line_no);
      else throw ConfigError("unknown key 'system." + key + "'", line_no);
      continue;
    }

    // numeric
    auto& n = cfg.numeric;
    if (key == "dt") n.dt = parse_double(value, line_no);
    else if (key == "t_min") n.t_min = parse_double(value, line_no);
    else if (key == "t_max") n.t_max = parse_double(value, line_no);
    else if (key == "t_end") n.t_end = parse_double(value, line_no);
    else if (key == "tail_horizon") n.tail_horizon = parse_double(value, line_no);
    else if (key == "mu") n.mu = parse_double(value, line_no);
    else if (key == "newton_tol") n.newton_tol = parse_double(value, line_no);
    else if (key == "anchors") n.anchors = parse_sorted_unique(value, line_no);
    else if (key == "n_points") n.n_points = parse_int(value, line_no);
    else if (key == "n_samples") n.n_samples = parse_int(value, line_no);
    else if (key == "tol") n.tol = parse_double(value, line_no);
    else if (key == "ball_radius") n.ball_radius = parse_double(value, line_no);
    else if (key == "x0") n.x0 = parse_double(value, line_no);
    else throw ConfigError("unknown key 'numeric." + key + "'", line_no);
  }

  if (!saw_kind) throw ConfigError("missing required key 'kind'");
  auto positive = [&](double v, const char* what) {
    if (!(v > 0)) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(cfg.numeric.dt, "numeric.dt");
  positive(cfg.numeric.tail_horizon, "numeric.tail_horizon");
  positive(cfg.numeric.mu, "numeric.mu");
  positive(cfg.numeric.newton_tol, "numeric.newton_tol");
  positive(cfg.numeric.tol, "numeric.tol");
  if (cfg.numeric.n_points < 1) throw ConfigError("numeric.n_points must be >= 1");
  if (cfg.numeric.n_samples < 1) throw ConfigError("numeric.n_samples must be >= 1");
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str());
}

namespace {
std::string join(const std::vector<double>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ' ';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
    out << buf;
  }
  return out.str();
}
}  // namespace

std::string dump_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "kind = " << kind_name(c.kind) << '\n';
  out << "seed = " << c.seed << '\n';
  out << "out = " << c.out_dir << '\n';
  out << "[triplet]\n";
  out << "dim = " << c.triplet.dim << '\n';
  out << "drift = " << join(c.triplet.drift) << '\n';
  out << "diffusion = " << join(c.triplet.diffusion) << '\n';
  out << "diffusion_cols = " << c.triplet.diffusion_cols << '\n';
  out << "jump_rate = " << c.triplet.jump_rate << '\n';
  out << "jump_law = " << c.triplet.jump_law << '\n';
  out << "law_u1 = " << join(c.triplet.law_u1) << '\n';
  out << "law_u2 = " << join(c.triplet.law_u2) << '\n';
  out << "law_p = " << c.triplet.law_p << '\n';
  out << "law_radius = " << c.triplet.law_radius << '\n';
  out << "law_sigma = " << c.triplet.law_sigma << '\n';
  out << "small_jump_cutoff = " << c.triplet.small_jump_cutoff << '\n';
  out << "compensate_small = " << (c.triplet.compensate_small ? "true" : "false") << '\n';
  out << "[system]\n";
  out << "name = " << c.system.name << '\n';
  out << "beta = " << c.system.beta << '\n';
  out << "sigma_bar = " << c.system.sigma_bar << '\n';
  out << "beta_off = " << c.system.beta_off << '\n';
  out << "cubic = " << c.system.cubic << '\n';
  out << "gamma1 = " << c.system.gamma1 << '\n';
  out << "gamma2 = " << c.system.gamma2 << '\n';
  out << "sigma1 = " << c.system.sigma1 << '\n';
  out << "sigma2 = " << c.system.sigma2 << '\n';
  out << "alpha = " << c.system.alpha << '\n';
  out << "sigma_param = " << c.system.sigma_param << '\n';
  out << "l = " << c.system.l << '\n';
  if (!c.system.drift_poly.empty())
    out << "drift_poly = " << join(c.system.drift_poly) << '\n';
  if (!c.system.sigma_poly.empty())
    out << "sigma_poly = " << join(c.system.sigma_poly) << '\n';
  out << "[numeric]\n";
  out << "dt = " << c.numeric.dt << '\n';
  out << "t_min = " << c.numeric.t_min << '\n';
  out << "t_max = " << c.numeric.t_max << '\n';
  out << "t_end = " << c.numeric.t_end << '\n';
  out << "tail_horizon = " << c.numeric.tail_horizon << '\n';
  out << "mu = " << c.numeric.mu << '\n';
  out << "newton_tol = " << c.numeric.newton_tol << '\n';
  out << "anchors = " << join(c.numeric.anchors) << '\n';
  out << "n_points = " << c.numeric.n_points << '\n';
  out << "n_samples = " << c.numeric.n_samples << '\n';
  out << "tol = " << c.numeric.tol << '\n';
  out << "ball_radius = " << c.numeric.ball_radius << '\n';
  out << "x0 = " << c.numeric.x0 << '\n';
  return out.str();
}

}  // namespace levyrds
