#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace levyrds {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Trajectory left the admissible region (|x| above the blow-up threshold).
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& msg, double t, Vec last)
      : std::runtime_error(msg), last_time(t), last_state(std::move(last)) {}
  double last_time;
  Vec last_state;
};

struct IterationError : std::runtime_error {
  IterationError(const std::string& msg, double residual)
      : std::runtime_error(msg), last_residual(residual) {}
  double last_residual;
};

struct InversionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HypothesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CertificateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& msg, int line_no = 0)
      : std::runtime_error(msg), line(line_no) {}
  int line;
};

// Solution state magnitude above which an integrator declares blow-up.
inline constexpr double kBlowupThreshold = 1e12;

// ---------------------------------------------------------------------------
// Seeding: one master seed, per-component streams derived by hashing the
// component tag and an index.  Adding a new tag never perturbs existing
// streams.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag,
                                 std::uint64_t index = 0) {
  return splitmix64(master ^ splitmix64(fnv1a64(tag) + 0x51ed2701) ^
                    splitmix64(index + 0xabcd1234));
}

inline std::mt19937_64 make_rng(std::uint64_t master, const std::string& tag,
                                std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(master, tag, index));
}

// ---------------------------------------------------------------------------
// Deterministic worker pool: work item i always computes the same result no
// matter how many threads run, because assignment is by index and each item
// derives its own randomness.
// ---------------------------------------------------------------------------

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         unsigned max_threads = 0) {
  unsigned hw = std::thread::hardware_concurrency();
  unsigned nt = max_threads ? std::min(max_threads, hw ? hw : 1u) : (hw ? hw : 1u);
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, n ? n : 1));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  for (unsigned w = 0; w < nt; ++w) {
    workers.emplace_back([=, &body]() {
      for (std::size_t i = w; i < n; i += nt) body(i);
    });
  }
  for (auto& th : workers) th.join();
}

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

inline double median(std::vector<double> v) {
  if (v.empty()) throw ParameterError("median of empty vector");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ParameterError("fit_slope needs >= 2 matching samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  if (den == 0) throw ParameterError("fit_slope: degenerate abscissae");
  return num / den;
}

// Empirical convergence order: slope of log(err) vs log(step).  Errors at or
// below round-off are clamped so a vanishing residual counts as fast decay.
inline double convergence_order(const std::vector<double>& steps,
                                const std::vector<double>& errors,
                                double floor_eps = 1e-15) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    lx.push_back(std::log(steps[i]));
    ly.push_back(std::log(std::max(errors[i], floor_eps)));
  }
  return fit_slope(lx, ly);
}

}  // namespace levyrds
