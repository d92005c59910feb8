#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gpens {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Ordinal month index. The calendar mapping, if any, lives in the panel layer.
using MonthId = int32_t;

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError -> 2, DataError -> 3, NumericalError -> 4.
// Precondition violations on in-process calls throw std::invalid_argument.

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, MonthId month = -1, double diagnostic = 0.0)
      : std::runtime_error(what), month_id(month), diagnostic(diagnostic) {}
  MonthId month_id;
  double diagnostic;  // context-dependent, e.g. a condition estimate or residual
};

/// Raised when a metric is undefined on the given inputs (e.g. zero denominator).
class UndefinedMetricError : public NumericalError {
 public:
  explicit UndefinedMetricError(const std::string& what) : NumericalError(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// splitmix64 core with explicit uniform/normal algorithms, so that streams are
// reproducible across platforms and independent of the standard library's
// distribution implementations. Sub-streams are derived by hashing a tag into
// the state; a fit for month m always sees the same stream no matter which
// run, sweep configuration, or resume path requested it.

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// log-uniform on [lo, hi], lo > 0.
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Child stream derived from this stream's seed and a tag.
  Rng derive(uint64_t tag) const {
    Rng mix(state_ ^ (0x2545f4914f6cdd1dULL * (tag + 0x9e3779b97f4a7c15ULL)));
    mix.next_u64();
    return Rng(mix.next_u64());
  }

 private:
  uint64_t state_;
};

/// Deterministic stream for (seed, month, purpose, index) tuples. Used to seed
/// per-month restarts so fit results are independent of execution order.
inline Rng month_stream(uint64_t seed, MonthId month, uint64_t purpose, uint64_t index = 0) {
  Rng r(seed);
  return r.derive(0x6d6f6e7468ULL)  // "month"
      .derive(static_cast<uint64_t>(static_cast<int64_t>(month)))
      .derive(purpose)
      .derive(index);
}

/// FNV-1a over raw bytes; used to checksum training slices in model files.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a(const Vec& v, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(v.data(), sizeof(double) * static_cast<size_t>(v.size()), h);
}

inline uint64_t fnv1a(const Mat& m, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(m.data(), sizeof(double) * static_cast<size_t>(m.size()), h);
}

}  // namespace gpens
