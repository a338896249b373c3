#pragma once

// Shared plumbing: error types, deterministic RNG, hashing, small helpers.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace synergy {

// ---------------------------------------------------------------------------
// Errors. Every failure surfaces as one of these; the CLI maps the type to an
// exit code (bad input -> 2, failed numerics -> 3, missing dependency -> 4).
// ---------------------------------------------------------------------------

struct error : std::runtime_error {
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input: bad bytes, bad config, bad manifest, bad arguments.
struct input_error : error {
  explicit input_error(const std::string& msg) : error(msg) {}
};

// Numerics gave up: divergence, singular matrices without ridge, etc.
struct numeric_error : error {
  explicit numeric_error(const std::string& msg) : error(msg) {}
};

// A pipeline stage was invoked before the stages it consumes.
struct dependency_error : error {
  explicit dependency_error(const std::string& msg) : error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All stochastic choices in the library flow through this
// wrapper so that a seed fixes every downstream bit. uniform() uses the top
// 53 bits of the engine output; normal() is plain Box-Muller (two draws per
// call, no cached spare, so the stream position is easy to reason about).
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Guards against log(0).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n ? eng_() % n : 0; }

 private:
  std::mt19937_64 eng_;
};

// Fisher-Yates; the standard std::shuffle is not specified bit-for-bit across
// library versions, so shuffles that must reproduce use this.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used for content-addressed stage artifacts.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Misc numeric helpers.
// ---------------------------------------------------------------------------

// Round half away from zero (0.5 -> 1, -0.5 -> -1, 2.5 -> 3).
inline long long round_half_away(double x) {
  return x >= 0.0 ? static_cast<long long>(std::floor(x + 0.5))
                  : -static_cast<long long>(std::floor(-x + 0.5));
}

inline int clamp_int(long long v, int lo, int hi) {
  if (v < lo) return lo;
  if (v > hi) return hi;
  return static_cast<int>(v);
}

// Shortest-round-trip-ish decimal for doubles; %.17g always round-trips.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// Dense row-major matrix used at module boundaries that do not need Eigen.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  std::span<const double> row_span(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

}  // namespace synergy
