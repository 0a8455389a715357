// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace geco {

// Row-major everywhere: feature matrices are [n_frames x n_mels] and batched
// activations are [rows x dim], so row slices must be contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input that must not be silently skipped (bad filename, bad layout).
struct ParseError : Error {
  using Error::Error;
};

// File could not be read or written.
struct IoError : Error {
  using Error::Error;
};

// Bad configuration value or config-hash mismatch between artifacts.
struct ConfigError : Error {
  using Error::Error;
};

// A pipeline stage was run before the stages it depends on.
struct DependencyError : Error {
  using Error::Error;
};

// Operation called outside its contract (shape mismatch, out-of-range index).
struct InvalidArgument : Error {
  using Error::Error;
};

// Non-finite value surfaced where the math requires finite inputs/outputs.
struct NumericError : Error {
  using Error::Error;
};

inline std::string strformat(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list args2;
  va_copy(args2, args);
  int n = std::vsnprintf(nullptr, 0, fmt, args);
  va_end(args);
  std::string out(n > 0 ? static_cast<size_t>(n) : 0, '\0');
  if (n > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args2);
  va_end(args2);
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// mt19937_64 output is fully specified by the standard, but the standard
// distributions are not. All transforms below are written out so that a given
// seed produces the same stream on every platform and stdlib.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Mixes a seed with stream tags, for independent per-clip / per-stage streams.
inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> tags) {
  uint64_t s = seed;
  uint64_t h = splitmix64(s);
  for (uint64_t t : tags) {
    s = h ^ (t + 0x9e3779b97f4a7c15ULL);
    h = splitmix64(s);
  }
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  uint64_t uniform_index(uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int n) { return static_cast<int>(uniform_index(static_cast<uint64_t>(n))); }

  // Standard normal via Box-Muller; one value cached per pair.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // In-place Fisher-Yates; std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, used for config hashes stamped into artifacts)

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hash_hex(uint64_t h) { return strformat("%016llx", static_cast<unsigned long long>(h)); }

// String-tagged variant of derive_seed for readable stream names.
inline uint64_t derive_seed(uint64_t seed, std::initializer_list<const char*> tags) {
  uint64_t s = seed;
  uint64_t h = splitmix64(s);
  for (const char* t : tags) {
    s = h ^ fnv1a64(t, std::char_traits<char>::length(t));
    h = splitmix64(s);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Small numeric helpers

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite values");
}

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string(what) + ": non-finite values");
}

}  // namespace geco
