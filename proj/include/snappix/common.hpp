#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace snappix {

inline constexpr std::string_view kVersion = "0.3.1";

// Error hierarchy. The CLI maps UsageError to exit code 2 and everything else
// derived from Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual std::string_view kind() const noexcept { return "error"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "io"; }
};

class ParseError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "parse"; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "validation"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "dimension"; }
};

class DegenerateStatistics : public Error {
 public:
  DegenerateStatistics() : Error("degenerate statistics") {}
  explicit DegenerateStatistics(const std::string& what) : Error(what) {}
  std::string_view kind() const noexcept override { return "degenerate"; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "usage"; }
};

// ---------------------------------------------------------------------------
// Random numbers
//
// std::mt19937_64 is fully specified by the standard, but the std::*_distribution
// adaptors are not, so the mappings from raw 64-bit words to the values we need
// are written out here to keep patterns identical across standard libraries.

using Rng = std::mt19937_64;

// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) throw ValidationError("uniform_index: empty range");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

// Standard normal via Box-Muller (one value per call, the sine branch is dropped).
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed for a named sub-stage. Adding a new label never perturbs existing ones.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  return splitmix64(fnv1a64(label) ^ splitmix64(root));
}

// ---------------------------------------------------------------------------
// Parallelism

struct Parallelism {
  unsigned threads = 1;
};

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker; callers must write only to disjoint outputs so results do not depend
// on the partitioning.
inline void parallel_for(std::size_t n, Parallelism par,
                         const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, par.threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

}  // namespace snappix
