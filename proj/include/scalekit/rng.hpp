#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace scalekit {

// Seeded random source with portable draw functions. std::mt19937_64 output
// is fully specified by the standard, and all distributions here are derived
// from it by explicit arithmetic, so a given seed produces the same sequence
// on every platform and toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Independent stream for (master seed, index) pairs. Restarts, bootstrap
  // resamples, and synthetic records each get their own stream so serial and
  // parallel execution sample identically.
  static Rng stream(std::uint64_t master, std::uint64_t index) {
    return Rng(mix(master ^ mix(index + 0x9e3779b97f4a7c15ull)));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  // Standard normal via Box-Muller. The spare value is discarded to keep the
  // draw count per call fixed.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is biased for huge n; n here is a row count, so
    // the bias is < 2^-40 and irrelevant, but keep the rejection loop anyway.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace scalekit
