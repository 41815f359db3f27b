#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace kdro {

/// Seedable generator with portable output.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// Uniform and normal variates are derived here rather than through the
/// <random> distributions, whose algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent stream for sub-task `index` (trajectory, trial, ...).
  Rng split(std::uint64_t index) const { return Rng(derive(seed_, index)); }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    return mix(seed ^ mix(index + 0x9E3779B97F4A7C15ULL));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace kdro
