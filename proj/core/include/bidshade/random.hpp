#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace bidshade {

/// SplitMix64 finalizer. Used for seed derivation and hash mixing.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Portable pseudo-random source. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the distributions below are implemented
/// here (rather than with <random> distributions, whose algorithms are
/// implementation-defined) so a seed reproduces the same stream everywhere.
///
///   uniform()  = (engine() >> 11) * 2^-53, in [0, 1)
///   normal()   = Box-Muller on (1 - uniform(), uniform()); the sine half is cached
///   index(n)   = floor(uniform() * n)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
  }

  std::size_t index(std::size_t n) {
    const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bidshade
