#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "lblab/common.hpp"

namespace lblab {

// splitmix64: used to decorrelate per-run seeds derived from a base seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t s = base;
  std::uint64_t a = splitmix64(s);
  s = base ^ (0x9e3779b97f4a7c15ull * (index + 1));
  std::uint64_t b = splitmix64(s);
  return a ^ b;
}

// Deterministic generator.  Both the uniform and the normal draw avoid
// std::*_distribution on purpose: libstdc++/libc++ implement those
// differently, and ensemble reproducibility across platforms requires the
// exact draw sequence to be pinned here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1] -- safe as a log() argument.
  double uniform01_open_left() {
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Box-Muller, polar-free form; caches the second variate.
  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    double u1 = uniform01_open_left();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = two_pi * u2;
    cache_ = r * std::sin(a);
    have_cache_ = true;
    return r * std::cos(a);
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool have_cache_ = false;
  double cache_ = 0.0;
};

}  // namespace lblab
