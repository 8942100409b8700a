#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace xcrc {

/// Deterministic random source used everywhere randomness is needed.
///
/// The draw scheme is part of the reproducibility contract: given a seed,
/// the sequence of values is identical across platforms and builds.
///   u64     : raw std::mt19937_64 output (the engine sequence is pinned
///             by the C++ standard, unlike the standard distributions)
///   uniform : (u64 >> 11) * 2^-53, in [0, 1)
///   normal  : Box-Muller cosine branch; consumes exactly two u64 draws
///   below(n): u64 % n
///   shuffle : Fisher-Yates from the back, swap(v[i], v[below(i+1)])
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t u64() { return gen_(); }

  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((u64() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(u64() % n); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace xcrc
