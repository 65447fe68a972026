#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace cellfate {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** generator. Satisfies UniformRandomBitGenerator so it can
/// drive the <random> distributions as well as the helpers below.
///
/// Independent streams are derived from (seed, stream index) with
/// `Rng::stream`; a replication's draws depend only on that pair, never on
/// which thread runs it or in what order.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) { reseed(seed, 0); }

  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    Rng rng;
    rng.reseed(seed, index);
    return rng;
  }

  void reseed(std::uint64_t seed, std::uint64_t index) {
    // Counter-based split: hash the pair, then expand with splitmix64.
    std::uint64_t mix = seed;
    std::uint64_t key = splitmix64(mix) ^ (index * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
    for (auto& word : state_) word = splitmix64(key);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  std::int64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
      // Multiplication method; exact and cheap for small means.
      const double limit = std::exp(-mean);
      std::int64_t k = 0;
      double prod = uniform();
      while (prod > limit) {
        ++k;
        prod *= uniform();
      }
      return k;
    }
    std::poisson_distribution<std::int64_t> dist(mean);
    return dist(*this);
  }

  /// Natural log of a Gamma(shape, 1) variate; stays finite for tiny shapes.
  double log_gamma_variate(double shape) {
    if (shape >= 1.0) {
      std::gamma_distribution<double> dist(shape, 1.0);
      return std::log(dist(*this));
    }
    std::gamma_distribution<double> dist(shape + 1.0, 1.0);
    return std::log(dist(*this)) + std::log(uniform()) / shape;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace cellfate
