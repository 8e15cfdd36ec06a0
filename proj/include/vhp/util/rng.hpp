#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace vhp {

/// Seeded 64-bit Mersenne Twister that counts raw draws.
///
/// The (seed, counter) pair fully determines the state, which is what
/// checkpoints persist. Distributions are drawn without carrying hidden state
/// across calls so the pair stays sufficient.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  /// Restores the state reached after `counter` raw draws from `seed`.
  static Rng restore(std::uint64_t seed, std::uint64_t counter) {
    Rng rng(seed);
    rng.engine_.discard(counter);
    rng.counter_ = counter;
    return rng;
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }

  result_type operator()() {
    ++counter_;
    return engine_();
  }

  /// Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(*this); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(*this); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(*this); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

/// Independent child seed for a named stream (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace vhp
