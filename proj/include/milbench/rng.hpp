#pragma once

#include <cstdint>
#include <span>

namespace milbench {

/// Portable seeded generator: the splitmix64 stream.
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// All derived draws (integers, reals) use only integer and IEEE-754
/// arithmetic so sequences are identical on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t state() const noexcept { return state_; }

  std::uint64_t next_u64();

  /// Uniform integer in [lo, hi] (inclusive) by rejection sampling.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform01();

  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller. Uses libm, so not guaranteed bit-exact
  /// across platforms; only used for synthetic data and initialization.
  double normal();

  bool bernoulli(double p) { return uniform01() < p; }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream, e.g. one per worker or per sample.
  SeededRng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// Stateless mix of a seed and a stream index (one splitmix64 round).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace milbench
