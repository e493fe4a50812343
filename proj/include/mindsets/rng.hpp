#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace mindsets {

/// SplitMix64 (Steele, Lea & Flood 2014). Every random draw in the toolkit
/// comes from this generator so ports in other languages can reproduce the
/// exact streams:
///   state += 0x9E3779B97F4A7C15
///   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31)
/// uniform() uses the top 53 bits; normal() is Box-Muller without caching.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection sampled; n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  double normal() noexcept;
  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// Fisher-Yates, iterating from the back.
template <typename T>
void shuffle(std::span<T> values, SplitMix64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace mindsets
