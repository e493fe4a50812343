#include "mindsets/rng.hpp"

#include <cmath>
#include <numbers>

namespace mindsets {

std::uint64_t SplitMix64::below(std::uint64_t n) noexcept {
  // Largest multiple of n that fits; draws above it are rejected.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = next();
  while (v >= limit) v = next();
  return v % n;
}

double SplitMix64::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  SplitMix64 mix(base ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  mix.next();
  return mix.next();
}

}  // namespace mindsets
