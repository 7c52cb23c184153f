#pragma once

#include <cstdint>

#include "stochpc/numerics.hpp"

/// Counter-based random number generation.  Every draw is a pure function
/// of (seed, stream, step, draw), so any substream can be regenerated in
/// isolation and twin experiments share noise exactly by sharing a seed.
namespace stochpc {

/// Bijective 64-bit finalizer (SplitMix64-style avalanche).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

/// Stateless splittable generator keyed by (seed, stream, step, draw).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Raw 64 mixed bits for one counter position.
  std::uint64_t bits(std::uint64_t stream, std::uint64_t step,
                     std::uint64_t draw) const noexcept {
    constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = mix64(seed_ + golden);
    z = mix64(z ^ (stream + golden));
    z = mix64(z ^ (step + golden));
    z = mix64(z ^ (draw + golden));
    return z;
  }

  /// Uniform draw in the open interval (0,1): 53 mantissa bits centered
  /// on half-steps, so 0 and 1 are unreachable.
  double uniform(std::uint64_t stream, std::uint64_t step,
                 std::uint64_t draw) const noexcept {
    const std::uint64_t u = bits(stream, step, draw) >> 11;
    return (static_cast<double>(u) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal draw via the inverse CDF of a uniform draw.
  double normal(std::uint64_t stream, std::uint64_t step,
                std::uint64_t draw) const {
    return icdfn(uniform(stream, step, draw));
  }

 private:
  std::uint64_t seed_;
};

/// Independent child seed for sub-experiment `index` of a base seed
/// (stream-indexed fan-out for sweeps).
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::uint64_t index) noexcept {
  constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;
  return mix64(mix64(seed + golden) ^ (index + golden));
}

/// Stream ids used by the library (one namespace to avoid collisions).
namespace streams {
inline constexpr std::uint64_t process_noise = 0;
inline constexpr std::uint64_t measurement_noise = 1;
inline constexpr std::uint64_t initial_state = 2;
inline constexpr std::uint64_t excitation_input = 3;
inline constexpr std::uint64_t system_generation = 4;
}  // namespace streams

}  // namespace stochpc
