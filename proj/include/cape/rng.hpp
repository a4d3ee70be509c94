#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace cape {

/// Seedable pseudo-random generator: xoshiro256** seeded through splitmix64.
///
/// Streams are bit-reproducible for a given seed. Normal deviates use the
/// Box-Muller transform on two 53-bit uniforms; the second deviate of each
/// pair is cached, so the cache is part of the generator state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent generator for sub-stream `index`, derived from (seed, index)
  /// only. Used for per-sample and per-fold streams so results never depend
  /// on evaluation order.
  static Rng derive(std::uint64_t seed, std::uint64_t index);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1).
  double uniform() noexcept;
  double normal() noexcept;
  /// Uniform integer on [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  std::optional<double> cached_normal_;
};

/// One splitmix64 step; exposed for seed mixing.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace cape
