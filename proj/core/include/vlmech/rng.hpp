#pragma once

#include <cstddef>
#include <cstdint>

namespace vlmech {

/// Seeded, splittable pseudo-random generator.
///
/// The stream is SplitMix64: the state starts at `seed`, each draw adds the
/// golden-ratio increment 0x9E3779B97F4A7C15 and returns the SplitMix64
/// finalizer of the new state. `split(k)` derives an independent child whose
/// seed is `mix(seed_of_parent ^ mix(k + 0x9E3779B97F4A7C15))`, where `mix`
/// is the same finalizer and `seed_of_parent` is the seed the parent was
/// constructed with (drawing from the parent does not change its children).
///
/// Uniform doubles use the top 53 bits; normals use Box-Muller with both
/// uniforms drawn fresh per call. This mapping is part of the public
/// contract: changing it changes every seeded test value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal.
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  Rng split(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace vlmech
