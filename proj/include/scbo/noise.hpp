// Counter-based Gaussian noise: every draw is a pure function of
// (seed, step, particle, coordinate).
#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace scbo {

/// Philox4x32-10 block cipher (Salmon et al. counter-based RNG).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                         std::array<std::uint32_t, 2> key);

/// Standard normal quantile function (Wichura AS241, ~1e-16 relative).
double normal_quantile(double p);

class NoiseSource {
 public:
  /// Step index reserved for initialization draws.
  static constexpr std::uint64_t kInitStream = ~std::uint64_t{0};

  explicit NoiseSource(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Uniform on the open interval (0,1).
  double uniform(std::uint64_t step, std::uint64_t particle, std::uint32_t coord) const;
  /// Standard normal obtained by inverting the CDF of uniform(...).
  double normal(std::uint64_t step, std::uint64_t particle, std::uint32_t coord) const;
  /// out[j] = normal(step, particle, j).
  void fill_normal(std::uint64_t step, std::uint64_t particle, std::span<double> out) const;

 private:
  std::uint64_t seed_;
};

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

}  // namespace scbo
