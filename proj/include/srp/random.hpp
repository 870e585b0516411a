#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace srp {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent per-chain / per-step
// streams from a single logged master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix_seed(master ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

// Uniform in [0, 1) with 53 random bits. Portable across standard libraries,
// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Inverse-CDF draw from a discrete distribution. Weights need not be
// normalized but must be nonnegative with a positive sum.
std::size_t sample_index(std::span<const double> weights, Rng& rng);

}  // namespace srp
