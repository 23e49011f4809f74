#pragma once

#include <cstdint>
#include <random>

namespace churn {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for (seed, tag, index). Tags keep e.g. the walk streams
// and the negative-sampling streams apart even when indices collide.
inline Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  return Rng(mix_seed(mix_seed(seed ^ mix_seed(tag)) ^ index));
}

// Uniform in [0, 1) with 53 random bits; independent of the standard
// library's distribution implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

// Box-Muller on uniform01 so generated data does not depend on the
// library's normal_distribution algorithm.
double standard_normal(Rng& rng);

}  // namespace churn
