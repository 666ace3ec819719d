#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace persuasion {

// Every stochastic operation takes one of these explicitly; there is no global generator.
using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(mix64(master) ^ (stream * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL));
}

// Uniform in [0, 1) with 53 random bits. Platform independent, unlike std distributions.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

// p <= 0 never fires, p >= 1 always fires.
inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace persuasion
