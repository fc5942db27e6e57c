#ifndef SPHCONV_RNG_HPP_
#define SPHCONV_RNG_HPP_

#include <cstdint>
#include <random>

namespace sphconv {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for (seed, stream, counter). Streams separate purposes
/// (init, shuffling, augmentation); counters index epochs or samples, so any draw
/// can be reproduced without replaying earlier ones.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t counter = 0) {
  const std::uint64_t k = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ counter);
  return Rng(k);
}

namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kSynth = 4;
inline constexpr std::uint64_t kSample = 5;
inline constexpr std::uint64_t kBench = 6;
}  // namespace streams

}  // namespace sphconv

#endif  // SPHCONV_RNG_HPP_
