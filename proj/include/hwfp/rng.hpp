#pragma once

#include <cstdint>
#include <random>

namespace hwfp {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream for (seed, stream, index); used to partition seeds
// across trials so serial and parallel runs draw identical numbers.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace hwfp
