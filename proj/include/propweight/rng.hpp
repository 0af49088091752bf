#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace propweight {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t kDefaultSeed = 20220915;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Substream seed for (seed, stream, substream). Streams are independent of the
// order in which they are requested, so replicate i always sees the same draws
// no matter how many threads run or which replicates ran before it.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t substream = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ (stream + 0x632be59bd9b4e019ULL)) ^
                    (substream * 0x8cb92ba72f3d8dd7ULL + 1));
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
  return Rng(derive_seed(seed, stream, substream));
}

// Hand-rolled draws: the std distributions are implementation-defined and
// would make reports differ across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1], safe for log().
inline double uniform_open0(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  // Lemire's nearly-divisionless bounded draw.
  const std::uint64_t range = n;
  unsigned __int128 m = static_cast<unsigned __int128>(rng()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(rng()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace propweight
