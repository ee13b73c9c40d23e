#pragma once

// Seed expansion. Every random quantity in the library is drawn from an
// engine obtained by `stream(seed, tag, index)`: the 64-bit base seed, a
// purpose tag and a counter are mixed with three rounds of SplitMix64 and
// the result seeds a std::mt19937_64. Distinct (tag, index) pairs give
// statistically independent streams from one user-facing seed.

#include <cstdint>
#include <random>

namespace pacgen::rng {

using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Purpose tags for derived streams.
enum class Tag : std::uint64_t {
  kData = 1,
  kTestData = 2,
  kGeneratorInit = 3,
  kCriticInit = 4,
  kPriorTraining = 5,
  kPosteriorTraining = 6,
  kCertification = 7,
  kCheck = 8,
  kUser = 9,
};

constexpr std::uint64_t derive(std::uint64_t seed, Tag tag, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tag))) + index);
}

inline Engine stream(std::uint64_t seed, Tag tag, std::uint64_t index = 0) {
  return Engine(derive(seed, tag, index));
}

}  // namespace pacgen::rng
