#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedfmc {

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

/// What a derived seed is used for. Distinct purposes never share a stream.
enum class SeedPurpose : std::uint64_t {
  kInit = 1,
  kPartition = 2,
  kSynthetic = 3,
  kTestSplit = 4,
  kSampleDevices = 5,
  kLocalTrain = 6,
  kMergeSample = 7,
  kMergeTrain = 8,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: hash(master, purpose, coordinates...).
/// Every random stream in a run is a pure function of its coordinates, so the
/// order in which devices are processed cannot change any draw.
inline Seed derive_seed(Seed master, SeedPurpose purpose,
                        std::initializer_list<std::uint64_t> coords = {}) {
  std::uint64_t h = mix64(master ^ mix64(static_cast<std::uint64_t>(purpose)));
  for (std::uint64_t c : coords) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace fedfmc
