#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qlink {

// SplitMix64 step. All sub-seeds in the project are derived through this
// mixer so that a single master seed reproduces every stream bit-for-bit
// on any platform.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Splitting rule: seed of stream k under master m is
// splitmix64(m XOR mix(k)) advanced once. Stream indices are free-form
// (cell index, detector index, trial index...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master ^ (stream * 0xd1b54a32d192ed03ull + 0x2545f4914f6cdd1dull);
  return splitmix64(s);
}

// Uniform double in [0, 1) with 53 bits; avoids the
// implementation-defined std::uniform_real_distribution.
inline double uniform_double(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Uniform double strictly inside (0, 1); safe as a log() argument.
inline double uniform_open(std::mt19937_64& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

// Box-Muller standard normal. Consumes exactly two generator words per
// call, so sequences are reproducible across compilers.
inline double standard_normal(std::mt19937_64& gen) {
  const double u1 = uniform_open(gen);
  const double u2 = uniform_double(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace qlink
