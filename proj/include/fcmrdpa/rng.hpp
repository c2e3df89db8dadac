#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fcmrdpa {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates structured seed inputs.
inline std::uint64_t mix_bits(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value) {
  return mix_bits(seed ^ mix_bits(value));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag bytes, then folded into the running seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x00000100000001b3ULL;
  }
  return mix_seed(seed, h);
}

}  // namespace fcmrdpa
