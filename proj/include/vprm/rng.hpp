#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace vprm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Independent generator for trial `index` of sub-stream `stream` under `seed`.
/// Depends only on its arguments, never on scheduling.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t state = seed;
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < words.size(); i += 2) {
    std::uint64_t v = splitmix64(state) ^ (stream * 0xD1B54A32D192ED03ULL) ^
                      (index * 0xA0761D6478BD642FULL + i);
    v = splitmix64(v);
    words[i] = static_cast<std::uint32_t>(v);
    words[i + 1] = static_cast<std::uint32_t>(v >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t index) { return make_stream(seed, 0, index); }

}  // namespace vprm
