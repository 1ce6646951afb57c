#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "bidshade/random.hpp"

namespace bidshade {

inline constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

/// Field-scoped 64-bit string hash shared by training and serving.
///
///   h0 = splitmix64(seed ^ splitmix64(field + 1))
///   h  = FNV-1a over the bytes of `value`, starting from h0
///   result = splitmix64(h ^ len(value))
constexpr std::uint64_t hash64(std::uint64_t seed, std::uint32_t field, std::string_view value) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(field) + 1));
  for (char c : value) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return splitmix64(h ^ static_cast<std::uint64_t>(value.size()));
}

/// Plain 64-bit FNV-1a, used as the model file checksum.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = kFnvOffset) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace bidshade
