#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bidshade/auction_record.hpp"

namespace bidshade {

/// Hashing configuration. Field f owns the index range [f * 2^bits, (f+1) * 2^bits).
struct EncoderConfig {
  std::uint32_t bits_per_field = 18;
  std::uint64_t hash_seed = 0x5EED'B1D5'5AAD'E000ULL;

  std::uint64_t field_space() const { return std::uint64_t{1} << bits_per_field; }
  std::uint64_t total_space() const { return field_space() * kNumFields; }

  bool operator==(const EncoderConfig&) const = default;
};

/// Throws std::invalid_argument for out-of-range configs (bits must be in [1, 28]).
void validate(const EncoderConfig& config);

struct FeatureEntry {
  std::uint32_t index = 0;
  double value = 1.0;

  bool operator==(const FeatureEntry&) const = default;
};

/// Hashed one-hot encoding: one entry per field, sorted by index.
struct SparseFeatureVector {
  std::array<FeatureEntry, kNumFields> entries{};

  bool operator==(const SparseFeatureVector&) const = default;
};

/// Bucket of a single field value: f * 2^bits + (hash64(seed, f, value) mod 2^bits).
std::uint32_t feature_index(const EncoderConfig& config, Field field, std::string_view value);

/// Encodes raw field values given in schema order; empty views hash as "__MISSING__".
SparseFeatureVector encode_values(const std::array<std::string_view, kNumFields>& values, const EncoderConfig& config);

/// Pure function of (record, config). Missing values hash as the "__MISSING__" token.
SparseFeatureVector encode(const AuctionRecord& record, const EncoderConfig& config);

}  // namespace bidshade
