#include "bidshade/feature_encoder.hpp"

#include <charconv>
#include <stdexcept>

#include "bidshade/hash.hpp"

namespace bidshade {

void validate(const EncoderConfig& config) {
  if (config.bits_per_field < 1 || config.bits_per_field > 28) {
    throw std::invalid_argument("encoder bits_per_field must be in [1, 28]");
  }
}

std::uint32_t feature_index(const EncoderConfig& config, Field field, std::string_view value) {
  const auto f = static_cast<std::uint32_t>(field);
  const std::uint64_t mask = config.field_space() - 1;
  const std::uint64_t bucket = hash64(config.hash_seed, f, value) & mask;
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(f) << config.bits_per_field) + bucket);
}

SparseFeatureVector encode_values(const std::array<std::string_view, kNumFields>& values, const EncoderConfig& config) {
  SparseFeatureVector x;
  // Field ranges are disjoint and laid out in field order, so entries come out sorted.
  for (std::size_t f = 0; f < kNumFields; ++f) {
    std::string_view v = values[f].empty() ? kMissingToken : values[f];
    x.entries[f] = FeatureEntry{feature_index(config, static_cast<Field>(f), v), 1.0};
  }
  return x;
}

SparseFeatureVector encode(const AuctionRecord& r, const EncoderConfig& config) {
  char dow[4];
  char hour[4];
  const auto dow_end = std::to_chars(dow, dow + sizeof(dow), r.day_of_week).ptr;
  const auto hour_end = std::to_chars(hour, hour + sizeof(hour), r.hour_of_day).ptr;

  const std::array<std::string_view, kNumFields> values = {
      r.page_tld,
      r.subdomain,
      r.publisher_id,
      r.request_publisher_id,
      r.country_id,
      std::string_view(dow, static_cast<std::size_t>(dow_end - dow)),
      std::string_view(hour, static_cast<std::size_t>(hour_end - hour)),
      r.device_type_id,
      r.app_name,
      r.is_new_user ? std::string_view("1") : std::string_view("0"),
      r.target_deal_id,
      r.layout_id,
      r.ad_position_id,
  };
  return encode_values(values, config);
}

}  // namespace bidshade
