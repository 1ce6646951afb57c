#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bidshade/auction_record.hpp"

namespace bidshade {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One log-normal component of a minimum-bid-to-win landscape.
/// A sample is median * exp(log_sigma * z + shifts); log_sigma == 0 is a point mass.
struct MixtureComponent {
  double weight = 1.0;
  double median = 1.0;
  double log_sigma = 0.0;
};

/// Latent inventory segment: a landscape mixture plus the distribution of
/// unshaded bids relative to the landscape median.
struct LatentSegment {
  std::vector<MixtureComponent> components;
  /// unshaded_bid = landscape_median * exp(markup_log_mean + markup_log_sigma * z)
  double markup_log_mean = 0.5;
  double markup_log_sigma = 0.0;
};

/// Latent segment of a record = (bucket(first) + bucket(second)) mod segment_count,
/// with bucket(f) a seeded hash of the field value. The segment is a function of the
/// conjunction of both fields and carries no signal from either field alone.
struct InteractionRule {
  Field first = Field::CountryId;
  Field second = Field::AdPositionId;
};

/// Per-value log-space shift of the landscape: each value of `field` gets a fixed
/// shift drawn from N(0, log_sigma^2). Additive in log price, so linear models can learn it.
struct AdditiveEffect {
  Field field = Field::PublisherId;
  double log_sigma = 0.0;
};

struct SyntheticLandscapeSpec {
  std::vector<LatentSegment> segments;
  std::optional<InteractionRule> interaction;
  std::vector<AdditiveEffect> additive_effects;

  /// Vocabulary size per categorical field, indexed by Field. Entries for
  /// day_of_week, hour_of_day and is_new_user are ignored.
  std::array<int, kNumFields> cardinality{};
  double zipf_exponent = 1.0;
  double missing_rate = 0.0;
  double new_user_rate = 0.3;

  /// Indexed by GoalType.
  std::array<double, kNumGoalTypes> goal_prevalence{};

  std::size_t record_count = 0;
  std::uint64_t seed = 1;
  std::int64_t start_timestamp_ms = 1'600'041'600'000;  // 2020-09-14T00:00:00Z, a Monday
  int days = 8;
};

/// Goal-type prevalences used when a spec does not override them.
std::array<double, kNumGoalTypes> default_goal_prevalence();

/// The interaction-driven landscape used by the offline experiments.
SyntheticLandscapeSpec default_landscape_spec(std::size_t record_count, std::uint64_t seed);

/// Throws ConfigError if weights, prevalences or scalar settings are invalid.
void validate(const SyntheticLandscapeSpec& spec);

/// Median of a segment's landscape (before additive shifts).
double landscape_median(const LatentSegment& segment);

/// Latent segment index a record falls into under `spec`.
std::size_t latent_segment_of(const SyntheticLandscapeSpec& spec, const AuctionRecord& record);

/// Deterministic given spec.seed. Records are in increasing timestamp order.
std::vector<AuctionRecord> generate_synthetic(const SyntheticLandscapeSpec& spec);

/// JSON configuration file ("format": "bidshade-synthetic", "version": 1). See docs/formats.md.
SyntheticLandscapeSpec load_landscape_spec(const std::string& path);
SyntheticLandscapeSpec parse_landscape_spec(const std::string& json_text);
std::string dump_landscape_spec(const SyntheticLandscapeSpec& spec);

}  // namespace bidshade
