#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bidshade {

/// Token used for absent categorical values, both in logs and in the encoder.
inline constexpr std::string_view kMissingToken = "__MISSING__";

/// Number of publisher/context fields that feed the feature encoder.
inline constexpr std::size_t kNumFields = 13;

enum class GoalType : std::uint8_t { None = 0, CPC, CPA, CPCV, CPViewI, eCPM };

inline constexpr std::size_t kNumGoalTypes = 6;

inline constexpr std::array<GoalType, kNumGoalTypes> kAllGoalTypes = {
    GoalType::None, GoalType::CPC, GoalType::CPA, GoalType::CPCV, GoalType::CPViewI, GoalType::eCPM};

std::string_view to_string(GoalType goal);
std::optional<GoalType> parse_goal_type(std::string_view token);

/// Field identifiers in the fixed schema order used by the log format and the encoder.
enum class Field : std::uint8_t {
  PageTld = 0,
  Subdomain,
  PublisherId,
  RequestPublisherId,
  CountryId,
  DayOfWeek,
  HourOfDay,
  DeviceTypeId,
  AppName,
  IsNewUser,
  TargetDealId,
  LayoutId,
  AdPositionId,
};

std::string_view field_name(Field field);
const std::array<std::string_view, kNumFields>& field_names();

class InvalidRecord : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One logged ad opportunity. Prices are decimal dollars per mille.
struct AuctionRecord {
  std::string page_tld{kMissingToken};
  std::string subdomain{kMissingToken};
  std::string publisher_id{kMissingToken};
  std::string request_publisher_id{kMissingToken};
  std::string country_id{kMissingToken};
  int day_of_week = 0;
  int hour_of_day = 0;
  std::string device_type_id{kMissingToken};
  std::string app_name{kMissingToken};
  bool is_new_user = false;
  std::string target_deal_id{kMissingToken};
  std::string layout_id{kMissingToken};
  std::string ad_position_id{kMissingToken};

  double unshaded_bid = 1.0;
  double min_bid_to_win = 1.0;
  GoalType goal_type = GoalType::None;
  std::int64_t timestamp_ms = 0;

  /// Canonical string value of a field, as hashed by the encoder.
  std::string field_value(Field field) const;

  bool operator==(const AuctionRecord&) const = default;
};

/// Throws InvalidRecord when a record violates the schema invariants.
void validate(const AuctionRecord& record);

/// Optimal shading ratio min_bid_to_win / unshaded_bid, clamped to (0, 1].
double target_ratio(const AuctionRecord& record);

/// True when bidding the full unshaded bid would win (ties win).
inline bool won_at_full_bid(const AuctionRecord& r) { return r.unshaded_bid >= r.min_bid_to_win; }

/// Keeps won-at-full-bid records only, preserving order.
std::vector<AuctionRecord> filter_won(const std::vector<AuctionRecord>& records);

struct ParseResult {
  std::vector<AuctionRecord> records;
  std::size_t skipped = 0;
  /// 1-based line numbers of the first few skipped lines, for diagnostics.
  std::vector<std::size_t> skipped_lines;
};

/// Parses one tab-separated log line. Returns nullopt for malformed lines.
std::optional<AuctionRecord> parse_log_line(std::string_view line);

/// Formats a record as a single log line (no trailing newline).
std::string format_log_line(const AuctionRecord& record);

inline constexpr std::string_view kLogHeader = "# bidshade-log v1";

/// Reads a line-delimited log. Lines starting with '#' and blank lines are ignored;
/// malformed lines are skipped and counted.
ParseResult parse_log(std::istream& in);
ParseResult parse_log_file(const std::string& path);

void write_log(std::ostream& out, const std::vector<AuctionRecord>& records);
void write_log_file(const std::string& path, const std::vector<AuctionRecord>& records);

/// UTC day index since the epoch.
inline std::int64_t day_index(std::int64_t timestamp_ms) {
  constexpr std::int64_t kMsPerDay = 86'400'000;
  return timestamp_ms >= 0 ? timestamp_ms / kMsPerDay : -((-timestamp_ms + kMsPerDay - 1) / kMsPerDay);
}

struct TrainTestSplit {
  std::vector<AuctionRecord> train;
  std::vector<AuctionRecord> test;
};

/// Splits by calendar day: the first `train_days` distinct UTC days (counted from the
/// earliest record) go to train, the following `test_days` to test; later days are dropped.
TrainTestSplit split_by_day(const std::vector<AuctionRecord>& records, int train_days, int test_days);

}  // namespace bidshade
