#include "bidshade/auction_record.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <istream>
#include <ostream>

namespace bidshade {

namespace {

constexpr std::array<std::string_view, kNumGoalTypes> kGoalTokens = {"None", "CPC", "CPA", "CPCV", "CPViewI", "eCPM"};

constexpr std::array<std::string_view, kNumFields> kFieldNames = {
    "page_tld",       "subdomain", "publisher_id",   "request_publisher_id", "country_id",
    "day_of_week",    "hour_of_day", "device_type_id", "app_name",           "is_new_user",
    "target_deal_id", "layout_id", "ad_position_id"};

// 13 fields + unshaded_bid + min_bid_to_win + goal_type + timestamp
constexpr std::size_t kLogColumns = 17;
constexpr std::size_t kMaxSkippedLinesReported = 16;

bool valid_categorical(std::string_view s) {
  return !s.empty() && s.find_first_of("\t\r\n") == std::string_view::npos;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

void append_int(std::string& out, std::int64_t v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

std::string_view to_string(GoalType goal) { return kGoalTokens[static_cast<std::size_t>(goal)]; }

std::optional<GoalType> parse_goal_type(std::string_view token) {
  for (std::size_t i = 0; i < kGoalTokens.size(); ++i) {
    if (kGoalTokens[i] == token) return static_cast<GoalType>(i);
  }
  return std::nullopt;
}

std::string_view field_name(Field field) { return kFieldNames[static_cast<std::size_t>(field)]; }

const std::array<std::string_view, kNumFields>& field_names() { return kFieldNames; }

std::string AuctionRecord::field_value(Field field) const {
  switch (field) {
    case Field::PageTld: return page_tld;
    case Field::Subdomain: return subdomain;
    case Field::PublisherId: return publisher_id;
    case Field::RequestPublisherId: return request_publisher_id;
    case Field::CountryId: return country_id;
    case Field::DayOfWeek: return std::to_string(day_of_week);
    case Field::HourOfDay: return std::to_string(hour_of_day);
    case Field::DeviceTypeId: return device_type_id;
    case Field::AppName: return app_name;
    case Field::IsNewUser: return is_new_user ? "1" : "0";
    case Field::TargetDealId: return target_deal_id;
    case Field::LayoutId: return layout_id;
    case Field::AdPositionId: return ad_position_id;
  }
  return std::string(kMissingToken);
}

void validate(const AuctionRecord& r) {
  if (!(r.unshaded_bid > 0.0) || !std::isfinite(r.unshaded_bid)) {
    throw InvalidRecord("unshaded_bid must be finite and > 0");
  }
  if (!(r.min_bid_to_win > 0.0) || !std::isfinite(r.min_bid_to_win)) {
    throw InvalidRecord("min_bid_to_win must be finite and > 0");
  }
  if (r.day_of_week < 0 || r.day_of_week > 6) throw InvalidRecord("day_of_week out of [0,6]");
  if (r.hour_of_day < 0 || r.hour_of_day > 23) throw InvalidRecord("hour_of_day out of [0,23]");
  for (const std::string* s : {&r.page_tld, &r.subdomain, &r.publisher_id, &r.request_publisher_id, &r.country_id,
                               &r.device_type_id, &r.app_name, &r.target_deal_id, &r.layout_id, &r.ad_position_id}) {
    if (!valid_categorical(*s)) throw InvalidRecord("categorical value is empty or contains a tab/newline");
  }
}

double target_ratio(const AuctionRecord& record) {
  if (!(record.unshaded_bid > 0.0)) throw InvalidRecord("unshaded_bid must be > 0");
  return std::min(record.min_bid_to_win / record.unshaded_bid, 1.0);
}

std::vector<AuctionRecord> filter_won(const std::vector<AuctionRecord>& records) {
  std::vector<AuctionRecord> out;
  out.reserve(records.size());
  std::copy_if(records.begin(), records.end(), std::back_inserter(out), won_at_full_bid);
  return out;
}

std::optional<AuctionRecord> parse_log_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

  std::array<std::string_view, kLogColumns> cols;
  std::size_t n = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (n == kLogColumns) return std::nullopt;
    cols[n++] = line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start);
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (n != kLogColumns) return std::nullopt;

  AuctionRecord r;
  auto cat = [](std::string_view s, std::string& dst) {
    if (!valid_categorical(s)) return false;
    dst.assign(s);
    return true;
  };
  if (!cat(cols[0], r.page_tld) || !cat(cols[1], r.subdomain) || !cat(cols[2], r.publisher_id) ||
      !cat(cols[3], r.request_publisher_id) || !cat(cols[4], r.country_id)) {
    return std::nullopt;
  }
  if (!parse_number(cols[5], r.day_of_week) || !parse_number(cols[6], r.hour_of_day)) return std::nullopt;
  if (!cat(cols[7], r.device_type_id) || !cat(cols[8], r.app_name)) return std::nullopt;
  if (cols[9] == "1") {
    r.is_new_user = true;
  } else if (cols[9] == "0") {
    r.is_new_user = false;
  } else {
    return std::nullopt;
  }
  if (!cat(cols[10], r.target_deal_id) || !cat(cols[11], r.layout_id) || !cat(cols[12], r.ad_position_id)) {
    return std::nullopt;
  }
  if (!parse_number(cols[13], r.unshaded_bid) || !parse_number(cols[14], r.min_bid_to_win)) return std::nullopt;
  auto goal = parse_goal_type(cols[15]);
  if (!goal) return std::nullopt;
  r.goal_type = *goal;
  if (!parse_number(cols[16], r.timestamp_ms)) return std::nullopt;

  try {
    validate(r);
  } catch (const InvalidRecord&) {
    return std::nullopt;
  }
  return r;
}

std::string format_log_line(const AuctionRecord& r) {
  validate(r);
  std::string out;
  out.reserve(160);
  auto put = [&out](std::string_view s) {
    out.append(s);
    out.push_back('\t');
  };
  put(r.page_tld);
  put(r.subdomain);
  put(r.publisher_id);
  put(r.request_publisher_id);
  put(r.country_id);
  append_int(out, r.day_of_week);
  out.push_back('\t');
  append_int(out, r.hour_of_day);
  out.push_back('\t');
  put(r.device_type_id);
  put(r.app_name);
  put(r.is_new_user ? "1" : "0");
  put(r.target_deal_id);
  put(r.layout_id);
  put(r.ad_position_id);
  append_double(out, r.unshaded_bid);
  out.push_back('\t');
  append_double(out, r.min_bid_to_win);
  out.push_back('\t');
  put(to_string(r.goal_type));
  append_int(out, r.timestamp_ms);
  return out;
}

ParseResult parse_log(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    if (auto rec = parse_log_line(line)) {
      result.records.push_back(std::move(*rec));
    } else {
      ++result.skipped;
      if (result.skipped_lines.size() < kMaxSkippedLinesReported) result.skipped_lines.push_back(line_no);
    }
  }
  if (in.bad()) throw IngestionError("read error while parsing auction log");
  return result;
}

ParseResult parse_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open auction log: " + path);
  return parse_log(in);
}

void write_log(std::ostream& out, const std::vector<AuctionRecord>& records) {
  out << kLogHeader << '\n';
  for (const auto& r : records) out << format_log_line(r) << '\n';
}

void write_log_file(const std::string& path, const std::vector<AuctionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open for writing: " + path);
  write_log(out, records);
  if (!out) throw IngestionError("write failed: " + path);
}

TrainTestSplit split_by_day(const std::vector<AuctionRecord>& records, int train_days, int test_days) {
  TrainTestSplit split;
  if (records.empty()) return split;
  std::int64_t first_day = day_index(records.front().timestamp_ms);
  for (const auto& r : records) first_day = std::min(first_day, day_index(r.timestamp_ms));
  for (const auto& r : records) {
    const std::int64_t offset = day_index(r.timestamp_ms) - first_day;
    if (offset < train_days) {
      split.train.push_back(r);
    } else if (offset < static_cast<std::int64_t>(train_days) + test_days) {
      split.test.push_back(r);
    }
  }
  return split;
}

}  // namespace bidshade
