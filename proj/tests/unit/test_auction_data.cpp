#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "bidshade/auction_record.hpp"
#include "bidshade/synthetic.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace bidshade;

namespace {

SyntheticLandscapeSpec point_mass_spec(double median, std::size_t n) {
  SyntheticLandscapeSpec s = default_landscape_spec(n, 3);
  s.segments = {LatentSegment{{{1.0, median, 0.0}}, 0.5, 0.0}};
  s.interaction.reset();
  s.additive_effects.clear();
  return s;
}

}  // namespace

TEST_CASE("target_ratio") {
  AuctionRecord r;
  r.unshaded_bid = 5.0;
  r.min_bid_to_win = 2.5;
  CHECK(target_ratio(r) == 0.5);
  r.unshaded_bid = 4.0;
  r.min_bid_to_win = 4.0;
  CHECK(target_ratio(r) == 1.0);
  r.unshaded_bid = 2.0;
  r.min_bid_to_win = 3.0;
  CHECK(target_ratio(r) == 1.0);
  r.unshaded_bid = 0.0;
  CHECK_THROWS_AS(target_ratio(r), InvalidRecord);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 10000; ++i) {
    const auto rec = oracle::random_record(rng);
    const double y = target_ratio(rec);
    CHECK((y > 0.0 && y <= 1.0));
  }
}

TEST_CASE("parse_log basics") {
  std::istringstream empty("");
  auto res = parse_log(empty);
  CHECK(res.records.empty());
  CHECK(res.skipped == 0);

  AuctionRecord r;
  r.unshaded_bid = 5.0;
  r.min_bid_to_win = 2.5;
  std::istringstream one(format_log_line(r) + "\n");
  res = parse_log(one);
  REQUIRE(res.records.size() == 1);
  CHECK(res.records[0].unshaded_bid == 5.0);
  CHECK(res.records[0].min_bid_to_win == 2.5);
  CHECK(res.records[0] == r);
}

TEST_CASE("parse_log skips malformed lines and keeps going") {
  AuctionRecord good;
  good.page_tld = "a.com";
  const std::string line = format_log_line(good);
  std::string bad_bid = line;
  bad_bid.replace(bad_bid.find("\t1\t1\tNone"), 9, "\t-1\t1\tNone");
  std::ostringstream text;
  text << kLogHeader << "\n" << line << "\n"
       << "garbage\n"
       << bad_bid << "\n"
       << "\n"
       << line << "\tEXTRA\n"
       << line << "\r\n";
  std::istringstream in(text.str());
  const auto res = parse_log(in);
  CHECK(res.records.size() == 2);
  CHECK(res.skipped == 3);
  CHECK(res.skipped_lines == std::vector<std::size_t>{3, 4, 6});
}

TEST_CASE("parse_log rejects out-of-range context fields") {
  AuctionRecord r;
  std::string line = format_log_line(r);
  // day_of_week is column 6
  auto cols_replace = [&](std::size_t col, const std::string& v) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) cols.push_back(c);
    cols[col] = v;
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "\t" : "") + cols[i];
    return out;
  };
  CHECK_FALSE(parse_log_line(cols_replace(5, "7")));
  CHECK_FALSE(parse_log_line(cols_replace(6, "24")));
  CHECK_FALSE(parse_log_line(cols_replace(9, "yes")));
  CHECK_FALSE(parse_log_line(cols_replace(15, "CPM")));
  CHECK_FALSE(parse_log_line(cols_replace(0, "")));
  CHECK(parse_log_line(cols_replace(15, "CPViewI")));
}

TEST_CASE("unreadable log is an ingestion error") {
  CHECK_THROWS_AS(parse_log_file("/nonexistent/dir/log.tsv"), IngestionError);
}

TEST_CASE("write/parse round trip is field-exact and byte-stable") {
  const auto records = generate_synthetic(default_landscape_spec(1000, 5));
  std::ostringstream a;
  write_log(a, records);
  std::istringstream in(a.str());
  const auto parsed = parse_log(in);
  REQUIRE(parsed.records.size() == 1000);
  CHECK(parsed.skipped == 0);
  CHECK(parsed.records == records);
  std::ostringstream b;
  write_log(b, parsed.records);
  CHECK(a.str() == b.str());

  std::mt19937_64 rng(3);
  std::vector<AuctionRecord> random;
  for (int i = 0; i < 500; ++i) random.push_back(oracle::random_record(rng));
  std::ostringstream c;
  write_log(c, random);
  std::istringstream cin_(c.str());
  CHECK(parse_log(cin_).records == random);
}

TEST_CASE("file round trip") {
  oracle::TempDir dir("auction");
  const auto records = generate_synthetic(default_landscape_spec(200, 9));
  write_log_file(dir.file("log.tsv"), records);
  CHECK(parse_log_file(dir.file("log.tsv")).records == records);
}

TEST_CASE("synthetic point mass") {
  const auto records = generate_synthetic(point_mass_spec(2.0, 2000));
  REQUIRE(records.size() == 2000);
  for (const auto& r : records) CHECK(r.min_bid_to_win == 2.0);
}

TEST_CASE("synthetic determinism") {
  const auto spec = default_landscape_spec(5000, 77);
  CHECK(generate_synthetic(spec) == generate_synthetic(spec));
  auto other = spec;
  other.seed = 78;
  CHECK(generate_synthetic(spec) != generate_synthetic(other));
  const auto none = default_landscape_spec(0, 1);
  CHECK(generate_synthetic(none).empty());
}

TEST_CASE("synthetic bimodal components split evenly") {
  auto spec = point_mass_spec(1.0, 100000);
  spec.segments = {LatentSegment{{{0.5, 1.0, 0.1}, {0.5, 8.0, 0.1}}, 0.5, 0.0}};
  const auto records = generate_synthetic(spec);
  const double split = std::sqrt(8.0);
  std::size_t low = 0;
  std::size_t mid = 0;
  for (const auto& r : records) {
    if (r.min_bid_to_win < split) ++low;
    if (r.min_bid_to_win > 1.5 && r.min_bid_to_win < 5.0) ++mid;
  }
  const double frac = static_cast<double>(low) / 1e5;
  CHECK(frac == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(frac - 0.5) < 0.01);
  // the valley between the modes is nearly empty
  CHECK(mid < 500);
}

TEST_CASE("synthetic goal prevalences within half a point") {
  const auto spec = default_landscape_spec(100000, 21);
  const auto records = generate_synthetic(spec);
  std::array<std::size_t, kNumGoalTypes> counts{};
  for (const auto& r : records) ++counts[static_cast<std::size_t>(r.goal_type)];
  for (std::size_t g = 0; g < kNumGoalTypes; ++g) {
    CHECK(std::abs(static_cast<double>(counts[g]) / 1e5 - spec.goal_prevalence[g]) < 0.005);
  }
}

TEST_CASE("synthetic records are valid and ordered") {
  const auto records = generate_synthetic(default_landscape_spec(20000, 4));
  std::size_t won = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK_NOTHROW(validate(records[i]));
    if (i) CHECK(records[i].timestamp_ms >= records[i - 1].timestamp_ms);
    won += won_at_full_bid(records[i]);
  }
  CHECK(static_cast<double>(won) / 20000.0 > 0.8);
}

TEST_CASE("latent segment depends on the interaction, not either field alone") {
  const auto spec = default_landscape_spec(1, 1);
  AuctionRecord r;
  std::set<std::size_t> seen_for_country;
  r.country_id = "c1";
  for (int p = 0; p < 12; ++p) {
    r.ad_position_id = "pos" + std::to_string(p);
    seen_for_country.insert(latent_segment_of(spec, r));
  }
  CHECK(seen_for_country.size() > 1);
  std::set<std::size_t> seen_for_pos;
  r.ad_position_id = "pos1";
  for (int c = 0; c < 24; ++c) {
    r.country_id = "c" + std::to_string(c);
    seen_for_pos.insert(latent_segment_of(spec, r));
  }
  CHECK(seen_for_pos.size() > 1);
}

TEST_CASE("spec validation") {
  auto spec = default_landscape_spec(10, 1);
  spec.segments[0].components[0].weight += 1e-6;
  CHECK_THROWS_AS(validate(spec), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
  spec = default_landscape_spec(10, 1);
  spec.goal_prevalence[0] += 1e-8;
  CHECK_THROWS_AS(validate(spec), ConfigError);
  spec = default_landscape_spec(10, 1);
  spec.goal_prevalence[0] += 1e-10;
  CHECK_NOTHROW(validate(spec));
}

TEST_CASE("spec JSON round trip") {
  const auto spec = default_landscape_spec(1234, 99);
  const auto back = parse_landscape_spec(dump_landscape_spec(spec));
  CHECK(generate_synthetic(back) == generate_synthetic(spec));
  CHECK_THROWS_AS(parse_landscape_spec("{"), ConfigError);
  CHECK_THROWS_AS(parse_landscape_spec(R"({"format":"other","version":1})"), ConfigError);
  CHECK_THROWS_AS(parse_landscape_spec(R"({"format":"bidshade-synthetic","version":2})"), ConfigError);
  const auto minimal =
      parse_landscape_spec(R"({"format":"bidshade-synthetic","version":1,"records":10,"seed":4,
        "segments":[{"components":[{"median":2.0}],"markup_log_mean":0.5}],"interaction":null,
        "additive_effects":[]})");
  for (const auto& r : generate_synthetic(minimal)) CHECK(r.min_bid_to_win == 2.0);
}

TEST_CASE("split_by_day") {
  const auto records = generate_synthetic(default_landscape_spec(8000, 2));
  const auto split = split_by_day(records, 7, 1);
  CHECK(split.train.size() + split.test.size() == records.size());
  CHECK(split.test.size() == 1000);
  CHECK(day_index(split.train.back().timestamp_ms) < day_index(split.test.front().timestamp_ms));
  CHECK(day_index(-1) == -1);
}
