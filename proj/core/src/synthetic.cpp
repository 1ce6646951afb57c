#include "bidshade/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bidshade/hash.hpp"
#include "bidshade/random.hpp"
#include "json.hpp"

namespace bidshade {

namespace {

using nlohmann::json;

constexpr std::int64_t kMsPerDay = 86'400'000;
constexpr std::int64_t kMsPerHour = 3'600'000;
constexpr double kSumTolerance = 1e-9;

// Salts keep the different hash-derived quantities independent of each other.
constexpr std::uint64_t kBucketSalt = 0xA5A5'0001ULL;
constexpr std::uint64_t kShiftSalt = 0xA5A5'0002ULL;

bool is_context_numeric(Field f) {
  return f == Field::DayOfWeek || f == Field::HourOfDay || f == Field::IsNewUser;
}

std::string value_token(Field f, std::size_t k) {
  switch (f) {
    case Field::PageTld: return "site" + std::to_string(k) + ".com";
    case Field::Subdomain: return "sub" + std::to_string(k);
    case Field::PublisherId: return "pub" + std::to_string(k);
    case Field::RequestPublisherId: return "exch" + std::to_string(k);
    case Field::CountryId: return "c" + std::to_string(k);
    case Field::DeviceTypeId: return "dev" + std::to_string(k);
    case Field::AppName: return "app" + std::to_string(k);
    case Field::TargetDealId: return "deal" + std::to_string(k);
    case Field::LayoutId: return "lay" + std::to_string(k);
    case Field::AdPositionId: return "pos" + std::to_string(k);
    default: return std::to_string(k);
  }
}

std::string* categorical_slot(AuctionRecord& r, Field f) {
  switch (f) {
    case Field::PageTld: return &r.page_tld;
    case Field::Subdomain: return &r.subdomain;
    case Field::PublisherId: return &r.publisher_id;
    case Field::RequestPublisherId: return &r.request_publisher_id;
    case Field::CountryId: return &r.country_id;
    case Field::DeviceTypeId: return &r.device_type_id;
    case Field::AppName: return &r.app_name;
    case Field::TargetDealId: return &r.target_deal_id;
    case Field::LayoutId: return &r.layout_id;
    case Field::AdPositionId: return &r.ad_position_id;
    default: return nullptr;
  }
}

double hashed_uniform(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Standard normal derived deterministically from a field value.
double hashed_normal(std::uint64_t seed, Field f, std::string_view value) {
  const std::uint64_t h1 = hash64(seed ^ kShiftSalt, static_cast<std::uint32_t>(f), value);
  const std::uint64_t h2 = splitmix64(h1);
  const double u1 = 1.0 - hashed_uniform(h1);
  const double u2 = hashed_uniform(h2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> zipf_cdf(int cardinality, double exponent) {
  std::vector<double> cdf(static_cast<std::size_t>(cardinality));
  double acc = 0.0;
  for (int k = 0; k < cardinality; ++k) {
    acc += 1.0 / std::pow(static_cast<double>(k + 1), exponent);
    cdf[static_cast<std::size_t>(k)] = acc;
  }
  for (double& c : cdf) c /= acc;
  return cdf;
}

std::size_t sample_cdf(const std::vector<double>& cdf, double u) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::optional<Field> field_from_name(std::string_view name) {
  const auto& names = field_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<Field>(i);
  }
  return std::nullopt;
}

Field require_field(const json& j) {
  auto f = field_from_name(j.get<std::string>());
  if (!f) throw ConfigError("unknown field name: " + j.get<std::string>());
  return *f;
}

}  // namespace

std::array<double, kNumGoalTypes> default_goal_prevalence() {
  std::array<double, kNumGoalTypes> p{};
  p[static_cast<std::size_t>(GoalType::CPA)] = 0.3895;
  p[static_cast<std::size_t>(GoalType::CPC)] = 0.1212;
  p[static_cast<std::size_t>(GoalType::eCPM)] = 0.0360;
  p[static_cast<std::size_t>(GoalType::CPViewI)] = 0.0078;
  p[static_cast<std::size_t>(GoalType::CPCV)] = 0.0057;
  // None is listed at 40.5%; the listed shares leave 3.48% unassigned, which goes to None.
  double rest = 0.0;
  for (double v : p) rest += v;
  p[static_cast<std::size_t>(GoalType::None)] = 1.0 - rest;
  return p;
}

SyntheticLandscapeSpec default_landscape_spec(std::size_t record_count, std::uint64_t seed) {
  SyntheticLandscapeSpec s;
  s.record_count = record_count;
  s.seed = seed;
  s.zipf_exponent = 1.05;
  s.missing_rate = 0.02;
  s.new_user_rate = 0.3;
  s.goal_prevalence = default_goal_prevalence();

  auto set_card = [&s](Field f, int n) { s.cardinality[static_cast<std::size_t>(f)] = n; };
  set_card(Field::PageTld, 400);
  set_card(Field::Subdomain, 600);
  set_card(Field::PublisherId, 150);
  set_card(Field::RequestPublisherId, 12);
  set_card(Field::CountryId, 24);
  set_card(Field::DeviceTypeId, 5);
  set_card(Field::AppName, 200);
  set_card(Field::TargetDealId, 30);
  set_card(Field::LayoutId, 8);
  set_card(Field::AdPositionId, 12);

  s.segments = {
      LatentSegment{{{0.6, 1.0, 0.12}, {0.4, 1.6, 0.12}}, std::log(1.4), 0.1},
      LatentSegment{{{1.0, 2.5, 0.15}}, std::log(2.5), 0.1},
      LatentSegment{{{0.5, 0.5, 0.1}, {0.5, 0.9, 0.1}}, std::log(1.7), 0.1},
      LatentSegment{{{0.85, 4.0, 0.12}, {0.15, 7.0, 0.2}}, std::log(4.0), 0.1},
  };
  s.interaction = InteractionRule{Field::CountryId, Field::AdPositionId};
  s.additive_effects = {{Field::PublisherId, 0.2}, {Field::HourOfDay, 0.1}};
  return s;
}

void validate(const SyntheticLandscapeSpec& spec) {
  if (spec.segments.empty()) throw ConfigError("synthetic spec needs at least one segment");
  for (std::size_t s = 0; s < spec.segments.size(); ++s) {
    const auto& seg = spec.segments[s];
    if (seg.components.empty()) throw ConfigError("segment " + std::to_string(s) + " has no components");
    double wsum = 0.0;
    for (const auto& c : seg.components) {
      if (!(c.weight >= 0.0) || !(c.median > 0.0) || !(c.log_sigma >= 0.0) || !std::isfinite(c.median) ||
          !std::isfinite(c.log_sigma)) {
        throw ConfigError("segment " + std::to_string(s) + " has an invalid component");
      }
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > kSumTolerance) {
      throw ConfigError("segment " + std::to_string(s) + " mixture weights do not sum to 1");
    }
    if (!std::isfinite(seg.markup_log_mean) || !(seg.markup_log_sigma >= 0.0)) {
      throw ConfigError("segment " + std::to_string(s) + " has an invalid bid markup");
    }
  }
  const double psum = std::accumulate(spec.goal_prevalence.begin(), spec.goal_prevalence.end(), 0.0);
  if (std::abs(psum - 1.0) > kSumTolerance) throw ConfigError("goal-type prevalences do not sum to 1");
  for (double p : spec.goal_prevalence) {
    if (!(p >= 0.0)) throw ConfigError("goal-type prevalence must be >= 0");
  }
  if (!(spec.missing_rate >= 0.0 && spec.missing_rate < 1.0)) throw ConfigError("missing_rate must be in [0,1)");
  if (!(spec.new_user_rate >= 0.0 && spec.new_user_rate <= 1.0)) throw ConfigError("new_user_rate must be in [0,1]");
  if (!(spec.zipf_exponent >= 0.0)) throw ConfigError("zipf_exponent must be >= 0");
  if (spec.days < 1) throw ConfigError("days must be >= 1");
  for (std::size_t f = 0; f < kNumFields; ++f) {
    if (!is_context_numeric(static_cast<Field>(f)) && spec.cardinality[f] < 0) {
      throw ConfigError("cardinality must be >= 0");
    }
  }
  if (spec.interaction && spec.interaction->first == spec.interaction->second) {
    throw ConfigError("interaction rule needs two distinct fields");
  }
  for (const auto& e : spec.additive_effects) {
    if (!(e.log_sigma >= 0.0)) throw ConfigError("additive effect log_sigma must be >= 0");
  }
}

double landscape_median(const LatentSegment& segment) {
  // Point masses make the CDF a step function; evaluate it directly.
  auto cdf = [&segment](double log_x) {
    double acc = 0.0;
    for (const auto& c : segment.components) {
      const double loc = std::log(c.median);
      if (c.log_sigma == 0.0) {
        acc += c.weight * (log_x >= loc ? 1.0 : 0.0);
      } else {
        acc += c.weight * normal_cdf((log_x - loc) / c.log_sigma);
      }
    }
    return acc;
  };
  if (segment.components.size() == 1) return segment.components.front().median;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : segment.components) {
    lo = std::min(lo, std::log(c.median) - 10.0 * c.log_sigma - 1.0);
    hi = std::max(hi, std::log(c.median) + 10.0 * c.log_sigma + 1.0);
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < 0.5 ? lo : hi) = mid;
  }
  return std::exp(hi);
}

std::size_t latent_segment_of(const SyntheticLandscapeSpec& spec, const AuctionRecord& record) {
  const std::size_t n = spec.segments.size();
  if (n <= 1 || !spec.interaction) return 0;
  auto bucket = [&](Field f) {
    return hash64(spec.seed ^ kBucketSalt, static_cast<std::uint32_t>(f), record.field_value(f)) % n;
  };
  return (bucket(spec.interaction->first) + bucket(spec.interaction->second)) % n;
}

std::vector<AuctionRecord> generate_synthetic(const SyntheticLandscapeSpec& spec) {
  validate(spec);
  std::vector<AuctionRecord> out;
  if (spec.record_count == 0) return out;
  out.reserve(spec.record_count);

  std::array<std::vector<double>, kNumFields> vocab_cdf;
  for (std::size_t f = 0; f < kNumFields; ++f) {
    if (!is_context_numeric(static_cast<Field>(f)) && spec.cardinality[f] > 0) {
      vocab_cdf[f] = zipf_cdf(spec.cardinality[f], spec.zipf_exponent);
    }
  }

  std::vector<std::vector<double>> component_cdf;
  std::vector<double> medians;
  for (const auto& seg : spec.segments) {
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& c : seg.components) cdf.push_back(acc += c.weight);
    cdf.back() = 1.0;
    component_cdf.push_back(std::move(cdf));
    medians.push_back(landscape_median(seg));
  }

  std::vector<double> goal_cdf;
  {
    double acc = 0.0;
    for (double p : spec.goal_prevalence) goal_cdf.push_back(acc += p);
    goal_cdf.back() = 1.0;
  }

  Rng rng(spec.seed);
  const std::int64_t span_ms = static_cast<std::int64_t>(spec.days) * kMsPerDay;
  const auto n = static_cast<std::int64_t>(spec.record_count);

  for (std::int64_t i = 0; i < n; ++i) {
    AuctionRecord r;
    // Evenly spaced timestamps keep the log time-ordered and each day equally populated.
    r.timestamp_ms = spec.start_timestamp_ms + static_cast<std::int64_t>((static_cast<__int128>(i) * span_ms) / n);
    const std::int64_t day = day_index(r.timestamp_ms);
    // 1970-01-01 was a Thursday; day_of_week uses 0 = Monday.
    r.day_of_week = static_cast<int>(((day % 7) + 7 + 3) % 7);
    r.hour_of_day = static_cast<int>((r.timestamp_ms - day * kMsPerDay) / kMsPerHour);

    for (std::size_t f = 0; f < kNumFields; ++f) {
      std::string* slot = categorical_slot(r, static_cast<Field>(f));
      if (slot == nullptr) continue;
      const double u_missing = rng.uniform();
      const double u_value = rng.uniform();
      if (vocab_cdf[f].empty() || u_missing < spec.missing_rate) {
        *slot = std::string(kMissingToken);
      } else {
        *slot = value_token(static_cast<Field>(f), sample_cdf(vocab_cdf[f], u_value));
      }
    }
    r.is_new_user = rng.uniform() < spec.new_user_rate;
    r.goal_type = static_cast<GoalType>(sample_cdf(goal_cdf, rng.uniform()));

    const std::size_t seg_idx = latent_segment_of(spec, r);
    const LatentSegment& seg = spec.segments[seg_idx];
    const MixtureComponent& comp = seg.components[sample_cdf(component_cdf[seg_idx], rng.uniform())];

    double log_shift = 0.0;
    for (const auto& effect : spec.additive_effects) {
      if (effect.log_sigma > 0.0) {
        log_shift += effect.log_sigma * hashed_normal(spec.seed, effect.field, r.field_value(effect.field));
      }
    }
    const double z_landscape = rng.normal();
    const double z_markup = rng.normal();
    const double log_noise = comp.log_sigma * z_landscape + log_shift;
    r.min_bid_to_win = log_noise == 0.0 ? comp.median : comp.median * std::exp(log_noise);
    r.unshaded_bid = medians[seg_idx] * std::exp(seg.markup_log_mean + seg.markup_log_sigma * z_markup);
    out.push_back(std::move(r));
  }
  return out;
}

SyntheticLandscapeSpec parse_landscape_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string{}) != "bidshade-synthetic") {
      throw ConfigError("synthetic spec must declare \"format\": \"bidshade-synthetic\"");
    }
    if (j.value("version", 0) != 1) throw ConfigError("unsupported synthetic spec version (expected 1)");

    SyntheticLandscapeSpec s = default_landscape_spec(j.value("records", std::size_t{0}), j.value("seed", 1ULL));
    if (j.contains("start_timestamp_ms")) s.start_timestamp_ms = j["start_timestamp_ms"].get<std::int64_t>();
    s.days = j.value("days", s.days);
    s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
    s.missing_rate = j.value("missing_rate", s.missing_rate);
    s.new_user_rate = j.value("new_user_rate", s.new_user_rate);

    if (j.contains("cardinality")) {
      for (auto& [name, value] : j["cardinality"].items()) {
        auto f = field_from_name(name);
        if (!f) throw ConfigError("unknown field in cardinality: " + name);
        s.cardinality[static_cast<std::size_t>(*f)] = value.get<int>();
      }
    }
    if (j.contains("goal_prevalence")) {
      s.goal_prevalence.fill(0.0);
      for (auto& [name, value] : j["goal_prevalence"].items()) {
        auto g = parse_goal_type(name);
        if (!g) throw ConfigError("unknown goal type: " + name);
        s.goal_prevalence[static_cast<std::size_t>(*g)] = value.get<double>();
      }
    }
    if (j.contains("segments")) {
      s.segments.clear();
      for (const auto& js : j["segments"]) {
        LatentSegment seg;
        seg.markup_log_mean = js.value("markup_log_mean", seg.markup_log_mean);
        seg.markup_log_sigma = js.value("markup_log_sigma", seg.markup_log_sigma);
        for (const auto& jc : js.at("components")) {
          seg.components.push_back({jc.value("weight", 1.0), jc.at("median").get<double>(), jc.value("log_sigma", 0.0)});
        }
        s.segments.push_back(std::move(seg));
      }
    }
    if (j.contains("interaction")) {
      if (j["interaction"].is_null()) {
        s.interaction.reset();
      } else {
        const auto& fields = j["interaction"].at("fields");
        if (fields.size() != 2) throw ConfigError("interaction.fields needs exactly two field names");
        s.interaction = InteractionRule{require_field(fields[0]), require_field(fields[1])};
      }
    }
    if (j.contains("additive_effects")) {
      s.additive_effects.clear();
      for (const auto& je : j["additive_effects"]) {
        s.additive_effects.push_back({require_field(je.at("field")), je.at("log_sigma").get<double>()});
      }
    }
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid synthetic spec: ") + e.what());
  }
}

SyntheticLandscapeSpec load_landscape_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synthetic spec: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_landscape_spec(ss.str());
}

std::string dump_landscape_spec(const SyntheticLandscapeSpec& s) {
  json j;
  j["format"] = "bidshade-synthetic";
  j["version"] = 1;
  j["records"] = s.record_count;
  j["seed"] = s.seed;
  j["start_timestamp_ms"] = s.start_timestamp_ms;
  j["days"] = s.days;
  j["zipf_exponent"] = s.zipf_exponent;
  j["missing_rate"] = s.missing_rate;
  j["new_user_rate"] = s.new_user_rate;
  for (std::size_t f = 0; f < kNumFields; ++f) {
    if (!is_context_numeric(static_cast<Field>(f))) {
      j["cardinality"][std::string(field_names()[f])] = s.cardinality[f];
    }
  }
  for (GoalType g : kAllGoalTypes) j["goal_prevalence"][std::string(to_string(g))] = s.goal_prevalence[static_cast<std::size_t>(g)];
  j["segments"] = json::array();
  for (const auto& seg : s.segments) {
    json js;
    js["markup_log_mean"] = seg.markup_log_mean;
    js["markup_log_sigma"] = seg.markup_log_sigma;
    js["components"] = json::array();
    for (const auto& c : seg.components) {
      js["components"].push_back({{"weight", c.weight}, {"median", c.median}, {"log_sigma", c.log_sigma}});
    }
    j["segments"].push_back(js);
  }
  if (s.interaction) {
    j["interaction"]["fields"] = {field_name(s.interaction->first), field_name(s.interaction->second)};
  } else {
    j["interaction"] = nullptr;
  }
  j["additive_effects"] = json::array();
  for (const auto& e : s.additive_effects) {
    j["additive_effects"].push_back({{"field", field_name(e.field)}, {"log_sigma", e.log_sigma}});
  }
  return j.dump(2) + "\n";
}

}  // namespace bidshade
