#pragma once

// Independent reference implementations used to check the library. Kept
// deliberately naive: no shared code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bidshade/auction_record.hpp"
#include "bidshade/feature_encoder.hpp"
#include "bidshade/models.hpp"

namespace oracle {

// FM forward pass by the explicit pairwise sum over all active feature pairs.
inline double fm_naive(const bidshade::FmModel& m, std::span<const bidshade::FeatureEntry> x) {
  double out = m.w0;
  for (const auto& e : x) out += m.w[e.index] * e.value;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      double dot = 0.0;
      for (std::uint32_t f = 0; f < m.k; ++f) {
        dot += m.v[std::size_t{x[i].index} * m.k + f] * m.v[std::size_t{x[j].index} * m.k + f];
      }
      out += dot * x[i].value * x[j].value;
    }
  }
  return out;
}

inline double asym_loss_ref(double y, double phi, double alpha) {
  const double sq = (y - phi) * (y - phi);
  if (phi < y) return sq * (1.0 + alpha);
  return sq * (1.0 - alpha);
}

template <typename F>
double central_difference(F f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

struct ReplayTotals {
  std::size_t n = 0;
  std::size_t wins = 0;
  long double surplus = 0.0L;
  long double spend = 0.0L;

  double win_rate() const { return static_cast<double>(wins) / static_cast<double>(n); }
  double cpm_per_bid() const { return static_cast<double>(spend / static_cast<long double>(n)); }
  double cpm_conventional() const { return static_cast<double>(spend / static_cast<long double>(wins)); }
};

// Single-pass accumulation in extended precision over (record, shaded bid) pairs.
inline ReplayTotals replay_brute_force(const std::vector<bidshade::AuctionRecord>& log,
                                       const std::vector<double>& bids) {
  ReplayTotals t;
  for (std::size_t i = 0; i < log.size(); ++i) {
    ++t.n;
    if (bids[i] >= log[i].min_bid_to_win) {
      ++t.wins;
      t.surplus += static_cast<long double>(log[i].unshaded_bid) - bids[i];
      t.spend += bids[i];
    }
  }
  return t;
}

// Squared Pearson correlation via the one-pass textbook formula in long double.
inline double r2_one_pass(const std::vector<double>& y, const std::vector<double>& p) {
  long double n = 0, sy = 0, sp = 0, syy = 0, spp = 0, syp = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    n += 1;
    sy += y[i];
    sp += p[i];
    syy += static_cast<long double>(y[i]) * y[i];
    spp += static_cast<long double>(p[i]) * p[i];
    syp += static_cast<long double>(y[i]) * p[i];
  }
  const long double cov = n * syp - sy * sp;
  const long double vy = n * syy - sy * sy;
  const long double vp = n * spp - sp * sp;
  return static_cast<double>(cov * cov / (vy * vp));
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

// Random FM over a small hash space with `m` distinct active indices of random value.
struct FmInstance {
  bidshade::FmModel model;
  std::vector<bidshade::FeatureEntry> x;
};

inline bidshade::FmModel random_fm(std::mt19937_64& rng, std::uint32_t bits, std::uint32_t k) {
  bidshade::EncoderConfig enc;
  enc.bits_per_field = bits;
  auto m = bidshade::FmModel::zeros(enc, k);
  std::normal_distribution<double> nd(0.0, 0.5);
  m.w0 = nd(rng);
  for (auto& w : m.w) w = nd(rng);
  for (auto& v : m.v) v = nd(rng);
  return m;
}

inline std::vector<bidshade::FeatureEntry> random_features(std::mt19937_64& rng, std::size_t total, std::size_t m,
                                                           bool unit_values) {
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  std::vector<bidshade::FeatureEntry> x;
  std::vector<char> used(total, 0);
  while (x.size() < m) {
    const std::size_t i = pick(rng);
    if (used[i]) continue;
    used[i] = 1;
    x.push_back({static_cast<std::uint32_t>(i), unit_values ? 1.0 : val(rng)});
  }
  return x;
}

inline bidshade::AuctionRecord random_record(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> small(0, 9);
  std::uniform_real_distribution<double> price(0.05, 20.0);
  bidshade::AuctionRecord r;
  r.page_tld = "tld" + std::to_string(small(rng));
  r.subdomain = "sub" + std::to_string(small(rng));
  r.publisher_id = "p" + std::to_string(small(rng));
  r.request_publisher_id = "x" + std::to_string(small(rng) % 3);
  r.country_id = "c" + std::to_string(small(rng));
  r.day_of_week = small(rng) % 7;
  r.hour_of_day = std::uniform_int_distribution<int>(0, 23)(rng);
  r.device_type_id = "d" + std::to_string(small(rng) % 4);
  if (small(rng) > 1) r.app_name = "app" + std::to_string(small(rng));
  r.is_new_user = small(rng) < 3;
  r.target_deal_id = "deal" + std::to_string(small(rng));
  r.layout_id = "l" + std::to_string(small(rng) % 3);
  r.ad_position_id = "a" + std::to_string(small(rng));
  r.unshaded_bid = price(rng);
  r.min_bid_to_win = price(rng);
  r.goal_type = bidshade::kAllGoalTypes[static_cast<std::size_t>(small(rng)) % bidshade::kNumGoalTypes];
  r.timestamp_ms = 1'600'000'000'000 + static_cast<std::int64_t>(rng() % 1'000'000'000);
  return r;
}

// Per-test scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("bidshade-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
