#include "bidshade/metrics.hpp"

#include <cmath>

namespace bidshade {

namespace {

void check_aligned(std::size_t a, std::size_t b) {
  if (a != b) {
    throw EvaluationError("length mismatch: " + std::to_string(a) + " records vs " + std::to_string(b) + " bids");
  }
}

}  // namespace

double surplus(std::span<const AuctionRecord> records, std::span<const double> shaded_bids) {
  check_aligned(records.size(), shaded_bids.size());
  CompensatedSum total;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (win_indicator(shaded_bids[i], records[i].min_bid_to_win)) total.add(records[i].unshaded_bid - shaded_bids[i]);
  }
  return total.value();
}

SpendStats spend_winrate_cpm(std::span<const AuctionRecord> records, std::span<const double> shaded_bids) {
  check_aligned(records.size(), shaded_bids.size());
  SpendStats s;
  s.count = records.size();
  CompensatedSum spend;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (win_indicator(shaded_bids[i], records[i].min_bid_to_win)) {
      ++s.wins;
      spend.add(shaded_bids[i]);
    }
  }
  s.total_spend = spend.value();
  if (s.count > 0) {
    const double n = static_cast<double>(s.count);
    s.win_rate = static_cast<double>(s.wins) / n;
    s.cpm_per_bid = s.total_spend / n;
  }
  if (s.wins > 0) s.cpm_conventional = s.total_spend / static_cast<double>(s.wins);
  return s;
}

RegressionStats regression_metrics(std::span<const double> y, std::span<const double> phi) {
  check_aligned(y.size(), phi.size());
  RegressionStats out;
  const std::size_t n = y.size();
  if (n == 0) return out;

  CompensatedSum sq;
  CompensatedSum sum_y;
  CompensatedSum sum_p;
  for (std::size_t i = 0; i < n; ++i) {
    sq.add((y[i] - phi[i]) * (y[i] - phi[i]));
    sum_y.add(y[i]);
    sum_p.add(phi[i]);
  }
  const double dn = static_cast<double>(n);
  out.mse = sq.value() / dn;
  if (n < 2) return out;
  bool y_constant = true;
  bool p_constant = true;
  for (std::size_t i = 1; i < n; ++i) {
    y_constant = y_constant && y[i] == y[0];
    p_constant = p_constant && phi[i] == phi[0];
  }
  if (y_constant || p_constant) return out;

  const double mean_y = sum_y.value() / dn;
  const double mean_p = sum_p.value() / dn;
  CompensatedSum syy;
  CompensatedSum spp;
  CompensatedSum syp;
  for (std::size_t i = 0; i < n; ++i) {
    const double dy = y[i] - mean_y;
    const double dp = phi[i] - mean_p;
    syy.add(dy * dy);
    spp.add(dp * dp);
    syp.add(dy * dp);
  }
  if (syy.value() > 0.0 && spp.value() > 0.0) {
    const double r = syp.value() / std::sqrt(syy.value() * spp.value());
    out.r2 = r * r;
  }
  return out;
}

}  // namespace bidshade
