#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bidshade/auction_record.hpp"

namespace bidshade {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Neumaier-compensated running sum. Mergeable, so sharded and serial sums agree closely.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  void merge(const CompensatedSum& other) {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Ties win: the logged price is the minimum bid *to win*.
inline bool win_indicator(double shaded_bid, double min_bid_to_win) { return shaded_bid >= min_bid_to_win; }

/// sum (unshaded_bid - shaded_bid) * win
double surplus(std::span<const AuctionRecord> records, std::span<const double> shaded_bids);

struct SpendStats {
  std::size_t count = 0;
  std::size_t wins = 0;
  double total_spend = 0.0;
  std::optional<double> win_rate;          // absent for empty input
  std::optional<double> cpm_per_bid;         // total_spend / N
  std::optional<double> cpm_conventional;  // total_spend / wins; absent with zero wins
};

SpendStats spend_winrate_cpm(std::span<const AuctionRecord> records, std::span<const double> shaded_bids);

struct RegressionStats {
  std::optional<double> mse;
  /// Squared Pearson correlation between targets and predictions.
  std::optional<double> r2;
};

/// mse needs N >= 1; r2 needs N >= 2 and non-constant targets and predictions.
RegressionStats regression_metrics(std::span<const double> targets, std::span<const double> predictions);

}  // namespace bidshade
