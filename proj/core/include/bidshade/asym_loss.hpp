#pragma once

#include "bidshade/auction_record.hpp"

namespace bidshade {

/// gamma floors the per-example asymmetry alpha. Training accepts gamma in [0, 1]
/// so that sweeps can include both endpoints; the operating default is 0.2.
struct AsymLossConfig {
  double gamma = 0.2;
};

void validate(const AsymLossConfig& config);

/// Achievable surplus as a fraction of the unshaded bid, clamped to [0, 1].
double normalized_opt_surplus(const AuctionRecord& record);

/// alpha = min(1, max(normalized_opt_surplus, gamma)).
double example_alpha(const AuctionRecord& record, const AsymLossConfig& config);

/// Squared error weighted by (1 + alpha) when phi < y (bid lost through over-shading)
/// and by (1 - alpha) otherwise.
inline double asym_loss(double y, double phi, double alpha) {
  const double d = y - phi;
  return phi < y ? d * d * (1.0 + alpha) : d * d * (1.0 - alpha);
}

/// d asym_loss / d phi. Zero at phi == y.
inline double asym_loss_grad(double y, double phi, double alpha) {
  if (phi == y) return 0.0;
  const double d = y - phi;
  return phi < y ? -2.0 * d * (1.0 + alpha) : -2.0 * d * (1.0 - alpha);
}

}  // namespace bidshade
