#include "bidshade/asym_loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bidshade {

void validate(const AsymLossConfig& config) {
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) {
    throw std::invalid_argument("gamma must be in [0, 1]");
  }
}

double normalized_opt_surplus(const AuctionRecord& r) {
  if (!(r.unshaded_bid > 0.0)) throw InvalidRecord("unshaded_bid must be > 0");
  return std::clamp((r.unshaded_bid - r.min_bid_to_win) / r.unshaded_bid, 0.0, 1.0);
}

double example_alpha(const AuctionRecord& record, const AsymLossConfig& config) {
  return std::min(1.0, std::max(normalized_opt_surplus(record), config.gamma));
}

}  // namespace bidshade
