#include "bidshade/segmented_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>

#include "bidshade/hash.hpp"
#include "bidshade/models.hpp"

namespace bidshade {

SegmentKey SegmentKey::of(const AuctionRecord& r) {
  return {r.request_publisher_id, r.page_tld, r.device_type_id, r.layout_id};
}

std::size_t SegmentKeyHash::operator()(const SegmentKey& key) const noexcept {
  std::uint64_t h = hash64(0, 0, key.exchange);
  h = hash64(h, 1, key.page_tld);
  h = hash64(h, 2, key.device_type_id);
  h = hash64(h, 3, key.layout_id);
  return static_cast<std::size_t>(h);
}

void validate(const BaselineConfig& c) {
  if (!(c.forgetting > 0.0 && c.forgetting <= 1.0)) throw std::invalid_argument("forgetting must be in (0, 1]");
  if (!(c.u1_step > 0.0) || !(c.u2_step > 0.0)) throw std::invalid_argument("grid steps must be > 0");
  if (c.grid_radius < 0) throw std::invalid_argument("grid_radius must be >= 0");
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (c.capacity < 1) throw std::invalid_argument("capacity must be >= 1");
  if (!(c.cold_start.b1 > 0.0 && c.cold_start.b1 <= 1.0)) throw std::invalid_argument("cold-start b1 must be in (0, 1]");
  if (!(c.cold_start.rls_p > 0.0)) throw std::invalid_argument("cold-start rls_p must be > 0");
}

double nonlinear_raw(const SegmentParams& p, double b) {
  if (p.u2 > 0.0) {
    const double arg = (1.0 + p.u1 * p.u2 * b) / p.u2;
    if (!(arg > 0.0) || !std::isfinite(arg)) return std::numeric_limits<double>::quiet_NaN();
    return std::log(arg);
  }
  return p.b1 * b;
}

double nonlinear_shade(const SegmentParams& p, double b) {
  if (!(b > 0.0)) throw InvalidRecord("unshaded_bid must be > 0");
  double raw = nonlinear_raw(p, b);
  if (std::isnan(raw)) raw = p.b1 * b;
  return std::clamp(raw, kMinShadeRatio * b, b);
}

double batch_surplus(const SegmentParams& p, std::span<const BidFeedback> batch) {
  double total = 0.0;
  for (const auto& fb : batch) {
    const double bid = nonlinear_shade(p, fb.unshaded_bid);
    if (bid >= fb.min_bid_to_win) total += fb.unshaded_bid - bid;
  }
  return total;
}

SegmentParams update_segment(const SegmentParams& params, std::span<const BidFeedback> batch,
                             const BaselineConfig& config) {
  SegmentParams next = params;
  if (batch.empty()) return next;

  // Scalar RLS through the origin: y = b1 * x with x = unshaded bid, y = min bid to win.
  const double lambda = config.forgetting;
  double b1 = params.b1;
  double p = params.rls_p;
  for (const auto& fb : batch) {
    const double x = fb.unshaded_bid;
    const double gain = p * x / (lambda + x * p * x);
    b1 += gain * (fb.min_bid_to_win - b1 * x);
    p = (p - gain * x * p) / lambda;
    next.last_update_ms = std::max(next.last_update_ms, fb.timestamp_ms);
  }
  next.b1 = std::clamp(b1, kMinB1, 1.0);
  next.rls_p = p;
  next.observations += batch.size();

  // Coordinate search, u2 first: while u2 == 0 the log branch is inactive and u1 has no effect.
  auto search = [&](double SegmentParams::*coord, double step, bool allow_zero) {
    const double incumbent = next.*coord;
    SegmentParams best = next;
    double best_surplus = batch_surplus(next, batch);
    for (int d = -config.grid_radius; d <= config.grid_radius; ++d) {
      if (d == 0) continue;
      double value = incumbent + d * step;
      if (allow_zero) {
        value = std::max(value, 0.0);
      } else if (!(value > 0.0)) {
        continue;
      }
      if (value == incumbent) continue;
      SegmentParams candidate = next;
      candidate.*coord = value;
      const double s = batch_surplus(candidate, batch);
      if (s > best_surplus) {
        best_surplus = s;
        best = candidate;
      }
    }
    next = best;
  };
  search(&SegmentParams::u2, config.u2_step, true);
  search(&SegmentParams::u1, config.u1_step, false);
  return next;
}

SegmentStore::SegmentStore(BaselineConfig config) : config_(std::move(config)) { validate(config_); }

SegmentStore::SegmentStore(const SegmentStore& other) : config_(other.config_) {
  for (auto& [key, params] : other.entries()) put_locked(key, params);
}

SegmentStore& SegmentStore::operator=(const SegmentStore& other) {
  if (this == &other) return *this;
  auto snapshot = other.entries();
  std::unique_lock lock(mutex_);
  config_ = other.config_;
  recency_.clear();
  slots_.clear();
  for (auto& [key, params] : snapshot) put_locked(key, params);
  return *this;
}

SegmentParams SegmentStore::lookup(const SegmentKey& key) const {
  std::shared_lock lock(mutex_);
  auto it = slots_.find(key);
  return it == slots_.end() ? config_.cold_start : it->second.params;
}

bool SegmentStore::contains(const SegmentKey& key) const {
  std::shared_lock lock(mutex_);
  return slots_.count(key) != 0;
}

void SegmentStore::update(const SegmentKey& key, std::span<const BidFeedback> batch) {
  std::unique_lock lock(mutex_);
  auto it = slots_.find(key);
  const SegmentParams& current = it == slots_.end() ? config_.cold_start : it->second.params;
  put_locked(key, update_segment(current, batch, config_));
}

void SegmentStore::put(const SegmentKey& key, const SegmentParams& params) {
  std::unique_lock lock(mutex_);
  put_locked(key, params);
}

void SegmentStore::put_locked(const SegmentKey& key, const SegmentParams& params) {
  auto it = slots_.find(key);
  if (it != slots_.end()) {
    it->second.params = params;
    recency_.splice(recency_.end(), recency_, it->second.recency);
    return;
  }
  if (slots_.size() >= config_.capacity) {
    slots_.erase(recency_.front());
    recency_.pop_front();
  }
  recency_.push_back(key);
  slots_.emplace(key, Slot{params, std::prev(recency_.end())});
}

std::size_t SegmentStore::size() const {
  std::shared_lock lock(mutex_);
  return slots_.size();
}

std::vector<std::pair<SegmentKey, SegmentParams>> SegmentStore::entries() const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<SegmentKey, SegmentParams>> out;
  out.reserve(slots_.size());
  for (const auto& key : recency_) out.emplace_back(key, slots_.at(key).params);
  return out;
}

SegmentStore fit_segment_store(const std::vector<AuctionRecord>& records, const BaselineConfig& config) {
  SegmentStore store(config);
  std::unordered_map<SegmentKey, std::vector<BidFeedback>, SegmentKeyHash> pending;
  std::vector<SegmentKey> first_seen;
  for (const auto& r : records) {
    SegmentKey key = SegmentKey::of(r);
    auto [it, inserted] = pending.try_emplace(key);
    if (inserted) first_seen.push_back(key);
    it->second.push_back({r.unshaded_bid, r.min_bid_to_win, r.timestamp_ms});
    if (it->second.size() >= config.batch_size) {
      store.update(key, it->second);
      it->second.clear();
    }
  }
  for (const auto& key : first_seen) {
    auto& buf = pending.at(key);
    if (!buf.empty()) store.update(key, buf);
  }
  return store;
}

}  // namespace bidshade
