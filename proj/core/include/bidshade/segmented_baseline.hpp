#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bidshade/auction_record.hpp"

namespace bidshade {

/// Inventory segment: exchange x top-level domain x device x layout.
struct SegmentKey {
  std::string exchange;  // request_publisher_id
  std::string page_tld;
  std::string device_type_id;
  std::string layout_id;

  static SegmentKey of(const AuctionRecord& record);
  bool operator==(const SegmentKey&) const = default;
};

struct SegmentKeyHash {
  std::size_t operator()(const SegmentKey& key) const noexcept;
};

/// Parameters of the per-segment shading function
///   f(b) = log((1 + u1 * u2 * b) / u2)   if u2 > 0
///   f(b) = b1 * b                        otherwise
/// plus the recursive-least-squares state used to fit b1.
struct SegmentParams {
  double u1 = 1.0;
  double u2 = 0.0;
  double b1 = 0.85;
  double rls_p = 1e3;  // RLS inverse-information (scalar covariance)
  std::uint64_t observations = 0;
  std::int64_t last_update_ms = 0;

  bool operator==(const SegmentParams&) const = default;
};

struct BidFeedback {
  double unshaded_bid = 0.0;
  double min_bid_to_win = 0.0;
  std::int64_t timestamp_ms = 0;
};

struct BaselineConfig {
  double forgetting = 0.99;    // RLS exponential forgetting factor lambda
  double u1_step = 0.1;        // grid spacing around the incumbent u1
  double u2_step = 0.05;       // grid spacing around the incumbent u2
  int grid_radius = 2;         // candidates at incumbent +- {1..radius} steps
  std::size_t batch_size = 32; // feedback pairs per update when fitting from a log
  std::size_t capacity = 1'000'000;
  SegmentParams cold_start{};
};

void validate(const BaselineConfig& config);

/// Lowest b1 the RLS clamp admits.
inline constexpr double kMinB1 = 1e-3;

/// Raw parametric shading function, without clamping. Returns NaN when the log
/// argument is degenerate (<= 0 or non-finite).
double nonlinear_raw(const SegmentParams& params, double unshaded_bid);

/// Shaded bid in (0, unshaded_bid]. Degenerate log arguments fall back to b1 * b.
double nonlinear_shade(const SegmentParams& params, double unshaded_bid);

/// sum (b - f(b)) * [f(b) >= min_bid_to_win] over the batch.
double batch_surplus(const SegmentParams& params, std::span<const BidFeedback> batch);

/// One feedback round: b1 by exponentially-forgetting RLS on min_bid_to_win ~ b1 * unshaded_bid,
/// clamped to (0, 1]; then (u2, u1) by coordinate search over the local grid, keeping the
/// incumbent unless a candidate yields strictly higher batch surplus. Deterministic.
SegmentParams update_segment(const SegmentParams& params, std::span<const BidFeedback> batch,
                             const BaselineConfig& config);

/// Segment -> params map with least-recently-updated eviction.
/// Single writer, many readers: lookups take a shared lock, updates an exclusive one.
class SegmentStore {
 public:
  explicit SegmentStore(BaselineConfig config = {});
  SegmentStore(const SegmentStore& other);
  SegmentStore& operator=(const SegmentStore& other);

  const BaselineConfig& config() const { return config_; }

  /// Params for `key`, or the cold-start defaults for unseen segments.
  SegmentParams lookup(const SegmentKey& key) const;
  bool contains(const SegmentKey& key) const;

  void update(const SegmentKey& key, std::span<const BidFeedback> batch);

  /// Inserts or replaces params directly (used when loading a store from disk).
  void put(const SegmentKey& key, const SegmentParams& params);

  std::size_t size() const;

  /// Entries from least to most recently updated.
  std::vector<std::pair<SegmentKey, SegmentParams>> entries() const;

  double shade(const AuctionRecord& record) const { return nonlinear_shade(lookup(SegmentKey::of(record)), record.unshaded_bid); }

 private:
  void put_locked(const SegmentKey& key, const SegmentParams& params);

  struct Slot {
    SegmentParams params;
    std::list<SegmentKey>::iterator recency;
  };

  BaselineConfig config_;
  mutable std::shared_mutex mutex_;
  std::list<SegmentKey> recency_;  // front = least recently updated
  std::unordered_map<SegmentKey, Slot, SegmentKeyHash> slots_;
};

/// Replays a feedback log in order, buffering pairs per segment and calling update()
/// every `batch_size` pairs; partial buffers are flushed at the end in first-seen order.
SegmentStore fit_segment_store(const std::vector<AuctionRecord>& records, const BaselineConfig& config = {});

}  // namespace bidshade
