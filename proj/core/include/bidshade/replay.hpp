#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bidshade/asym_loss.hpp"
#include "bidshade/auction_record.hpp"
#include "bidshade/metrics.hpp"
#include "bidshade/models.hpp"
#include "bidshade/segmented_baseline.hpp"
#include "bidshade/trainer.hpp"

namespace bidshade {

struct ShaderOutput {
  double shaded_bid = 0.0;
  /// Ratio the shader predicts for the record; for model shaders the raw regression output.
  double predicted_ratio = 1.0;
};

/// Anything that turns a record into a bid. Implementations must be safe to call
/// concurrently and may throw, in which case replay falls back to the unshaded bid.
class Shader {
 public:
  explicit Shader(std::string name) : name_(std::move(name)) {}
  virtual ~Shader() = default;

  const std::string& name() const { return name_; }
  virtual ShaderOutput shade(const AuctionRecord& record) const = 0;

 private:
  std::string name_;
};

class ModelShader final : public Shader {
 public:
  ModelShader(std::string name, std::shared_ptr<const ShadingModel> model);
  ShaderOutput shade(const AuctionRecord& record) const override;
  const ShadingModel& model() const { return *model_; }

 private:
  std::shared_ptr<const ShadingModel> model_;
};

class SegmentedShader final : public Shader {
 public:
  SegmentedShader(std::string name, std::shared_ptr<const SegmentStore> store);
  ShaderOutput shade(const AuctionRecord& record) const override;

 private:
  std::shared_ptr<const SegmentStore> store_;
};

/// Bids the full unshaded value.
class IdentityShader final : public Shader {
 public:
  explicit IdentityShader(std::string name = "identity") : Shader(std::move(name)) {}
  ShaderOutput shade(const AuctionRecord& record) const override;
};

/// Bids exactly the minimum bid to win (capped at the unshaded bid): the surplus upper bound.
class OracleShader final : public Shader {
 public:
  explicit OracleShader(std::string name = "oracle") : Shader(std::move(name)) {}
  ShaderOutput shade(const AuctionRecord& record) const override;
};

/// Applies one fixed ratio to every bid.
class ConstantRatioShader final : public Shader {
 public:
  ConstantRatioShader(std::string name, double ratio);
  ShaderOutput shade(const AuctionRecord& record) const override;

 private:
  double ratio_;
};

struct Metrics {
  std::size_t count = 0;
  std::size_t wins = 0;
  std::size_t fallbacks = 0;
  double total_surplus = 0.0;
  double total_spend = 0.0;
  std::optional<double> win_rate;
  std::optional<double> cpm_per_bid;
  std::optional<double> cpm_conventional;
  std::optional<double> mse;
  std::optional<double> r2;
  std::optional<double> mean_asym_loss;
};

/// Percentage change versus the baseline shader: 100 * (x - base) / base.
struct MetricDeltas {
  std::optional<double> surplus_pct;
  std::optional<double> spend_pct;
  std::optional<double> win_rate_pct;
  std::optional<double> cpm_per_bid_pct;
  std::optional<double> cpm_conventional_pct;
};

struct ShaderReport {
  std::string name;
  Metrics overall;
  std::array<Metrics, kNumGoalTypes> by_goal{};
  MetricDeltas overall_delta;
  std::array<MetricDeltas, kNumGoalTypes> by_goal_delta{};
};

struct ReplayReport {
  std::string baseline;
  std::size_t record_count = 0;
  std::vector<ShaderReport> shaders;

  /// Throws EvaluationError for unknown names.
  const ShaderReport& at(const std::string& name) const;
};

std::optional<double> percent_delta(std::optional<double> value, std::optional<double> base);
inline std::optional<double> percent_delta(double value, double base) {
  return percent_delta(std::optional<double>(value), std::optional<double>(base));
}

/// Metrics for aligned records / outputs. `fallback` flags count towards Metrics::fallbacks.
Metrics compute_metrics(std::span<const AuctionRecord> records, std::span<const ShaderOutput> outputs,
                        std::span<const char> fallback, const AsymLossConfig& loss);

/// Runs every shader over the same records in the same order. `baseline` names the shader
/// whose metrics are the denominators of the percent deltas. Throws EvaluationError for an
/// empty log, duplicate shader names or a missing baseline.
ReplayReport run_replay(std::span<const AuctionRecord> log, const std::vector<std::shared_ptr<const Shader>>& shaders,
                        const std::string& baseline, const AsymLossConfig& loss = {});

/// Human-readable table.
void write_report_table(std::ostream& out, const ReplayReport& report);
/// "shader,goal_type,metric,value" rows; goal_type "ALL" for the overall rows.
void write_report_csv(std::ostream& out, const ReplayReport& report);

struct SweepRow {
  double gamma = 0.0;
  std::optional<ShaderReport> fm;    // absent if training failed
  std::optional<ShaderReport> base;  // baseline metrics on the same log
  std::string error;
  std::vector<EpochStats> trace;
};

/// One FM per gamma with shared seed/config, each replayed on `test` against `baseline`.
/// A training failure for one gamma is recorded in its row; the sweep continues.
std::vector<SweepRow> gamma_sweep(const std::vector<AuctionRecord>& train, const std::vector<AuctionRecord>& test,
                                  const std::vector<double>& gammas, const TrainConfig& config,
                                  const EncoderConfig& encoder, std::shared_ptr<const Shader> baseline);

/// "gamma,surplus_pct,spend_pct,win_rate_pct,cpm_per_bid_pct,cpm_conventional_pct,surplus,spend,win_rate,cpm_per_bid,cpm_conventional,error"
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace bidshade
