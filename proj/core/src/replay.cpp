#include "bidshade/replay.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>

#include "bidshade/feature_encoder.hpp"

namespace bidshade {

namespace {

std::string num(std::optional<double> v) {
  if (!v) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", *v);
  return buf;
}

std::string pct(std::optional<double> v) {
  if (!v) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%+.2f%%", *v);
  return buf;
}

MetricDeltas deltas(const Metrics& m, const Metrics& base) {
  return {percent_delta(m.total_surplus, base.total_surplus), percent_delta(m.total_spend, base.total_spend),
          percent_delta(m.win_rate, base.win_rate), percent_delta(m.cpm_per_bid, base.cpm_per_bid),
          percent_delta(m.cpm_conventional, base.cpm_conventional)};
}

}  // namespace

ModelShader::ModelShader(std::string name, std::shared_ptr<const ShadingModel> model)
    : Shader(std::move(name)), model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("ModelShader needs a model");
}

ShaderOutput ModelShader::shade(const AuctionRecord& record) const {
  const ShadeResult r = bidshade::shade(*model_, record);
  return {r.shaded_bid, r.prediction};
}

SegmentedShader::SegmentedShader(std::string name, std::shared_ptr<const SegmentStore> store)
    : Shader(std::move(name)), store_(std::move(store)) {
  if (!store_) throw std::invalid_argument("SegmentedShader needs a segment store");
}

ShaderOutput SegmentedShader::shade(const AuctionRecord& record) const {
  const double bid = store_->shade(record);
  return {bid, bid / record.unshaded_bid};
}

ShaderOutput IdentityShader::shade(const AuctionRecord& record) const { return {record.unshaded_bid, 1.0}; }

ShaderOutput OracleShader::shade(const AuctionRecord& record) const {
  const double bid = std::min(record.min_bid_to_win, record.unshaded_bid);
  return {bid, bid / record.unshaded_bid};
}

ConstantRatioShader::ConstantRatioShader(std::string name, double ratio) : Shader(std::move(name)), ratio_(ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("constant ratio must be in (0, 1]");
}

ShaderOutput ConstantRatioShader::shade(const AuctionRecord& record) const {
  return {ratio_ * record.unshaded_bid, ratio_};
}

const ShaderReport& ReplayReport::at(const std::string& name) const {
  for (const auto& s : shaders) {
    if (s.name == name) return s;
  }
  throw EvaluationError("no shader named '" + name + "' in report");
}

std::optional<double> percent_delta(std::optional<double> value, std::optional<double> base) {
  if (!value || !base || *base == 0.0) return std::nullopt;
  return 100.0 * (*value - *base) / *base;
}

Metrics compute_metrics(std::span<const AuctionRecord> records, std::span<const ShaderOutput> outputs,
                        std::span<const char> fallback, const AsymLossConfig& loss) {
  if (records.size() != outputs.size() || records.size() != fallback.size()) {
    throw EvaluationError("length mismatch between records and shader outputs");
  }
  Metrics m;
  m.count = records.size();
  CompensatedSum surplus_sum;
  CompensatedSum spend_sum;
  CompensatedSum loss_sum;
  std::vector<double> y(records.size());
  std::vector<double> phi(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const double bid = outputs[i].shaded_bid;
    if (win_indicator(bid, r.min_bid_to_win)) {
      ++m.wins;
      surplus_sum.add(r.unshaded_bid - bid);
      spend_sum.add(bid);
    }
    if (fallback[i]) ++m.fallbacks;
    y[i] = target_ratio(r);
    phi[i] = outputs[i].predicted_ratio;
    loss_sum.add(asym_loss(y[i], phi[i], example_alpha(r, loss)));
  }
  m.total_surplus = surplus_sum.value();
  m.total_spend = spend_sum.value();
  if (m.count > 0) {
    const double n = static_cast<double>(m.count);
    m.win_rate = static_cast<double>(m.wins) / n;
    m.cpm_per_bid = m.total_spend / n;
    m.mean_asym_loss = loss_sum.value() / n;
  }
  if (m.wins > 0) m.cpm_conventional = m.total_spend / static_cast<double>(m.wins);
  const RegressionStats reg = regression_metrics(y, phi);
  m.mse = reg.mse;
  m.r2 = reg.r2;
  return m;
}

ReplayReport run_replay(std::span<const AuctionRecord> log, const std::vector<std::shared_ptr<const Shader>>& shaders,
                        const std::string& baseline, const AsymLossConfig& loss) {
  if (log.empty()) throw EvaluationError("replay log is empty");
  std::set<std::string> names;
  for (const auto& s : shaders) {
    if (!s) throw EvaluationError("null shader");
    if (!names.insert(s->name()).second) throw EvaluationError("duplicate shader name: " + s->name());
  }
  if (!names.count(baseline)) throw EvaluationError("baseline shader '" + baseline + "' is missing from the replay");

  // Group record positions by goal type once; every shader sees the same order.
  std::array<std::vector<AuctionRecord>, kNumGoalTypes> goal_records;
  std::array<std::vector<std::size_t>, kNumGoalTypes> goal_pos;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto g = static_cast<std::size_t>(log[i].goal_type);
    goal_records[g].push_back(log[i]);
    goal_pos[g].push_back(i);
  }

  ReplayReport report;
  report.baseline = baseline;
  report.record_count = log.size();

  std::vector<ShaderOutput> outputs(log.size());
  std::vector<char> fallback(log.size());
  for (const auto& shader : shaders) {
    for (std::size_t i = 0; i < log.size(); ++i) {
      try {
        outputs[i] = shader->shade(log[i]);
        fallback[i] = 0;
      } catch (const std::exception&) {
        outputs[i] = {log[i].unshaded_bid, 1.0};
        fallback[i] = 1;
      }
    }
    ShaderReport sr;
    sr.name = shader->name();
    sr.overall = compute_metrics(log, outputs, fallback, loss);
    for (std::size_t g = 0; g < kNumGoalTypes; ++g) {
      std::vector<ShaderOutput> go;
      std::vector<char> gf;
      go.reserve(goal_pos[g].size());
      gf.reserve(goal_pos[g].size());
      for (std::size_t i : goal_pos[g]) {
        go.push_back(outputs[i]);
        gf.push_back(fallback[i]);
      }
      sr.by_goal[g] = compute_metrics(goal_records[g], go, gf, loss);
    }
    report.shaders.push_back(std::move(sr));
  }

  const ShaderReport base = report.at(baseline);
  for (auto& sr : report.shaders) {
    sr.overall_delta = deltas(sr.overall, base.overall);
    for (std::size_t g = 0; g < kNumGoalTypes; ++g) sr.by_goal_delta[g] = deltas(sr.by_goal[g], base.by_goal[g]);
  }
  return report;
}

void write_report_table(std::ostream& out, const ReplayReport& report) {
  char line[512];
  out << "replay over " << report.record_count << " records; deltas vs '" << report.baseline << "'\n";
  std::snprintf(line, sizeof(line), "%-14s %-8s %8s %14s %14s %9s %10s %10s %10s %8s %10s %10s %10s %10s\n", "shader",
                "goal", "count", "surplus", "spend", "win_rate", "cpm_per_bid", "cpm_conv", "mse", "r2", "d_surplus",
                "d_spend", "d_winrate", "d_cpm");
  out << line;
  auto row = [&](const std::string& name, std::string_view goal, const Metrics& m, const MetricDeltas& d) {
    std::snprintf(line, sizeof(line), "%-14s %-8s %8zu %14.4f %14.4f %9s %10s %10s %10s %8s %10s %10s %10s %10s\n",
                  name.c_str(), std::string(goal).c_str(), m.count, m.total_surplus, m.total_spend,
                  num(m.win_rate).substr(0, 9).c_str(), num(m.cpm_per_bid).substr(0, 10).c_str(),
                  num(m.cpm_conventional).substr(0, 10).c_str(), num(m.mse).substr(0, 10).c_str(),
                  num(m.r2).substr(0, 8).c_str(), pct(d.surplus_pct).c_str(), pct(d.spend_pct).c_str(),
                  pct(d.win_rate_pct).c_str(), pct(d.cpm_per_bid_pct).c_str());
    out << line;
  };
  for (const auto& sr : report.shaders) {
    row(sr.name, "ALL", sr.overall, sr.overall_delta);
    for (GoalType g : kAllGoalTypes) {
      const auto gi = static_cast<std::size_t>(g);
      if (sr.by_goal[gi].count > 0) row(sr.name, to_string(g), sr.by_goal[gi], sr.by_goal_delta[gi]);
    }
  }
}

void write_report_csv(std::ostream& out, const ReplayReport& report) {
  out << "shader,goal_type,metric,value\n";
  auto emit = [&](const std::string& shader, std::string_view goal, const Metrics& m, const MetricDeltas& d) {
    auto put = [&](std::string_view metric, std::optional<double> v) {
      out << shader << ',' << goal << ',' << metric << ',' << num(v) << '\n';
    };
    put("count", static_cast<double>(m.count));
    put("wins", static_cast<double>(m.wins));
    put("fallbacks", static_cast<double>(m.fallbacks));
    put("total_surplus", m.total_surplus);
    put("total_spend", m.total_spend);
    put("win_rate", m.win_rate);
    put("cpm_per_bid", m.cpm_per_bid);
    put("cpm_conventional", m.cpm_conventional);
    put("mse", m.mse);
    put("r2", m.r2);
    put("mean_asym_loss", m.mean_asym_loss);
    put("surplus_delta_pct", d.surplus_pct);
    put("spend_delta_pct", d.spend_pct);
    put("win_rate_delta_pct", d.win_rate_pct);
    put("cpm_per_bid_delta_pct", d.cpm_per_bid_pct);
    put("cpm_conventional_delta_pct", d.cpm_conventional_pct);
  };
  for (const auto& sr : report.shaders) {
    emit(sr.name, "ALL", sr.overall, sr.overall_delta);
    for (GoalType g : kAllGoalTypes) {
      const auto gi = static_cast<std::size_t>(g);
      emit(sr.name, to_string(g), sr.by_goal[gi], sr.by_goal_delta[gi]);
    }
  }
}

std::vector<SweepRow> gamma_sweep(const std::vector<AuctionRecord>& train_set, const std::vector<AuctionRecord>& test,
                                  const std::vector<double>& gammas, const TrainConfig& config,
                                  const EncoderConfig& encoder, std::shared_ptr<const Shader> baseline) {
  if (!baseline) throw EvaluationError("gamma sweep needs a baseline shader");
  std::vector<SweepRow> rows;
  for (double gamma : gammas) {
    SweepRow row;
    row.gamma = gamma;
    try {
      AsymLossConfig loss{gamma};
      TrainResult trained = train(train_set, ModelKind::Fm, config, loss, encoder);
      row.trace = trained.trace;
      auto model = std::make_shared<const ShadingModel>(std::move(trained.model));
      const std::string fm_name = baseline->name() == "fm" ? "fm_model" : "fm";
      std::vector<std::shared_ptr<const Shader>> shaders = {baseline, std::make_shared<ModelShader>(fm_name, model)};
      ReplayReport report = run_replay(test, shaders, baseline->name(), loss);
      row.base = report.at(baseline->name());
      row.fm = report.at(fm_name);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "gamma,surplus_pct,spend_pct,win_rate_pct,cpm_per_bid_pct,cpm_conventional_pct,surplus,spend,win_rate,"
         "cpm_per_bid,cpm_conventional,error\n";
  for (const auto& r : rows) {
    out << num(r.gamma) << ',';
    if (r.fm) {
      const auto& d = r.fm->overall_delta;
      const auto& m = r.fm->overall;
      out << num(d.surplus_pct) << ',' << num(d.spend_pct) << ',' << num(d.win_rate_pct) << ','
          << num(d.cpm_per_bid_pct) << ',' << num(d.cpm_conventional_pct) << ',' << num(m.total_surplus) << ','
          << num(m.total_spend) << ',' << num(m.win_rate) << ',' << num(m.cpm_per_bid) << ','
          << num(m.cpm_conventional) << ',';
    } else {
      out << "NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,";
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << '\n';
  }
}

}  // namespace bidshade
