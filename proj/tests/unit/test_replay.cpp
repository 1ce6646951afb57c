#include <cmath>
#include <random>
#include <sstream>

#include "bidshade/metrics.hpp"
#include "bidshade/replay.hpp"
#include "bidshade/synthetic.hpp"
#include "bidshade/trainer.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace bidshade;

namespace {

class ThrowingShader final : public Shader {
 public:
  ThrowingShader() : Shader("flaky") {}
  ShaderOutput shade(const AuctionRecord& r) const override {
    if (r.goal_type == GoalType::CPA) throw std::runtime_error("boom");
    return {0.5 * r.unshaded_bid, 0.5};
  }
};

std::vector<double> bids_of(const Shader& s, const std::vector<AuctionRecord>& log) {
  std::vector<double> out;
  for (const auto& r : log) out.push_back(s.shade(r).shaded_bid);
  return out;
}

}  // namespace

TEST_CASE("surplus and spend on a hand example") {
  std::vector<AuctionRecord> log(3);
  log[0].unshaded_bid = 10.0;
  log[0].min_bid_to_win = 4.0;
  log[1].unshaded_bid = 10.0;
  log[1].min_bid_to_win = 6.0;
  log[2].unshaded_bid = 2.0;
  log[2].min_bid_to_win = 1.0;
  const std::vector<double> bids{5.0, 5.0, 1.0};  // win, lose, tie wins
  CHECK(surplus(log, bids) == 6.0);
  const auto s = spend_winrate_cpm(log, bids);
  CHECK(s.wins == 2);
  CHECK(s.total_spend == 6.0);
  CHECK(*s.win_rate == doctest::Approx(2.0 / 3.0));
  CHECK(*s.cpm_per_bid == 2.0);
  CHECK(*s.cpm_conventional == 3.0);

  const std::vector<double> losing{1.0, 1.0, 0.5};
  const auto none = spend_winrate_cpm(log, losing);
  CHECK(*none.win_rate == 0.0);
  CHECK_FALSE(none.cpm_conventional);
  CHECK_FALSE(spend_winrate_cpm({}, {}).win_rate);
  CHECK_THROWS_AS(surplus(log, std::vector<double>{1.0}), EvaluationError);
}

TEST_CASE("regression metrics") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> y;
  std::vector<double> p;
  for (int i = 0; i < 5000; ++i) {
    y.push_back(u(rng));
    p.push_back(0.3 * y.back() + 0.7 * u(rng));
  }
  const auto m = regression_metrics(y, p);
  CHECK(*m.r2 == doctest::Approx(oracle::r2_one_pass(y, p)).epsilon(1e-9));
  double mse = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mse += (y[i] - p[i]) * (y[i] - p[i]);
  CHECK(*m.mse == doctest::Approx(mse / 5000.0).epsilon(1e-12));

  const auto perfect = regression_metrics(y, y);
  CHECK(*perfect.r2 == doctest::Approx(1.0));
  CHECK(*perfect.mse == 0.0);
  const std::vector<double> constant(5000, 0.4);
  CHECK_FALSE(regression_metrics(y, constant).r2);
  CHECK(regression_metrics(y, constant).mse);
  CHECK_FALSE(regression_metrics({}, {}).mse);
}

TEST_CASE("compensated sum") {
  CompensatedSum s;
  s.add(1e16);
  for (int i = 0; i < 1000; ++i) s.add(1.0);
  s.add(-1e16);
  CHECK(s.value() == 1000.0);
  CompensatedSum a;
  CompensatedSum b;
  a.add(0.1);
  b.add(0.2);
  a.merge(b);
  CHECK(a.value() == doctest::Approx(0.3));
}

TEST_CASE("run_replay agrees with brute force and goal rows add up") {
  const auto log = filter_won(generate_synthetic(default_landscape_spec(20000, 3)));
  std::vector<std::shared_ptr<const Shader>> shaders = {
      std::make_shared<ConstantRatioShader>("baseline", 0.8), std::make_shared<ConstantRatioShader>("half", 0.5),
      std::make_shared<OracleShader>(), std::make_shared<IdentityShader>()};
  const auto report = run_replay(log, shaders, "baseline");
  CHECK(report.record_count == log.size());
  for (const auto& s : shaders) {
    const auto bids = bids_of(*s, log);
    const auto ref = oracle::replay_brute_force(log, bids);
    const Metrics& m = report.at(s->name()).overall;
    CHECK(m.count == ref.n);
    CHECK(m.wins == ref.wins);
    CHECK(std::abs(m.total_surplus - static_cast<double>(ref.surplus)) <= 1e-9 * std::abs(static_cast<double>(ref.surplus)));
    CHECK(std::abs(m.total_spend - static_cast<double>(ref.spend)) <= 1e-9 * static_cast<double>(ref.spend));
    CHECK(oracle::rel_err(*m.win_rate, ref.win_rate()) <= 1e-12);
    CHECK(oracle::rel_err(*m.cpm_per_bid, ref.cpm_per_bid()) <= 1e-9);
    CHECK(oracle::rel_err(*m.cpm_conventional, ref.cpm_conventional()) <= 1e-9);

    std::size_t count = 0;
    std::size_t wins = 0;
    double surplus_sum = 0.0;
    for (const auto& g : report.at(s->name()).by_goal) {
      count += g.count;
      wins += g.wins;
      surplus_sum += g.total_surplus;
    }
    CHECK(count == m.count);
    CHECK(wins == m.wins);
    CHECK(surplus_sum == doctest::Approx(m.total_surplus).epsilon(1e-12));
  }
  const auto& oracle_m = report.at("oracle").overall;
  CHECK(*oracle_m.win_rate == 1.0);
  CHECK(*oracle_m.mse == 0.0);
  CHECK(*report.at("baseline").overall_delta.surplus_pct == 0.0);
  // full bids on won records leave no surplus, so the identity shader has no surplus delta denominator
  CHECK(report.at("identity").overall.total_surplus == 0.0);
  CHECK(*report.at("half").overall_delta.surplus_pct ==
        doctest::Approx(percent_delta(report.at("half").overall.total_surplus, report.at("baseline").overall.total_surplus).value()));
}

TEST_CASE("percent delta") {
  CHECK(*percent_delta(150.0, 100.0) == doctest::Approx(50.0));
  CHECK(*percent_delta(50.0, -100.0) == doctest::Approx(-150.0));
  CHECK_FALSE(percent_delta(1.0, 0.0));
  CHECK_FALSE(percent_delta(std::nullopt, 1.0));
}

TEST_CASE("replay errors") {
  const auto log = generate_synthetic(default_landscape_spec(100, 1));
  auto id = std::make_shared<IdentityShader>("baseline");
  CHECK_THROWS_AS(run_replay({}, {id}, "baseline"), EvaluationError);
  CHECK_THROWS_AS(run_replay(log, {id}, "other"), EvaluationError);
  CHECK_THROWS_AS(run_replay(log, {id, id}, "baseline"), EvaluationError);
  CHECK_THROWS_AS(run_replay(log, {id, nullptr}, "baseline"), EvaluationError);
  CHECK_THROWS(ConstantRatioShader("bad", 1.5));
}

TEST_CASE("a throwing shader falls back to the unshaded bid") {
  const auto log = generate_synthetic(default_landscape_spec(3000, 2));
  const auto report =
      run_replay(log, {std::make_shared<IdentityShader>("baseline"), std::make_shared<ThrowingShader>()}, "baseline");
  const auto& flaky = report.at("flaky");
  const auto cpa = static_cast<std::size_t>(GoalType::CPA);
  CHECK(flaky.overall.fallbacks == flaky.by_goal[cpa].count);
  CHECK(flaky.by_goal[cpa].fallbacks > 0);
  CHECK(flaky.by_goal[cpa].total_surplus == 0.0);
  CHECK(flaky.by_goal[cpa].total_spend == doctest::Approx(report.at("baseline").by_goal[cpa].total_spend));
}

TEST_CASE("report CSV and table") {
  const auto log = generate_synthetic(default_landscape_spec(500, 4));
  const auto report = run_replay(log, {std::make_shared<ConstantRatioShader>("baseline", 0.7)}, "baseline");
  std::ostringstream csv;
  write_report_csv(csv, report);
  const std::string text = csv.str();
  CHECK(text.rfind("shader,goal_type,metric,value\n", 0) == 0);
  CHECK(text.find("baseline,ALL,count,500\n") != std::string::npos);
  CHECK(text.find("baseline,ALL,surplus_delta_pct,0\n") != std::string::npos);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 1 + 7 * 16);
  std::ostringstream table;
  write_report_table(table, report);
  CHECK(table.str().find("baseline") != std::string::npos);
}

TEST_CASE("gamma sweep records per-gamma failures and keeps going") {
  const auto all = filter_won(generate_synthetic(default_landscape_spec(4000, 5)));
  const std::vector<AuctionRecord> train_set(all.begin(), all.begin() + 3000);
  const std::vector<AuctionRecord> test(all.begin() + 3000, all.end());
  TrainConfig cfg;
  cfg.epochs = 1;
  EncoderConfig enc;
  enc.bits_per_field = 8;
  auto base = std::make_shared<ConstantRatioShader>("baseline", 0.85);
  const auto rows = gamma_sweep(train_set, test, {0.0, 2.0, 0.5}, cfg, enc, base);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].fm);
  CHECK(rows[0].error.empty());
  CHECK_FALSE(rows[1].fm);
  CHECK_FALSE(rows[1].error.empty());
  CHECK(rows[2].fm);
  CHECK(rows[2].trace.size() == 1);
  std::ostringstream out;
  write_sweep_csv(out, rows);
  CHECK(out.str().find("\n2,NA,") != std::string::npos);
}
