#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "bidshade/asym_loss.hpp"
#include "bidshade/feature_encoder.hpp"
#include "bidshade/model_file.hpp"
#include "bidshade/models.hpp"
#include "bidshade/shading_service.hpp"
#include "bidshade/synthetic.hpp"
#include "bidshade/trainer.hpp"
#include "json.hpp"

using namespace bidshade;

namespace {

const std::vector<AuctionRecord>& records() {
  static const auto r = filter_won(generate_synthetic(default_landscape_spec(20000, 7)));
  return r;
}

// One small training run shared by every benchmark.
const ShadingModel& fm_model() {
  static const ShadingModel m = [] {
    TrainConfig cfg;
    cfg.epochs = 1;
    return train(records(), ModelKind::Fm, cfg, {0.2}).model;
  }();
  return m;
}

std::string request_json(const AuctionRecord& r) {
  nlohmann::json j;
  j["v"] = 1;
  j["unshaded_bid"] = r.unshaded_bid;
  j["goal_type"] = std::string(to_string(r.goal_type));
  for (std::size_t f = 0; f < kNumFields; ++f) {
    const auto field = static_cast<Field>(f);
    const std::string name(field_name(field));
    if (field == Field::DayOfWeek) {
      j[name] = r.day_of_week;
    } else if (field == Field::HourOfDay) {
      j[name] = r.hour_of_day;
    } else if (field == Field::IsNewUser) {
      j[name] = r.is_new_user;
    } else {
      j[name] = r.field_value(field);
    }
  }
  return j.dump();
}

void BM_Encode(benchmark::State& state) {
  const auto& rs = records();
  const EncoderConfig enc;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode(rs[i++ % rs.size()], enc));
  }
}
BENCHMARK(BM_Encode);

void BM_FmPredict(benchmark::State& state) {
  const auto& m = std::get<FmModel>(fm_model());
  std::vector<SparseFeatureVector> xs;
  for (std::size_t i = 0; i < 1024; ++i) xs.push_back(encode(records()[i], m.encoder));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fm_predict(m, xs[i++ & 1023]));
  }
}
BENCHMARK(BM_FmPredict);

void BM_AsymLossGrad(benchmark::State& state) {
  double phi = 0.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(asym_loss_grad(0.6, phi, 0.2));
    phi = phi < 0.9 ? phi + 1e-3 : 0.3;
  }
}
BENCHMARK(BM_AsymLossGrad);

void BM_Shade(benchmark::State& state) {
  const auto& m = fm_model();
  const auto& rs = records();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(shade(m, rs[i++ % rs.size()]));
  }
}
BENCHMARK(BM_Shade);

void BM_ServiceJson(benchmark::State& state) {
  auto loaded = std::make_shared<LoadedModel>();
  loaded->kind = ModelKind::Fm;
  loaded->model = fm_model();
  const ShadingService service(loaded);
  std::vector<std::string> bodies;
  for (std::size_t i = 0; i < 256; ++i) {
    bodies.push_back(request_json(records()[i]));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(service.handle(bodies[i++ & 255]));
  }
}
BENCHMARK(BM_ServiceJson);

void BM_TrainEpoch(benchmark::State& state) {
  const std::vector<AuctionRecord> rs(records().begin(), records().begin() + 5000);
  TrainConfig cfg;
  cfg.epochs = 1;
  EncoderConfig enc;
  enc.bits_per_field = 12;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(rs, ModelKind::Fm, cfg, {0.2}, enc));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rs.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
