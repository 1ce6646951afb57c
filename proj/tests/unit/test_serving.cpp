#include <fstream>
#include <random>
#include <thread>

#include "bidshade/model_file.hpp"
#include "bidshade/shading_service.hpp"
#include "bidshade/synthetic.hpp"
#include "bidshade/trainer.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "support/oracles.hpp"

using namespace bidshade;
using nlohmann::json;

namespace {

EncoderConfig enc(std::uint32_t bits) {
  EncoderConfig e;
  e.bits_per_field = bits;
  return e;
}

ShadingModel trained_fm(std::uint32_t bits = 9) {
  const auto records = filter_won(generate_synthetic(default_landscape_spec(3000, 31)));
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.k = 4;
  return train(records, ModelKind::Fm, cfg, {0.2}, enc(bits)).model;
}

std::shared_ptr<const LoadedModel> as_loaded(const ShadingModel& m) {
  return std::make_shared<const LoadedModel>(deserialize_model(serialize_model(m)));
}

std::string request_json(const AuctionRecord& r, const std::string& id) {
  json j;
  j["v"] = 1;
  j["request_id"] = id;
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

}  // namespace

TEST_CASE("model file round trip preserves float32-rounded predictions") {
  ShadingModel m = trained_fm();
  const auto bytes = serialize_model(m);
  const LoadedModel loaded = deserialize_model(bytes);
  REQUIRE(loaded.model);
  CHECK(loaded.kind == ModelKind::Fm);
  ShadingModel rounded = m;
  round_to_float32(rounded);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto x = encode(oracle::random_record(rng), enc(9));
    CHECK(predict(*loaded.model, x) == predict(rounded, x));
  }
  CHECK(serialize_model(*loaded.model) == bytes);
  CHECK(loaded.metadata == std::get<FmModel>(m).metadata);
  CHECK(loaded.version_tag().rfind("fm-", 0) == 0);
}

TEST_CASE("linear model and file helpers") {
  std::mt19937_64 rng(2);
  auto lm = LinearModel::zeros(enc(5));
  for (auto& w : lm.w) w = std::uniform_real_distribution<double>(-1, 1)(rng);
  lm.w0 = 0.25;
  lm.metadata = {9, 0.6, 3, "1-2"};
  oracle::TempDir dir("serving");
  save_model(lm, dir.file("lm.bsm"));
  const ShadingModel back = load_model(dir.file("lm.bsm"));
  REQUIRE(std::holds_alternative<LinearModel>(back));
  const auto& got = std::get<LinearModel>(back);
  CHECK(got.w0 == 0.25);
  CHECK(got.metadata == lm.metadata);
  for (std::size_t i = 0; i < lm.w.size(); ++i) CHECK(got.w[i] == static_cast<double>(static_cast<float>(lm.w[i])));
  CHECK_THROWS_AS(load_segment_store(dir.file("lm.bsm")), ModelFormatError);
  CHECK_THROWS_AS(load_model_file(dir.file("missing.bsm")), ModelFormatError);
}

TEST_CASE("corrupt model files are rejected with a reason") {
  const auto bytes = serialize_model(trained_fm(6));
  using R = ModelFormatError::Reason;
  auto reason_of = [](std::vector<std::uint8_t> b) {
    try {
      (void)deserialize_model(b);
    } catch (const ModelFormatError& e) {
      return e.reason();
    }
    FAIL("expected a format error");
    return R::Invalid;
  };
  auto b = bytes;
  b[0] = 'X';
  CHECK(reason_of(b) == R::BadMagic);
  b = bytes;
  b[8] = 2;
  CHECK(reason_of(b) == R::UnsupportedVersion);
  b = bytes;
  b[b.size() / 2] ^= 0x40;
  CHECK(reason_of(b) == R::ChecksumMismatch);
  b = bytes;
  b.back() ^= 1;
  CHECK(reason_of(b) == R::ChecksumMismatch);
  CHECK(reason_of({bytes.begin(), bytes.begin() + 4}) == R::Truncated);
}

TEST_CASE("segment store file round trip") {
  const auto records = generate_synthetic(default_landscape_spec(5000, 8));
  const SegmentStore store = fit_segment_store(records);
  oracle::TempDir dir("segments");
  save_segment_store(store, dir.file("base.bsm"));
  const SegmentStore back = load_segment_store(dir.file("base.bsm"));
  const auto a = store.entries();
  const auto b = back.entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(b[i].second.b1 == static_cast<double>(static_cast<float>(a[i].second.b1)));
    CHECK(b[i].second.observations == a[i].second.observations);
  }
  CHECK(back.config().forgetting == store.config().forgetting);
  const LoadedModel loaded = load_model_file(dir.file("base.bsm"));
  CHECK(loaded.kind == ModelKind::Segmented);
  CHECK(loaded.store);
}

TEST_CASE("served responses match offline shading exactly") {
  const ShadingModel m = trained_fm();
  const auto loaded = as_loaded(m);
  ShadingService service(loaded);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto r = oracle::random_record(rng);
    const auto offline = shade(*loaded->model, r);
    const auto direct = service.shade(ShadeRequest::from_record(r));
    CHECK(direct.error == ServiceError::None);
    CHECK_FALSE(direct.fallback);
    CHECK(direct.shaded_bid == offline.shaded_bid);
    CHECK(direct.prediction == offline.prediction);
    const json j = json::parse(service.handle(request_json(r, "r" + std::to_string(i))));
    CHECK(j["status"] == "ok");
    CHECK(j["shaded_bid"].get<double>() == offline.shaded_bid);
    CHECK(j["ratio"].get<double>() == offline.ratio);
    CHECK(j["request_id"] == "r" + std::to_string(i));
    CHECK(j["model_version"] == loaded->version_tag());
  }
}

TEST_CASE("segmented store is servable") {
  const auto records = generate_synthetic(default_landscape_spec(3000, 4));
  const SegmentStore store = fit_segment_store(records);
  auto loaded = std::make_shared<const LoadedModel>(deserialize_model(serialize_segment_store(store)));
  ShadingService service(loaded);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto resp = service.shade(ShadeRequest::from_record(records[i]));
    CHECK(resp.shaded_bid == loaded->store->shade(records[i]));
  }
}

TEST_CASE("request parsing and error codes") {
  ShadingService service(as_loaded(trained_fm(6)));
  auto code = [&](const std::string& body) { return json::parse(service.handle(body))["error_code"].get<int>(); };
  CHECK(code(R"({"v":1,"unshaded_bid":2.0})") == 0);
  CHECK(code("not json") == 1);
  CHECK(code("[1,2]") == 1);
  CHECK(code(R"({"unshaded_bid":2.0})") == 1);
  CHECK(code(R"({"v":2,"unshaded_bid":2.0})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":"2"})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":-1})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":1,"hour_of_day":24})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":1,"day_of_week":1.5})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":1,"goal_type":"CPM"})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":1,"is_new_user":2})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":1,"page_tld":5})") == 1);
  CHECK(code(R"({"v":1,"unshaded_bid":1,"is_new_user":1,"page_tld":"a"})") == 0);

  const auto missing = parse_shade_request(R"({"v":1,"unshaded_bid":3})");
  CHECK_FALSE(missing.fields[0]);
  ShadingService empty(nullptr);
  CHECK(code(R"({"v":1,"unshaded_bid":2.0})") == 0);
  CHECK(json::parse(empty.handle(R"({"v":1,"unshaded_bid":2.0})"))["error_code"] == 2);
}

TEST_CASE("missing request fields encode like missing log fields") {
  const auto model = trained_fm(6);
  ShadingService service(as_loaded(model));
  AuctionRecord r;
  r.unshaded_bid = 3.0;
  const auto resp = service.shade(parse_shade_request(R"({"v":1,"unshaded_bid":3.0,"day_of_week":0,"hour_of_day":0,"is_new_user":false})"));
  CHECK(resp.prediction == shade(*service.snapshot()->model, r).prediction);
}

TEST_CASE("a model/encoder mismatch falls back to the unshaded bid") {
  auto fm = std::get<FmModel>(trained_fm(6));
  fm.encoder.bits_per_field = 7;  // indices now exceed the weight arrays
  auto loaded = std::make_shared<LoadedModel>();
  loaded->kind = ModelKind::Fm;
  loaded->model = fm;
  ShadingService service(loaded);
  AuctionRecord r;
  r.unshaded_bid = 2.5;
  bool any_fallback = false;
  for (int h = 0; h < 24; ++h) {
    r.hour_of_day = h;
    const auto resp = service.shade(ShadeRequest::from_record(r));
    CHECK(resp.error == ServiceError::None);
    if (resp.fallback) {
      any_fallback = true;
      CHECK(resp.shaded_bid == 2.5);
      CHECK(resp.ratio == 1.0);
    }
  }
  CHECK(any_fallback);
}

TEST_CASE("reload swaps models atomically") {
  oracle::TempDir dir("reload");
  save_model(trained_fm(6), dir.file("a.bsm"));
  auto lm = LinearModel::zeros(enc(6));
  lm.w0 = 0.5;
  save_model(lm, dir.file("b.bsm"));
  ShadingService service = ShadingService::from_file(dir.file("a.bsm"));
  const auto before = service.snapshot()->version_tag();
  service.reload(dir.file("b.bsm"));
  CHECK(service.snapshot()->version_tag() != before);
  AuctionRecord r;
  r.unshaded_bid = 4.0;
  CHECK(service.shade(ShadeRequest::from_record(r)).shaded_bid == 2.0);
  CHECK_THROWS(service.reload(dir.file("nope.bsm")));
  CHECK(service.shade(ShadeRequest::from_record(r)).shaded_bid == 2.0);
}

TEST_CASE("HTTP loopback") {
  oracle::TempDir dir("http");
  const auto model = trained_fm(6);
  save_model(model, dir.file("m.bsm"));
  ShadingService service = ShadingService::from_file(dir.file("m.bsm"));
  ShadingHttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { server.run(); });

  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  AuctionRecord r;
  r.unshaded_bid = 7.0;
  r.page_tld = "site3.com";
  auto res = client.Post("/v1/shade", request_json(r, "http-1"), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const json j = json::parse(res->body);
  CHECK(j["request_id"] == "http-1");
  CHECK(j["shaded_bid"].get<double>() == shade(*service.snapshot()->model, r).shaded_bid);

  auto health = client.Get("/v1/health");
  REQUIRE(health);
  CHECK(json::parse(health->body)["status"] == "ok");

  auto bad = client.Post("/v1/reload", R"({"path":"/nonexistent.bsm"})", "application/json");
  REQUIRE(bad);
  CHECK(json::parse(bad->body)["error_code"] == 2);
  auto malformed = client.Post("/v1/reload", "{", "application/json");
  REQUIRE(malformed);
  CHECK(json::parse(malformed->body)["error_code"] == 1);

  server.stop();
  t.join();
}
