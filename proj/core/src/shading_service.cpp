#include "bidshade/shading_service.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "bidshade/feature_encoder.hpp"
#include "httplib.h"
#include "json.hpp"

namespace bidshade {

namespace {

using nlohmann::json;

class MalformedRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ShadeResponse error_response(ServiceError code, std::string message, std::string request_id = {}) {
  ShadeResponse r;
  r.error = code;
  r.error_message = std::move(message);
  r.request_id = std::move(request_id);
  return r;
}

}  // namespace

ShadeRequest ShadeRequest::from_record(const AuctionRecord& record) {
  ShadeRequest req;
  for (std::size_t f = 0; f < kNumFields; ++f) req.fields[f] = record.field_value(static_cast<Field>(f));
  req.unshaded_bid = record.unshaded_bid;
  req.goal_type = record.goal_type;
  return req;
}

ShadingService::ShadingService(std::shared_ptr<const LoadedModel> model) : model_(std::move(model)) {}

ShadingService ShadingService::from_file(const std::string& path) {
  return ShadingService(std::make_shared<const LoadedModel>(load_model_file(path)));
}

std::shared_ptr<const LoadedModel> ShadingService::snapshot() const {
  std::lock_guard lock(mutex_);
  return model_;
}

void ShadingService::reload(const std::string& path) {
  auto next = std::make_shared<const LoadedModel>(load_model_file(path));
  std::lock_guard lock(mutex_);
  model_ = std::move(next);
}

ShadeResponse ShadingService::shade(const ShadeRequest& req) const {
  const auto model = snapshot();
  if (!model || (!model->model && !model->store)) {
    return error_response(ServiceError::ModelUnavailable, "no model loaded", req.request_id);
  }
  if (!(req.unshaded_bid > 0.0) || !std::isfinite(req.unshaded_bid)) {
    return error_response(ServiceError::Malformed, "unshaded_bid must be a finite number > 0", req.request_id);
  }

  ShadeResponse resp;
  resp.request_id = req.request_id;
  resp.model_version = model->version_tag();

  const auto start = std::chrono::steady_clock::now();
  try {
    if (model->model) {
      std::array<std::string_view, kNumFields> values{};
      for (std::size_t f = 0; f < kNumFields; ++f) {
        if (req.fields[f]) values[f] = *req.fields[f];
      }
      const SparseFeatureVector x = encode_values(values, encoder_of(*model->model));
      const ShadeResult r = shade_with_prediction(predict(*model->model, x), req.unshaded_bid);
      resp.prediction = r.prediction;
      resp.ratio = r.ratio;
      resp.shaded_bid = r.shaded_bid;
    } else {
      auto value = [&req](Field f) {
        const auto& v = req.fields[static_cast<std::size_t>(f)];
        return v ? *v : std::string(kMissingToken);
      };
      const SegmentKey key{value(Field::RequestPublisherId), value(Field::PageTld), value(Field::DeviceTypeId),
                           value(Field::LayoutId)};
      resp.shaded_bid = nonlinear_shade(model->store->lookup(key), req.unshaded_bid);
      resp.ratio = resp.shaded_bid / req.unshaded_bid;
      resp.prediction = resp.ratio;
    }
  } catch (const std::exception&) {
    resp.fallback = true;
    resp.ratio = 1.0;
    resp.prediction = 1.0;
    resp.shaded_bid = req.unshaded_bid;
  }
  resp.latency_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  return resp;
}

ShadeRequest parse_shade_request(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw MalformedRequest(std::string("request is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw MalformedRequest("request must be a JSON object");
  if (!j.contains("v") || !j["v"].is_number_integer() || j["v"].get<int>() != kProtocolVersion) {
    throw MalformedRequest("request must carry \"v\": " + std::to_string(kProtocolVersion));
  }
  ShadeRequest req;
  if (j.contains("request_id")) {
    if (!j["request_id"].is_string()) throw MalformedRequest("request_id must be a string");
    req.request_id = j["request_id"].get<std::string>();
  }
  if (!j.contains("unshaded_bid") || !j["unshaded_bid"].is_number()) {
    throw MalformedRequest("unshaded_bid is required and must be a number");
  }
  req.unshaded_bid = j["unshaded_bid"].get<double>();
  if (j.contains("goal_type")) {
    if (!j["goal_type"].is_string()) throw MalformedRequest("goal_type must be a string");
    auto g = parse_goal_type(j["goal_type"].get<std::string>());
    if (!g) throw MalformedRequest("unknown goal_type");
    req.goal_type = *g;
  }
  for (std::size_t f = 0; f < kNumFields; ++f) {
    const std::string name(field_names()[f]);
    if (!j.contains(name) || j[name].is_null()) continue;
    const auto& v = j[name];
    const auto field = static_cast<Field>(f);
    if (field == Field::DayOfWeek || field == Field::HourOfDay) {
      if (!v.is_number_integer()) throw MalformedRequest(name + " must be an integer");
      const int n = v.get<int>();
      if (n < 0 || n > (field == Field::DayOfWeek ? 6 : 23)) throw MalformedRequest(name + " out of range");
      req.fields[f] = std::to_string(n);
    } else if (field == Field::IsNewUser) {
      if (v.is_boolean()) {
        req.fields[f] = v.get<bool>() ? "1" : "0";
      } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
        req.fields[f] = std::to_string(v.get<int>());
      } else {
        throw MalformedRequest("is_new_user must be a boolean or 0/1");
      }
    } else {
      if (!v.is_string()) throw MalformedRequest(name + " must be a string");
      std::string s = v.get<std::string>();
      if (!s.empty()) req.fields[f] = std::move(s);
    }
  }
  return req;
}

std::string format_shade_response(const ShadeResponse& r) {
  json j;
  j["v"] = kProtocolVersion;
  if (!r.request_id.empty()) j["request_id"] = r.request_id;
  if (r.error != ServiceError::None) {
    j["status"] = "error";
    j["error_code"] = static_cast<int>(r.error);
    j["error"] = r.error_message;
    return j.dump();
  }
  j["status"] = "ok";
  j["error_code"] = static_cast<int>(ServiceError::None);
  j["shaded_bid"] = r.shaded_bid;
  j["ratio"] = r.ratio;
  j["prediction"] = r.prediction;
  j["fallback"] = r.fallback;
  j["model_version"] = r.model_version;
  j["latency_us"] = r.latency_us;
  return j.dump();
}

std::string ShadingService::handle(std::string_view body) const {
  ShadeRequest req;
  try {
    req = parse_shade_request(body);
  } catch (const MalformedRequest& e) {
    return format_shade_response(error_response(ServiceError::Malformed, e.what()));
  }
  try {
    return format_shade_response(shade(req));
  } catch (const std::exception& e) {
    return format_shade_response(error_response(ServiceError::Internal, e.what(), req.request_id));
  }
}

struct ShadingHttpServer::Impl {
  httplib::Server server;
};

ShadingHttpServer::ShadingHttpServer(ShadingService& service) : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  server.Post("/v1/shade", [&service](const httplib::Request& req, httplib::Response& res) {
    res.set_content(service.handle(req.body), "application/json");
  });
  server.Post("/v1/reload", [&service](const httplib::Request& req, httplib::Response& res) {
    json out;
    out["v"] = kProtocolVersion;
    try {
      const json j = json::parse(req.body);
      service.reload(j.at("path").get<std::string>());
      out["status"] = "ok";
      out["model_version"] = service.snapshot()->version_tag();
    } catch (const json::exception& e) {
      out["status"] = "error";
      out["error_code"] = static_cast<int>(ServiceError::Malformed);
      out["error"] = e.what();
    } catch (const std::exception& e) {
      out["status"] = "error";
      out["error_code"] = static_cast<int>(ServiceError::ModelUnavailable);
      out["error"] = e.what();
    }
    res.set_content(out.dump(), "application/json");
  });
  server.Get("/v1/health", [&service](const httplib::Request&, httplib::Response& res) {
    const auto model = service.snapshot();
    json out{{"v", kProtocolVersion}, {"status", model ? "ok" : "error"}};
    if (model) {
      out["model_version"] = model->version_tag();
    } else {
      out["error_code"] = static_cast<int>(ServiceError::ModelUnavailable);
    }
    res.set_content(out.dump(), "application/json");
  });
}

ShadingHttpServer::~ShadingHttpServer() = default;

int ShadingHttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void ShadingHttpServer::run() { impl_->server.listen_after_bind(); }

void ShadingHttpServer::stop() { impl_->server.stop(); }

void serve_http(ShadingService& service, const std::string& host, int port) {
  ShadingHttpServer server(service);
  server.bind(host, port);
  server.run();
}

}  // namespace bidshade
