#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "bidshade/auction_record.hpp"
#include "bidshade/model_file.hpp"

namespace bidshade {

inline constexpr int kProtocolVersion = 1;

enum class ServiceError : int { None = 0, Malformed = 1, ModelUnavailable = 2, Internal = 3 };

struct ShadeRequest {
  /// Field values in schema order; absent entries encode as "__MISSING__".
  std::array<std::optional<std::string>, kNumFields> fields{};
  double unshaded_bid = 0.0;
  GoalType goal_type = GoalType::None;
  std::string request_id;

  static ShadeRequest from_record(const AuctionRecord& record);
};

struct ShadeResponse {
  ServiceError error = ServiceError::None;
  std::string error_message;
  std::string request_id;
  double shaded_bid = 0.0;
  double ratio = 1.0;
  double prediction = 1.0;
  bool fallback = false;
  std::string model_version;
  double latency_us = 0.0;  // encode + predict + clamp only
};

/// Stateless shading endpoint over an immutable model. reload() builds the new model
/// completely, then swaps it in under a lock; each request works on one snapshot.
class ShadingService {
 public:
  explicit ShadingService(std::shared_ptr<const LoadedModel> model);
  static ShadingService from_file(const std::string& path);

  ShadeResponse shade(const ShadeRequest& request) const;

  /// JSON request body -> JSON response body (see docs/protocol.md).
  std::string handle(std::string_view body) const;

  /// Loads `path` and swaps it in. On failure the current model stays active and the
  /// error is rethrown.
  void reload(const std::string& path);

  std::shared_ptr<const LoadedModel> snapshot() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const LoadedModel> model_;
};

ShadeRequest parse_shade_request(std::string_view json_body);
std::string format_shade_response(const ShadeResponse& response);

/// HTTP/1.1 front end: POST /v1/shade, POST /v1/reload, GET /v1/health.
class ShadingHttpServer {
 public:
  explicit ShadingHttpServer(ShadingService& service);
  ~ShadingHttpServer();
  ShadingHttpServer(const ShadingHttpServer&) = delete;
  ShadingHttpServer& operator=(const ShadingHttpServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called from another thread.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking HTTP/1.1 server: POST /v1/shade, POST /v1/reload, GET /v1/health.
/// Returns when the server stops; throws if it cannot bind.
void serve_http(ShadingService& service, const std::string& host, int port);

}  // namespace bidshade
