// Copyright 2026 The ThrottleKit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "throttlekit/gateway.h"

#include <charconv>
#include <limits>
#include <utility>

#include "httplib.h"
#include "json.hpp"

namespace throttlekit {

using nlohmann::json;

void GatewayConfig::Validate() const {
  if (!(capacity >= 1.0)) throw ConfigError("gateway capacity must be >= 1");
  if (!(rate_per_min > 0)) throw ConfigError("gateway rate must be positive");
  if (initial_tokens && (*initial_tokens < 0 || *initial_tokens > capacity)) {
    throw ConfigError("initial tokens must lie in [0, capacity]");
  }
}

std::optional<MultiplyPayload> ParseMultiplyBody(std::string_view body) {
  json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return std::nullopt;
  auto a = j.find("a");
  auto b = j.find("b");
  if (a == j.end() || b == j.end()) return std::nullopt;
  if (!a->is_number_integer() || !b->is_number_integer()) return std::nullopt;
  constexpr auto kMin = std::numeric_limits<std::int32_t>::min();
  constexpr auto kMax = std::numeric_limits<std::int32_t>::max();
  auto in_range = [&](const json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>() <= kMax;
    const auto x = v.get<std::int64_t>();
    return x >= kMin && x <= kMax;
  };
  if (!in_range(*a) || !in_range(*b)) return std::nullopt;
  return MultiplyPayload{static_cast<std::int32_t>(a->get<std::int64_t>()),
                         static_cast<std::int32_t>(b->get<std::int64_t>())};
}

std::string MultiplyBody(std::int32_t a, std::int32_t b) {
  return json{{"a", a}, {"b", b}}.dump();
}

Gateway::Gateway(GatewayConfig config, Seconds start)
    : config_(std::move(config)) {
  config_.Validate();
  Reset(start);
}

void Gateway::Reset(Seconds start) {
  std::lock_guard lock(mu_);
  bucket_ = TokenBucketState{config_.capacity,
                             config_.initial_tokens.value_or(config_.capacity),
                             PerMinuteToPerSecond(config_.rate_per_min), start};
  stats_ = GatewayStats{};
}

Response Gateway::HandleLocked(const std::optional<MultiplyPayload>& payload,
                               Seconds now) {
  if (!payload) {
    ++stats_.malformed;
    return {400, R"({"error":"expected {\"a\": <int>, \"b\": <int>}"})"};
  }
  auto result = TryConsume(bucket_, now);
  bucket_ = result.state;
  stats_.log.push_back({now, result.admitted});
  if (!result.admitted) {
    ++stats_.rejected;
    return {429, ""};
  }
  ++stats_.admitted;
  const std::int64_t product =
      static_cast<std::int64_t>(payload->a) * static_cast<std::int64_t>(payload->b);
  return {200, json{{"result", product}}.dump()};
}

Response Gateway::Handle(std::string_view body, Seconds now) {
  auto payload = ParseMultiplyBody(body);
  std::lock_guard lock(mu_);
  return HandleLocked(payload, now);
}

Response Gateway::Handle(std::string_view body, const Clock& clock) {
  auto payload = ParseMultiplyBody(body);
  std::lock_guard lock(mu_);
  // Clamp so that a clock read racing the lock can never move the ledger back.
  return HandleLocked(payload, std::max(clock(), bucket_.last_refill));
}

GatewayStats Gateway::Stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

TokenBucketState Gateway::Bucket() const {
  std::lock_guard lock(mu_);
  return bucket_;
}

std::pair<std::string, int> ParseHostPort(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("expected host:port, got '" + std::string(address) + "'");
  }
  std::string host(address.substr(0, colon));
  if (host.empty()) host = "0.0.0.0";
  int port = -1;
  const auto digits = address.substr(colon + 1);
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port < 0 ||
      port > 65535) {
    throw ConfigError("invalid port in '" + std::string(address) + "'");
  }
  return {host, port};
}

// --- HTTP front end ----------------------------------------------------------

struct HttpGatewayServer::Impl {
  httplib::Server server;
};

HttpGatewayServer::HttpGatewayServer(GatewayConfig config,
                                     Gateway::Clock clock)
    : config_(config),
      clock_(std::move(clock)),
      gateway_(std::move(config), clock_()),
      impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  const auto workers = static_cast<size_t>(std::max(1, config_.worker_threads));
  server.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  server.set_keep_alive_timeout(config_.keep_alive_seconds);
  server.set_keep_alive_max_count(std::numeric_limits<int>::max() / 2);
  server.Post("/multiply",
              [this](const httplib::Request& req, httplib::Response& res) {
                Response r = gateway_.Handle(req.body, clock_);
                res.status = r.status;
                if (!r.body.empty()) res.set_content(r.body, "application/json");
              });
  if (config_.stats_endpoint) {
    server.Get("/stats", [this](const httplib::Request&,
                                httplib::Response& res) {
      const GatewayStats stats = gateway_.Stats();
      json log = json::array();
      for (const auto& rec : stats.log) {
        log.push_back({rec.timestamp, rec.admitted ? 1 : 0});
      }
      json j = {{"admitted", stats.admitted},
                {"rejected", stats.rejected},
                {"malformed", stats.malformed},
                {"log", std::move(log)}};
      res.set_content(j.dump(), "application/json");
    });
  }
}

HttpGatewayServer::~HttpGatewayServer() { Stop(); }

void HttpGatewayServer::Bind() {
  auto [host, port] = ParseHostPort(config_.listen_address);
  auto& server = impl_->server;
  // httplib's default sets SO_REUSEPORT, which would let a second gateway
  // share the port with its own bucket.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (port == 0) {
    port_ = server.bind_to_any_port(host);
  } else {
    port_ = server.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) {
    throw Error("cannot bind gateway to " + config_.listen_address);
  }
}

void HttpGatewayServer::Start() {
  Bind();
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpGatewayServer::Run() {
  Bind();
  impl_->server.listen_after_bind();
}

void HttpGatewayServer::Stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace throttlekit
