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

// Rate-limited toy service. POST /multiply with {"a": <int>, "b": <int>}
// answers 200 {"result": a*b} when the shared token bucket admits the call,
// and 429 with an empty body (no Retry-After or RateLimit-* headers) when it
// does not. Malformed bodies get 400 and never touch the bucket.

#ifndef THROTTLEKIT_GATEWAY_H_
#define THROTTLEKIT_GATEWAY_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "throttlekit/domain.h"

namespace throttlekit {

struct GatewayConfig {
  double capacity = 100.0;
  double rate_per_min = 80.0;
  std::optional<double> initial_tokens;  // defaults to capacity
  std::string listen_address = "127.0.0.1:8080";
  bool stats_endpoint = true;
  int keep_alive_seconds = 350;
  // Each keep-alive connection holds a worker for its lifetime.
  int worker_threads = 128;

  void Validate() const;
};

struct AdmitRecord {
  Seconds timestamp = 0.0;
  bool admitted = false;
};

struct GatewayStats {
  std::int64_t admitted = 0;
  std::int64_t rejected = 0;
  std::int64_t malformed = 0;  // 400s; not part of the admission ledger
  std::vector<AdmitRecord> log;
};

struct Response {
  int status = 0;
  std::string body;
};

struct MultiplyPayload {
  std::int32_t a = 0;
  std::int32_t b = 0;
};

/// Parses {"a": <int32>, "b": <int32>}; nullopt on anything else.
std::optional<MultiplyPayload> ParseMultiplyBody(std::string_view body);
std::string MultiplyBody(std::int32_t a, std::int32_t b);

/// Thread-safe admission core. Every decision and its stats update happen
/// under one lock, so the token ledger is exact under concurrent callers.
class Gateway {
 public:
  using Clock = std::function<Seconds()>;

  explicit Gateway(GatewayConfig config, Seconds start = 0.0);

  Response Handle(std::string_view body, Seconds now);
  /// Reads the clock while holding the admission lock, so decisions are
  /// taken in timestamp order even with racing callers.
  Response Handle(std::string_view body, const Clock& clock);

  /// Fresh bucket at `start`; stats cleared.
  void Reset(Seconds start = 0.0);

  GatewayStats Stats() const;
  TokenBucketState Bucket() const;
  const GatewayConfig& config() const { return config_; }

 private:
  Response HandleLocked(const std::optional<MultiplyPayload>& payload,
                        Seconds now);

  GatewayConfig config_;
  mutable std::mutex mu_;
  TokenBucketState bucket_;
  GatewayStats stats_;
};

/// HTTP/1.1 keep-alive front end for a Gateway.
class HttpGatewayServer {
 public:
  HttpGatewayServer(GatewayConfig config, Gateway::Clock clock);
  ~HttpGatewayServer();
  HttpGatewayServer(const HttpGatewayServer&) = delete;
  HttpGatewayServer& operator=(const HttpGatewayServer&) = delete;

  /// Binds and serves on a background thread. Throws Error on bind failure.
  void Start();
  /// Binds and serves on the calling thread until Stop().
  void Run();
  void Stop();

  int port() const { return port_; }
  Gateway& gateway() { return gateway_; }

 private:
  struct Impl;
  void Bind();

  GatewayConfig config_;
  Gateway::Clock clock_;
  Gateway gateway_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

/// Splits "host:port". Throws ConfigError.
std::pair<std::string, int> ParseHostPort(std::string_view address);

}  // namespace throttlekit

#endif  // THROTTLEKIT_GATEWAY_H_
