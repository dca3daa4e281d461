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


#include <atomic>
#include <map>
#include <chrono>
#include <thread>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "throttlekit/gateway.h"
#include "throttlekit/random.h"
#include "throttlekit/telemetry.h"

namespace throttlekit {
namespace {

TelemetryReport Rep(std::string id, std::int64_t win, std::int64_t got,
                    double ts) {
  return {std::move(id), win, got, ts};
}

TEST_CASE("wire format round trip and exact field names") {
  const auto r = Rep("client-7", 12, 3, 41.5);
  const std::string wire = EncodeReport(r);
  const auto j = nlohmann::json::parse(wire);
  CHECK(j.size() == 5);
  CHECK(j.at("v") == 1);
  CHECK(j.at("id") == "client-7");
  CHECK(j.at("win_req") == 12);
  CHECK(j.at("got_429") == 3);
  CHECK(j.at("ts") == 41.5);
  CHECK(DecodeReport(wire) == r);

  TelemetrySnapshot s{4, 40, 2, std::nullopt};
  auto sj = nlohmann::json::parse(EncodeSnapshot(s));
  CHECK_FALSE(sj.contains("limiter_rate"));
  CHECK(DecodeSnapshot(EncodeSnapshot(s)) == s);
  s.limiter_rate_per_min = 80.0;
  sj = nlohmann::json::parse(EncodeSnapshot(s));
  CHECK(sj.at("limiter_rate") == 80.0);
  CHECK(DecodeSnapshot(EncodeSnapshot(s)) == s);
}

TEST_CASE("malformed datagrams are rejected") {
  CHECK_FALSE(DecodeReport("not json"));
  CHECK_FALSE(DecodeReport(R"({"v":2,"id":"a","win_req":1,"got_429":0,"ts":0})"));
  CHECK_FALSE(DecodeReport(R"({"v":1,"id":"a","win_req":1,"got_429":2,"ts":0})"));
  CHECK_FALSE(DecodeReport(R"({"v":1,"id":"a","win_req":-1,"got_429":0,"ts":0})"));
  CHECK_FALSE(DecodeReport(R"({"v":1,"win_req":1,"got_429":0,"ts":0})"));
  CHECK_FALSE(DecodeReport(std::string(600, ' ')));
  CHECK_FALSE(DecodeSnapshot(R"({"v":1,"active":1,"total_req":3,"rep_429":2})"));
  CHECK(DecodeReport(R"({"v":1,"id":17,"win_req":1,"got_429":0,"ts":0})")
            ->client_id == "17");
}

TEST_CASE("aggregate fixture: A(10, 1x429) and B(20, 0x429)") {
  Aggregator agg(60.0);
  CHECK(agg.Aggregate(Rep("A", 10, 1, 0.0), 0.0));
  CHECK(agg.Aggregate(Rep("B", 20, 0, 0.5), 0.5));
  CHECK(agg.Snapshot(1.0) == TelemetrySnapshot{2, 30, 1, std::nullopt});
  agg.SetLimiterRate(80.0);
  CHECK(agg.Snapshot(1.0) == TelemetrySnapshot{2, 30, 1, 80.0});
}

TEST_CASE("newer report replaces the older one") {
  Aggregator agg(60.0);
  agg.Aggregate(Rep("A", 10, 1, 0.0), 0.0);
  agg.Aggregate(Rep("A", 4, 0, 5.0), 5.0);
  CHECK(agg.Snapshot(5.0) == TelemetrySnapshot{1, 4, 0, std::nullopt});
  CHECK(agg.retained() == 1);
  // An out-of-order older report does not win.
  CHECK_FALSE(agg.Aggregate(Rep("A", 99, 0, 1.0), 6.0));
  CHECK(agg.Snapshot(6.0).total_requests == 4);
}

TEST_CASE("empty and stale snapshots") {
  Aggregator agg(60.0);
  CHECK(agg.Snapshot(0.0) == TelemetrySnapshot{});
  agg.Aggregate(Rep("A", 5, 0, 0.0), 0.0);
  CHECK(agg.Snapshot(60.0).active_clients == 1);
  CHECK(agg.Snapshot(60.0 + 1e-6).active_clients == 0);
  CHECK(agg.Snapshot(61.0) == TelemetrySnapshot{});
}

TEST_CASE("future reports beyond the skew tolerance are refused") {
  Aggregator agg(60.0, std::nullopt, 1.0);
  CHECK_FALSE(agg.Aggregate(Rep("A", 5, 0, 12.0), 10.0));
  CHECK(agg.Aggregate(Rep("A", 5, 0, 10.5), 10.0));
}

TEST_CASE("single client sees its own load as the average") {
  Aggregator agg(60.0);
  agg.Aggregate(Rep("solo", 5, 0, 0.0), 0.0);
  const auto s = agg.Snapshot(0.0);
  CHECK(static_cast<double>(s.total_requests) / s.active_clients == 5.0);
}

TEST_CASE("property: snapshot totals equal the sum over retained reports") {
  Rng rng(21);
  Aggregator agg(60.0);
  std::map<std::string, TelemetryReport> latest;
  double now = 0.0;
  for (int i = 0; i < 3000; ++i) {
    now += rng.Exponential(0.5);
    const std::string id = "c" + std::to_string(rng.UniformInt(0, 30));
    const std::int64_t win = rng.UniformInt(0, 50);
    const auto rep = Rep(id, win, rng.UniformInt(0, win), now);
    agg.Aggregate(rep, now);
    latest[id] = rep;
    std::int64_t active = 0, total = 0, with429 = 0;
    for (const auto& [k, r] : latest) {
      if (now - r.sent_at <= 60.0) {
        ++active;
        total += r.window_requests;
        with429 += r.got_429 > 0;
      }
    }
    REQUIRE(agg.Snapshot(now) == TelemetrySnapshot{active, total, with429,
                                                    std::nullopt});
  }
}

TEST_CASE("embedded channel counts messages") {
  Aggregator agg(60.0);
  EmbeddedTelemetry ch(agg);
  auto s = ch.Exchange(Rep("A", 3, 1, 1.0), 1.0);
  REQUIRE(s);
  CHECK(s->active_clients == 1);
  CHECK(s->reported_429 == 1);
  CHECK(ch.messages() == 1);
}

struct SteadyClock {
  std::chrono::steady_clock::time_point origin = std::chrono::steady_clock::now();
  Seconds operator()() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         origin)
        .count();
  }
};

TEST_CASE("udp round trip on loopback") {
  SteadyClock clock;
  TelemetryServerConfig config;
  config.limiter_rate_per_min = 80.0;
  TelemetryServer server(config, clock);
  server.Start();
  UdpTelemetryClient client("127.0.0.1", server.port());
  const auto start = std::chrono::steady_clock::now();
  auto snap = client.Exchange(Rep("A", 10, 1, clock()), clock());
  const auto elapsed = std::chrono::steady_clock::now() - start;
  REQUIRE(snap);
  CHECK(*snap == TelemetrySnapshot{1, 10, 1, 80.0});
  CHECK(elapsed < std::chrono::milliseconds(50));
  CHECK(client.messages() == 1);

  server.SetLimiterRate(120.0);
  snap = client.Exchange(Rep("B", 20, 0, clock()), clock());
  REQUIRE(snap);
  CHECK(*snap == TelemetrySnapshot{2, 30, 1, 120.0});
  server.Stop();
}

TEST_CASE("udp loss leaves the client without a snapshot") {
  SteadyClock clock;
  TelemetryServer server(TelemetryServerConfig{}, clock);
  server.Start();
  const int port = server.port();
  server.Stop();
  UdpTelemetryClient client("127.0.0.1", port, 0.05);
  CHECK_FALSE(client.Exchange(Rep("A", 1, 0, 0.0), 0.0).has_value());
}

TEST_CASE("100 concurrent reporters are all answered with exact counts") {
  SteadyClock clock;
  TelemetryServer server(TelemetryServerConfig{}, clock);
  server.Start();
  std::atomic<int> answered{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 100; ++i) {
    threads.emplace_back([&, i] {
      UdpTelemetryClient client("127.0.0.1", server.port(), 1.0);
      const auto rep = Rep("c" + std::to_string(i), i, i % 2, clock());
      for (int attempt = 0; attempt < 3; ++attempt) {
        if (client.Exchange(rep, clock())) {
          ++answered;
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(answered == 100);
  const auto s = server.Snapshot();
  CHECK(s.active_clients == 100);
  CHECK(s.total_requests == 99 * 100 / 2);
  CHECK(s.reported_429 == 50);
  server.Stop();
}

TEST_CASE("telemetry traffic leaves the gateway ledger untouched") {
  SteadyClock clock;
  HttpGatewayServer gateway([] {
    GatewayConfig c;
    c.listen_address = "127.0.0.1:0";
    return c;
  }(), clock);
  gateway.Start();
  TelemetryServer telemetry(TelemetryServerConfig{}, clock);
  telemetry.Start();
  const auto before = gateway.gateway().Stats();
  const auto bucket_before = gateway.gateway().Bucket();
  UdpTelemetryClient client("127.0.0.1", telemetry.port());
  for (int i = 0; i < 200; ++i) {
    client.Exchange(Rep("c" + std::to_string(i % 7), i, 1, clock()), clock());
  }
  const auto after = gateway.gateway().Stats();
  CHECK(after.admitted == before.admitted);
  CHECK(after.rejected == before.rejected);
  CHECK(after.log.size() == before.log.size());
  CHECK(gateway.gateway().Bucket().tokens == bucket_before.tokens);
  CHECK(telemetry.reports_received() > 190);  // UDP, even on loopback
  telemetry.Stop();
  gateway.Stop();
}

}  // namespace
}  // namespace throttlekit
