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
#include <chrono>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "throttlekit/gateway.h"
#include "throttlekit/random.h"

namespace throttlekit {
namespace {

using nlohmann::json;

TEST_CASE("multiply with tokens available") {
  Gateway g(GatewayConfig{});
  const auto r = g.Handle(R"({"a": 6, "b": 7})", 0.0);
  CHECK(r.status == 200);
  CHECK(json::parse(r.body) == json{{"result", 42}});
  const auto big = g.Handle(MultiplyBody(2147483647, 2147483647), 0.0);
  CHECK(json::parse(big.body).at("result").get<std::int64_t>() ==
        std::int64_t{2147483647} * 2147483647);
}

TEST_CASE("empty bucket answers 429 with an empty body") {
  GatewayConfig c;
  c.capacity = 1;
  c.initial_tokens = 0.5;
  Gateway g(c);
  const auto r = g.Handle(MultiplyBody(1, 2), 0.0);
  CHECK(r.status == 429);
  CHECK(r.body.empty());
  CHECK(g.Stats().rejected == 1);
}

TEST_CASE("malformed bodies get 400 and spend no token") {
  GatewayConfig c;
  c.capacity = 1;
  Gateway g(c);
  for (const char* body : {"", "{}", "[1,2]", R"({"a":1})", R"({"a":1.5,"b":2})",
                           R"({"a":"1","b":2})", R"({"a":4294967296,"b":1})"}) {
    CHECK(g.Handle(body, 0.0).status == 400);
  }
  const auto stats = g.Stats();
  CHECK(stats.malformed == 7);
  CHECK(stats.admitted + stats.rejected == 0);
  CHECK(g.Bucket().tokens == 1.0);
  CHECK(g.Handle(MultiplyBody(1, 1), 0.0).status == 200);
}

TEST_CASE("800 requests within 300 s admit at most 500") {
  Gateway g(GatewayConfig{});
  Rng rng(3);
  std::vector<double> times;
  for (int i = 0; i < 800; ++i) times.push_back(rng.Uniform(0, 300));
  std::sort(times.begin(), times.end());
  for (double t : times) g.Handle(MultiplyBody(6, 7), t);
  const auto s = g.Stats();
  CHECK(s.admitted <= 500);
  CHECK(s.admitted + s.rejected == 800);
  CHECK(s.log.size() == 800);
}

TEST_CASE("zero requests: bucket stays full; reset restores initial tokens") {
  GatewayConfig c;
  c.initial_tokens = 10;
  Gateway g(c, 0.0);
  for (int i = 0; i < 10; ++i) g.Handle(MultiplyBody(1, 1), 0.0);
  CHECK(g.Bucket().tokens == doctest::Approx(0.0));
  g.Reset(0.0);
  CHECK(g.Bucket().tokens == 10.0);
  CHECK(g.Stats().admitted == 0);
  Gateway idle(GatewayConfig{}, 0.0);
  CHECK(idle.Handle("{}", 1000.0).status == 400);
  CHECK(idle.Bucket().tokens == 100.0);
}

TEST_CASE("config validation") {
  GatewayConfig c;
  c.capacity = 0.5;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = GatewayConfig{};
  c.rate_per_min = 0;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = GatewayConfig{};
  c.initial_tokens = 101;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  CHECK(ParseHostPort("127.0.0.1:80") == std::pair<std::string, int>{"127.0.0.1", 80});
  CHECK(ParseHostPort(":9").first == "0.0.0.0");
  CHECK_THROWS_AS(ParseHostPort("localhost"), ConfigError);
  CHECK_THROWS_AS(ParseHostPort("h:70000"), ConfigError);
}

TEST_CASE("two simultaneous callers with one token: one 200, one 429") {
  for (int trial = 0; trial < 200; ++trial) {
    GatewayConfig c;
    c.capacity = 1;
    c.rate_per_min = 1e-6;
    Gateway g(c);
    std::atomic<bool> go{false};
    int status[2] = {0, 0};
    std::thread threads[2];
    for (int i = 0; i < 2; ++i) {
      threads[i] = std::thread([&, i] {
        while (!go) std::this_thread::yield();
        status[i] = g.Handle(MultiplyBody(1, 2), 0.0).status;
      });
    }
    go = true;
    for (auto& t : threads) t.join();
    REQUIRE(std::min(status[0], status[1]) == 200);
    REQUIRE(std::max(status[0], status[1]) == 429);
  }
}

TEST_CASE("http: concurrent load obeys the budget and 429 has no helper "
          "headers") {
  GatewayConfig c;
  c.capacity = 5;
  c.rate_per_min = 60;
  c.listen_address = "127.0.0.1:0";
  const auto origin = std::chrono::steady_clock::now();
  auto clock = [origin] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         origin)
        .count();
  };
  HttpGatewayServer server(c, clock);
  server.Start();

  std::atomic<int> ok{0}, limited{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      httplib::Client cli("127.0.0.1", server.port());
      cli.set_keep_alive(true);
      for (int k = 0; k < 10; ++k) {
        auto res = cli.Post("/multiply", MultiplyBody(3, 4), "application/json");
        CHECK(res);
        if (!res) continue;
        if (res->status == 200) {
          CHECK(json::parse(res->body).at("result") == 12);
          ++ok;
        } else {
          CHECK(res->status == 429);
          CHECK(res->body.empty());
          CHECK_FALSE(res->has_header("Retry-After"));
          for (const auto& [name, value] : res->headers) {
            CHECK(name.rfind("RateLimit", 0) != 0);
            CHECK(name.rfind("X-RateLimit", 0) != 0);
          }
          ++limited;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  const double elapsed = clock();
  CHECK(ok + limited == 80);
  CHECK(ok <= 5 + elapsed * 1.0 + 1e-9);
  CHECK(limited > 0);

  httplib::Client cli("127.0.0.1", server.port());
  auto stats = cli.Get("/stats");
  REQUIRE(stats);
  const auto j = json::parse(stats->body);
  CHECK(j.at("admitted") == ok.load());
  CHECK(j.at("rejected") == limited.load());
  CHECK(cli.Post("/multiply", "oops", "application/json")->status == 400);
  server.Stop();
}

TEST_CASE("http: no deliberate delay for admitted requests") {
  GatewayConfig c;
  c.listen_address = "127.0.0.1:0";
  HttpGatewayServer server(c, [] { return 0.0; });
  server.Start();
  httplib::Client cli("127.0.0.1", server.port());
  cli.set_keep_alive(true);
  REQUIRE(cli.Post("/multiply", MultiplyBody(1, 1), "application/json"));
  std::vector<double> ms;
  for (int i = 0; i < 20; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = cli.Post("/multiply", MultiplyBody(2, 3), "application/json");
    ms.push_back(std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count());
    REQUIRE(res);
    CHECK(res->status == 200);
  }
  std::sort(ms.begin(), ms.end());
  CHECK(ms[ms.size() / 2] < 5.0);
  server.Stop();
}

TEST_CASE("http: bind failure is a startup error") {
  GatewayConfig c;
  c.listen_address = "127.0.0.1:0";
  HttpGatewayServer first(c, [] { return 0.0; });
  first.Start();
  c.listen_address = "127.0.0.1:" + std::to_string(first.port());
  HttpGatewayServer second(c, [] { return 0.0; });
  CHECK_THROWS_AS(second.Start(), Error);
  first.Stop();
}

TEST_CASE("stats endpoint can be disabled") {
  GatewayConfig c;
  c.listen_address = "127.0.0.1:0";
  c.stats_endpoint = false;
  HttpGatewayServer server(c, [] { return 0.0; });
  server.Start();
  httplib::Client cli("127.0.0.1", server.port());
  auto res = cli.Get("/stats");
  REQUIRE(res);
  CHECK(res->status == 404);
  server.Stop();
}

}  // namespace
}  // namespace throttlekit
