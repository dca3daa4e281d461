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


#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "throttlekit/strategies.h"

namespace throttlekit {
namespace {

constexpr double kPerMin = 1.0 / 60.0;

UbState Ub(double bound, double cap) {
  UbState s;
  s.upper_bound = bound;
  s.cap = cap;
  s.initial_bound = 1.0;
  return s;
}

AtbState Atb(double rate_per_min, double congestion_per_min, double tokens = 0,
             double alpha = 1.2, double beta = 1.2) {
  AtbState s;
  s.bucket = {15.0, tokens, rate_per_min * kPerMin, 0.0};
  s.last_congestion_rate = congestion_per_min * kPerMin;
  s.alpha = alpha;
  s.beta = beta;
  return s;
}

TEST_CASE("strategy names round-trip") {
  for (auto k : {StrategyKind::kUb, StrategyKind::kWb, StrategyKind::kAtb,
                 StrategyKind::kAatb}) {
    CHECK(ParseStrategyKind(ToString(k)) == k);
  }
  CHECK(ParseStrategyKind("AATB") == StrategyKind::kAatb);
  CHECK_THROWS_AS(ParseStrategyKind("tcp"), ConfigError);
}

TEST_CASE("ub_on_reject doubles the bound up to the cap") {
  Rng rng(1);
  auto r = UbOnReject(Ub(1, 32), rng);
  CHECK(r.wait >= 0.0);
  CHECK(r.wait < 1.0);
  CHECK(r.bound == 1.0);
  CHECK(r.state.upper_bound == 2.0);

  CHECK(UbOnReject(Ub(32, 32), rng).state.upper_bound == 32.0);

  UbState s = Ub(1, 32);
  std::vector<double> bounds;
  for (int k = 0; k < 5; ++k) {
    auto rr = UbOnReject(s, rng);
    bounds.push_back(rr.bound);
    s = rr.state;
  }
  CHECK(bounds == std::vector<double>{1, 2, 4, 8, 16});
  CHECK(UbOnSuccess(s).upper_bound == 1.0);
}

TEST_CASE("ub cap is drawn once per client from [30, 34]") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto s = UbState::Create(UbParams{}, rng);
    CHECK(s.cap >= 30.0);
    CHECK(s.cap <= 34.0);
    CHECK(s.upper_bound == 1.0);
  }
}

TEST_CASE("ub waits are uniform over the bound") {
  // Mean of U(0, 8) is 4 with standard error 8/sqrt(12 n).
  Rng rng(5);
  const int n = 20000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += UbOnReject(Ub(8, 32), rng).wait;
  const double se = 8.0 / std::sqrt(12.0 * n);
  CHECK(std::fabs(sum / n - 4.0) < 4 * se);
}

TEST_CASE("ub fresh-draw mode ignores doubling") {
  Rng rng(9);
  UbState s = Ub(1, 32);
  s.mode = UbBoundMode::kFreshDraw;
  for (int i = 0; i < 50; ++i) {
    auto r = UbOnReject(s, rng);
    CHECK(r.bound >= 30.0);
    CHECK(r.bound <= 34.0);
    CHECK(r.wait < r.bound);
    s = r.state;
  }
}

TEST_CASE("wb_earliest_permit sliding window") {
  WbState s;
  s.max_per_window = 4;
  s.attempt_log = {0, 10, 20, 30};
  CHECK(WbEarliestPermit(s, 40) == 60.0);
  s.attempt_log = {0, 10, 20};
  CHECK(WbEarliestPermit(s, 40) == 40.0);
  s.max_per_window = 1;
  s.attempt_log = {59.9};
  CHECK(WbEarliestPermit(s, 60) == doctest::Approx(119.9));
  // Attempts exactly 60 s old have left (now - 60, now].
  s.attempt_log = {0.0};
  CHECK(WbEarliestPermit(s, 60) == 60.0);
}

TEST_CASE("atb_acquire") {
  auto r = AtbAcquire(Atb(15, 30, 1.5), 0.0);
  CHECK(r.ready_at == 0.0);
  CHECK(r.state.bucket.tokens == doctest::Approx(0.5));
  // Ten idle seconds at 0.25/s add 2.5 tokens before the spend.
  r = AtbAcquire(Atb(15, 30, 1.5), 10.0);
  CHECK(r.ready_at == 10.0);
  CHECK(r.state.bucket.tokens == doctest::Approx(3.0));

  AtbState s = Atb(15, 30, 0.9);
  s.bucket.rate = 0.25;
  r = AtbAcquire(s, 0.0);
  CHECK(r.ready_at == doctest::Approx((1 - 0.9) / 0.25));
  CHECK(r.state.bucket.tokens == doctest::Approx(0.0));
  CHECK(r.state.bucket.last_refill == doctest::Approx(0.4));

  // Empty since t=0: the token completes at 4 s regardless of when asked.
  r = AtbAcquire(Atb(15, 30, 0.0), 3.0);
  CHECK(r.ready_at == doctest::Approx(60.0 / 15.0));
  r = AtbAcquire(Atb(15, 30, 0.0), 0.0);
  CHECK(r.ready_at == doctest::Approx(4.0));
}

TEST_CASE("atb_increase_rate") {
  CHECK(AtbIncreaseRate(Atb(10, 30)).rate_per_min() == doctest::Approx(12));
  CHECK(AtbIncreaseRate(Atb(40, 30)).rate_per_min() == doctest::Approx(48));
  CHECK(AtbIncreaseRate(Atb(1, 30)).rate_per_min() == doctest::Approx(1.6));
  // α applies below the congestion rate, β at or above it.
  CHECK(AtbIncreaseRate(Atb(10, 30, 0, 2.0, 1.5)).rate_per_min() ==
        doctest::Approx(20));
  CHECK(AtbIncreaseRate(Atb(30, 30, 0, 2.0, 1.5)).rate_per_min() ==
        doctest::Approx(45));
}

TEST_CASE("atb_decrease_rate") {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto s = AtbDecreaseRate(Atb(20, 30, 3.0), rng);
    CHECK(s.rate_per_min() == doctest::Approx(10));
    CHECK(s.last_congestion_rate == doctest::Approx(20 * kPerMin));
    CHECK(s.bucket.tokens == 0.0);
  }
  CHECK(AtbDecreaseRate(Atb(1, 30), 0.5).rate_per_min() == doctest::Approx(1.1));
  CHECK(AtbDecreaseRate(Atb(1, 30), -0.5).rate_per_min() ==
        doctest::Approx(0.5));
}

TEST_CASE("property: atb rate algebra over random states") {
  Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    const double rate = rng.Uniform(0.1, 200);
    const double cong = rng.Uniform(0.1, 200);
    const auto s = Atb(rate, cong, rng.Uniform(0, 15), rng.Uniform(1, 2),
                       rng.Uniform(1, 2));
    const auto down = AtbDecreaseRate(s, rng);
    CHECK(down.bucket.rate >= std::max((0.6 - 0.5) * kPerMin,
                                       s.bucket.rate / 2) - 1e-12);
    CHECK(down.bucket.tokens == 0.0);
    const auto up = AtbIncreaseRate(s);
    CHECK(up.bucket.rate >= s.bucket.rate + 0.6 * kPerMin - 1e-12);
  }
}

AatbState Aatb(double rate_per_min, double alpha = 1.4) {
  AatbParams p;
  p.atb.alpha = alpha;
  p.atb.initial_rate_per_min = rate_per_min;
  return AatbState::Create(p, 0.0);
}

TelemetrySnapshot Snap(std::int64_t active, std::int64_t total,
                       std::int64_t rep429,
                       std::optional<double> limiter = std::nullopt) {
  return {active, total, rep429, limiter};
}

TEST_CASE("aatb_routine_update raises rate when below average load") {
  AatbState s = Aatb(10);
  for (int i = 0; i < 5; ++i) AatbRecordSend(s, 10.0 + i);
  Rng rng(1);
  const auto next = AatbRoutineUpdate(s, Snap(5, 50, 0), 30.0, rng);
  // avg 10, own 5 < 7.5 → max(10 × 1.4, 10.6).
  CHECK(next.atb.rate_per_min() == doctest::Approx(14));
  CHECK(next.last_rate_change == 30.0);
}

TEST_CASE("aatb_routine_update backs off on reported congestion") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto next = AatbRoutineUpdate(Aatb(10), Snap(5, 50, 2), 100.0, rng);
    CHECK(next.next_acquire >= 100.0 + 28.0);
    CHECK(next.next_acquire <= 100.0 + 32.0);
    CHECK(next.atb.rate_per_min() == doctest::Approx(10));
  }
}

TEST_CASE("aatb_routine_update guard and missing snapshot") {
  Rng rng(3);
  AatbState s = Aatb(10);
  s.last_rate_change = 20.0;
  const auto guarded = AatbRoutineUpdate(s, Snap(5, 50, 0), 40.0, rng);
  CHECK(guarded.atb.bucket.rate == s.atb.bucket.rate);
  CHECK(guarded.last_rate_change == 20.0);
  CHECK(guarded.next_acquire == s.next_acquire);

  const auto none = AatbRoutineUpdate(s, std::nullopt, 100.0, rng);
  CHECK(none.atb.bucket.rate == s.atb.bucket.rate);
  CHECK_FALSE(none.latest_snapshot.has_value());
}

TEST_CASE("aatb_congestion_notification") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto n = AatbCongestionNotification(Aatb(12), Snap(5, 50, 3, 80.0),
                                              50.0, rng);
    const double wait = n.next_acquire - 50.0;
    CHECK(wait >= 3.0 / (80.0 / 60.0));
    CHECK(wait <= 3.0 / (80.0 / 60.0) + 1.0);
    CHECK(n.atb.bucket.tokens == doctest::Approx(1.1));
    CHECK(n.last_reported_congestion == 50.0);
    CHECK(n.last_rate_change == 50.0);
  }

  // Own load 2 against an average of 10: halve.
  AatbState s = Aatb(12);
  AatbRecordSend(s, 40.0);
  AatbRecordSend(s, 45.0);
  CHECK(AatbCongestionNotification(s, Snap(5, 50, 1), 50.0, rng)
            .atb.rate_per_min() == doctest::Approx(6));
  // Load at or above half the average divides by three, floored at σ.
  AatbState slow = Aatb(1);
  for (int i = 0; i < 6; ++i) AatbRecordSend(slow, 40.0 + i);
  CHECK(AatbCongestionNotification(slow, Snap(5, 50, 1), 50.0, rng)
            .atb.rate_per_min() == doctest::Approx(0.6));
}

TEST_CASE("aatb_congestion_notification without a snapshot") {
  Rng rng(8);
  const auto n = AatbCongestionNotification(Aatb(20), std::nullopt, 10.0, rng);
  CHECK(n.atb.rate_per_min() == doctest::Approx(10));
  CHECK(n.atb.bucket.tokens == 0.0);
  CHECK(n.next_acquire == doctest::Approx(40.0));
}

TEST_CASE("aatb limiter rate comes from the snapshot when present") {
  AatbState s = Aatb(10);
  CHECK(s.LimiterRate() == doctest::Approx(80.0 / 60.0));
  s.latest_snapshot = Snap(1, 1, 0, 120.0);
  CHECK(s.LimiterRate() == doctest::Approx(2.0));
}

TEST_CASE("aatb_acquire waits for both token and next_acquire") {
  AatbState s = Aatb(15);
  s.atb.bucket.tokens = 1.0;
  s.next_acquire = 105.0;
  s.atb.bucket.last_refill = 100.0;
  CHECK(AatbAcquire(s, 100.0).ready_at == 105.0);

  s.next_acquire = 50.0;
  s.atb.bucket.tokens = 0.0;
  s.atb.bucket.rate = 0.5;
  CHECK(AatbAcquire(s, 100.0).ready_at == doctest::Approx(102.0));

  s.atb.bucket.tokens = 1.0;
  CHECK(AatbAcquire(s, 100.0).ready_at == 100.0);
}

TEST_CASE("aatb next_acquire never decreases") {
  Rng rng(12);
  AatbState s = Aatb(10);
  double last = s.next_acquire;
  double now = 0.0;
  for (int i = 0; i < 2000; ++i) {
    now += rng.Exponential(2.0);
    AatbRecordSend(s, now);
    const auto snap = Snap(rng.UniformInt(1, 20), rng.UniformInt(0, 200),
                           rng.UniformInt(0, 3), 80.0);
    if (rng.Uniform(0, 1) < 0.5) {
      s = AatbCongestionNotification(s, snap, now, rng);
    } else {
      s = AatbRoutineUpdate(s, snap, now, rng);
    }
    REQUIRE(s.next_acquire >= last);
    last = s.next_acquire;
  }
}

TEST_CASE("aatb report reflects the past window") {
  AatbState s = Aatb(10);
  AatbRecordSend(s, 1.0);
  AatbRecordSend(s, 20.0);
  AatbRecordReject(s, 20.0);
  AatbRecordSend(s, 40.0);
  const auto r = AatbMakeReport(s, "c1", 45.0);
  CHECK(r.client_id == "c1");
  CHECK(r.window_requests == 2);
  CHECK(r.got_429 == 1);
  CHECK(r.sent_at == 45.0);
}

TEST_CASE("MakeStrategy wiring") {
  StrategyParams p;
  CHECK_THROWS_AS(MakeStrategy(StrategyKind::kAatb, p, "c", 1, 0.0),
                  ConfigError);
  auto ub = MakeStrategy(StrategyKind::kUb, p, "c", 1, 0.0);
  CHECK(ub->NextSendTime(3.0) == 3.0);
  CHECK(ub->report_interval() == 0.0);
  ub->OnSend(3.0);
  ub->OnReject(3.1);
  const double at = ub->NextSendTime(3.1);
  CHECK(at >= 3.1);
  CHECK(at < 4.1);

  auto atb = MakeStrategy(StrategyKind::kAtb, p, "c", 1, 0.0);
  CHECK(atb->NextSendTime(0.0) == 0.0);  // one initial token
  atb->OnSend(0.0);
  CHECK(atb->NextSendTime(0.0) == doctest::Approx(4.0));  // 15/min
}

}  // namespace
}  // namespace throttlekit
