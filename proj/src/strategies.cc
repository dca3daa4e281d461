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

#include "throttlekit/strategies.h"

#include <algorithm>
#include <cctype>
#include <string>
#include <utility>

namespace throttlekit {
namespace {

void PruneOlderThan(std::deque<Seconds>& log, Seconds cutoff) {
  while (!log.empty() && log.front() <= cutoff) log.pop_front();
}

std::int64_t CountIn(const std::deque<Seconds>& log, Seconds lo, Seconds hi) {
  return std::count_if(log.begin(), log.end(),
                       [&](Seconds t) { return t > lo && t <= hi; });
}

double AverageLoad(const TelemetrySnapshot& snapshot) {
  if (snapshot.active_clients <= 0) return 0.0;
  return static_cast<double>(snapshot.total_requests) /
         static_cast<double>(snapshot.active_clients);
}

}  // namespace

std::string_view ToString(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kUb:
      return "ub";
    case StrategyKind::kWb:
      return "wb";
    case StrategyKind::kAtb:
      return "atb";
    case StrategyKind::kAatb:
      return "aatb";
  }
  return "unknown";
}

StrategyKind ParseStrategyKind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "ub") return StrategyKind::kUb;
  if (lower == "wb") return StrategyKind::kWb;
  if (lower == "atb") return StrategyKind::kAtb;
  if (lower == "aatb") return StrategyKind::kAatb;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected ub, wb, atb or aatb)");
}

// --- UB ---------------------------------------------------------------------

UbState UbState::Create(const UbParams& params, Rng& rng) {
  if (!(params.initial_bound > 0)) {
    throw ConfigError("backoff initial bound must be positive");
  }
  if (params.cap_hi < params.cap_lo || !(params.cap_lo > 0)) {
    throw ConfigError("backoff cap interval is invalid");
  }
  UbState state;
  state.initial_bound = params.initial_bound;
  state.upper_bound = params.initial_bound;
  state.cap = rng.Uniform(params.cap_lo, params.cap_hi);
  state.mode = params.mode;
  state.cap_lo = params.cap_lo;
  state.cap_hi = params.cap_hi;
  return state;
}

UbRejectResult UbOnReject(const UbState& state, Rng& rng) {
  UbRejectResult result{state, 0.0, 0.0};
  if (state.mode == UbBoundMode::kFreshDraw) {
    result.bound = rng.Uniform(state.cap_lo, state.cap_hi);
    result.wait = rng.Uniform(0.0, result.bound);
    return result;
  }
  result.bound = std::min(state.upper_bound, state.cap);
  result.wait = rng.Uniform(0.0, result.bound);
  result.state.upper_bound = std::min(2.0 * state.upper_bound, state.cap);
  return result;
}

UbState UbOnSuccess(const UbState& state) {
  UbState next = state;
  next.upper_bound = state.initial_bound;
  return next;
}

// --- WB ---------------------------------------------------------------------

Seconds WbEarliestPermit(const WbState& state, Seconds now) {
  std::vector<Seconds> in_window;
  for (Seconds t : state.attempt_log) {
    if (t > now - state.window) in_window.push_back(t);
  }
  const auto count = static_cast<std::int64_t>(in_window.size());
  if (count < state.max_per_window) return now;
  std::sort(in_window.begin(), in_window.end());
  // Enough of the oldest attempts must expire to leave W - 1 in the window.
  return in_window[static_cast<size_t>(count - state.max_per_window)] +
         state.window;
}

// --- ATB --------------------------------------------------------------------

AtbState AtbState::Create(const AtbParams& params, Seconds start) {
  if (params.bucket_size < 1.0) {
    throw ConfigError("adaptive bucket size must be at least one token");
  }
  if (!(params.initial_rate_per_min > 0) || !(params.sigma_per_min > 0)) {
    throw ConfigError("adaptive bucket rates must be positive");
  }
  AtbState state;
  state.bucket.capacity = params.bucket_size;
  state.bucket.tokens = std::clamp(params.initial_tokens, 0.0,
                                   params.bucket_size);
  state.bucket.rate = PerMinuteToPerSecond(params.initial_rate_per_min);
  state.bucket.last_refill = start;
  state.last_congestion_rate =
      PerMinuteToPerSecond(params.initial_congestion_rate_per_min);
  state.sigma_per_min = params.sigma_per_min;
  state.delta_per_min = params.delta_per_min;
  state.alpha = params.alpha;
  state.beta = params.beta;
  return state;
}

AcquireResult AtbAcquire(const AtbState& state, Seconds now) {
  const Seconds wait = TimeUntilTokens(state.bucket, now, 1.0);
  AcquireResult result{state, now + wait};
  result.state.bucket = TryConsume(state.bucket, result.ready_at).state;
  return result;
}

AtbState AtbIncreaseRate(const AtbState& state) {
  AtbState next = state;
  const double rate = state.rate_per_min();
  const double gain =
      state.bucket.rate < state.last_congestion_rate ? state.alpha : state.beta;
  next.bucket.rate =
      PerMinuteToPerSecond(std::max(rate + state.delta_per_min, rate * gain));
  return next;
}

AtbState AtbDecreaseRate(const AtbState& state, double jitter_per_min) {
  AtbState next = state;
  next.last_congestion_rate = state.bucket.rate;
  next.bucket.tokens = 0.0;
  next.bucket.rate = PerMinuteToPerSecond(std::max(
      state.sigma_per_min + jitter_per_min, state.rate_per_min() / 2.0));
  return next;
}

AtbState AtbDecreaseRate(const AtbState& state, Rng& rng) {
  return AtbDecreaseRate(state, rng.Uniform(-0.5, 0.5));
}

// --- AATB -------------------------------------------------------------------

AatbState AatbState::Create(const AatbParams& params, Seconds start) {
  if (!(params.report_interval > 0)) {
    throw ConfigError("report interval must be positive");
  }
  AatbState state;
  state.atb = AtbState::Create(params.atb, start);
  state.report_interval = params.report_interval;
  state.next_acquire = start;
  state.last_rate_change = start;
  state.default_limiter_rate_per_min = params.default_limiter_rate_per_min;
  return state;
}

std::int64_t AatbState::ClientLoad(Seconds now) const {
  return CountIn(send_log, now - report_interval, now);
}

std::int64_t AatbState::RecentRejects(Seconds now) const {
  return CountIn(reject_log, now - report_interval, now);
}

double AatbState::LimiterRate() const {
  if (latest_snapshot && latest_snapshot->limiter_rate_per_min) {
    return PerMinuteToPerSecond(*latest_snapshot->limiter_rate_per_min);
  }
  return PerMinuteToPerSecond(default_limiter_rate_per_min);
}

void AatbRecordSend(AatbState& state, Seconds now) {
  state.send_log.push_back(now);
  PruneOlderThan(state.send_log, now - state.report_interval);
}

void AatbRecordReject(AatbState& state, Seconds now) {
  state.reject_log.push_back(now);
  PruneOlderThan(state.reject_log, now - state.report_interval);
}

TelemetryReport AatbMakeReport(const AatbState& state,
                               const std::string& client_id, Seconds now) {
  TelemetryReport report;
  report.client_id = client_id;
  report.window_requests = state.ClientLoad(now);
  report.got_429 = std::min(state.RecentRejects(now), report.window_requests);
  report.sent_at = now;
  return report;
}

AatbState AatbRoutineUpdate(const AatbState& state,
                            const std::optional<TelemetrySnapshot>& snapshot,
                            Seconds now, Rng& rng) {
  if (!snapshot) return state;
  AatbState next = state;
  next.latest_snapshot = snapshot;
  if (snapshot->reported_429 > 0) {
    const Seconds backoff = state.report_interval + rng.Uniform(-2.0, 2.0);
    next.next_acquire = std::max(state.next_acquire, now + backoff);
  } else if (now - state.last_rate_change >= state.report_interval) {
    const double client_load = static_cast<double>(state.ClientLoad(now));
    const double avg_load = AverageLoad(*snapshot);
    const double rate = state.atb.rate_per_min();
    const double gain =
        client_load < 0.75 * avg_load ? state.atb.alpha : state.atb.beta;
    next.atb.bucket.rate = PerMinuteToPerSecond(
        std::max(rate * gain, rate + state.atb.delta_per_min));
    next.last_rate_change = now;
  }
  return next;
}

AatbState AatbCongestionNotification(
    const AatbState& state, const std::optional<TelemetrySnapshot>& snapshot,
    Seconds now, Rng& rng) {
  AatbState next = state;
  next.last_reported_congestion = now;
  next.last_rate_change = now;
  if (!snapshot) {
    next.atb = AtbDecreaseRate(state.atb, rng);
    next.next_acquire =
        std::max(state.next_acquire, now + state.report_interval);
    return next;
  }
  next.latest_snapshot = snapshot;
  const double client_load = static_cast<double>(state.ClientLoad(now));
  const double avg_load = AverageLoad(*snapshot);
  const double rate = state.atb.rate_per_min();
  const double divisor = client_load < 0.5 * avg_load ? 2.0 : 3.0;
  next.atb.bucket.rate =
      PerMinuteToPerSecond(std::max(state.atb.sigma_per_min, rate / divisor));
  // Enough for one immediate send once next_acquire passes.
  next.atb.bucket.tokens = std::min(1.1, state.atb.bucket.capacity);
  const Seconds wait =
      static_cast<double>(snapshot->reported_429) / next.LimiterRate() +
      rng.Uniform(0.0, 1.0);
  next.next_acquire = std::max(state.next_acquire, now + wait);
  return next;
}

AatbAcquireResult AatbAcquire(const AatbState& state, Seconds now) {
  const Seconds token_at = now + TimeUntilTokens(state.atb.bucket, now, 1.0);
  AatbAcquireResult result{state, std::max(token_at, state.next_acquire)};
  result.state.atb.bucket =
      TryConsume(state.atb.bucket, result.ready_at).state;
  return result;
}

// --- Strategy wrappers -------------------------------------------------------

namespace {

class UbStrategy final : public Strategy {
 public:
  UbStrategy(const UbParams& params, std::uint64_t seed)
      : rng_(seed), state_(UbState::Create(params, rng_)) {}

  StrategyKind kind() const override { return StrategyKind::kUb; }
  Seconds NextSendTime(Seconds now) const override {
    return std::max(now, retry_at_);
  }
  void OnSend(Seconds) override {}
  void OnSuccess(Seconds) override { state_ = UbOnSuccess(state_); }
  void OnReject(Seconds now) override {
    auto r = UbOnReject(state_, rng_);
    state_ = r.state;
    last_bound_ = r.bound;
    retry_at_ = now + r.wait;
  }
  StrategyProbe Probe() const override { return {last_bound_, 0, 0, 0}; }

 private:
  Rng rng_;
  UbState state_;
  Seconds retry_at_ = -std::numeric_limits<double>::infinity();
  Seconds last_bound_ = 0.0;
};

class WbStrategy final : public Strategy {
 public:
  WbStrategy(const WbParams& params, std::uint64_t seed) : rng_(seed) {
    if (params.max_per_window < 1) {
      throw ConfigError("window limit W must be at least 1");
    }
    state_.backoff = UbState::Create(params.backoff, rng_);
    state_.max_per_window = params.max_per_window;
    state_.window = params.window;
  }

  StrategyKind kind() const override { return StrategyKind::kWb; }
  Seconds NextSendTime(Seconds now) const override {
    return WbEarliestPermit(state_, std::max(now, retry_at_));
  }
  void OnSend(Seconds now) override {
    state_.attempt_log.push_back(now);
    PruneOlderThan(state_.attempt_log, now - state_.window);
  }
  void OnSuccess(Seconds) override {
    state_.backoff = UbOnSuccess(state_.backoff);
  }
  void OnReject(Seconds now) override {
    auto r = UbOnReject(state_.backoff, rng_);
    state_.backoff = r.state;
    last_bound_ = r.bound;
    retry_at_ = now + r.wait;
  }
  StrategyProbe Probe() const override { return {last_bound_, 0, 0, 0}; }

 private:
  Rng rng_;
  WbState state_;
  Seconds retry_at_ = -std::numeric_limits<double>::infinity();
  Seconds last_bound_ = 0.0;
};

class AtbStrategy final : public Strategy {
 public:
  AtbStrategy(const AtbParams& params, std::uint64_t seed, Seconds start)
      : rng_(seed), state_(AtbState::Create(params, start)) {}

  StrategyKind kind() const override { return StrategyKind::kAtb; }
  Seconds NextSendTime(Seconds now) const override {
    return now + TimeUntilTokens(state_.bucket, now, 1.0);
  }
  void OnSend(Seconds now) override {
    state_.bucket = TryConsume(state_.bucket, now).state;
  }
  void OnSuccess(Seconds) override { state_ = AtbIncreaseRate(state_); }
  void OnReject(Seconds) override { state_ = AtbDecreaseRate(state_, rng_); }
  StrategyProbe Probe() const override {
    return {0, 0, state_.bucket.rate, state_.bucket.tokens};
  }

 private:
  Rng rng_;
  AtbState state_;
};

class AatbStrategy final : public Strategy {
 public:
  AatbStrategy(const AatbParams& params, std::string client_id,
               std::uint64_t seed, Seconds start, TelemetryChannel* channel)
      : rng_(seed),
        state_(AatbState::Create(params, start)),
        client_id_(std::move(client_id)),
        channel_(channel) {
    if (channel_ == nullptr) {
      throw ConfigError("assisted strategy requires a telemetry channel");
    }
  }

  StrategyKind kind() const override { return StrategyKind::kAatb; }
  Seconds NextSendTime(Seconds now) const override {
    return std::max(now + TimeUntilTokens(state_.atb.bucket, now, 1.0),
                    state_.next_acquire);
  }
  void OnSend(Seconds now) override {
    state_.atb.bucket = TryConsume(state_.atb.bucket, now).state;
    AatbRecordSend(state_, now);
  }
  void OnSuccess(Seconds) override {}
  void OnReject(Seconds now) override {
    AatbRecordReject(state_, now);
    auto snapshot = Exchange(now);
    state_ = AatbCongestionNotification(state_, snapshot, now, rng_);
  }
  Seconds report_interval() const override { return state_.report_interval; }
  bool OnReportTimer(Seconds now) override {
    if (now - state_.last_reported_congestion < state_.report_interval) {
      return false;
    }
    auto snapshot = Exchange(now);
    state_ = AatbRoutineUpdate(state_, snapshot, now, rng_);
    return true;
  }
  std::int64_t telemetry_messages() const override { return messages_; }
  StrategyProbe Probe() const override {
    return {0, state_.next_acquire, state_.atb.bucket.rate,
            state_.atb.bucket.tokens};
  }

 private:
  std::optional<TelemetrySnapshot> Exchange(Seconds now) {
    ++messages_;
    return channel_->Exchange(AatbMakeReport(state_, client_id_, now), now);
  }

  Rng rng_;
  AatbState state_;
  std::string client_id_;
  TelemetryChannel* channel_;
  std::int64_t messages_ = 0;
};

}  // namespace

std::unique_ptr<Strategy> MakeStrategy(StrategyKind kind,
                                       const StrategyParams& params,
                                       std::string client_id,
                                       std::uint64_t seed, Seconds start,
                                       TelemetryChannel* channel) {
  switch (kind) {
    case StrategyKind::kUb:
      return std::make_unique<UbStrategy>(params.ub, seed);
    case StrategyKind::kWb:
      return std::make_unique<WbStrategy>(params.wb, seed);
    case StrategyKind::kAtb:
      return std::make_unique<AtbStrategy>(params.atb, seed, start);
    case StrategyKind::kAatb:
      return std::make_unique<AatbStrategy>(params.aatb, std::move(client_id),
                                            seed, start, channel);
  }
  throw ConfigError("unknown strategy kind");
}

}  // namespace throttlekit
