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

// Client-side retry strategies for a shared, token-bucket limited endpoint.
//
//   UB    unlimited exponential backoff: random wait whose upper bound doubles
//         after every rejection, up to a per-client cap.
//   WB    UB plus a per-client sliding window of at most W transmissions per
//         60 seconds.
//   ATB   adaptive token bucket: sends only with a local token; the local
//         refill rate grows on success and collapses on rejection, remembering
//         the rate at which congestion was last seen.
//   AATB  ATB steered by aggregated telemetry snapshots instead of per-success
//         increases, with a next_acquire gate after congestion.
//
// Every transition is available as a pure function over a state value, and
// the Strategy interface wraps those functions for the emulator.
//
// Parameters are written in per-minute units (as operators configure them);
// token buckets store tokens per second.

#ifndef THROTTLEKIT_STRATEGIES_H_
#define THROTTLEKIT_STRATEGIES_H_

#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "throttlekit/domain.h"
#include "throttlekit/random.h"
#include "throttlekit/telemetry.h"

namespace throttlekit {

enum class StrategyKind { kUb, kWb, kAtb, kAatb };

std::string_view ToString(StrategyKind kind);
/// Accepts "ub", "wb", "atb", "aatb" (case-insensitive). Throws ConfigError.
StrategyKind ParseStrategyKind(std::string_view name);

enum class UbBoundMode {
  kDoubling,   // bound doubles per consecutive rejection, clamped at the cap
  kFreshDraw,  // every retry draws its bound afresh from [cap_lo, cap_hi]
};

struct UbParams {
  Seconds initial_bound = 1.0;
  Seconds cap_lo = 30.0;
  Seconds cap_hi = 34.0;
  UbBoundMode mode = UbBoundMode::kDoubling;
};

struct WbParams {
  UbParams backoff;
  int max_per_window = 15;
  Seconds window = 60.0;
};

struct AtbParams {
  double sigma_per_min = 0.6;  // floor rate
  double delta_per_min = 0.6;  // minimum increment
  double alpha = 1.2;          // gain below the last congestion rate
  double beta = 1.2;           // gain at or above it
  double initial_tokens = 1.0;
  double bucket_size = 15.0;
  double initial_rate_per_min = 15.0;
  double initial_congestion_rate_per_min = 30.0;
};

struct AatbParams {
  AtbParams atb{.alpha = 1.4};
  Seconds report_interval = 30.0;
  // Limiter generation rate assumed until a snapshot carries one.
  double default_limiter_rate_per_min = 80.0;
};

struct StrategyParams {
  UbParams ub;
  WbParams wb;
  AtbParams atb;
  AatbParams aatb;
};

// --- UB ---------------------------------------------------------------------

struct UbState {
  Seconds upper_bound = 1.0;
  Seconds cap = 32.0;
  Seconds initial_bound = 1.0;
  UbBoundMode mode = UbBoundMode::kDoubling;
  Seconds cap_lo = 30.0;
  Seconds cap_hi = 34.0;

  /// Draws the per-client cap from [cap_lo, cap_hi].
  static UbState Create(const UbParams& params, Rng& rng);
};

struct UbRejectResult {
  UbState state;
  Seconds wait = 0.0;
  Seconds bound = 0.0;  // the bound `wait` was drawn under
};

/// wait ~ Uniform(0, upper_bound); then upper_bound = min(2 * upper_bound, cap).
UbRejectResult UbOnReject(const UbState& state, Rng& rng);
/// A success ends the streak of consecutive rejections.
UbState UbOnSuccess(const UbState& state);

// --- WB ---------------------------------------------------------------------

struct WbState {
  UbState backoff;
  int max_per_window = 15;
  Seconds window = 60.0;
  std::deque<Seconds> attempt_log;  // transmissions, originals and retries
};

/// `now` if fewer than W transmissions fall in (now - window, now], otherwise
/// the instant the oldest of them leaves the window.
Seconds WbEarliestPermit(const WbState& state, Seconds now);

// --- ATB --------------------------------------------------------------------

struct AtbState {
  TokenBucketState bucket;  // last_refill doubles as last_used
  double last_congestion_rate = 0.0;  // tokens per second
  double sigma_per_min = 0.6;
  double delta_per_min = 0.6;
  double alpha = 1.2;
  double beta = 1.2;

  static AtbState Create(const AtbParams& params, Seconds start);
  double rate_per_min() const { return PerSecondToPerMinute(bucket.rate); }
};

struct AcquireResult {
  AtbState state;
  Seconds ready_at = 0.0;
};

/// Waits for one local token and consumes it at the returned instant.
AcquireResult AtbAcquire(const AtbState& state, Seconds now);
AtbState AtbIncreaseRate(const AtbState& state);
/// `jitter_per_min` is the rand(-0.5, 0.5) term.
AtbState AtbDecreaseRate(const AtbState& state, double jitter_per_min);
AtbState AtbDecreaseRate(const AtbState& state, Rng& rng);

// --- AATB -------------------------------------------------------------------

struct AatbState {
  AtbState atb;
  Seconds report_interval = 30.0;
  Seconds next_acquire = -std::numeric_limits<double>::infinity();
  Seconds last_rate_change = 0.0;
  Seconds last_reported_congestion = -std::numeric_limits<double>::infinity();
  double default_limiter_rate_per_min = 80.0;
  std::optional<TelemetrySnapshot> latest_snapshot;
  std::deque<Seconds> send_log;
  std::deque<Seconds> reject_log;

  static AatbState Create(const AatbParams& params, Seconds start);

  /// Sends in (now - report_interval, now].
  std::int64_t ClientLoad(Seconds now) const;
  std::int64_t RecentRejects(Seconds now) const;
  /// Limiter rate in tokens per second, from the latest snapshot if it had
  /// one.
  double LimiterRate() const;
};

void AatbRecordSend(AatbState& state, Seconds now);
void AatbRecordReject(AatbState& state, Seconds now);
TelemetryReport AatbMakeReport(const AatbState& state,
                               const std::string& client_id, Seconds now);

/// Snapshot-driven rate adjustment. A missing snapshot is a no-op.
AatbState AatbRoutineUpdate(const AatbState& state,
                            const std::optional<TelemetrySnapshot>& snapshot,
                            Seconds now, Rng& rng);
/// Reaction to this client's own rejection.
AatbState AatbCongestionNotification(
    const AatbState& state, const std::optional<TelemetrySnapshot>& snapshot,
    Seconds now, Rng& rng);

struct AatbAcquireResult {
  AatbState state;
  Seconds ready_at = 0.0;
};

/// ready_at = max(local token instant, next_acquire); token consumed there.
AatbAcquireResult AatbAcquire(const AatbState& state, Seconds now);

// --- Emulator-facing interface ----------------------------------------------

/// Read-only view of a strategy's control variables, for event logs.
struct StrategyProbe {
  Seconds ub_bound = 0.0;      // UB/WB: bound of the most recent wait
  Seconds next_acquire = 0.0;  // AATB
  double rate_per_sec = 0.0;   // ATB/AATB
  double tokens = 0.0;         // ATB/AATB
};

/// Per-client retry controller. A client holds one request in flight; it
/// asks NextSendTime for the head of its FIFO, transmits at that instant
/// (calling OnSend), then reports the outcome.
class Strategy {
 public:
  virtual ~Strategy() = default;

  virtual StrategyKind kind() const = 0;
  /// Earliest instant >= now at which the head request may be transmitted.
  /// Does not modify state; the answer can move later if state changes.
  virtual Seconds NextSendTime(Seconds now) const = 0;
  /// Commits a transmission at `now`; requires NextSendTime(now) == now.
  virtual void OnSend(Seconds now) = 0;
  virtual void OnSuccess(Seconds now) = 0;
  virtual void OnReject(Seconds now) = 0;

  /// Interval of the periodic report timer; 0 disables it.
  virtual Seconds report_interval() const { return 0.0; }
  /// Periodic hook. Returns true if a telemetry report was sent.
  virtual bool OnReportTimer(Seconds /*now*/) { return false; }
  virtual std::int64_t telemetry_messages() const { return 0; }

  virtual StrategyProbe Probe() const = 0;
};

/// `channel` is required for AATB and ignored otherwise.
std::unique_ptr<Strategy> MakeStrategy(StrategyKind kind,
                                       const StrategyParams& params,
                                       std::string client_id,
                                       std::uint64_t seed, Seconds start,
                                       TelemetryChannel* channel = nullptr);

}  // namespace throttlekit

#endif  // THROTTLEKIT_STRATEGIES_H_
