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

// Telemetry side channel for assisted clients: clients periodically send a
// report of their recent load over UDP and receive an aggregated snapshot of
// every active client's load in return. The side channel never touches the
// rate-limited service.
//
// Wire format, one JSON object per datagram (at most 512 bytes):
//   report   {"v":1,"id":"<client>","win_req":N,"got_429":N,"ts":S}
//   snapshot {"v":1,"active":N,"total_req":N,"rep_429":N[,"limiter_rate":R]}
// `limiter_rate` is tokens per minute and is present only once an operator
// has configured it.

#ifndef THROTTLEKIT_TELEMETRY_H_
#define THROTTLEKIT_TELEMETRY_H_

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "throttlekit/domain.h"

namespace throttlekit {

inline constexpr std::size_t kMaxDatagramBytes = 512;
inline constexpr int kTelemetryWireVersion = 1;

struct TelemetryReport {
  std::string client_id;
  std::int64_t window_requests = 0;  // sends in the past report interval
  std::int64_t got_429 = 0;          // rejections in the same interval
  Seconds sent_at = 0.0;

  friend bool operator==(const TelemetryReport&,
                         const TelemetryReport&) = default;
};

struct TelemetrySnapshot {
  std::int64_t active_clients = 0;
  std::int64_t total_requests = 0;
  std::int64_t reported_429 = 0;  // clients, not events
  std::optional<double> limiter_rate_per_min;

  friend bool operator==(const TelemetrySnapshot&,
                         const TelemetrySnapshot&) = default;
};

std::string EncodeReport(const TelemetryReport& report);
std::optional<TelemetryReport> DecodeReport(std::string_view datagram);
std::string EncodeSnapshot(const TelemetrySnapshot& snapshot);
std::optional<TelemetrySnapshot> DecodeSnapshot(std::string_view datagram);

/// Keeps the latest report of every client seen within the staleness horizon.
/// Not internally synchronized; owners serialize access.
class Aggregator {
 public:
  explicit Aggregator(Seconds staleness_horizon,
                      std::optional<double> limiter_rate_per_min = {},
                      Seconds skew_tolerance = 1.0);

  /// Replaces the client's previous report. Returns false, leaving state
  /// untouched, for reports that are invalid, from the future beyond the skew
  /// tolerance, or older than the one already held.
  bool Aggregate(const TelemetryReport& report, Seconds now);

  TelemetrySnapshot Snapshot(Seconds now) const;

  void SetLimiterRate(double per_minute) { limiter_rate_per_min_ = per_minute; }
  void Prune(Seconds now);

  std::size_t retained() const { return latest_.size(); }
  Seconds staleness_horizon() const { return horizon_; }

 private:
  struct Entry {
    TelemetryReport report;
    Seconds received_at;
  };

  bool Fresh(const Entry& e, Seconds now) const {
    return now - e.received_at <= horizon_;
  }

  Seconds horizon_;
  Seconds skew_tolerance_;
  std::optional<double> limiter_rate_per_min_;
  std::map<std::string, Entry, std::less<>> latest_;
};

/// How an assisted client reaches the aggregator. Implementations return
/// nullopt when no snapshot arrives; callers must cope with that.
class TelemetryChannel {
 public:
  virtual ~TelemetryChannel() = default;
  virtual std::optional<TelemetrySnapshot> Exchange(
      const TelemetryReport& report, Seconds now) = 0;
};

/// In-process channel for the virtual-clock emulator.
class EmbeddedTelemetry final : public TelemetryChannel {
 public:
  explicit EmbeddedTelemetry(Aggregator& aggregator) : aggregator_(aggregator) {}

  std::optional<TelemetrySnapshot> Exchange(const TelemetryReport& report,
                                            Seconds now) override;

  std::int64_t messages() const { return messages_; }

 private:
  Aggregator& aggregator_;
  std::int64_t messages_ = 0;
};

struct TelemetryServerConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks an ephemeral port
  Seconds report_interval = 30.0;
  Seconds staleness_horizon = 60.0;
  std::optional<double> limiter_rate_per_min;
};

/// UDP request/response server around an Aggregator. Every well-formed report
/// datagram is answered with one snapshot datagram; anything else is dropped.
class TelemetryServer {
 public:
  using Clock = std::function<Seconds()>;

  TelemetryServer(TelemetryServerConfig config, Clock clock);
  ~TelemetryServer();
  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;

  /// Binds and starts the receive loop. Throws Error on bind failure.
  void Start();
  void Stop();
  /// Blocks in the receive loop on the calling thread until Stop().
  void Run();

  int port() const { return port_; }
  std::int64_t reports_received() const { return received_.load(); }
  std::int64_t datagrams_dropped() const { return dropped_.load(); }
  TelemetrySnapshot Snapshot() const;
  void SetLimiterRate(double per_minute);

 private:
  void Bind();
  void Loop();

  TelemetryServerConfig config_;
  Clock clock_;
  mutable std::mutex mu_;
  Aggregator aggregator_;
  int fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::int64_t> received_{0};
  std::atomic<std::int64_t> dropped_{0};
  std::thread thread_;
};

/// Blocking UDP client. One outstanding exchange at a time.
class UdpTelemetryClient final : public TelemetryChannel {
 public:
  UdpTelemetryClient(const std::string& host, int port,
                     double timeout_seconds = 0.5);
  ~UdpTelemetryClient() override;
  UdpTelemetryClient(const UdpTelemetryClient&) = delete;
  UdpTelemetryClient& operator=(const UdpTelemetryClient&) = delete;

  std::optional<TelemetrySnapshot> Exchange(const TelemetryReport& report,
                                            Seconds now) override;

  std::int64_t messages() const { return messages_; }

 private:
  int fd_ = -1;
  int timeout_ms_;
  std::int64_t messages_ = 0;
};

}  // namespace throttlekit

#endif  // THROTTLEKIT_TELEMETRY_H_
