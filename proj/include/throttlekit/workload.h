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

// Request traces: real access logs mapped to per-user arrival sequences, and
// seeded synthetic multi-client workloads.
//
// Dataset file format (text, canonical ordering by arrival, client, seq):
//
//   #throttlekit-dataset v=1 key=value ...
//   client_id,seq,arrival_time_s,a,b
//   0,0,3.25,17,912
//   ...
//
// Access-log input is CSV `timestamp_iso8601,ip`, one request per line, with
// an optional `timestamp,ip` header line.

#ifndef THROTTLEKIT_WORKLOAD_H_
#define THROTTLEKIT_WORKLOAD_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "throttlekit/domain.h"

namespace throttlekit {

inline constexpr int kDatasetFormatVersion = 1;

struct TraceDataset {
  std::vector<Request> requests;  // canonical order
  std::int64_t user_count = 0;
  Seconds last_timestamp = 0.0;
  std::string label;
  // Generation parameters, recorded so experiments are self-describing.
  std::map<std::string, std::string> metadata;

  std::int64_t size() const {
    return static_cast<std::int64_t>(requests.size());
  }
  /// Requests grouped by client, each group in seq order.
  std::map<std::string, std::vector<Request>> ByClient() const;

  friend bool operator==(const TraceDataset&, const TraceDataset&) = default;
};

enum class TimestampMode {
  kAbsolute,      // offset + exponential draws truncated to the horizon
  kInterArrival,  // offset + cumulated exponential gaps, dropped past horizon
  kUniform,       // offset + uniform order statistics over the horizon
};

std::string_view ToString(TimestampMode mode);
TimestampMode ParseTimestampMode(std::string_view name);

struct SynthConfig {
  int num_clients = 5;
  std::int64_t range_lo = 1;
  std::int64_t range_hi = 200;
  Seconds horizon = 300.0;
  std::uint64_t seed = 0;
  // When set, per-client Poisson draws are rescaled to this exact total.
  std::optional<std::int64_t> target_size;
  TimestampMode timestamps = TimestampMode::kInterArrival;
  Seconds max_start_offset = 10.0;
  std::string label;

  /// Poisson mean for additional requests, (hi - lo) / 2.
  double Lambda() const {
    return static_cast<double>(range_hi - range_lo) / 2.0;
  }
  /// Exponential timestamp scale in seconds; equal to Lambda().
  double Scale() const { return Lambda(); }
  void Validate() const;
};

TraceDataset GenSynthetic(const SynthConfig& config);

struct AccessEvent {
  std::string ip;
  Seconds timestamp = 0.0;  // Unix seconds
};

struct AccessLog {
  std::vector<AccessEvent> events;  // file order
  std::int64_t lines = 0;           // non-blank, excluding header
  std::int64_t invalid_lines = 0;
  std::vector<std::string> warnings;
};

/// Throws Error if unreadable, FormatError if more than 10% of lines are
/// invalid.
AccessLog ParseAccessLog(const std::filesystem::path& path);
AccessLog ParseAccessLog(std::istream& in);

/// Parses `YYYY-MM-DDTHH:MM:SS[.frac][Z|+HH:MM|-HH:MM]` to Unix seconds.
std::optional<double> ParseIso8601(std::string_view text);

/// Takes `size` events by timestamp starting at `skip`, rebases time to the
/// first of them and maps each IP to a dense user id (first appearance).
/// Throws Error when fewer than skip + size events exist.
TraceDataset BuildRealDataset(const std::vector<AccessEvent>& events,
                              std::int64_t size, std::int64_t skip = 0);

/// Sorts into canonical order and recomputes user_count and last_timestamp.
void Canonicalize(TraceDataset& dataset);

std::string SerializeDataset(const TraceDataset& dataset);
TraceDataset ParseDataset(std::string_view text);
void ExportDataset(const TraceDataset& dataset,
                   const std::filesystem::path& path);
TraceDataset ImportDataset(const std::filesystem::path& path);

/// 16 hex digits over the canonical serialization.
std::string DatasetHash(const TraceDataset& dataset);

// Shared with the oracle instance format.
std::map<std::string, std::string> ParseHeaderLine(std::string_view line,
                                                   std::string_view kind);
std::string FormatHeaderLine(std::string_view kind,
                             const std::map<std::string, std::string>& fields);
std::vector<Request> ParseRequestRows(std::string_view text,
                                      std::int64_t first_line_number);
std::string FormatRequestRows(const std::vector<Request>& requests);
std::string FormatDouble(double value);
std::string ReadFile(const std::filesystem::path& path);

}  // namespace throttlekit

#endif  // THROTTLEKIT_WORKLOAD_H_
