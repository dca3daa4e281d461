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

// Experiment harness. One actor per client replays its trace in FIFO order
// through a retry strategy against the gateway (plus the telemetry server for
// AATB). Two clocks drive the same actor graph:
//
//   virtual  deterministic discrete-event simulation; timers fire in
//            (timestamp, actor, sequence) order and every component reads
//            the simulated clock. Default for CI.
//   wall     real HTTP and UDP over loopback (or external endpoints), one
//            thread per client, optionally time-compressed by time_scale.
//
// Metrics per run: total duration (first arrival to last service), average
// service time (first transmission to final success, spanning retries), total
// 429s, and telemetry update messages.

#ifndef THROTTLEKIT_EMULATOR_H_
#define THROTTLEKIT_EMULATOR_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "throttlekit/gateway.h"
#include "throttlekit/strategies.h"
#include "throttlekit/workload.h"

namespace throttlekit {

enum class ClockMode { kVirtual, kWall };

std::string_view ToString(ClockMode mode);
ClockMode ParseClockMode(std::string_view name);

/// Tuned parameter sets for the three evaluation scenarios, plus the
/// synthetic workload shape that goes with each.
struct Profile {
  std::string name;
  StrategyParams params;
  std::optional<SynthConfig> synth;  // absent for the real-trace profile
};

/// "real", "synth5" or "synth100". Throws ConfigError.
Profile LoadProfile(std::string_view name);

struct ExperimentConfig {
  StrategyKind strategy = StrategyKind::kUb;
  std::string profile = "synth5";
  StrategyParams params = LoadProfile("synth5").params;

  // Either a dataset file, an in-memory dataset, or a synthetic dataset of
  // `size` requests generated from the profile.
  std::optional<std::filesystem::path> dataset_path;
  std::optional<TraceDataset> dataset;
  std::int64_t size = 800;
  std::uint64_t dataset_seed = 1;

  int runs = 30;
  ClockMode clock = ClockMode::kVirtual;
  double time_scale = 1.0;  // wall mode: experiment seconds per real second
  std::uint64_t seed = 1;

  GatewayConfig gateway;
  Seconds network_rtt = 0.002;  // virtual mode round trip

  // Wall mode only; when unset the services run embedded on loopback.
  std::optional<std::string> gateway_address;    // host:port
  std::optional<std::string> telemetry_address;  // host:port

  int max_transport_retries = 3;
  bool record_events = false;

  /// Applies profile defaults (params) for `profile`.
  void UseProfile(const std::string& name);
  void Validate() const;
  /// Hash of everything that must match for archives to be comparable:
  /// excludes the strategy and the dataset.
  std::string SetupHash() const;
};

/// Reads the JSON experiment config file format.
ExperimentConfig ParseExperimentConfig(const nlohmann::json& j);
nlohmann::json ToJson(const StrategyParams& params);

struct RequestRecord {
  std::string client_id;
  std::int64_t seq = 0;
  Seconds arrival = 0.0;
  Seconds first_send = -1.0;
  Seconds served_at = -1.0;
  std::int64_t attempts = 0;
  std::int64_t rejects = 0;
};

enum class EventKind { kArrive, kSend, kSuccess, kReject, kReport };
std::string_view ToString(EventKind kind);

struct ClientEvent {
  Seconds time = 0.0;
  std::string client_id;
  std::int64_t seq = -1;
  EventKind kind = EventKind::kArrive;
  StrategyProbe probe;  // strategy state after handling the event
};

struct RunMetrics {
  int run_index = 0;
  std::uint64_t seed = 0;
  Seconds total_duration = 0.0;
  Seconds avg_service_time = 0.0;
  std::int64_t total_429 = 0;
  std::int64_t update_messages = 0;
  std::int64_t gateway_admitted = 0;
  std::int64_t gateway_rejected = 0;
  Seconds total_response_time = 0.0;  // sum of served_at - arrival
  int invalid_attempts = 0;           // discarded transport-failure reruns
  std::vector<RequestRecord> detail;
  std::vector<ClientEvent> events;  // only with record_events
};

/// Recomputes the headline metrics from the detail log.
RunMetrics RecomputeMetrics(const RunMetrics& run);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
};

struct Summary {
  std::string strategy;
  std::string profile;
  std::int64_t dataset_size = 0;
  std::string dataset_label;
  std::string dataset_hash;
  std::string config_hash;
  int runs = 0;
  MetricSummary total_duration;
  MetricSummary avg_service_time;
  MetricSummary total_429;
  MetricSummary update_messages;
  // Greedy oracle objective for the dataset under the gateway's bucket, in
  // one-second slots, and the mean observed total response time.
  double oracle_objective = 0.0;
  double observed_response_total = 0.0;
};

Summary Summarize(const std::vector<RunMetrics>& runs);

struct ExperimentResult {
  TraceDataset dataset;
  std::vector<RunMetrics> runs;
  Summary summary;
};

/// Resolves the dataset the config refers to.
TraceDataset ResolveDataset(const ExperimentConfig& config);

/// One run on the virtual clock. Throws on internal inconsistency.
RunMetrics RunVirtual(const ExperimentConfig& config,
                      const TraceDataset& dataset, std::uint64_t run_seed,
                      int run_index = 0);

/// One run on the wall clock. Returns nullopt if the run hit transport
/// failures and must be discarded.
std::optional<RunMetrics> RunWall(const ExperimentConfig& config,
                                  const TraceDataset& dataset,
                                  std::uint64_t run_seed, int run_index = 0);

/// All runs with seeds derived from config.seed; the gateway starts fresh for
/// every run. Throws Error when external services are unreachable.
ExperimentResult RunExperiment(const ExperimentConfig& config);

// --- archives -----------------------------------------------------------------

nlohmann::json RunToJson(const RunMetrics& run);
RunMetrics RunFromJson(const nlohmann::json& j);
nlohmann::json SummaryToJson(const Summary& summary);
Summary SummaryFromJson(const nlohmann::json& j);

/// Event log rows: run,time,client_id,seq,kind,ub_bound,next_acquire,
/// rate_per_sec,tokens.
std::string EventsCsv(const std::vector<RunMetrics>& runs);

/// Plot-ready rows: dataset_size,strategy,metric,mean,stddev.
std::string SummaryCsv(const std::vector<Summary>& summaries);

/// Writes run_NNN.json, summary.json and summary.csv under `dir`.
void WriteArchive(const ExperimentResult& result, const ExperimentConfig& config,
                  const std::filesystem::path& dir);

struct ReportOutput {
  std::string series_csv;  // dataset_size,strategy,metric,mean,stddev
  std::string delta_csv;   // per size and strategy, % change vs baseline
  std::string table;       // human-readable
};

/// Merges archives (directories written by WriteArchive). Recomputes every
/// summary from its run files and refuses archives whose setup hashes differ
/// or whose stored summary disagrees with the recomputation.
ReportOutput Report(const std::vector<std::filesystem::path>& archives,
                    const std::string& baseline = "ub");

}  // namespace throttlekit

#endif  // THROTTLEKIT_EMULATOR_H_
