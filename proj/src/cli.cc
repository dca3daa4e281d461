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

#include "throttlekit/cli.h"

#include <signal.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "throttlekit/emulator.h"
#include "throttlekit/gateway.h"
#include "throttlekit/oracle.h"
#include "throttlekit/telemetry.h"
#include "throttlekit/workload.h"

namespace throttlekit {
namespace {

using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config;
  bool verbose = false;
};

std::uint64_t ResolveSeed(const GlobalOptions& g, std::uint64_t fallback) {
  if (g.seed) return *g.seed;
  if (const char* env = std::getenv("THROTTLEKIT_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw UsageError("THROTTLEKIT_SEED must be an integer");
    return v;
  }
  return fallback;
}

std::pair<std::int64_t, std::int64_t> ParseRange(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    size_t used = 0;
    const auto lo = std::stoll(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(text);
    const std::string rest = text.substr(colon + 1);
    const auto hi = std::stoll(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    return {lo, hi};
  } catch (const std::exception&) {
    throw UsageError("--range expects LO:HI, got '" + text + "'");
  }
}

void WriteOut(const std::string& path, const std::string& text,
              std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error("cannot write " + path);
  file << text;
}

json LoadJsonFile(const std::string& path) {
  const std::string text = ReadFile(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

// Blocks SIGINT/SIGTERM, runs `start`, waits for a signal, runs `stop`.
template <typename Start, typename Stop>
void ServeUntilSignal(Start start, Stop stop) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  start();
  int sig = 0;
  sigwait(&set, &sig);
  stop();
}

Seconds SteadySeconds(std::chrono::steady_clock::time_point origin) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       origin)
      .count();
}

}  // namespace

int Dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"ThrottleKit: client-side retry strategies against a "
               "token-bucket rate limiter",
               "throttlekit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GlobalOptions g;
  app.add_option("--seed", g.seed,
                 "Master seed (falls back to $THROTTLEKIT_SEED, then 1)");
  app.add_option("--config", g.config,
                 "Experiment config JSON (run); CLI flags override it");
  app.add_flag("--verbose,-v", g.verbose, "Progress logs on stderr");

  // serve-gateway
  GatewayConfig gw;
  double gw_initial = -1.0;
  bool no_stats = false;
  auto* serve_gateway =
      app.add_subcommand("serve-gateway", "Serve POST /multiply behind a token bucket");
  serve_gateway->add_option("--capacity", gw.capacity, "Bucket capacity B")
      ->capture_default_str();
  serve_gateway->add_option("--rate-per-min", gw.rate_per_min,
                            "Refill rate in tokens per minute")
      ->capture_default_str();
  serve_gateway->add_option("--listen", gw.listen_address, "host:port")
      ->capture_default_str();
  serve_gateway->add_option("--initial-tokens", gw_initial,
                            "Tokens at start (default: capacity)");
  serve_gateway->add_flag("--no-stats", no_stats, "Disable GET /stats");
  serve_gateway->add_option("--keep-alive", gw.keep_alive_seconds,
                            "Keep-alive timeout in seconds")
      ->capture_default_str();
  serve_gateway->add_option("--workers", gw.worker_threads,
                            "Worker threads (one per open connection)")
      ->capture_default_str();

  // serve-telemetry
  std::string telemetry_listen = "127.0.0.1:9090";
  double limiter_rate = -1.0;
  double report_interval = 30.0;
  auto* serve_telemetry = app.add_subcommand(
      "serve-telemetry", "Serve the UDP telemetry aggregator for AATB clients");
  serve_telemetry->add_option("--telemetry-listen", telemetry_listen, "host:port")
      ->capture_default_str();
  serve_telemetry->add_option("--limiter-rate-per-min", limiter_rate,
                              "Advertise the limiter rate in snapshots");
  serve_telemetry->add_option("--report-interval", report_interval,
                              "Client report interval ω; staleness is 2ω")
      ->capture_default_str();

  // gen
  int clients = 5;
  std::string range = "1:200";
  std::string gen_out;
  std::int64_t gen_size = 0;
  std::string timestamps = "interarrival";
  double horizon = 300.0;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic trace dataset");
  gen->add_option("--clients", clients, "Number of clients")->capture_default_str();
  gen->add_option("--range", range, "Requests range LO:HI (λ = (HI-LO)/2)")
      ->capture_default_str();
  gen->add_option("--size", gen_size,
                  "Rescale per-client counts to this exact total");
  gen->add_option("--timestamps", timestamps,
                  "interarrival, absolute or uniform")
      ->capture_default_str();
  gen->add_option("--horizon", horizon, "Seconds")->capture_default_str();
  gen->add_option("--out", gen_out, "Output file (default: stdout)");

  // ingest
  std::string log_path;
  std::int64_t ingest_size = 0;
  std::int64_t skip = 0;
  std::string ingest_out;
  auto* ingest =
      app.add_subcommand("ingest", "Build a dataset from a timestamp,ip access log");
  ingest->add_option("--log", log_path, "CSV access log")->required();
  ingest->add_option("--size", ingest_size, "Requests to take")->required();
  ingest->add_option("--skip", skip, "Events to skip first")->capture_default_str();
  ingest->add_option("--out", ingest_out, "Output file (default: stdout)");

  // run
  std::string profile, strategy, clock, dataset_path, archive, events_path,
      gateway_address, telemetry_address;
  std::optional<int> runs;
  std::optional<double> time_scale, run_capacity, run_rate;
  std::optional<std::int64_t> run_size;
  std::optional<std::uint64_t> dataset_seed;
  auto* run = app.add_subcommand("run", "Run an experiment and print summary CSV");
  run->add_option("--profile", profile, "real, synth5 or synth100");
  run->add_option("--strategy", strategy, "ub, wb, atb or aatb");
  run->add_option("--runs", runs, "Number of runs (default 30)");
  run->add_option("--clock", clock, "virtual (default) or wall");
  run->add_option("--time-scale", time_scale,
                  "Wall clock: experiment seconds per real second");
  run->add_option("--dataset", dataset_path, "Dataset file (default: synthetic)");
  run->add_option("--size", run_size, "Synthetic dataset size (default 800)");
  run->add_option("--dataset-seed", dataset_seed,
                  "Seed of the synthetic dataset (default 1)");
  run->add_option("--capacity", run_capacity, "Embedded gateway capacity");
  run->add_option("--rate-per-min", run_rate, "Embedded gateway rate");
  run->add_option("--gateway", gateway_address,
                  "External gateway host:port (wall clock)");
  run->add_option("--telemetry", telemetry_address,
                  "External telemetry host:port (wall clock)");
  run->add_option("--out", archive, "Archive directory");
  run->add_option("--events", events_path, "Write the client event log CSV");

  // oracle
  std::string instance_path;
  bool exact = false;
  auto* oracle =
      app.add_subcommand("oracle", "Solve an offline scheduling instance");
  oracle->add_option("--instance", instance_path, "Instance file")->required();
  oracle->add_flag("--exact", exact, "Exhaustive search (tiny instances)");

  // report
  std::vector<std::string> archives;
  std::string baseline = "ub";
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge archives into tables");
  report->add_option("archives", archives, "Archive directories")->required();
  report->add_option("--baseline", baseline, "Baseline strategy")
      ->capture_default_str();
  report->add_option("--out", report_out,
                     "Directory for series.csv, delta.csv and table.txt");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  auto log = [&](const std::string& line) {
    if (g.verbose) err << line << std::endl;
  };

  try {
    if (*serve_gateway) {
      if (gw_initial >= 0) gw.initial_tokens = gw_initial;
      gw.stats_endpoint = !no_stats;
      gw.Validate();
      const auto origin = std::chrono::steady_clock::now();
      HttpGatewayServer server(gw, [origin] { return SteadySeconds(origin); });
      ServeUntilSignal(
          [&] {
            server.Start();
            err << "gateway listening on port " << server.port() << std::endl;
          },
          [&] { server.Stop(); });
      return kExitOk;
    }

    if (*serve_telemetry) {
      TelemetryServerConfig tc;
      std::tie(tc.host, tc.port) = ParseHostPort(telemetry_listen);
      if (!(report_interval > 0)) {
        throw UsageError("--report-interval must be positive");
      }
      tc.report_interval = report_interval;
      tc.staleness_horizon = 2.0 * report_interval;
      if (limiter_rate >= 0) tc.limiter_rate_per_min = limiter_rate;
      const auto origin = std::chrono::steady_clock::now();
      TelemetryServer server(tc, [origin] { return SteadySeconds(origin); });
      ServeUntilSignal(
          [&] {
            server.Start();
            err << "telemetry listening on port " << server.port() << std::endl;
          },
          [&] { server.Stop(); });
      return kExitOk;
    }

    if (*gen) {
      SynthConfig sc;
      sc.num_clients = clients;
      std::tie(sc.range_lo, sc.range_hi) = ParseRange(range);
      sc.horizon = horizon;
      sc.seed = ResolveSeed(g, 1);
      sc.timestamps = ParseTimestampMode(timestamps);
      if (gen->count("--size") > 0) sc.target_size = gen_size;
      sc.label = "synthetic";
      const TraceDataset dataset = GenSynthetic(sc);
      WriteOut(gen_out, SerializeDataset(dataset), out);
      log("generated " + std::to_string(dataset.size()) + " requests for " +
          std::to_string(dataset.user_count) + " clients");
      return kExitOk;
    }

    if (*ingest) {
      const AccessLog parsed = ParseAccessLog(log_path);
      for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";
      const TraceDataset dataset =
          BuildRealDataset(parsed.events, ingest_size, skip);
      WriteOut(ingest_out, SerializeDataset(dataset), out);
      log(std::to_string(dataset.size()) + " requests, " +
          std::to_string(dataset.user_count) + " users, last timestamp " +
          FormatDouble(dataset.last_timestamp) + " s");
      return kExitOk;
    }

    if (*run) {
      json j = g.config.empty() ? json::object() : LoadJsonFile(g.config);
      if (!j.is_object()) throw ConfigError("config must be a JSON object");
      if (!profile.empty()) j["profile"] = profile;
      if (!strategy.empty()) j["strategy"] = strategy;
      if (!clock.empty()) j["clock"] = clock;
      if (!dataset_path.empty()) j["dataset"] = dataset_path;
      if (!gateway_address.empty()) j["gateway_address"] = gateway_address;
      if (!telemetry_address.empty()) j["telemetry_address"] = telemetry_address;
      if (runs) j["runs"] = *runs;
      if (time_scale) j["time_scale"] = *time_scale;
      if (run_size) j["size"] = *run_size;
      if (dataset_seed) j["dataset_seed"] = *dataset_seed;
      if (g.seed || std::getenv("THROTTLEKIT_SEED") || !j.contains("seed")) {
        j["seed"] = ResolveSeed(g, j.value("seed", std::uint64_t{1}));
      }
      if (run_capacity) j["gateway"]["capacity"] = *run_capacity;
      if (run_rate) j["gateway"]["rate_per_min"] = *run_rate;
      ExperimentConfig config = ParseExperimentConfig(j);
      config.record_events = !events_path.empty();
      log("running " + std::string(ToString(config.strategy)) + " on " +
          config.profile + ", " + std::to_string(config.runs) + " runs, " +
          std::string(ToString(config.clock)) + " clock");
      const ExperimentResult result = RunExperiment(config);
      if (!archive.empty()) {
        WriteArchive(result, config, archive);
        WriteOut((std::filesystem::path(archive) / "dataset.csv").string(),
                 SerializeDataset(result.dataset), out);
        log("archive written to " + archive);
      }
      if (!events_path.empty()) {
        WriteOut(events_path, EventsCsv(result.runs), out);
      }
      out << SummaryCsv({result.summary});
      return kExitOk;
    }

    if (*oracle) {
      const ProblemInstance instance = LoadInstance(instance_path);
      const SolveResult r =
          exact ? SolveExhaustive(instance) : SolveGreedy(instance);
      json j = {{"feasible", r.feasible},
                {"solver", exact ? "exhaustive" : "greedy"}};
      j["objective"] = r.feasible ? json(r.objective) : json(nullptr);
      j["schedule"] = r.feasible ? json(r.schedule.slots) : json(nullptr);
      if (r.min_sufficient_t_max) {
        j["min_sufficient_t_max"] = *r.min_sufficient_t_max;
      }
      out << j.dump() << "\n";
      return kExitOk;
    }

    if (*report) {
      std::vector<std::filesystem::path> dirs(archives.begin(), archives.end());
      const ReportOutput r = Report(dirs, baseline);
      if (!report_out.empty()) {
        std::filesystem::create_directories(report_out);
        const std::filesystem::path dir(report_out);
        WriteOut((dir / "series.csv").string(), r.series_csv, out);
        WriteOut((dir / "delta.csv").string(), r.delta_csv, out);
        WriteOut((dir / "table.txt").string(), r.table, out);
      }
      out << r.table;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace throttlekit
