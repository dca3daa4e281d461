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

#include "throttlekit/emulator.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <queue>
#include <sstream>
#include <thread>
#include <tuple>

#include "httplib.h"
#include "throttlekit/oracle.h"
#include "throttlekit/random.h"
#include "throttlekit/telemetry.h"

namespace throttlekit {

using nlohmann::json;

std::string_view ToString(ClockMode mode) {
  return mode == ClockMode::kVirtual ? "virtual" : "wall";
}

ClockMode ParseClockMode(std::string_view name) {
  if (name == "virtual") return ClockMode::kVirtual;
  if (name == "wall") return ClockMode::kWall;
  throw ConfigError("unknown clock '" + std::string(name) +
                    "' (expected virtual or wall)");
}

std::string_view ToString(EventKind kind) {
  switch (kind) {
    case EventKind::kArrive:
      return "arrive";
    case EventKind::kSend:
      return "send";
    case EventKind::kSuccess:
      return "success";
    case EventKind::kReject:
      return "reject";
    case EventKind::kReport:
      return "report";
  }
  return "unknown";
}

// --- profiles -----------------------------------------------------------------

Profile LoadProfile(std::string_view name) {
  // Real-trace tuning; the synthetic scenarios override a subset.
  Profile profile;
  profile.name = std::string(name);
  StrategyParams& p = profile.params;
  p.ub = UbParams{};
  p.wb.backoff = p.ub;
  p.wb.max_per_window = 15;
  p.atb = AtbParams{};
  p.aatb.atb = p.atb;
  p.aatb.atb.alpha = 1.4;
  p.aatb.atb.beta = 1.2;
  p.aatb.report_interval = 30.0;

  if (name == "real") return profile;

  SynthConfig synth;
  synth.horizon = 300.0;
  if (name == "synth5") {
    synth.num_clients = 5;
    synth.range_lo = 1;
    synth.range_hi = 200;
    // Gaps of ~100 s cannot fit hundreds of requests into the horizon.
    synth.timestamps = TimestampMode::kAbsolute;
    p.wb.max_per_window = 40;
    p.atb.initial_congestion_rate_per_min = 300;
    p.atb.bucket_size = 40;
    p.atb.initial_rate_per_min = 40;
  } else if (name == "synth100") {
    synth.num_clients = 100;
    synth.range_lo = 1;
    synth.range_hi = 10;
    p.wb.max_per_window = 4;
    p.atb.initial_congestion_rate_per_min = 12;
    p.atb.bucket_size = 4;
    p.atb.initial_rate_per_min = 4;
  } else {
    throw ConfigError("unknown profile '" + std::string(name) +
                      "' (expected real, synth5 or synth100)");
  }
  synth.label = profile.name;
  profile.synth = synth;
  return profile;
}

void ExperimentConfig::UseProfile(const std::string& name) {
  profile = name;
  params = LoadProfile(name).params;
}

void ExperimentConfig::Validate() const {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (!(time_scale > 0)) throw ConfigError("time_scale must be positive");
  if (!(network_rtt >= 0)) throw ConfigError("rtt must be non-negative");
  gateway.Validate();
  if (clock == ClockMode::kVirtual &&
      (gateway_address || telemetry_address)) {
    throw ConfigError(
        "the virtual clock needs embedded services; external gateway or "
        "telemetry endpoints require --clock wall");
  }
  if (clock == ClockMode::kWall && gateway_address && time_scale != 1.0) {
    throw ConfigError("an external gateway runs in real time; time_scale "
                      "must be 1");
  }
  if (strategy == StrategyKind::kAatb && clock == ClockMode::kWall &&
      gateway_address && !telemetry_address) {
    throw ConfigError("AATB against an external gateway needs a telemetry "
                      "server address");
  }
}

json ToJson(const StrategyParams& p) {
  auto ub = [](const UbParams& u) {
    return json{{"initial_bound", u.initial_bound},
                {"cap_lo", u.cap_lo},
                {"cap_hi", u.cap_hi},
                {"mode", u.mode == UbBoundMode::kDoubling ? "doubling"
                                                          : "fresh"}};
  };
  auto atb = [](const AtbParams& a) {
    return json{{"sigma_per_min", a.sigma_per_min},
                {"delta_per_min", a.delta_per_min},
                {"alpha", a.alpha},
                {"beta", a.beta},
                {"initial_tokens", a.initial_tokens},
                {"bucket_size", a.bucket_size},
                {"initial_rate_per_min", a.initial_rate_per_min},
                {"initial_congestion_rate_per_min",
                 a.initial_congestion_rate_per_min}};
  };
  json aatb = atb(p.aatb.atb);
  aatb["report_interval"] = p.aatb.report_interval;
  aatb["default_limiter_rate_per_min"] = p.aatb.default_limiter_rate_per_min;
  json wb = ub(p.wb.backoff);
  wb["max_per_window"] = p.wb.max_per_window;
  wb["window"] = p.wb.window;
  return json{{"ub", ub(p.ub)}, {"wb", wb}, {"atb", atb(p.atb)}, {"aatb", aatb}};
}

namespace {

template <typename T>
void Take(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void RejectUnknown(const json& obj, std::initializer_list<const char*> known,
                   const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(),
                     [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

void ApplyUb(const json& j, UbParams& u, const std::string& where) {
  RejectUnknown(j, {"initial_bound", "cap_lo", "cap_hi", "mode"}, where);
  Take(j, "initial_bound", u.initial_bound);
  Take(j, "cap_lo", u.cap_lo);
  Take(j, "cap_hi", u.cap_hi);
  if (auto it = j.find("mode"); it != j.end()) {
    const auto mode = it->get<std::string>();
    if (mode == "doubling") {
      u.mode = UbBoundMode::kDoubling;
    } else if (mode == "fresh") {
      u.mode = UbBoundMode::kFreshDraw;
    } else {
      throw ConfigError("unknown backoff mode '" + mode + "'");
    }
  }
}

void ApplyAtb(const json& j, AtbParams& a, std::initializer_list<const char*> extra,
              const std::string& where) {
  std::vector<const char*> known = {
      "sigma_per_min", "delta_per_min", "alpha", "beta", "initial_tokens",
      "bucket_size", "initial_rate_per_min", "initial_congestion_rate_per_min"};
  known.insert(known.end(), extra.begin(), extra.end());
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(),
                     [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
  Take(j, "sigma_per_min", a.sigma_per_min);
  Take(j, "delta_per_min", a.delta_per_min);
  Take(j, "alpha", a.alpha);
  Take(j, "beta", a.beta);
  Take(j, "initial_tokens", a.initial_tokens);
  Take(j, "bucket_size", a.bucket_size);
  Take(j, "initial_rate_per_min", a.initial_rate_per_min);
  Take(j, "initial_congestion_rate_per_min", a.initial_congestion_rate_per_min);
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be an object");
  RejectUnknown(j,
                {"strategy", "profile", "runs", "clock", "time_scale", "seed",
                 "dataset", "size", "dataset_seed", "gateway", "rtt",
                 "gateway_address", "telemetry_address", "params",
                 "max_transport_retries"},
                "experiment config");
  ExperimentConfig config;
  try {
    if (auto it = j.find("profile"); it != j.end()) {
      config.UseProfile(it->get<std::string>());
    }
    if (auto it = j.find("strategy"); it != j.end()) {
      config.strategy = ParseStrategyKind(it->get<std::string>());
    }
    if (auto it = j.find("clock"); it != j.end()) {
      config.clock = ParseClockMode(it->get<std::string>());
    }
    if (auto it = j.find("dataset"); it != j.end()) {
      config.dataset_path = it->get<std::string>();
    }
    Take(j, "runs", config.runs);
    Take(j, "time_scale", config.time_scale);
    Take(j, "seed", config.seed);
    Take(j, "size", config.size);
    Take(j, "dataset_seed", config.dataset_seed);
    Take(j, "rtt", config.network_rtt);
    Take(j, "max_transport_retries", config.max_transport_retries);
    if (auto it = j.find("gateway_address"); it != j.end()) {
      config.gateway_address = it->get<std::string>();
    }
    if (auto it = j.find("telemetry_address"); it != j.end()) {
      config.telemetry_address = it->get<std::string>();
    }
    if (auto it = j.find("gateway"); it != j.end()) {
      RejectUnknown(*it, {"capacity", "rate_per_min", "initial_tokens"},
                    "gateway");
      Take(*it, "capacity", config.gateway.capacity);
      Take(*it, "rate_per_min", config.gateway.rate_per_min);
      if (auto t = it->find("initial_tokens"); t != it->end()) {
        config.gateway.initial_tokens = t->get<double>();
      }
    }
    if (auto it = j.find("params"); it != j.end()) {
      const json& p = *it;
      RejectUnknown(p, {"ub", "wb", "atb", "aatb"}, "params");
      if (auto u = p.find("ub"); u != p.end()) {
        ApplyUb(*u, config.params.ub, "params.ub");
      }
      if (auto w = p.find("wb"); w != p.end()) {
        json backoff = *w;
        Take(*w, "max_per_window", config.params.wb.max_per_window);
        Take(*w, "window", config.params.wb.window);
        backoff.erase("max_per_window");
        backoff.erase("window");
        ApplyUb(backoff, config.params.wb.backoff, "params.wb");
      }
      if (auto a = p.find("atb"); a != p.end()) {
        ApplyAtb(*a, config.params.atb, {}, "params.atb");
      }
      if (auto a = p.find("aatb"); a != p.end()) {
        ApplyAtb(*a, config.params.aatb.atb,
                 {"report_interval", "default_limiter_rate_per_min"},
                 "params.aatb");
        Take(*a, "report_interval", config.params.aatb.report_interval);
        Take(*a, "default_limiter_rate_per_min",
             config.params.aatb.default_limiter_rate_per_min);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  config.Validate();
  return config;
}

std::string ExperimentConfig::SetupHash() const {
  json j = {{"profile", profile},
            {"runs", runs},
            {"clock", std::string(ToString(clock))},
            {"time_scale", time_scale},
            {"seed", seed},
            {"dataset_seed", dataset_seed},
            {"rtt", network_rtt},
            {"gateway",
             {{"capacity", gateway.capacity},
              {"rate_per_min", gateway.rate_per_min},
              {"initial_tokens",
               gateway.initial_tokens.value_or(gateway.capacity)}}},
            {"params", ToJson(params)}};
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(j.dump())));
  return buf;
}

// --- metrics ------------------------------------------------------------------

RunMetrics RecomputeMetrics(const RunMetrics& run) {
  RunMetrics out = run;
  out.total_duration = 0.0;
  out.avg_service_time = 0.0;
  out.total_response_time = 0.0;
  out.total_429 = 0;
  if (run.detail.empty()) return out;
  Seconds first = run.detail.front().arrival;
  Seconds last = run.detail.front().served_at;
  double service = 0.0;
  for (const auto& r : run.detail) {
    first = std::min(first, r.arrival);
    last = std::max(last, r.served_at);
    service += r.served_at - r.first_send;
    out.total_response_time += r.served_at - r.arrival;
    out.total_429 += r.rejects;
  }
  out.total_duration = last - first;
  out.avg_service_time = service / static_cast<double>(run.detail.size());
  return out;
}

namespace {

MetricSummary Describe(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace

Summary Summarize(const std::vector<RunMetrics>& runs) {
  Summary s;
  s.runs = static_cast<int>(runs.size());
  std::vector<double> duration, service, errors, updates, response;
  for (const auto& r : runs) {
    duration.push_back(r.total_duration);
    service.push_back(r.avg_service_time);
    errors.push_back(static_cast<double>(r.total_429));
    updates.push_back(static_cast<double>(r.update_messages));
    response.push_back(r.total_response_time);
  }
  s.total_duration = Describe(duration);
  s.avg_service_time = Describe(service);
  s.total_429 = Describe(errors);
  s.update_messages = Describe(updates);
  s.observed_response_total = Describe(response).mean;
  return s;
}

TraceDataset ResolveDataset(const ExperimentConfig& config) {
  if (config.dataset) return *config.dataset;
  if (config.dataset_path) return ImportDataset(*config.dataset_path);
  const Profile profile = LoadProfile(config.profile);
  if (!profile.synth) {
    throw ConfigError("profile '" + config.profile +
                      "' has no synthetic workload; pass a dataset file");
  }
  SynthConfig synth = *profile.synth;
  synth.seed = config.dataset_seed;
  synth.target_size = config.size;
  synth.label = config.profile + "-" + std::to_string(config.size);
  return GenSynthetic(synth);
}

// --- virtual clock ------------------------------------------------------------

namespace {

struct ClientActor {
  std::string id;
  std::vector<Request> trace;        // seq order
  std::vector<size_t> detail_index;  // trace position -> RunMetrics::detail
  size_t arrived = 0;
  size_t head = 0;
  bool in_flight = false;
  std::uint64_t wake_generation = 0;
  std::unique_ptr<Strategy> strategy;

  bool done() const { return head == trace.size(); }
  bool waiting() const { return !in_flight && head < arrived; }
};

class VirtualSimulation {
 public:
  VirtualSimulation(const ExperimentConfig& config, const TraceDataset& dataset,
                    std::uint64_t run_seed)
      : config_(config),
        gateway_(config.gateway, 0.0),
        aggregator_(2.0 * config.params.aatb.report_interval),
        telemetry_(aggregator_) {
    const auto groups = dataset.ByClient();
    size_t index = 0;
    for (const auto& [id, requests] : groups) {
      ClientActor actor;
      actor.id = id;
      actor.trace = requests;
      actor.strategy =
          MakeStrategy(config.strategy, config.params, id,
                       DeriveSeed(run_seed, index), requests.front().arrival_time,
                       &telemetry_);
      for (const auto& r : requests) {
        actor.detail_index.push_back(metrics_.detail.size());
        metrics_.detail.push_back(
            RequestRecord{r.client_id, r.seq, r.arrival_time, -1.0, -1.0, 0, 0});
      }
      clients_.push_back(std::move(actor));
      ++index;
    }
    metrics_.seed = run_seed;
  }

  RunMetrics Run() {
    for (size_t c = 0; c < clients_.size(); ++c) {
      const auto& trace = clients_[c].trace;
      for (size_t k = 0; k < trace.size(); ++k) {
        Push(trace[k].arrival_time, c, Type::kArrival, k);
      }
      const Seconds interval = clients_[c].strategy->report_interval();
      if (interval > 0) {
        Push(trace.front().arrival_time + interval, c, Type::kReport);
      }
    }

    constexpr std::uint64_t kMaxEvents = 200'000'000;
    std::uint64_t processed = 0;
    while (!queue_.empty()) {
      Event e = queue_.top();
      queue_.pop();
      now_ = e.time;
      if (++processed > kMaxEvents) {
        throw Error("virtual simulation did not terminate");
      }
      ClientActor& client = clients_[e.actor];
      switch (e.type) {
        case Type::kArrival:
          client.arrived = std::max(client.arrived, e.arg + 1);
          Log(client, static_cast<std::int64_t>(e.arg), EventKind::kArrive);
          Dispatch(e.actor);
          break;
        case Type::kWake:
          if (e.generation == client.wake_generation) Wake(e.actor);
          break;
        case Type::kAtGateway: {
          const Request& r = client.trace[e.arg];
          const Response resp = gateway_.Handle(MultiplyBody(r.a, r.b), now_);
          Push(now_ + config_.network_rtt / 2.0, e.actor, Type::kResponse,
               e.arg, resp.status);
          break;
        }
        case Type::kResponse:
          OnResponse(e.actor, e.arg, e.status);
          break;
        case Type::kReport:
          if (client.done()) break;
          if (client.strategy->OnReportTimer(now_)) {
            Log(client, -1, EventKind::kReport);
          }
          Push(now_ + client.strategy->report_interval(), e.actor,
               Type::kReport);
          Dispatch(e.actor);
          break;
      }
    }
    return Finish();
  }

 private:
  enum class Type { kArrival, kWake, kAtGateway, kResponse, kReport };

  struct Event {
    Seconds time;
    size_t actor;
    std::uint64_t sequence;
    Type type;
    size_t arg = 0;
    int status = 0;
    std::uint64_t generation = 0;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.time, a.actor, a.sequence) >
             std::tie(b.time, b.actor, b.sequence);
    }
  };

  void Push(Seconds time, size_t actor, Type type, size_t arg = 0,
            int status = 0, std::uint64_t generation = 0) {
    queue_.push(Event{time, actor, next_sequence_++, type, arg, status,
                      generation});
  }

  void Log(const ClientActor& client, std::int64_t seq, EventKind kind) {
    if (!config_.record_events) return;
    metrics_.events.push_back(
        ClientEvent{now_, client.id, seq, kind, client.strategy->Probe()});
  }

  // (Re)schedules the head request; a newer wake supersedes older ones.
  void Dispatch(size_t c) {
    ClientActor& client = clients_[c];
    if (!client.waiting()) return;
    const Seconds at = client.strategy->NextSendTime(now_);
    Push(std::max(at, now_), c, Type::kWake, 0, 0, ++client.wake_generation);
  }

  void Wake(size_t c) {
    ClientActor& client = clients_[c];
    if (!client.waiting()) return;
    const Seconds at = client.strategy->NextSendTime(now_);
    if (at > now_ + 1e-9) {
      Push(at, c, Type::kWake, 0, 0, ++client.wake_generation);
      return;
    }
    client.strategy->OnSend(now_);
    client.in_flight = true;
    RequestRecord& rec = metrics_.detail[client.detail_index[client.head]];
    if (rec.first_send < 0) rec.first_send = now_;
    ++rec.attempts;
    Log(client, client.trace[client.head].seq, EventKind::kSend);
    Push(now_ + config_.network_rtt / 2.0, c, Type::kAtGateway, client.head);
  }

  void OnResponse(size_t c, size_t position, int status) {
    ClientActor& client = clients_[c];
    client.in_flight = false;
    RequestRecord& rec = metrics_.detail[client.detail_index[position]];
    if (status == 200) {
      rec.served_at = now_;
      client.strategy->OnSuccess(now_);
      ++client.head;
      Log(client, rec.seq, EventKind::kSuccess);
    } else if (status == 429) {
      ++rec.rejects;
      ++metrics_.total_429;
      client.strategy->OnReject(now_);
      Log(client, rec.seq, EventKind::kReject);
    } else {
      throw Error("gateway answered " + std::to_string(status));
    }
    Dispatch(c);
  }

  RunMetrics Finish() {
    for (const auto& client : clients_) {
      if (!client.done()) throw Error("client " + client.id + " unfinished");
      metrics_.update_messages += client.strategy->telemetry_messages();
    }
    const GatewayStats stats = gateway_.Stats();
    metrics_.gateway_admitted = stats.admitted;
    metrics_.gateway_rejected = stats.rejected;
    RunMetrics out = RecomputeMetrics(metrics_);
    if (out.total_429 != metrics_.total_429) {
      throw Error("429 ledger mismatch between detail log and client counter");
    }
    return out;
  }

  const ExperimentConfig& config_;
  Gateway gateway_;
  Aggregator aggregator_;
  EmbeddedTelemetry telemetry_;
  std::vector<ClientActor> clients_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t next_sequence_ = 0;
  Seconds now_ = 0.0;
  RunMetrics metrics_;
};

}  // namespace

RunMetrics RunVirtual(const ExperimentConfig& config,
                      const TraceDataset& dataset, std::uint64_t run_seed,
                      int run_index) {
  if (dataset.requests.empty()) throw Error("dataset is empty");
  VirtualSimulation sim(config, dataset, run_seed);
  RunMetrics metrics = sim.Run();
  metrics.run_index = run_index;
  return metrics;
}

// --- wall clock -----------------------------------------------------------------

namespace {

class ScaledClock {
 public:
  explicit ScaledClock(double scale)
      : start_(std::chrono::steady_clock::now()), scale_(scale) {}

  Seconds Now() const {
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start_;
    return elapsed.count() * scale_;
  }

  void SleepUntil(Seconds t) const {
    const Seconds wait = t - Now();
    if (wait <= 0) return;
    std::this_thread::sleep_for(std::chrono::duration<double>(wait / scale_));
  }

 private:
  std::chrono::steady_clock::time_point start_;
  double scale_;
};

struct WallClientResult {
  std::vector<RequestRecord> records;
  std::vector<ClientEvent> events;
  std::int64_t telemetry_messages = 0;
  bool transport_failed = false;
};

WallClientResult RunWallClient(const ExperimentConfig& config,
                               const std::vector<Request>& trace,
                               const ScaledClock& clock,
                               const std::string& gateway_host,
                               int gateway_port,
                               const std::string& telemetry_host,
                               int telemetry_port, std::uint64_t seed) {
  WallClientResult result;
  const std::string& id = trace.front().client_id;
  httplib::Client http(gateway_host, gateway_port);
  http.set_keep_alive(true);
  http.set_connection_timeout(5);
  http.set_read_timeout(10);

  std::unique_ptr<UdpTelemetryClient> telemetry;
  if (config.strategy == StrategyKind::kAatb) {
    telemetry = std::make_unique<UdpTelemetryClient>(
        telemetry_host, telemetry_port, 0.25);
  }
  auto strategy = MakeStrategy(config.strategy, config.params, id, seed,
                               trace.front().arrival_time, telemetry.get());
  const Seconds interval = strategy->report_interval();
  Seconds next_report = interval > 0 ? trace.front().arrival_time + interval
                                     : std::numeric_limits<double>::infinity();

  auto log = [&](std::int64_t seq, EventKind kind) {
    if (config.record_events) {
      result.events.push_back(
          ClientEvent{clock.Now(), id, seq, kind, strategy->Probe()});
    }
  };
  auto service_reports = [&](Seconds now) {
    while (next_report <= now) {
      if (strategy->OnReportTimer(now)) log(-1, EventKind::kReport);
      next_report += interval;
    }
  };

  for (const Request& r : trace) {
    RequestRecord rec{r.client_id, r.seq, r.arrival_time, -1.0, -1.0, 0, 0};
    // Idle until the request arrives, keeping the report timer alive.
    while (clock.Now() < r.arrival_time) {
      clock.SleepUntil(std::min(r.arrival_time, next_report));
      service_reports(clock.Now());
    }
    log(r.seq, EventKind::kArrive);
    int transport_errors = 0;
    const std::string body = MultiplyBody(r.a, r.b);
    while (true) {
      Seconds now = clock.Now();
      service_reports(now);
      const Seconds send_at = strategy->NextSendTime(now);
      if (send_at > now) {
        clock.SleepUntil(std::min(send_at, next_report));
        continue;
      }
      strategy->OnSend(now);
      if (rec.first_send < 0) rec.first_send = now;
      ++rec.attempts;
      log(r.seq, EventKind::kSend);
      auto res = http.Post("/multiply", body, "application/json");
      now = clock.Now();
      if (!res || (res->status != 200 && res->status != 429)) {
        if (++transport_errors > config.max_transport_retries) {
          result.transport_failed = true;
          result.telemetry_messages = strategy->telemetry_messages();
          return result;
        }
        continue;
      }
      if (res->status == 200) {
        rec.served_at = now;
        strategy->OnSuccess(now);
        log(r.seq, EventKind::kSuccess);
        break;
      }
      ++rec.rejects;
      strategy->OnReject(now);
      log(r.seq, EventKind::kReject);
    }
    result.records.push_back(rec);
  }
  result.telemetry_messages = strategy->telemetry_messages();
  return result;
}

}  // namespace

std::optional<RunMetrics> RunWall(const ExperimentConfig& config,
                                  const TraceDataset& dataset,
                                  std::uint64_t run_seed, int run_index) {
  if (dataset.requests.empty()) throw Error("dataset is empty");
  ScaledClock clock(config.time_scale);
  auto clock_fn = [&clock] { return clock.Now(); };

  std::unique_ptr<HttpGatewayServer> gateway;
  std::unique_ptr<TelemetryServer> telemetry;
  std::string gateway_host = "127.0.0.1";
  int gateway_port = 0;
  std::string telemetry_host = "127.0.0.1";
  int telemetry_port = 0;

  if (config.gateway_address) {
    std::tie(gateway_host, gateway_port) =
        ParseHostPort(*config.gateway_address);
  } else {
    GatewayConfig gc = config.gateway;
    gc.listen_address = "127.0.0.1:0";
    gc.worker_threads =
        std::max<int>(gc.worker_threads,
                      static_cast<int>(dataset.user_count) + 8);
    gateway = std::make_unique<HttpGatewayServer>(gc, clock_fn);
    gateway->Start();
    gateway_port = gateway->port();
  }
  if (config.strategy == StrategyKind::kAatb) {
    if (config.telemetry_address) {
      std::tie(telemetry_host, telemetry_port) =
          ParseHostPort(*config.telemetry_address);
    } else {
      TelemetryServerConfig tc;
      tc.report_interval = config.params.aatb.report_interval;
      tc.staleness_horizon = 2.0 * tc.report_interval;
      telemetry = std::make_unique<TelemetryServer>(tc, clock_fn);
      telemetry->Start();
      telemetry_port = telemetry->port();
    }
  }

  const auto groups = dataset.ByClient();
  std::vector<WallClientResult> results(groups.size());
  std::vector<std::thread> threads;
  size_t index = 0;
  for (const auto& [id, trace] : groups) {
    threads.emplace_back([&, index, trace = &trace] {
      results[index] = RunWallClient(config, *trace, clock, gateway_host,
                                     gateway_port, telemetry_host,
                                     telemetry_port,
                                     DeriveSeed(run_seed, index));
    });
    ++index;
  }
  for (auto& t : threads) t.join();

  RunMetrics metrics;
  metrics.run_index = run_index;
  metrics.seed = run_seed;
  for (auto& r : results) {
    if (r.transport_failed) return std::nullopt;
    metrics.update_messages += r.telemetry_messages;
    metrics.detail.insert(metrics.detail.end(), r.records.begin(),
                          r.records.end());
    metrics.events.insert(metrics.events.end(), r.events.begin(),
                          r.events.end());
  }
  std::stable_sort(metrics.events.begin(), metrics.events.end(),
                   [](const ClientEvent& a, const ClientEvent& b) {
                     return a.time < b.time;
                   });
  if (gateway) {
    const GatewayStats stats = gateway->gateway().Stats();
    metrics.gateway_admitted = stats.admitted;
    metrics.gateway_rejected = stats.rejected;
  } else {
    httplib::Client http(gateway_host, gateway_port);
    if (auto res = http.Get("/stats"); res && res->status == 200) {
      const json j = json::parse(res->body, nullptr, false);
      if (j.is_object()) {
        metrics.gateway_admitted = j.value("admitted", -1);
        metrics.gateway_rejected = j.value("rejected", -1);
      }
    }
  }
  return RecomputeMetrics(metrics);
}

ExperimentResult RunExperiment(const ExperimentConfig& config) {
  config.Validate();
  ExperimentResult result;
  result.dataset = ResolveDataset(config);
  if (result.dataset.requests.empty()) throw Error("dataset is empty");

  if (config.clock == ClockMode::kWall && config.gateway_address) {
    auto [host, port] = ParseHostPort(*config.gateway_address);
    httplib::Client probe(host, port);
    probe.set_connection_timeout(2);
    // A malformed body is answered with 400 and spends no token.
    auto res = probe.Post("/multiply", "{}", "application/json");
    if (!res) {
      throw Error("gateway " + *config.gateway_address + " is unreachable");
    }
  }

  constexpr int kMaxInvalidReruns = 5;
  for (int k = 0; k < config.runs; ++k) {
    int invalid = 0;
    while (true) {
      const std::uint64_t seed =
          DeriveSeed(config.seed, static_cast<std::uint64_t>(k) +
                                      (static_cast<std::uint64_t>(invalid) << 32));
      std::optional<RunMetrics> run;
      if (config.clock == ClockMode::kVirtual) {
        run = RunVirtual(config, result.dataset, seed, k);
      } else {
        run = RunWall(config, result.dataset, seed, k);
      }
      if (run) {
        run->run_index = k;
        run->invalid_attempts = invalid;
        result.runs.push_back(std::move(*run));
        break;
      }
      if (++invalid > kMaxInvalidReruns) {
        throw Error("run " + std::to_string(k) +
                    " failed repeatedly with transport errors");
      }
    }
  }

  Summary& s = result.summary;
  s = Summarize(result.runs);
  s.strategy = std::string(ToString(config.strategy));
  s.profile = config.profile;
  s.dataset_size = result.dataset.size();
  s.dataset_label = result.dataset.label;
  s.dataset_hash = DatasetHash(result.dataset);
  s.config_hash = config.SetupHash();

  const double rate_per_slot = PerMinuteToPerSecond(config.gateway.rate_per_min);
  const auto horizon = static_cast<std::int64_t>(std::ceil(
      result.dataset.last_timestamp +
      static_cast<double>(result.dataset.size()) / rate_per_slot + 2.0));
  const ProblemInstance instance = ProblemInstance::FromDataset(
      result.dataset, config.gateway.initial_tokens.value_or(config.gateway.capacity),
      rate_per_slot, horizon);
  const SolveResult oracle = SolveGreedy(instance);
  s.oracle_objective = oracle.feasible ? oracle.objective : -1.0;
  return result;
}

// --- archives -----------------------------------------------------------------

json RunToJson(const RunMetrics& run) {
  json detail = json::array();
  for (const auto& r : run.detail) {
    detail.push_back({r.client_id, r.seq, r.arrival, r.first_send, r.served_at,
                      r.attempts, r.rejects});
  }
  return json{{"run_index", run.run_index},
              {"seed", run.seed},
              {"total_duration", run.total_duration},
              {"avg_service_time", run.avg_service_time},
              {"total_429", run.total_429},
              {"update_messages", run.update_messages},
              {"gateway_admitted", run.gateway_admitted},
              {"gateway_rejected", run.gateway_rejected},
              {"total_response_time", run.total_response_time},
              {"invalid_attempts", run.invalid_attempts},
              {"detail_columns",
               {"client_id", "seq", "arrival", "first_send", "served_at",
                "attempts", "rejects"}},
              {"detail", std::move(detail)}};
}

RunMetrics RunFromJson(const json& j) {
  try {
    RunMetrics run;
    run.run_index = j.at("run_index").get<int>();
    run.seed = j.at("seed").get<std::uint64_t>();
    run.total_duration = j.at("total_duration").get<double>();
    run.avg_service_time = j.at("avg_service_time").get<double>();
    run.total_429 = j.at("total_429").get<std::int64_t>();
    run.update_messages = j.at("update_messages").get<std::int64_t>();
    run.gateway_admitted = j.at("gateway_admitted").get<std::int64_t>();
    run.gateway_rejected = j.at("gateway_rejected").get<std::int64_t>();
    run.total_response_time = j.at("total_response_time").get<double>();
    run.invalid_attempts = j.at("invalid_attempts").get<int>();
    for (const auto& row : j.at("detail")) {
      run.detail.push_back(RequestRecord{
          row.at(0).get<std::string>(), row.at(1).get<std::int64_t>(),
          row.at(2).get<double>(), row.at(3).get<double>(),
          row.at(4).get<double>(), row.at(5).get<std::int64_t>(),
          row.at(6).get<std::int64_t>()});
    }
    return run;
  } catch (const json::exception& e) {
    throw FormatError(std::string("run archive: ") + e.what());
  }
}

json SummaryToJson(const Summary& s) {
  auto metric = [](const MetricSummary& m) {
    return json{{"mean", m.mean}, {"stddev", m.stddev}};
  };
  return json{{"strategy", s.strategy},
              {"profile", s.profile},
              {"dataset_size", s.dataset_size},
              {"dataset_label", s.dataset_label},
              {"dataset_hash", s.dataset_hash},
              {"config_hash", s.config_hash},
              {"runs", s.runs},
              {"total_duration", metric(s.total_duration)},
              {"avg_service_time", metric(s.avg_service_time)},
              {"total_429", metric(s.total_429)},
              {"update_messages", metric(s.update_messages)},
              {"oracle_objective", s.oracle_objective},
              {"observed_response_total", s.observed_response_total}};
}

Summary SummaryFromJson(const json& j) {
  try {
    auto metric = [&](const char* key) {
      return MetricSummary{j.at(key).at("mean").get<double>(),
                           j.at(key).at("stddev").get<double>()};
    };
    Summary s;
    s.strategy = j.at("strategy").get<std::string>();
    s.profile = j.at("profile").get<std::string>();
    s.dataset_size = j.at("dataset_size").get<std::int64_t>();
    s.dataset_label = j.at("dataset_label").get<std::string>();
    s.dataset_hash = j.at("dataset_hash").get<std::string>();
    s.config_hash = j.at("config_hash").get<std::string>();
    s.runs = j.at("runs").get<int>();
    s.total_duration = metric("total_duration");
    s.avg_service_time = metric("avg_service_time");
    s.total_429 = metric("total_429");
    s.update_messages = metric("update_messages");
    s.oracle_objective = j.at("oracle_objective").get<double>();
    s.observed_response_total = j.at("observed_response_total").get<double>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("summary archive: ") + e.what());
  }
}

std::string SummaryCsv(const std::vector<Summary>& summaries) {
  std::ostringstream out;
  out << "dataset_size,strategy,metric,mean,stddev\n";
  for (const auto& s : summaries) {
    const std::pair<const char*, const MetricSummary*> metrics[] = {
        {"total_429", &s.total_429},
        {"total_duration", &s.total_duration},
        {"avg_service_time", &s.avg_service_time},
        {"update_messages", &s.update_messages}};
    for (const auto& [name, m] : metrics) {
      out << s.dataset_size << ',' << s.strategy << ',' << name << ','
          << FormatDouble(m->mean) << ',' << FormatDouble(m->stddev) << '\n';
    }
  }
  return out.str();
}

std::string EventsCsv(const std::vector<RunMetrics>& runs) {
  std::ostringstream out;
  out << "run,time,client_id,seq,kind,ub_bound,next_acquire,rate_per_sec,"
         "tokens\n";
  for (const auto& run : runs) {
    for (const auto& e : run.events) {
      out << run.run_index << ',' << FormatDouble(e.time) << ',' << e.client_id
          << ',' << e.seq << ',' << ToString(e.kind) << ','
          << FormatDouble(e.probe.ub_bound) << ','
          << FormatDouble(e.probe.next_acquire) << ','
          << FormatDouble(e.probe.rate_per_sec) << ','
          << FormatDouble(e.probe.tokens) << '\n';
    }
  }
  return out.str();
}

namespace {

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json ConfigToJson(const ExperimentConfig& c) {
  json j = {{"strategy", std::string(ToString(c.strategy))},
            {"profile", c.profile},
            {"runs", c.runs},
            {"clock", std::string(ToString(c.clock))},
            {"time_scale", c.time_scale},
            {"seed", c.seed},
            {"size", c.size},
            {"dataset_seed", c.dataset_seed},
            {"rtt", c.network_rtt},
            {"gateway",
             {{"capacity", c.gateway.capacity},
              {"rate_per_min", c.gateway.rate_per_min},
              {"initial_tokens",
               c.gateway.initial_tokens.value_or(c.gateway.capacity)}}},
            {"params", ToJson(c.params)}};
  if (c.dataset_path) j["dataset"] = c.dataset_path->string();
  return j;
}

}  // namespace

void WriteArchive(const ExperimentResult& result, const ExperimentConfig& config,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& run : result.runs) {
    char name[32];
    std::snprintf(name, sizeof(name), "run_%03d.json", run.run_index);
    WriteText(dir / name, RunToJson(run).dump(1) + "\n");
  }
  WriteText(dir / "summary.json", SummaryToJson(result.summary).dump(2) + "\n");
  WriteText(dir / "summary.csv", SummaryCsv({result.summary}));
  WriteText(dir / "config.json", ConfigToJson(config).dump(2) + "\n");
}

ReportOutput Report(const std::vector<std::filesystem::path>& archives,
                    const std::string& baseline) {
  if (archives.empty()) throw Error("no archives to report on");
  std::vector<Summary> summaries;
  for (const auto& dir : archives) {
    if (!std::filesystem::is_regular_file(dir / "summary.json")) {
      throw Error("archive " + dir.string() + " has no summary.json");
    }
    Summary stored = SummaryFromJson(json::parse(ReadFile(dir / "summary.json")));
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) throw Error("archive " + dir.string() + " is empty");
    std::sort(files.begin(), files.end());
    std::vector<RunMetrics> runs;
    for (const auto& f : files) {
      runs.push_back(RecomputeMetrics(RunFromJson(json::parse(ReadFile(f)))));
    }
    Summary fresh = Summarize(runs);
    auto close = [](double a, double b) {
      return std::fabs(a - b) <= 1e-9 * std::max(1.0, std::fabs(a));
    };
    const std::pair<MetricSummary, MetricSummary> pairs[] = {
        {stored.total_429, fresh.total_429},
        {stored.total_duration, fresh.total_duration},
        {stored.avg_service_time, fresh.avg_service_time},
        {stored.update_messages, fresh.update_messages}};
    for (const auto& [a, b] : pairs) {
      if (!close(a.mean, b.mean) || !close(a.stddev, b.stddev) ||
          stored.runs != fresh.runs) {
        throw Error("archive " + dir.string() +
                    ": stored summary does not match its run files");
      }
    }
    if (!summaries.empty() && summaries.front().config_hash != stored.config_hash) {
      throw Error("archive " + dir.string() + " has config hash " +
                  stored.config_hash + ", expected " +
                  summaries.front().config_hash + "; refusing to merge");
    }
    summaries.push_back(stored);
  }
  std::stable_sort(summaries.begin(), summaries.end(),
                   [](const Summary& a, const Summary& b) {
                     return std::tie(a.dataset_size, a.strategy) <
                            std::tie(b.dataset_size, b.strategy);
                   });

  ReportOutput out;
  out.series_csv = SummaryCsv(summaries);

  auto pct = [](double value, double base) -> std::string {
    if (base == 0.0) return "n/a";
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << 100.0 * (value - base) / base;
    return ss.str();
  };
  std::ostringstream delta;
  delta << "dataset_size,strategy,baseline,error_reduction_pct,"
           "duration_increase_pct,service_time_change_pct\n";
  std::ostringstream table;
  table << std::left << std::setw(8) << "size" << std::setw(10) << "strategy"
        << std::right << std::setw(22) << "429s (mean+-sd)" << std::setw(24)
        << "duration s (mean+-sd)" << std::setw(22) << "service s (mean+-sd)"
        << std::setw(12) << "updates" << std::setw(12) << "err red %"
        << std::setw(12) << "dur inc %" << "\n";
  for (const auto& s : summaries) {
    const Summary* base = nullptr;
    for (const auto& b : summaries) {
      if (b.dataset_size == s.dataset_size && b.strategy == baseline) base = &b;
    }
    std::string err = "-", dur = "-";
    if (base != nullptr) {
      // (2b - x - b) / b is the reduction (b - x) / b.
      err = pct(2.0 * base->total_429.mean - s.total_429.mean,
                base->total_429.mean);
      dur = pct(s.total_duration.mean, base->total_duration.mean);
      delta << s.dataset_size << ',' << s.strategy << ',' << baseline << ','
            << err << ',' << dur << ','
            << pct(s.avg_service_time.mean, base->avg_service_time.mean)
            << '\n';
    }
    auto pm = [](const MetricSummary& m) {
      std::ostringstream ss;
      ss << std::fixed << std::setprecision(1) << m.mean << " +- " << m.stddev;
      return ss.str();
    };
    table << std::left << std::setw(8) << s.dataset_size << std::setw(10)
          << s.strategy << std::right << std::setw(22) << pm(s.total_429)
          << std::setw(24) << pm(s.total_duration) << std::setw(22)
          << pm(s.avg_service_time) << std::setw(12) << std::fixed
          << std::setprecision(1) << s.update_messages.mean << std::setw(12)
          << err << std::setw(12) << dur << "\n";
  }
  for (const auto& s : summaries) {
    if (s.oracle_objective >= 0 &&
        s.oracle_objective > s.observed_response_total +
                                 static_cast<double>(s.dataset_size)) {
      table << "warning: " << s.strategy << "@" << s.dataset_size
            << " observed response total " << s.observed_response_total
            << " is below the oracle bound " << s.oracle_objective << "\n";
    }
  }
  out.delta_csv = delta.str();
  out.table = table.str();
  return out;
}

}  // namespace throttlekit
