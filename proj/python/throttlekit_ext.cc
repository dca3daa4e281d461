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


// Python bindings. Structured results cross the boundary as JSON text; the
// package wrapper decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "throttlekit/emulator.h"
#include "throttlekit/oracle.h"
#include "throttlekit/strategies.h"
#include "throttlekit/workload.h"

namespace py = pybind11;
namespace tk = throttlekit;

namespace {

std::string RunExperimentJson(const std::string& config_json) {
  const auto config = tk::ParseExperimentConfig(nlohmann::json::parse(config_json));
  const auto result = tk::RunExperiment(config);
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : result.runs) {
    runs.push_back({{"seed", r.seed},
                    {"total_duration", r.total_duration},
                    {"avg_service_time", r.avg_service_time},
                    {"total_429", r.total_429},
                    {"update_messages", r.update_messages},
                    {"gateway_admitted", r.gateway_admitted},
                    {"gateway_rejected", r.gateway_rejected}});
  }
  return nlohmann::json{{"summary", tk::SummaryToJson(result.summary)},
                        {"runs", std::move(runs)}}
      .dump();
}

std::string SolveJson(const std::string& instance_text, bool exact) {
  const auto in = tk::ParseInstance(instance_text);
  const auto r = exact ? tk::SolveExhaustive(in) : tk::SolveGreedy(in);
  nlohmann::json j{{"feasible", r.feasible},
                   {"objective", r.objective},
                   {"schedule", r.schedule.slots}};
  if (r.min_sufficient_t_max) j["min_sufficient_t_max"] = *r.min_sufficient_t_max;
  if (r.feasible) {
    j["check_feasible"] = tk::CheckFeasible(in, r.schedule).feasible;
  }
  return j.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ThrottleKit core";

  py::register_exception<tk::Error>(m, "Error", PyExc_RuntimeError);

  py::class_<tk::TokenBucketState>(m, "TokenBucketState")
      .def(py::init([](double capacity, double tokens, double rate,
                       double last_refill) {
             return tk::TokenBucketState{capacity, tokens, rate, last_refill};
           }),
           py::arg("capacity"), py::arg("tokens"), py::arg("rate"),
           py::arg("last_refill") = 0.0)
      .def_readwrite("capacity", &tk::TokenBucketState::capacity)
      .def_readwrite("tokens", &tk::TokenBucketState::tokens)
      .def_readwrite("rate", &tk::TokenBucketState::rate)
      .def_readwrite("last_refill", &tk::TokenBucketState::last_refill);

  m.def("refill", &tk::Refill, py::arg("state"), py::arg("now"));
  m.def(
      "try_consume",
      [](const tk::TokenBucketState& s, double now, double n) {
        const auto r = tk::TryConsume(s, now, n);
        return py::make_tuple(r.state, r.admitted);
      },
      py::arg("state"), py::arg("now"), py::arg("n") = 1.0,
      "Returns (state, admitted).");
  m.def("time_until_tokens", &tk::TimeUntilTokens, py::arg("state"),
        py::arg("now"), py::arg("n") = 1.0);

  py::class_<tk::AtbState>(m, "AtbState")
      .def(py::init([](double rate_per_min, double congestion_per_min,
                       double tokens, double bucket_size) {
             tk::AtbParams p;
             p.initial_rate_per_min = rate_per_min;
             p.initial_congestion_rate_per_min = congestion_per_min;
             p.initial_tokens = tokens;
             p.bucket_size = bucket_size;
             return tk::AtbState::Create(p, 0.0);
           }),
           py::arg("rate_per_min") = 15.0, py::arg("congestion_per_min") = 30.0,
           py::arg("tokens") = 1.0, py::arg("bucket_size") = 15.0)
      .def_readwrite("bucket", &tk::AtbState::bucket)
      .def_readwrite("last_congestion_rate", &tk::AtbState::last_congestion_rate)
      .def_readwrite("alpha", &tk::AtbState::alpha)
      .def_readwrite("beta", &tk::AtbState::beta)
      .def_property_readonly("rate_per_min", &tk::AtbState::rate_per_min);

  m.def(
      "atb_acquire",
      [](const tk::AtbState& s, double now) {
        const auto r = tk::AtbAcquire(s, now);
        return py::make_tuple(r.state, r.ready_at);
      },
      py::arg("state"), py::arg("now"), "Returns (state, ready_at).");
  m.def("atb_increase_rate", &tk::AtbIncreaseRate, py::arg("state"));
  m.def("atb_decrease_rate",
        py::overload_cast<const tk::AtbState&, double>(&tk::AtbDecreaseRate),
        py::arg("state"), py::arg("jitter_per_min"));
  m.def(
      "wb_earliest_permit",
      [](std::vector<double> attempts, int max_per_window, double now) {
        tk::WbState s;
        s.max_per_window = max_per_window;
        s.attempt_log.assign(attempts.begin(), attempts.end());
        return tk::WbEarliestPermit(s, now);
      },
      py::arg("attempts"), py::arg("max_per_window"), py::arg("now"));

  m.def(
      "gen_synthetic",
      [](int clients, std::int64_t lo, std::int64_t hi, std::uint64_t seed,
         std::optional<std::int64_t> size, const std::string& timestamps) {
        tk::SynthConfig c;
        c.num_clients = clients;
        c.range_lo = lo;
        c.range_hi = hi;
        c.seed = seed;
        c.target_size = size;
        c.timestamps = tk::ParseTimestampMode(timestamps);
        return tk::SerializeDataset(tk::GenSynthetic(c));
      },
      py::arg("clients"), py::arg("range_lo"), py::arg("range_hi"),
      py::arg("seed") = 1, py::arg("size") = std::nullopt,
      py::arg("timestamps") = "interarrival",
      "Returns the dataset file text.");

  m.def("_solve", &SolveJson, py::arg("instance_text"), py::arg("exact"));
  m.def("_run_experiment", &RunExperimentJson, py::arg("config_json"),
        py::call_guard<py::gil_scoped_release>());
}
