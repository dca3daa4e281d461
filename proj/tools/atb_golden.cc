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


// Emits the ATB transition fixture shared with the TypeScript demo:
// a seeded random walk of (state, event, next state) triples.
//
//   atb_golden [--seed N] [--count N] > tests/data/atb_golden.json

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "throttlekit/random.h"
#include "throttlekit/strategies.h"

namespace {

using nlohmann::json;
using namespace throttlekit;

json StateJson(const AtbState& s) {
  return {{"capacity", s.bucket.capacity},
          {"tokens", s.bucket.tokens},
          {"rate_per_sec", s.bucket.rate},
          {"last_refill", s.bucket.last_refill},
          {"last_congestion_rate", s.last_congestion_rate},
          {"sigma_per_min", s.sigma_per_min},
          {"delta_per_min", s.delta_per_min},
          {"alpha", s.alpha},
          {"beta", s.beta}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ATB golden transition fixture"};
  std::uint64_t seed = 2026;
  int count = 160;
  app.add_option("--seed", seed);
  app.add_option("--count", count)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Rng rng(seed);
  json transitions = json::array();
  // Three walks: the real profile, the synth5 sizing, and a tight floor.
  const AtbParams starts[] = {
      AtbParams{},
      AtbParams{.bucket_size = 40, .initial_rate_per_min = 40,
                .initial_congestion_rate_per_min = 300},
      AtbParams{.sigma_per_min = 2.0, .delta_per_min = 1.0, .alpha = 1.5,
                .beta = 1.1, .bucket_size = 4, .initial_rate_per_min = 4,
                .initial_congestion_rate_per_min = 12},
  };
  const int per_walk = (count + 2) / 3;
  for (const auto& params : starts) {
    AtbState state = AtbState::Create(params, 0.0);
    Seconds now = 0.0;
    for (int i = 0; i < per_walk; ++i) {
      json t{{"before", StateJson(state)}};
      const double pick = rng.Uniform(0.0, 1.0);
      if (pick < 0.5) {
        now += rng.Exponential(2.0);
        const auto r = AtbAcquire(state, now);
        t["event"] = {{"type", "acquire"}, {"now", now}};
        t["ready_at"] = r.ready_at;
        state = r.state;
        now = r.ready_at;
      } else if (pick < 0.8) {
        t["event"] = {{"type", "increase"}};
        state = AtbIncreaseRate(state);
      } else {
        const double jitter = rng.Uniform(-0.5, 0.5);
        t["event"] = {{"type", "decrease"}, {"jitter_per_min", jitter}};
        state = AtbDecreaseRate(state, jitter);
      }
      t["after"] = StateJson(state);
      transitions.push_back(std::move(t));
    }
  }
  json doc{{"version", 1},
           {"seed", seed},
           {"units", {{"rate_per_sec", "tokens/s"}, {"time", "s"}}},
           {"transitions", std::move(transitions)}};
  std::cout << doc.dump(1) << "\n";
  return 0;
}
