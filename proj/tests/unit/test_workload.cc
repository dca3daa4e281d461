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


#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "throttlekit/workload.h"

#ifndef THROTTLEKIT_TEST_DATA_DIR
#error "THROTTLEKIT_TEST_DATA_DIR must be defined"
#endif

namespace throttlekit {
namespace {

const std::filesystem::path kData = THROTTLEKIT_TEST_DATA_DIR;

TEST_CASE("iso8601 timestamps with offsets") {
  CHECK(ParseIso8601("1970-01-01T00:00:00Z") == 0.0);
  CHECK(ParseIso8601("1970-01-01T01:00:00+01:00") == 0.0);
  CHECK(ParseIso8601("1970-01-01T00:00:00-00:30") == 1800.0);
  CHECK(ParseIso8601("2000-03-01T00:00:00.25Z") == 951868800.25);
  CHECK_FALSE(ParseIso8601("2023-02-30T00:00:00Z"));
  CHECK_FALSE(ParseIso8601("yesterday"));
}

TEST_CASE("bundled access-log fixture") {
  const AccessLog log = ParseAccessLog(kData / "access_log_fixture.csv");
  CHECK(log.events.size() == 20);
  CHECK(log.invalid_lines == 0);
  std::set<std::string> ips;
  for (const auto& e : log.events) ips.insert(e.ip);
  CHECK(ips.size() == 3);

  const TraceDataset all = BuildRealDataset(log.events, 20);
  CHECK(all.size() == 20);
  CHECK(all.user_count == 3);
  CHECK(all.last_timestamp == 31.0);

  const TraceDataset ten = BuildRealDataset(log.events, 10);
  CHECK(ten.user_count == 3);
  CHECK(ten.last_timestamp == 9.0);
  CHECK(ten.requests.front().arrival_time == 0.0);
  // First appearance order: 10.0.0.1, 10.0.0.2, 192.168.4.20.
  const auto by = ten.ByClient();
  CHECK(by.at("0").size() == 5);
  CHECK(by.at("1").size() == 3);
  CHECK(by.at("2").size() == 2);
  for (const auto& r : ten.requests) {
    CHECK(r.a == 6);
    CHECK(r.b == 7);
  }
  const TraceDataset skipped = BuildRealDataset(log.events, 5, 15);
  CHECK(skipped.size() == 5);
  CHECK(skipped.last_timestamp == 31.0 - 20.0);
  CHECK_THROWS_AS(BuildRealDataset(log.events, 21), Error);
}

TEST_CASE("identity rebase on ten events already at zero") {
  std::vector<AccessEvent> events;
  for (int i = 0; i < 10; ++i) {
    events.push_back({"ip" + std::to_string(i % 2), static_cast<double>(i)});
  }
  const auto d = BuildRealDataset(events, 10);
  for (int i = 0; i < 10; ++i) CHECK(d.requests[i].arrival_time == i);
  CHECK(d.user_count == 2);
}

TEST_CASE("equal-IP events keep their file order") {
  std::vector<AccessEvent> events = {{"x", 5}, {"y", 1}, {"x", 5}, {"x", 3}};
  const auto d = BuildRealDataset(events, 4);
  CHECK(d.ByClient().at("1").size() == 3);  // "y" appears first by time
  std::vector<double> x;
  for (const auto& r : d.ByClient().at("1")) x.push_back(r.arrival_time);
  CHECK(x == std::vector<double>{2, 4, 4});
}

TEST_CASE("empty and mostly invalid logs") {
  std::istringstream empty("");
  const auto log = ParseAccessLog(empty);
  CHECK(log.events.empty());
  CHECK_FALSE(log.warnings.empty());

  std::istringstream bad(
      "2023-01-01T00:00:00Z,1.1.1.1\ngarbage\n2023-01-01T00:00:01Z,1.1.1.1\n");
  CHECK_THROWS_AS(ParseAccessLog(bad), FormatError);

  std::string text;
  for (int i = 0; i < 19; ++i) text += "2023-01-01T00:00:00Z,1.1.1.1\n";
  text += "nonsense\n";
  std::istringstream tolerable(text);
  const auto ok = ParseAccessLog(tolerable);
  CHECK(ok.events.size() == 19);
  CHECK(ok.invalid_lines == 1);
  CHECK_THROWS_AS(ParseAccessLog(kData / "does_not_exist.csv"), Error);
}

SynthConfig Synth5(std::uint64_t seed) {
  SynthConfig c;
  c.num_clients = 5;
  c.range_lo = 1;
  c.range_hi = 200;
  c.seed = seed;
  return c;
}

TEST_CASE("synthetic generation is deterministic") {
  for (auto mode : {TimestampMode::kAbsolute, TimestampMode::kInterArrival,
                    TimestampMode::kUniform}) {
    auto c = Synth5(7);
    c.timestamps = mode;
    CHECK(SerializeDataset(GenSynthetic(c)) == SerializeDataset(GenSynthetic(c)));
    auto other = c;
    other.seed = 8;
    CHECK_FALSE(GenSynthetic(c) == GenSynthetic(other));
  }
}

TEST_CASE("synthetic invariants") {
  for (auto mode : {TimestampMode::kAbsolute, TimestampMode::kInterArrival,
                    TimestampMode::kUniform}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SynthConfig c;
      c.num_clients = 100;
      c.range_lo = 1;
      c.range_hi = 10;
      c.seed = seed;
      c.timestamps = mode;
      const auto d = GenSynthetic(c);
      CHECK(d.user_count == 100);  // every client has its first request
      for (const auto& [id, reqs] : d.ByClient()) {
        CHECK(reqs.front().arrival_time <= 10.0);
        for (size_t k = 0; k < reqs.size(); ++k) {
          CHECK(reqs[k].seq == static_cast<std::int64_t>(k));
          CHECK(reqs[k].arrival_time >= 0.0);
          CHECK(reqs[k].arrival_time <= 300.0);
          if (k > 0) CHECK(reqs[k].arrival_time >= reqs[k - 1].arrival_time);
        }
      }
      CHECK(d.metadata.at("realized_size") == std::to_string(d.size()));
    }
  }
}

TEST_CASE("per-client count mean over 10,000 regenerations") {
  // 1 + Poisson(λ), λ = 99.5: the mean over n = 50,000 counts has standard
  // error sqrt(λ / n). Absolute draws never truncate, so counts are exact.
  const double lambda = 99.5;
  double sum = 0.0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    auto c = Synth5(seed);
    c.timestamps = TimestampMode::kAbsolute;
    for (const auto& [id, reqs] : GenSynthetic(c).ByClient()) {
      sum += static_cast<double>(reqs.size());
      ++n;
    }
  }
  CHECK(n == 50000);
  CHECK(std::fabs(sum / n - (1 + lambda)) < 3 * std::sqrt(lambda / n));
}

TEST_CASE("target size is met exactly") {
  for (std::int64_t size : {400, 500, 650, 800}) {
    auto c = Synth5(3);
    c.timestamps = TimestampMode::kAbsolute;
    c.target_size = size;
    CHECK(GenSynthetic(c).size() == size);
  }
  auto c = Synth5(3);
  c.target_size = 4;
  CHECK_THROWS_AS(GenSynthetic(c), ConfigError);
}

TEST_CASE("invalid synthetic configs") {
  auto c = Synth5(1);
  c.range_lo = 0;
  CHECK_THROWS_AS(GenSynthetic(c), ConfigError);
  c = Synth5(1);
  c.horizon = 0;
  CHECK_THROWS_AS(GenSynthetic(c), ConfigError);
  c = Synth5(1);
  c.num_clients = 0;
  CHECK_THROWS_AS(GenSynthetic(c), ConfigError);
  CHECK_THROWS_AS(ParseTimestampMode("poisson"), ConfigError);
}

TEST_CASE("export and import round trip") {
  auto c = Synth5(11);
  c.timestamps = TimestampMode::kAbsolute;
  c.target_size = 300;
  c.label = "synth5-300";
  const auto d = GenSynthetic(c);
  const auto path = std::filesystem::temp_directory_path() / "tk_roundtrip.csv";
  ExportDataset(d, path);
  const auto back = ImportDataset(path);
  CHECK(back == d);
  CHECK(DatasetHash(back) == DatasetHash(d));
  CHECK(DatasetHash(d).size() == 16);
  std::filesystem::remove(path);
}

TEST_CASE("corrupted dataset files report the line number") {
  auto c = Synth5(2);
  const std::string text = SerializeDataset(GenSynthetic(c));
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() > 6);
  lines[5] = "0,1,not-a-number,3,4";
  std::string broken;
  for (const auto& l : lines) broken += l + "\n";
  try {
    ParseDataset(broken);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 6") != std::string::npos);
  }

  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find("v=1"), 3, "v=9");
  CHECK_THROWS_AS(ParseDataset(wrong_version), FormatError);

  std::string truncated = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  CHECK_THROWS_AS(ParseDataset(truncated), FormatError);
}

}  // namespace
}  // namespace throttlekit
