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

#include "throttlekit/workload.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "throttlekit/random.h"

namespace throttlekit {
namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> Split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
std::optional<T> ParseNumber(std::string_view s) {
  s = Trim(s);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    return std::nullopt;
  }
  return value;
}

// Shares `total` among weights by largest remainder; ties go to lower index.
std::vector<std::int64_t> Apportion(std::int64_t total,
                                    const std::vector<std::int64_t>& weights) {
  const size_t n = weights.size();
  std::vector<std::int64_t> out(n, 0);
  if (n == 0 || total <= 0) return out;
  double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> w(weights.begin(), weights.end());
  if (sum <= 0) {
    std::fill(w.begin(), w.end(), 1.0);
    sum = static_cast<double>(n);
  }
  std::vector<std::pair<double, size_t>> remainders;
  std::int64_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double exact = static_cast<double>(total) * w[i] / sum;
    out[i] = static_cast<std::int64_t>(std::floor(exact));
    assigned += out[i];
    remainders.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (size_t k = 0; assigned < total; ++k, ++assigned) {
    ++out[remainders[k % n].second];
  }
  return out;
}

// Inverse CDF of Exponential(scale) truncated to [0, limit].
double TruncatedExponential(Rng& rng, double scale, double limit) {
  if (!(scale > 0) || !(limit > 0)) return 0.0;
  const double u = rng.Uniform(0.0, 1.0);
  const double mass = -std::expm1(-limit / scale);
  return std::min(limit, -scale * std::log1p(-u * mass));
}

}  // namespace

std::string FormatDouble(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::vector<Request>> TraceDataset::ByClient() const {
  std::map<std::string, std::vector<Request>> groups;
  for (const auto& r : requests) groups[r.client_id].push_back(r);
  for (auto& [id, group] : groups) {
    std::stable_sort(group.begin(), group.end(),
                     [](const Request& x, const Request& y) {
                       return x.seq < y.seq;
                     });
  }
  return groups;
}

std::string_view ToString(TimestampMode mode) {
  switch (mode) {
    case TimestampMode::kAbsolute:
      return "absolute";
    case TimestampMode::kInterArrival:
      return "interarrival";
    case TimestampMode::kUniform:
      return "uniform";
  }
  return "unknown";
}

TimestampMode ParseTimestampMode(std::string_view name) {
  if (name == "absolute") return TimestampMode::kAbsolute;
  if (name == "interarrival") return TimestampMode::kInterArrival;
  if (name == "uniform") return TimestampMode::kUniform;
  throw ConfigError("unknown timestamp mode '" + std::string(name) + "'");
}

void SynthConfig::Validate() const {
  if (num_clients < 1) throw ConfigError("need at least one client");
  if (range_lo < 1 || range_hi < range_lo) {
    throw ConfigError("request range must satisfy 1 <= lo <= hi");
  }
  if (!(horizon > 0)) throw ConfigError("horizon must be positive");
  if (max_start_offset < 0 || max_start_offset >= horizon) {
    throw ConfigError("start offset must lie in [0, horizon)");
  }
  if (target_size && *target_size < num_clients) {
    throw ConfigError("target size must give every client one request");
  }
}

TraceDataset GenSynthetic(const SynthConfig& config) {
  config.Validate();
  const auto n = static_cast<size_t>(config.num_clients);
  const double lambda = config.Lambda();
  const double scale = config.Scale();

  std::vector<Seconds> offsets(n);
  std::vector<std::int64_t> extra(n);
  for (size_t c = 0; c < n; ++c) {
    Rng rng(config.seed, 2 * c);
    offsets[c] = rng.Uniform(0.0, config.max_start_offset);
    extra[c] = rng.Poisson(lambda);
  }
  if (config.target_size) {
    extra = Apportion(*config.target_size - config.num_clients, extra);
  }

  TraceDataset dataset;
  dataset.label = config.label;
  for (size_t c = 0; c < n; ++c) {
    Rng rng(config.seed, 2 * c + 1);
    const std::int64_t count = 1 + extra[c];
    const Seconds span = config.horizon - offsets[c];
    std::vector<Seconds> times{offsets[c]};
    switch (config.timestamps) {
      case TimestampMode::kAbsolute:
        for (std::int64_t k = 1; k < count; ++k) {
          times.push_back(offsets[c] + TruncatedExponential(rng, scale, span));
        }
        break;
      case TimestampMode::kUniform:
        for (std::int64_t k = 1; k < count; ++k) {
          times.push_back(offsets[c] + rng.Uniform(0.0, span));
        }
        break;
      case TimestampMode::kInterArrival: {
        Seconds t = offsets[c];
        for (std::int64_t k = 1; k < count; ++k) {
          t += scale > 0 ? rng.Exponential(scale) : 0.0;
          if (t > config.horizon) break;
          times.push_back(t);
        }
        break;
      }
    }
    std::sort(times.begin(), times.end());
    for (size_t k = 0; k < times.size(); ++k) {
      Request r;
      r.client_id = std::to_string(c);
      r.seq = static_cast<std::int64_t>(k);
      r.arrival_time = times[k];
      r.a = static_cast<std::int32_t>(rng.UniformInt(1, 1000));
      r.b = static_cast<std::int32_t>(rng.UniformInt(1, 1000));
      dataset.requests.push_back(std::move(r));
    }
  }
  Canonicalize(dataset);

  auto& md = dataset.metadata;
  md["kind"] = "synthetic";
  md["seed"] = std::to_string(config.seed);
  md["clients"] = std::to_string(config.num_clients);
  md["range"] =
      std::to_string(config.range_lo) + ":" + std::to_string(config.range_hi);
  md["horizon"] = FormatDouble(config.horizon);
  md["lambda"] = FormatDouble(lambda);
  md["scale"] = FormatDouble(scale);
  md["timestamps"] = std::string(ToString(config.timestamps));
  md["max_start_offset"] = FormatDouble(config.max_start_offset);
  md["target_size"] =
      config.target_size ? std::to_string(*config.target_size) : "none";
  md["realized_size"] = std::to_string(dataset.size());
  return dataset;
}

// --- access logs ------------------------------------------------------------

std::optional<double> ParseIso8601(std::string_view text) {
  text = Trim(text);
  int y, mo, d, h, mi;
  double s;
  int consumed = 0;
  const std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%*1[T ]%2d:%2d:%lf%n", &y, &mo, &d,
                  &h, &mi, &s, &consumed) != 6) {
    return std::nullopt;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s < 0 || s >= 61) return std::nullopt;
  double offset = 0.0;
  std::string_view rest = std::string_view(buf).substr(consumed);
  if (rest == "Z" || rest.empty()) {
    offset = 0.0;
  } else if ((rest[0] == '+' || rest[0] == '-') &&
             (rest.size() == 6 || rest.size() == 5)) {
    const int sign = rest[0] == '-' ? -1 : 1;
    int oh = 0, om = 0;
    const std::string tz(rest.substr(1));
    if (std::sscanf(tz.c_str(), "%2d:%2d", &oh, &om) != 2 &&
        std::sscanf(tz.c_str(), "%2d%2d", &oh, &om) != 2) {
      return std::nullopt;
    }
    offset = sign * (oh * 3600.0 + om * 60.0);
  } else {
    return std::nullopt;
  }
  const double days = sys_days{ymd}.time_since_epoch().count();
  return days * 86400.0 + h * 3600.0 + mi * 60.0 + s - offset;
}

AccessLog ParseAccessLog(std::istream& in) {
  AccessLog log;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const std::string_view view = Trim(line);
    if (view.empty()) continue;
    if (first) {
      first = false;
      if (view == "timestamp,ip" || view == "timestamp_iso8601,ip") continue;
    }
    ++log.lines;
    const auto fields = Split(view, ',');
    std::optional<double> ts;
    if (fields.size() == 2) ts = ParseIso8601(fields[0]);
    const std::string_view ip = fields.size() == 2 ? Trim(fields[1]) : "";
    if (!ts || ip.empty()) {
      ++log.invalid_lines;
      continue;
    }
    log.events.push_back({std::string(ip), *ts});
  }
  if (log.lines == 0) {
    log.warnings.push_back("access log contains no requests");
  } else if (log.invalid_lines * 10 > log.lines) {
    throw FormatError("access log: " + std::to_string(log.invalid_lines) +
                      " of " + std::to_string(log.lines) +
                      " lines are invalid (more than 10%)");
  } else if (log.invalid_lines > 0) {
    log.warnings.push_back("skipped " + std::to_string(log.invalid_lines) +
                           " invalid lines");
  }
  return log;
}

AccessLog ParseAccessLog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read access log " + path.string());
  return ParseAccessLog(in);
}

TraceDataset BuildRealDataset(const std::vector<AccessEvent>& events,
                              std::int64_t size, std::int64_t skip) {
  if (size < 0 || skip < 0) throw Error("size and skip must be non-negative");
  if (static_cast<std::int64_t>(events.size()) < skip + size) {
    throw Error("access log has " + std::to_string(events.size()) +
                " events; need " + std::to_string(skip + size));
  }
  std::vector<size_t> order(events.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return events[x].timestamp < events[y].timestamp;
  });

  TraceDataset dataset;
  std::unordered_map<std::string, std::string> user_of;
  std::unordered_map<std::string, std::int64_t> next_seq;
  const Seconds origin =
      size > 0 ? events[order[static_cast<size_t>(skip)]].timestamp : 0.0;
  for (std::int64_t k = skip; k < skip + size; ++k) {
    const AccessEvent& e = events[order[static_cast<size_t>(k)]];
    auto [it, inserted] =
        user_of.try_emplace(e.ip, std::to_string(user_of.size()));
    Request r;
    r.client_id = it->second;
    r.seq = next_seq[r.client_id]++;
    r.arrival_time = e.timestamp - origin;
    r.a = 6;
    r.b = 7;
    dataset.requests.push_back(std::move(r));
  }
  Canonicalize(dataset);
  dataset.label = "real-" + std::to_string(size);
  dataset.metadata["kind"] = "real";
  dataset.metadata["skip"] = std::to_string(skip);
  dataset.metadata["size"] = std::to_string(size);
  return dataset;
}

// --- dataset files ----------------------------------------------------------

void Canonicalize(TraceDataset& dataset) {
  std::stable_sort(dataset.requests.begin(), dataset.requests.end(),
                   [](const Request& x, const Request& y) {
                     if (x.arrival_time != y.arrival_time) {
                       return x.arrival_time < y.arrival_time;
                     }
                     if (x.client_id != y.client_id) {
                       return x.client_id < y.client_id;
                     }
                     return x.seq < y.seq;
                   });
  std::set<std::string> users;
  dataset.last_timestamp = 0.0;
  for (const auto& r : dataset.requests) {
    users.insert(r.client_id);
    dataset.last_timestamp = std::max(dataset.last_timestamp, r.arrival_time);
  }
  dataset.user_count = static_cast<std::int64_t>(users.size());
}

std::map<std::string, std::string> ParseHeaderLine(std::string_view line,
                                                   std::string_view kind) {
  line = Trim(line);
  const std::string prefix = "#throttlekit-" + std::string(kind);
  if (line.substr(0, prefix.size()) != prefix) {
    throw FormatError("line 1: expected '" + prefix + "' header");
  }
  std::map<std::string, std::string> fields;
  std::istringstream ss{std::string(line.substr(prefix.size()))};
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      throw FormatError("line 1: malformed header field '" + token + "'");
    }
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  if (fields["v"] != std::to_string(kDatasetFormatVersion)) {
    throw FormatError("line 1: unsupported format version '" + fields["v"] +
                      "'");
  }
  fields.erase("v");
  return fields;
}

std::string FormatHeaderLine(std::string_view kind,
                             const std::map<std::string, std::string>& fields) {
  std::string out = "#throttlekit-" + std::string(kind) +
                    " v=" + std::to_string(kDatasetFormatVersion);
  for (const auto& [k, v] : fields) {
    std::string value = v;
    std::replace(value.begin(), value.end(), ' ', '_');
    out += " " + k + "=" + value;
  }
  return out + "\n";
}

std::string FormatRequestRows(const std::vector<Request>& requests) {
  std::string out = "client_id,seq,arrival_time_s,a,b\n";
  for (const auto& r : requests) {
    out += r.client_id;
    out += ',';
    out += std::to_string(r.seq);
    out += ',';
    out += FormatDouble(r.arrival_time);
    out += ',';
    out += std::to_string(r.a);
    out += ',';
    out += std::to_string(r.b);
    out += '\n';
  }
  return out;
}

std::vector<Request> ParseRequestRows(std::string_view text,
                                      std::int64_t first_line_number) {
  std::vector<Request> rows;
  std::int64_t line_no = first_line_number - 1;
  bool saw_columns = false;
  for (std::string_view line : Split(text, '\n')) {
    ++line_no;
    line = Trim(line);
    if (line.empty()) continue;
    if (!saw_columns) {
      if (line != "client_id,seq,arrival_time_s,a,b") {
        throw FormatError("line " + std::to_string(line_no) +
                          ": expected column header");
      }
      saw_columns = true;
      continue;
    }
    const auto f = Split(line, ',');
    auto fail = [&](const std::string& why) {
      return FormatError("line " + std::to_string(line_no) + ": " + why);
    };
    if (f.size() != 5) throw fail("expected 5 fields");
    Request r;
    r.client_id = std::string(Trim(f[0]));
    auto seq = ParseNumber<std::int64_t>(f[1]);
    auto t = ParseNumber<double>(f[2]);
    auto a = ParseNumber<std::int32_t>(f[3]);
    auto b = ParseNumber<std::int32_t>(f[4]);
    if (r.client_id.empty()) throw fail("empty client_id");
    if (!seq || *seq < 0) throw fail("bad seq");
    if (!t || !std::isfinite(*t) || *t < 0) throw fail("bad arrival time");
    if (!a || !b) throw fail("bad payload");
    r.seq = *seq;
    r.arrival_time = *t;
    r.a = *a;
    r.b = *b;
    rows.push_back(std::move(r));
  }
  if (!saw_columns) throw FormatError("missing column header");
  return rows;
}

std::string SerializeDataset(const TraceDataset& dataset) {
  auto fields = dataset.metadata;
  fields["label"] = dataset.label.empty() ? "unnamed" : dataset.label;
  fields["size"] = std::to_string(dataset.size());
  return FormatHeaderLine("dataset", fields) +
         FormatRequestRows(dataset.requests);
}

TraceDataset ParseDataset(std::string_view text) {
  const size_t eol = text.find('\n');
  if (eol == std::string_view::npos) throw FormatError("line 1: truncated");
  auto fields = ParseHeaderLine(text.substr(0, eol), "dataset");
  TraceDataset dataset;
  dataset.requests = ParseRequestRows(text.substr(eol + 1), 2);
  dataset.label = fields["label"] == "unnamed" ? "" : fields["label"];
  const std::string declared = fields["size"];
  fields.erase("label");
  fields.erase("size");
  dataset.metadata = std::move(fields);
  if (declared != std::to_string(dataset.requests.size())) {
    throw FormatError("header declares size " + declared + " but file has " +
                      std::to_string(dataset.requests.size()) + " rows");
  }
  Canonicalize(dataset);
  // Per-client seq must run 0, 1, 2, ... in arrival order.
  std::map<std::string, std::int64_t> expect;
  for (const auto& r : dataset.requests) {
    if (r.seq != expect[r.client_id]++) {
      throw FormatError("client " + r.client_id +
                        ": seq numbers are not contiguous in arrival order");
    }
  }
  return dataset;
}

void ExportDataset(const TraceDataset& dataset,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << SerializeDataset(dataset);
}

TraceDataset ImportDataset(const std::filesystem::path& path) {
  return ParseDataset(ReadFile(path));
}

std::string DatasetHash(const TraceDataset& dataset) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(SerializeDataset(dataset))));
  return buf;
}

}  // namespace throttlekit
