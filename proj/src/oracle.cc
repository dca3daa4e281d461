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

#include "throttlekit/oracle.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

namespace throttlekit {
namespace {

constexpr double kEps = 1e-9;

std::int64_t CeilSlot(double arrival) {
  return static_cast<std::int64_t>(std::ceil(arrival - kEps));
}

std::int64_t Floor(double tokens) {
  return static_cast<std::int64_t>(std::floor(tokens + kEps));
}

std::string Name(const ProblemInstance& in, size_t i, size_t j) {
  const std::string user = i < in.user_ids.size() ? in.user_ids[i]
                                                  : std::to_string(i);
  return "request (" + user + ", " + std::to_string(j) + ")";
}

}  // namespace

std::int64_t ProblemInstance::total_requests() const {
  std::int64_t n = 0;
  for (const auto& user : arrivals) n += static_cast<std::int64_t>(user.size());
  return n;
}

void ProblemInstance::Validate() const {
  if (!(capacity >= 0) || !(rate >= 0) || t_max < 0 || !(slot_width > 0)) {
    throw Error("instance parameters must be non-negative");
  }
  if (!user_ids.empty() && user_ids.size() != arrivals.size()) {
    throw DimensionError("user id list does not match arrivals");
  }
  for (const auto& user : arrivals) {
    for (size_t j = 0; j < user.size(); ++j) {
      if (!(user[j] >= 0)) throw Error("arrival times must be non-negative");
      if (j > 0 && user[j] < user[j - 1]) {
        throw Error("arrival times must be nondecreasing per user");
      }
    }
  }
}

ProblemInstance ProblemInstance::FromDataset(const TraceDataset& dataset,
                                             double capacity, double rate,
                                             std::int64_t t_max,
                                             Seconds slot_width) {
  ProblemInstance instance;
  instance.capacity = capacity;
  instance.rate = rate;
  instance.t_max = t_max;
  instance.slot_width = slot_width;
  for (const auto& [id, requests] : dataset.ByClient()) {
    instance.user_ids.push_back(id);
    auto& row = instance.arrivals.emplace_back();
    for (const auto& r : requests) row.push_back(r.arrival_time / slot_width);
  }
  instance.Validate();
  return instance;
}

Feasibility CheckFeasible(const ProblemInstance& instance,
                          const Schedule& schedule) {
  if (schedule.slots.size() != instance.arrivals.size()) {
    throw DimensionError("schedule has " +
                         std::to_string(schedule.slots.size()) +
                         " users; instance has " +
                         std::to_string(instance.arrivals.size()));
  }
  for (size_t i = 0; i < instance.arrivals.size(); ++i) {
    if (schedule.slots[i].size() != instance.arrivals[i].size()) {
      throw DimensionError("user " + std::to_string(i) +
                           ": schedule and instance request counts differ");
    }
  }

  Feasibility f;
  auto fail = [&](Constraint c, std::string detail) {
    f.feasible = false;
    f.violated = c;
    f.detail = std::move(detail);
    return f;
  };

  const auto horizon = static_cast<size_t>(instance.t_max) + 1;
  f.served_per_slot.assign(horizon, 0);
  for (size_t i = 0; i < instance.arrivals.size(); ++i) {
    const auto& x = schedule.slots[i];
    for (size_t j = 0; j < x.size(); ++j) {
      // (1)/(5): exactly one service slot inside [ceil(A), T_max].
      if (x[j] < CeilSlot(instance.arrivals[i][j]) || x[j] > instance.t_max) {
        return fail(Constraint::kServiceOnce,
                    Name(instance, i, j) + " served at slot " +
                        std::to_string(x[j]) + " outside [ceil(A), T_max]");
      }
      // (2): FIFO per user.
      if (j > 0 && x[j] < x[j - 1]) {
        return fail(Constraint::kFifo, Name(instance, i, j) +
                                           " served before its predecessor");
      }
      ++f.served_per_slot[static_cast<size_t>(x[j])];  // (3)
    }
  }

  // (4), with the slot-0 closure y_0 = B - Z_0.
  f.tokens.assign(horizon, 0.0);
  double y = instance.capacity;
  for (size_t t = 0; t < horizon; ++t) {
    const double z = static_cast<double>(f.served_per_slot[t]);
    y = t == 0 ? instance.capacity - z
               : std::min(y - z + instance.rate, instance.capacity);
    if (y < -kEps) {
      return fail(Constraint::kTokenDynamics,
                  "slot " + std::to_string(t) + " serves " +
                      std::to_string(f.served_per_slot[t]) +
                      " requests without enough tokens");
    }
    f.tokens[t] = std::max(y, 0.0);
  }
  f.feasible = true;
  return f;
}

double Objective(const ProblemInstance& instance, const Schedule& schedule) {
  double total = 0.0;
  for (size_t i = 0; i < instance.arrivals.size(); ++i) {
    for (size_t j = 0; j < instance.arrivals[i].size(); ++j) {
      total += static_cast<double>(schedule.slots.at(i).at(j)) -
               instance.arrivals[i][j];
    }
  }
  return total;
}

SolveResult SolveGreedy(const ProblemInstance& instance) {
  instance.Validate();
  struct Item {
    double arrival;
    size_t user;
    size_t seq;
  };
  std::vector<Item> order;
  for (size_t i = 0; i < instance.arrivals.size(); ++i) {
    for (size_t j = 0; j < instance.arrivals[i].size(); ++j) {
      order.push_back({instance.arrivals[i][j], i, j});
    }
  }
  std::sort(order.begin(), order.end(), [](const Item& a, const Item& b) {
    return std::tie(a.arrival, a.user, a.seq) <
           std::tie(b.arrival, b.user, b.seq);
  });

  SolveResult result;
  result.schedule.slots.resize(instance.arrivals.size());
  for (size_t i = 0; i < instance.arrivals.size(); ++i) {
    result.schedule.slots[i].assign(instance.arrivals[i].size(), -1);
  }
  std::vector<size_t> next_of(instance.arrivals.size(), 0);

  // Without refill the horizon cannot help once the initial tokens are gone.
  const std::int64_t last_arrival_slot =
      order.empty() ? 0 : CeilSlot(order.back().arrival);
  const std::int64_t hard_limit =
      instance.rate > 0
          ? std::max(instance.t_max, last_arrival_slot) +
                static_cast<std::int64_t>(
                    std::ceil(static_cast<double>(order.size()) /
                              instance.rate)) +
                2
          : std::max(instance.t_max, last_arrival_slot);

  size_t served = 0;
  double y = instance.capacity;
  std::int64_t t = 0;
  for (; served < order.size() && t <= hard_limit; ++t) {
    const double available = t == 0 ? instance.capacity : y + instance.rate;
    std::int64_t budget = std::max<std::int64_t>(0, Floor(available));
    std::int64_t z = 0;
    for (const Item& item : order) {
      if (budget == 0) break;
      if (CeilSlot(item.arrival) > t) break;  // sorted by arrival
      auto& slot = result.schedule.slots[item.user][item.seq];
      if (slot >= 0 || next_of[item.user] != item.seq) continue;
      slot = t;
      ++next_of[item.user];
      ++served;
      ++z;
      --budget;
    }
    y = t == 0 ? instance.capacity - static_cast<double>(z)
               : std::min(available - static_cast<double>(z),
                          instance.capacity);
  }
  const std::int64_t last_slot = t - 1;
  if (served < order.size()) {
    result.feasible = false;
    return result;
  }
  if (last_slot > instance.t_max) {
    result.feasible = false;
    result.min_sufficient_t_max = last_slot;
    return result;
  }
  result.feasible = true;
  result.objective = Objective(instance, result.schedule);
  return result;
}

namespace {

class ExhaustiveSearch {
 public:
  explicit ExhaustiveSearch(const ProblemInstance& instance)
      : in_(instance),
        served_(instance.arrivals.size(), 0),
        current_(instance.arrivals.size()) {
    for (size_t i = 0; i < in_.arrivals.size(); ++i) {
      current_[i].assign(in_.arrivals[i].size(), -1);
    }
  }

  SolveResult Run() {
    Slot(0, in_.capacity, 0.0);
    SolveResult result;
    if (best_) {
      result.feasible = true;
      result.schedule = *best_;
      result.objective = best_objective_;
    }
    return result;
  }

 private:
  // Lower bound on the cost of requests not yet served, all of which wait
  // at least until `from`.
  double RemainingBound(std::int64_t from) const {
    double bound = 0.0;
    for (size_t i = 0; i < in_.arrivals.size(); ++i) {
      for (size_t j = served_[i]; j < in_.arrivals[i].size(); ++j) {
        const double a = in_.arrivals[i][j];
        bound += static_cast<double>(std::max(from, CeilSlot(a))) - a;
      }
    }
    return bound;
  }

  bool AllServed() const {
    for (size_t i = 0; i < in_.arrivals.size(); ++i) {
      if (served_[i] < in_.arrivals[i].size()) return false;
    }
    return true;
  }

  void Slot(std::int64_t t, double y_prev, double cost) {
    if (AllServed()) {
      if (!best_ || cost < best_objective_ - kEps) {
        best_ = Schedule{current_};
        best_objective_ = cost;
      }
      return;
    }
    if (t > in_.t_max) return;
    if (best_ && cost + RemainingBound(t) >= best_objective_ - kEps) return;
    const double available = t == 0 ? in_.capacity : y_prev + in_.rate;
    Choose(t, 0, std::max<std::int64_t>(0, Floor(available)), available, 0, cost);
  }

  // Picks how many of user i's pending requests go out in slot t.
  void Choose(std::int64_t t, size_t i, std::int64_t budget, double available,
              std::int64_t z, double cost) {
    if (i == in_.arrivals.size()) {
      const double y = t == 0 ? in_.capacity - static_cast<double>(z)
                              : std::min(available - static_cast<double>(z),
                                         in_.capacity);
      Slot(t + 1, y, cost);
      return;
    }
    const auto& user = in_.arrivals[i];
    size_t eligible = 0;
    while (served_[i] + eligible < user.size() && eligible < static_cast<size_t>(budget) &&
           CeilSlot(user[served_[i] + eligible]) <= t) {
      ++eligible;
    }
    const size_t start = served_[i];
    // Larger batches first so good incumbents appear early.
    for (size_t k = eligible + 1; k-- > 0;) {
      double added = 0.0;
      for (size_t j = start; j < start + k; ++j) {
        current_[i][j] = t;
        added += static_cast<double>(t) - user[j];
      }
      served_[i] = start + k;
      Choose(t, i + 1, budget - static_cast<std::int64_t>(k), available,
             z + static_cast<std::int64_t>(k), cost + added);
      served_[i] = start;
      for (size_t j = start; j < start + k; ++j) current_[i][j] = -1;
    }
  }

  const ProblemInstance& in_;
  std::vector<size_t> served_;
  std::vector<std::vector<std::int64_t>> current_;
  std::optional<Schedule> best_;
  double best_objective_ = std::numeric_limits<double>::infinity();
};

}  // namespace

SolveResult SolveExhaustive(const ProblemInstance& instance) {
  instance.Validate();
  if (instance.total_requests() > kExhaustiveMaxRequests ||
      instance.t_max > kExhaustiveMaxSlots) {
    throw InstanceTooLargeError(
        "exhaustive search is limited to " +
        std::to_string(kExhaustiveMaxRequests) + " requests and T_max <= " +
        std::to_string(kExhaustiveMaxSlots));
  }
  return ExhaustiveSearch(instance).Run();
}

// --- files ------------------------------------------------------------------

ProblemInstance ParseInstance(std::string_view text) {
  const size_t eol = text.find('\n');
  if (eol == std::string_view::npos) throw FormatError("line 1: truncated");
  auto fields = ParseHeaderLine(text.substr(0, eol), "instance");
  auto number = [&](const std::string& key, bool required,
                    double fallback) -> double {
    auto it = fields.find(key);
    if (it == fields.end()) {
      if (required) throw FormatError("line 1: missing " + key);
      return fallback;
    }
    try {
      size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw FormatError("line 1: bad value for " + key);
    }
  };
  TraceDataset rows;
  rows.requests = ParseRequestRows(text.substr(eol + 1), 2);
  Canonicalize(rows);
  const double t_max = number("T_max", true, 0);
  if (t_max != std::floor(t_max)) throw FormatError("line 1: T_max must be an integer");
  return ProblemInstance::FromDataset(rows, number("B", true, 0),
                                      number("r", true, 0),
                                      static_cast<std::int64_t>(t_max),
                                      number("slot", false, 1.0));
}

ProblemInstance LoadInstance(const std::filesystem::path& path) {
  return ParseInstance(ReadFile(path));
}

std::string SerializeInstance(const ProblemInstance& instance) {
  std::map<std::string, std::string> fields{
      {"B", FormatDouble(instance.capacity)},
      {"r", FormatDouble(instance.rate)},
      {"T_max", std::to_string(instance.t_max)},
      {"slot", FormatDouble(instance.slot_width)}};
  TraceDataset rows;
  for (size_t i = 0; i < instance.arrivals.size(); ++i) {
    const std::string id =
        i < instance.user_ids.size() ? instance.user_ids[i] : std::to_string(i);
    for (size_t j = 0; j < instance.arrivals[i].size(); ++j) {
      rows.requests.push_back({id, static_cast<std::int64_t>(j),
                               instance.arrivals[i][j] * instance.slot_width,
                               6, 7});
    }
  }
  Canonicalize(rows);
  return FormatHeaderLine("instance", fields) + FormatRequestRows(rows.requests);
}

}  // namespace throttlekit
