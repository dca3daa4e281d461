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

// Offline reference scheduler. An oracle that knows every arrival in advance
// assigns each request an integer service slot, minimizing the summed
// response time sum(x - A) subject to:
//
//   (1) each request is served exactly once, in a slot >= ceil(A);
//   (2) each user's requests are served in FIFO order (equal slots allowed);
//   (3) Z_t is the number of requests served in slot t;
//   (4) tokens evolve as y_t = min(y_{t-1} - Z_t + r, B) and never go
//       negative, with y_0 = B - Z_0;
//   (5) x is the slot in which the request is served.
//
// The recurrence in (4) is evaluated directly rather than linearized.

#ifndef THROTTLEKIT_ORACLE_H_
#define THROTTLEKIT_ORACLE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "throttlekit/domain.h"
#include "throttlekit/workload.h"

namespace throttlekit {

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InstanceTooLargeError : public Error {
 public:
  using Error::Error;
};

struct ProblemInstance {
  double capacity = 1.0;  // B: bucket size and initial tokens
  double rate = 1.0;      // r: tokens per slot
  std::int64_t t_max = 0;
  Seconds slot_width = 1.0;
  // arrivals[i][j], in slots, nondecreasing in j.
  std::vector<std::vector<double>> arrivals;
  std::vector<std::string> user_ids;  // parallel to arrivals

  std::int64_t total_requests() const;
  /// Throws Error if an invariant of the instance itself is broken.
  void Validate() const;

  static ProblemInstance FromDataset(const TraceDataset& dataset,
                                     double capacity, double rate,
                                     std::int64_t t_max,
                                     Seconds slot_width = 1.0);
};

/// x[i][j]: service slot of request j of user i.
struct Schedule {
  std::vector<std::vector<std::int64_t>> slots;
};

enum class Constraint {
  kNone = 0,
  kServiceOnce = 1,
  kFifo = 2,
  kSlotTotals = 3,
  kTokenDynamics = 4,
  kServiceTime = 5,
};

struct Feasibility {
  bool feasible = false;
  Constraint violated = Constraint::kNone;
  std::string detail;
  std::vector<std::int64_t> served_per_slot;  // Z_t
  std::vector<double> tokens;                 // y_t
};

/// Throws DimensionError when the schedule's shape differs from the
/// instance's.
Feasibility CheckFeasible(const ProblemInstance& instance,
                          const Schedule& schedule);

/// sum over requests of (x - A).
double Objective(const ProblemInstance& instance, const Schedule& schedule);

inline constexpr std::int64_t kExhaustiveMaxRequests = 8;
inline constexpr std::int64_t kExhaustiveMaxSlots = 12;

struct SolveResult {
  bool feasible = false;
  Schedule schedule;
  double objective = 0.0;
  // For infeasible instances, the smallest T_max that would suffice (greedy
  // only; absent when no horizon helps, e.g. r = 0).
  std::optional<std::int64_t> min_sufficient_t_max;
};

/// Slot by slot, serves pending requests in (arrival, user, seq) order while
/// tokens last.
SolveResult SolveGreedy(const ProblemInstance& instance);

/// Exact optimum by enumerating every feasible schedule (branch and bound).
/// Throws InstanceTooLargeError beyond kExhaustiveMaxRequests requests or
/// kExhaustiveMaxSlots slots.
SolveResult SolveExhaustive(const ProblemInstance& instance);

// Instance files reuse the dataset row format under a header carrying B, r
// and T_max:  #throttlekit-instance v=1 B=2 r=1 T_max=10 slot=1
ProblemInstance ParseInstance(std::string_view text);
ProblemInstance LoadInstance(const std::filesystem::path& path);
std::string SerializeInstance(const ProblemInstance& instance);

}  // namespace throttlekit

#endif  // THROTTLEKIT_ORACLE_H_
