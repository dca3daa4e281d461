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

#ifndef THROTTLEKIT_DOMAIN_H_
#define THROTTLEKIT_DOMAIN_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace throttlekit {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ClockRegressionError : public Error {
 public:
  using Error::Error;
};

class ImpossibleWaitError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Seconds since the experiment epoch.
using Seconds = double;

/// Rates are configured per minute and stored per second.
constexpr double PerMinuteToPerSecond(double per_minute) {
  return per_minute / 60.0;
}
constexpr double PerSecondToPerMinute(double per_second) {
  return per_second * 60.0;
}

/// Slack used when comparing fractional token counts, so that a wait computed
/// by TimeUntilTokens is always honoured by TryConsume at the returned instant.
inline constexpr double kTokenEpsilon = 1e-9;

/// One client API call.
struct Request {
  std::string client_id;
  std::int64_t seq = 0;
  Seconds arrival_time = 0.0;
  std::int32_t a = 0;
  std::int32_t b = 0;

  friend bool operator==(const Request&, const Request&) = default;
};

/// Continuous-refill token bucket. `rate` is tokens per second.
struct TokenBucketState {
  double capacity = 1.0;
  double tokens = 0.0;
  double rate = 1.0;
  Seconds last_refill = 0.0;

  /// Full bucket at `start`.
  static TokenBucketState Full(double capacity, double rate,
                               Seconds start = 0.0) {
    return {capacity, capacity, rate, start};
  }
};

struct ConsumeResult {
  TokenBucketState state;
  bool admitted = false;
};

/// tokens' = min(capacity, tokens + (now - last_refill) * rate).
/// Throws ClockRegressionError if `now` precedes the last refill.
TokenBucketState Refill(const TokenBucketState& state, Seconds now);

/// Refills, then takes `n` tokens if available. A rejected attempt leaves the
/// post-refill state untouched.
ConsumeResult TryConsume(const TokenBucketState& state, Seconds now,
                         double n = 1.0);

/// Seconds from `now` until `n` tokens are present. Throws
/// ImpossibleWaitError when `n` exceeds the capacity.
Seconds TimeUntilTokens(const TokenBucketState& state, Seconds now,
                        double n = 1.0);

}  // namespace throttlekit

#endif  // THROTTLEKIT_DOMAIN_H_
