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

#include "throttlekit/domain.h"

#include <algorithm>
#include <string>

namespace throttlekit {

TokenBucketState Refill(const TokenBucketState& state, Seconds now) {
  if (now < state.last_refill) {
    throw ClockRegressionError("token bucket clock moved backwards: now=" +
                               std::to_string(now) + " last_refill=" +
                               std::to_string(state.last_refill));
  }
  TokenBucketState next = state;
  next.tokens = std::min(state.capacity,
                         state.tokens + (now - state.last_refill) * state.rate);
  next.tokens = std::max(next.tokens, 0.0);
  next.last_refill = now;
  return next;
}

ConsumeResult TryConsume(const TokenBucketState& state, Seconds now, double n) {
  if (n < 0) throw Error("cannot consume a negative number of tokens");
  ConsumeResult result{Refill(state, now), false};
  if (result.state.tokens + kTokenEpsilon >= n) {
    result.state.tokens = std::max(0.0, result.state.tokens - n);
    result.admitted = true;
  }
  return result;
}

Seconds TimeUntilTokens(const TokenBucketState& state, Seconds now, double n) {
  if (n > state.capacity + kTokenEpsilon) {
    throw ImpossibleWaitError("requested " + std::to_string(n) +
                              " tokens from a bucket of capacity " +
                              std::to_string(state.capacity));
  }
  const TokenBucketState refilled = Refill(state, now);
  const double deficit = n - refilled.tokens;
  if (deficit <= kTokenEpsilon) return 0.0;
  return deficit / refilled.rate;
}

}  // namespace throttlekit
