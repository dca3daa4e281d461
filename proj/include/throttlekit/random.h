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

#ifndef THROTTLEKIT_RANDOM_H_
#define THROTTLEKIT_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace throttlekit {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  return Mix64(Mix64(seed) ^ Mix64(stream + 0x632be59bd9b4e019ULL));
}

/// FNV-1a, 64 bit.
constexpr std::uint64_t Fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic random stream. Every stochastic decision in the library draws
/// from one of these, seeded from (experiment seed, stream id).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(DeriveSeed(seed, stream)) {}

  /// Uniform on [lo, hi). Returns lo when the interval is empty.
  double Uniform(double lo, double hi) {
    if (!(hi > lo)) return lo;
    return lo + (hi - lo) * Canonical();
  }

  double Exponential(double scale) {
    return std::exponential_distribution<double>(1.0 / scale)(engine_);
  }

  std::int64_t Poisson(double mean) {
    if (mean <= 0) return 0;
    return std::poisson_distribution<std::int64_t>(mean)(engine_);
  }

  std::int64_t UniformInt(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  // 53 random mantissa bits; identical across standard libraries.
  double Canonical() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::mt19937_64 engine_;
};

}  // namespace throttlekit

#endif  // THROTTLEKIT_RANDOM_H_
