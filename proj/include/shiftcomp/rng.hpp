// Copyright 2026 The shiftcomp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace shiftcomp {

/// What a random stream is used for. Part of the stream key so that two
/// consumers at the same (worker, iteration) never share draws.
enum class Purpose : std::uint64_t {
  kMessage = 1,       // main compressor Q_i
  kShiftInner = 2,    // inner compressor C_i of a shift update
  kRefresh = 3,       // Rand-DIANA reference-point coin
  kInitialPoint = 4,  // x^0
  kData = 5,          // dataset generation
  kShard = 6,         // row permutation
  kCalibration = 7,   // natural-dithering omega calibration
  kMonteCarlo = 8,    // verification suites
  kSeed = 9,          // per-seed master derivation
};

namespace detail {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t key, std::uint64_t value) {
  return mix64(key ^ mix64(value + kGolden));
}

}  // namespace detail

/// Counter-based random stream. Output i is a bijective mix of key + i*golden,
/// so a stream is fully described by its 64-bit key and draw position.
/// Satisfies UniformRandomBitGenerator, but the library only uses the helpers
/// below so that results do not depend on the standard library's
/// distribution implementations.
class Stream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit Stream(std::uint64_t key = 0) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t position() const { return counter_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Rejection sampling, exact.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t r = (*this)();
    while (r >= limit) r = (*this)();
    return r % bound;
  }

  /// Standard normal via Box-Muller; one draw per call, the sibling is
  /// discarded to keep the stream position a function of the call count.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Derives the stream for (master seed, worker, iteration, purpose).
/// Workers are indexed from 0; use worker = -1 for driver-level draws.
inline Stream seed_stream(std::uint64_t master_seed, std::int64_t worker,
                          std::int64_t iteration, Purpose purpose) {
  std::uint64_t key = detail::mix64(master_seed ^ 0x5851f42d4c957f2dULL);
  key = detail::combine(key, static_cast<std::uint64_t>(worker));
  key = detail::combine(key, static_cast<std::uint64_t>(iteration));
  key = detail::combine(key, static_cast<std::uint64_t>(purpose));
  return Stream(key);
}

/// Master seed of Monte-Carlo replicate `index` derived from `master_seed`.
inline std::uint64_t derive_seed(std::uint64_t master_seed,
                                 std::uint64_t index) {
  return seed_stream(master_seed, -1, static_cast<std::int64_t>(index),
                     Purpose::kSeed)();
}

}  // namespace shiftcomp
