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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shiftcomp/compressors.hpp"
#include "shiftcomp/problems.hpp"
#include "shiftcomp/rng.hpp"
#include "shiftcomp/stats.hpp"

namespace shiftcomp {

enum class ShiftKind { kFixed, kStar, kDiana, kRandDiana };

inline std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::kFixed: return "fixed";
    case ShiftKind::kStar: return "star";
    case ShiftKind::kDiana: return "diana";
    case ShiftKind::kRandDiana: return "rand_diana";
  }
  return "?";
}

/// How the per-worker shifts h_i evolve.
///   fixed:      h_i^{k+1} = h_i^k
///   star:       h_i^{k+1} = h_i* + C_i(grad_i(x^k) - h_i*)
///   diana:      h_i^{k+1} = h_i^k + alpha (c_i^k + m_i^k)
///   rand_diana: with probability p_i, w_i = x^k and h_i = grad_i(x^k)
struct ShiftStrategy {
  ShiftKind kind = ShiftKind::kFixed;
  std::vector<CompressorSpec> inner;  // C_i; empty means the zero map everywhere
  double alpha = 1.0;
  std::vector<double> probs;          // p_i

  bool has_inner(int i) const {
    return !inner.empty() && inner.at(i).kind != CompressorKind::kZero;
  }
  double inner_delta(int i) const { return inner.empty() ? 0.0 : inner.at(i).delta(); }

  void validate(int workers, int dim) const {
    if (!inner.empty()) {
      if (static_cast<int>(inner.size()) != workers) {
        throw std::invalid_argument("shift strategy: need one inner compressor per worker");
      }
      for (const auto& c : inner) {
        c.validate();
        if (c.dim != dim) throw std::invalid_argument("shift strategy: inner compressor dimension");
        if (!c.contractive() && c.kind != CompressorKind::kZero) {
          throw std::invalid_argument("shift strategy: inner compressor must be contractive or zero");
        }
      }
    }
    if (kind == ShiftKind::kDiana && !(alpha > 0.0 && alpha <= 1.0)) {
      throw std::invalid_argument("shift strategy: diana needs alpha in (0, 1]");
    }
    if (kind == ShiftKind::kRandDiana) {
      if (static_cast<int>(probs.size()) != workers) {
        throw std::invalid_argument("shift strategy: rand_diana needs one probability per worker");
      }
      for (double p : probs) {
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("shift strategy: p outside (0, 1]");
      }
    }
  }
};

struct ShiftState {
  std::vector<Vector> local;      // h_i
  Vector aggregate;               // h, held by the master
  std::vector<Vector> reference;  // w_i (rand_diana)
  std::vector<Vector> optimal;    // grad f_i(x*) (star)

  int workers() const { return static_cast<int>(local.size()); }

  Vector mean_local() const {
    Vector total = Vector::Zero(local.front().size());
    for (const auto& h : local) total += h;
    return total / static_cast<double>(local.size());
  }
};

/// Per-worker quantities of one round, as seen by the shift update.
struct WorkerRound {
  Vector gradient;  // grad f_i(x^k)
  Vector inner;     // c_i^k; zero unless diana with an inner compressor
  Vector message;   // m_i^k
  std::int64_t inner_bits = 0;
};

/// Initial shifts. Fixed and diana start from `initial` (zero when empty);
/// star starts at h_i* + C_i(grad_i(x^0) - h_i*), the value its own update
/// would produce; rand_diana starts from w_i = x^0.
inline ShiftState initial_shifts(const ShiftStrategy& strategy, const Problem& problem,
                                 const Vector& x0, const ReferenceSolution* reference,
                                 std::uint64_t seed, const std::vector<Vector>& initial = {}) {
  const int n = problem.workers();
  const int d = problem.dim();
  strategy.validate(n, d);
  ShiftState state;
  state.local.assign(n, Vector::Zero(d));
  switch (strategy.kind) {
    case ShiftKind::kFixed:
    case ShiftKind::kDiana:
      if (!initial.empty()) {
        if (static_cast<int>(initial.size()) != n) {
          throw std::invalid_argument("initial shifts: need one vector per worker");
        }
        for (int i = 0; i < n; ++i) {
          if (initial[i].size() != d) throw std::invalid_argument("initial shifts: dimension");
          state.local[i] = initial[i];
        }
      }
      break;
    case ShiftKind::kStar:
      if (reference == nullptr) throw std::invalid_argument("star shifts need a reference solution");
      state.optimal = reference->local_gradients;
      for (int i = 0; i < n; ++i) {
        state.local[i] = state.optimal[i];
        if (strategy.has_inner(i)) {
          Stream rng = seed_stream(seed, i, -1, Purpose::kShiftInner);
          state.local[i] += compress(strategy.inner[i],
                                     problem.local_gradient(i, x0) - state.optimal[i], rng)
                                .dense_value;
        }
      }
      break;
    case ShiftKind::kRandDiana:
      state.reference.assign(n, x0);
      for (int i = 0; i < n; ++i) state.local[i] = problem.local_gradient(i, x0);
      break;
  }
  state.aggregate = state.mean_local();
  return state;
}

/// Inner part c_i^k = C_i(grad_i - h_i) of the diana update, drawn from the
/// worker's shift stream. Empty message for every other strategy.
inline CompressedMessage inner_message(const ShiftStrategy& strategy, const ShiftState& state,
                                       int i, const Vector& gradient, std::int64_t k,
                                       std::uint64_t seed) {
  if (strategy.kind != ShiftKind::kDiana || !strategy.has_inner(i)) {
    return CompressedMessage{EmptyPayload{}, 0, Vector::Zero(gradient.size())};
  }
  Stream rng = seed_stream(seed, i, k, Purpose::kShiftInner);
  return compress(strategy.inner[i], gradient - state.local[i], rng);
}

/// Advances the shifts after round k and returns the extra bits sent.
inline std::int64_t update_shifts(ShiftState& state, const ShiftStrategy& strategy,
                                  const std::vector<WorkerRound>& rounds, const Vector& x,
                                  std::int64_t k, std::uint64_t seed) {
  const int n = state.workers();
  if (static_cast<int>(rounds.size()) != n) throw std::invalid_argument("update_shifts: round count");
  const Eigen::Index d = state.aggregate.size();
  std::int64_t extra = 0;
  switch (strategy.kind) {
    case ShiftKind::kFixed:
      return 0;
    case ShiftKind::kStar:
      if (state.optimal.empty()) throw std::invalid_argument("star shifts need a reference solution");
      for (int i = 0; i < n; ++i) {
        state.local[i] = state.optimal[i];
        if (strategy.has_inner(i)) {
          // The master replays this draw from the shared stream.
          Stream rng = seed_stream(seed, i, k, Purpose::kShiftInner);
          state.local[i] +=
              compress(strategy.inner[i], rounds[i].gradient - state.optimal[i], rng).dense_value;
        }
      }
      state.aggregate = state.mean_local();
      return 0;
    case ShiftKind::kDiana: {
      Vector sum = Vector::Zero(d);
      for (int i = 0; i < n; ++i) {
        const Vector step = rounds[i].inner + rounds[i].message;
        state.local[i] += strategy.alpha * step;
        sum += step;
        extra += rounds[i].inner_bits;
      }
      state.aggregate += strategy.alpha * (sum / static_cast<double>(n));
      return extra;
    }
    case ShiftKind::kRandDiana:
      if (state.reference.empty()) throw std::invalid_argument("rand_diana state lacks w_i");
      for (int i = 0; i < n; ++i) {
        Stream rng = seed_stream(seed, i, k, Purpose::kRefresh);
        if (rng.bernoulli(strategy.probs[i])) {
          state.reference[i] = x;
          state.local[i] = rounds[i].gradient;
          extra += dense_bits(d);
        }
      }
      state.aggregate = state.mean_local();
      return extra;
  }
  return extra;
}

/// (1/n) sum_i w_i ||h_i - target_i||^2 with w_i = omega_i, or 1 when
/// `weights` is empty.
inline double shift_residual(const ShiftState& state, const std::vector<Vector>& target,
                             const std::vector<double>& weights = {}) {
  const int n = state.workers();
  if (static_cast<int>(target.size()) != n) throw std::invalid_argument("shift_residual: target count");
  if (!weights.empty() && static_cast<int>(weights.size()) != n) {
    throw std::invalid_argument("shift_residual: weight count");
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    total += w * (state.local[i] - target[i]).squaredNorm();
  }
  return total / n;
}

}  // namespace shiftcomp
