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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shiftcomp/compressors.hpp"
#include "shiftcomp/problems.hpp"
#include "shiftcomp/rng.hpp"
#include "shiftcomp/shifts.hpp"

namespace shiftcomp {

enum class Method { kDcgdShift, kGdci, kVrGdci };

inline std::string_view to_string(Method method) {
  switch (method) {
    case Method::kDcgdShift: return "dcgd_shift";
    case Method::kGdci: return "gdci";
    case Method::kVrGdci: return "vr_gdci";
  }
  return "?";
}

struct StepSizes {
  double gamma = 0.0;  // main step
  double eta = 1.0;    // model mixing (gdci, vr_gdci)
  double alpha = 1.0;  // shift step (diana, vr_gdci)
  double M = 0.0;      // Lyapunov weight
  double p = 1.0;      // rand_diana refresh probability (common value)
};

/// x^k, round counter, bits so far and the shifts (gradient space for
/// dcgd_shift, iterate space for vr_gdci).
struct IterateState {
  Vector x;
  std::int64_t k = 0;
  std::int64_t bits = 0;
  ShiftState shifts;
};

inline void check_compressors(const std::vector<CompressorSpec>& q, const Problem& problem) {
  if (static_cast<int>(q.size()) != problem.workers()) {
    throw std::invalid_argument("need one compressor per worker");
  }
  for (const auto& spec : q) {
    spec.validate();
    if (spec.dim != problem.dim()) throw std::invalid_argument("compressor dimension mismatch");
  }
}

// -----------------------------------------------------------------------------
// DCGD-SHIFT

/// One round of gradient estimation: g = h + (1/n) sum_i (c_i + m_i) with
/// m_i = Q_i(grad_i - h_i - c_i).
struct EstimatorRound {
  Vector estimate;
  std::vector<WorkerRound> workers;
  std::int64_t message_bits = 0;
};

inline EstimatorRound estimate_gradient(const Problem& problem, const std::vector<CompressorSpec>& q,
                                        const ShiftStrategy& strategy, const ShiftState& shifts,
                                        const Vector& x, std::int64_t k, std::uint64_t seed) {
  const int n = problem.workers();
  EstimatorRound round;
  round.workers.resize(n);
  Vector sum = Vector::Zero(problem.dim());
  for (int i = 0; i < n; ++i) {
    WorkerRound& w = round.workers[i];
    w.gradient.resize(problem.dim());
    problem.local_gradient(i, x, w.gradient);
    CompressedMessage c = inner_message(strategy, shifts, i, w.gradient, k, seed);
    w.inner = std::move(c.dense_value);
    w.inner_bits = c.bits;
    Stream rng = seed_stream(seed, i, k, Purpose::kMessage);
    CompressedMessage m = compress(q[i], w.gradient - shifts.local[i] - w.inner, rng);
    round.message_bits += m.bits;
    w.message = std::move(m.dense_value);
    sum += w.inner;
    sum += w.message;
  }
  round.estimate = shifts.aggregate + sum / static_cast<double>(n);
  return round;
}

/// x^{k+1} = x^k - gamma g^k, then the shift update.
inline void dcgd_shift_step(IterateState& state, const Problem& problem,
                            const std::vector<CompressorSpec>& q, const ShiftStrategy& strategy,
                            const StepSizes& steps, std::uint64_t seed) {
  if (!(steps.gamma > 0.0)) throw std::invalid_argument("dcgd_shift: gamma must be positive");
  EstimatorRound round = estimate_gradient(problem, q, strategy, state.shifts, state.x, state.k, seed);
  const std::int64_t extra = update_shifts(state.shifts, strategy, round.workers, state.x, state.k, seed);
  state.x -= steps.gamma * round.estimate;
  state.bits += round.message_bits + extra;
  ++state.k;
}

// -----------------------------------------------------------------------------
// GDCI

/// x^{k+1} = (1 - eta) x^k + eta (1/n) sum_i Q_i(x^k - gamma grad_i(x^k)).
inline void gdci_step(IterateState& state, const Problem& problem,
                      const std::vector<CompressorSpec>& q, double eta, double gamma,
                      std::uint64_t seed) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("gdci: eta must lie in (0, 1]");
  if (!(gamma > 0.0)) throw std::invalid_argument("gdci: gamma must be positive");
  const int n = problem.workers();
  Vector sum = Vector::Zero(problem.dim());
  Vector g(problem.dim());
  for (int i = 0; i < n; ++i) {
    problem.local_gradient(i, state.x, g);
    Stream rng = seed_stream(seed, i, state.k, Purpose::kMessage);
    CompressedMessage m = compress(q[i], state.x - gamma * g, rng);
    state.bits += m.bits;
    sum += m.dense_value;
  }
  state.x = (1.0 - eta) * state.x + eta * (sum / static_cast<double>(n));
  ++state.k;
}

/// Same method written as x^{k+1} = x^k - (eta gamma) (1/n) sum_i Qt_i(grad_i(x^k))
/// with the iterate compressor Qt_i(z) = (1/gamma)[x^k - Q_i(x^k - gamma z)].
/// Consumes exactly the draws of gdci_step.
inline void gdci_step_shifted(IterateState& state, const Problem& problem,
                              const std::vector<CompressorSpec>& q, double eta, double gamma,
                              std::uint64_t seed) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("gdci: eta must lie in (0, 1]");
  const int n = problem.workers();
  Vector sum = Vector::Zero(problem.dim());
  Vector g(problem.dim());
  for (int i = 0; i < n; ++i) {
    problem.local_gradient(i, state.x, g);
    Stream rng = seed_stream(seed, i, state.k, Purpose::kMessage);
    std::int64_t bits = 0;
    sum += iterate_compressor(q[i], state.x, gamma, g, rng, &bits);
    state.bits += bits;
  }
  state.x -= (eta * gamma) * (sum / static_cast<double>(n));
  ++state.k;
}

// -----------------------------------------------------------------------------
// VR-GDCI

/// delta_i = Q_i(x - gamma grad_i(x) - h_i); h_i += alpha delta_i;
/// x^{k+1} = (1 - eta) x^k + eta (mean delta_i + h^k); h += alpha mean delta_i.
inline void vr_gdci_step(IterateState& state, const Problem& problem,
                         const std::vector<CompressorSpec>& q, double alpha, double eta,
                         double gamma, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("vr_gdci: alpha must lie in (0, 1]");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("vr_gdci: eta must lie in (0, 1]");
  if (!(gamma > 0.0)) throw std::invalid_argument("vr_gdci: gamma must be positive");
  const int n = problem.workers();
  ShiftState& s = state.shifts;
  Vector sum = Vector::Zero(problem.dim());
  Vector g(problem.dim());
  for (int i = 0; i < n; ++i) {
    problem.local_gradient(i, state.x, g);
    Stream rng = seed_stream(seed, i, state.k, Purpose::kMessage);
    CompressedMessage m = compress(q[i], state.x - gamma * g - s.local[i], rng);
    state.bits += m.bits;
    s.local[i] += alpha * m.dense_value;
    sum += m.dense_value;
  }
  const Vector delta = sum / static_cast<double>(n);
  const Vector model = delta + s.aggregate;
  s.aggregate += alpha * delta;
  state.x = (1.0 - eta) * state.x + eta * model;
  ++state.k;
}

// -----------------------------------------------------------------------------
// Theorem step sizes

struct StepOptions {
  std::optional<double> alpha;
  std::optional<double> M;
  std::optional<double> M_scale;  // rand_diana: M = M_scale * 2 omega / (n p_m)
  std::optional<double> p;
  bool allow_violation = false;   // skip precondition checks on overrides
};

/// Largest step sizes allowed by theorem 1..6 (equality in every bound).
/// `omega` holds omega_i per worker; `inner_delta` the delta_i of the inner
/// compressors (empty: zero maps).
inline StepSizes auto_stepsizes(int theorem, const SmoothnessInfo& info,
                                const std::vector<double>& omega,
                                const std::vector<double>& inner_delta = {},
                                const StepOptions& opts = {}) {
  const int n = static_cast<int>(omega.size());
  if (n == 0 || static_cast<int>(info.local.size()) != n) {
    throw std::invalid_argument("auto_stepsizes: need omega_i and L_i for every worker");
  }
  if (!inner_delta.empty() && static_cast<int>(inner_delta.size()) != n) {
    throw std::invalid_argument("auto_stepsizes: need one delta_i per worker");
  }
  if (!(info.L > 0.0)) throw std::invalid_argument("auto_stepsizes: L must be positive");
  const double nn = static_cast<double>(n);
  auto delta = [&](int i) { return inner_delta.empty() ? 0.0 : inner_delta[i]; };
  const double w = *std::max_element(omega.begin(), omega.end());
  double max_lw = 0.0;
  double max_lwd = 0.0;
  for (int i = 0; i < n; ++i) {
    max_lw = std::max(max_lw, info.local[i] * omega[i]);
    max_lwd = std::max(max_lwd, info.local[i] * omega[i] * (1.0 - delta(i)));
  }
  auto need_mu = [&] {
    if (!(info.mu > 0.0)) {
      throw std::invalid_argument("theorem " + std::to_string(theorem) + " needs mu > 0");
    }
  };

  StepSizes s;
  switch (theorem) {
    case 1:
      s.gamma = 1.0 / (info.L + 2.0 * max_lw / nn);
      break;
    case 2:
      s.gamma = 1.0 / (info.L + max_lwd / nn);
      break;
    case 3: {
      double alpha_max = 1.0;
      for (int i = 0; i < n; ++i) alpha_max = std::min(alpha_max, 1.0 / (1.0 + omega[i] * (1.0 - delta(i))));
      s.alpha = opts.alpha.value_or(alpha_max);
      if (!opts.allow_violation && !(s.alpha > 0.0 && s.alpha <= alpha_max * (1.0 + 1e-12))) {
        throw std::invalid_argument("theorem 3: alpha exceeds min_i 1/(1 + omega_i (1 - delta_i))");
      }
      s.M = opts.M.value_or(4.0 / (nn * s.alpha));
      if (!opts.allow_violation && !(s.M > 2.0 / (nn * s.alpha))) {
        throw std::invalid_argument("theorem 3: M must exceed 2/(n alpha)");
      }
      s.gamma = 1.0 / (2.0 * max_lw / nn + (1.0 + s.alpha * s.M) * info.L_max);
      break;
    }
    case 4: {
      s.p = opts.p.value_or(1.0 / (w + 1.0));
      if (!(s.p > 0.0 && s.p <= 1.0)) throw std::invalid_argument("theorem 4: p outside (0, 1]");
      const double threshold = 2.0 * w / (nn * s.p);
      s.M = opts.M ? *opts.M : opts.M_scale ? *opts.M_scale * threshold : 2.0 * threshold;
      // Exact compressors (omega = 0) leave the shifts out of V; M = 0 is fine.
      const bool ok = threshold > 0.0 ? s.M > threshold : s.M >= 0.0;
      if (!opts.allow_violation && !ok) {
        throw std::invalid_argument("theorem 4: M must exceed 2 omega/(n p_m)");
      }
      s.gamma = 1.0 / ((1.0 + 2.0 * w / nn) * info.L_max + s.M * s.p * info.L_max);
      break;
    }
    case 5:
      need_mu();
      s.eta = 1.0 / (info.L / info.mu + (2.0 * w / nn) * (info.L_max / info.mu - 1.0));
      s.gamma = (1.0 + 2.0 * s.eta * w / nn) / (s.eta * (info.L + 2.0 * info.L_max * w / nn));
      break;
    case 6:
      need_mu();
      s.alpha = opts.alpha.value_or(1.0 / (w + 1.0));
      if (!opts.allow_violation && !(s.alpha > 0.0 && s.alpha <= 1.0 / (w + 1.0) * (1.0 + 1e-12))) {
        throw std::invalid_argument("theorem 6: alpha exceeds 1/(omega + 1)");
      }
      s.eta = 1.0 / (info.L / info.mu + (6.0 * w / nn) * (info.L_max / info.mu - 1.0));
      s.gamma = (1.0 + 6.0 * w * s.eta / nn) / (s.eta * (info.L + 6.0 * info.L_max * w / nn));
      break;
    default:
      throw std::invalid_argument("unknown theorem " + std::to_string(theorem));
  }
  if (!(s.eta > 0.0 && s.eta <= 1.0)) {
    throw std::invalid_argument("theorem " + std::to_string(theorem) + ": eta outside (0, 1]");
  }
  return s;
}

/// GDCI's deterministic part is a gradient step of length eta gamma; keep it
/// inside the stable range (0, 2/(L + mu)].
inline StepSizes cap_gdci_step(StepSizes s, const SmoothnessInfo& info) {
  const double cap = 2.0 / (info.L + info.mu);
  if (s.eta * s.gamma > cap) s.gamma = cap / s.eta;
  return s;
}

/// Per-round contraction factor stated by each theorem. Theorems 1, 2 and 5
/// give the factor of the transient term.
inline double theorem_rate(int theorem, const StepSizes& s, const SmoothnessInfo& info,
                           const std::vector<double>& omega) {
  const double nn = static_cast<double>(omega.size());
  const double w = *std::max_element(omega.begin(), omega.end());
  switch (theorem) {
    case 1:
    case 2: return 1.0 - s.gamma * info.mu;
    case 3: return std::max(1.0 - s.gamma * info.mu, 1.0 - s.alpha + 2.0 * w / (nn * s.M));
    case 4: return std::max(1.0 - s.gamma * info.mu, 1.0 - s.p + 2.0 * w / (nn * s.M));
    case 5: return 1.0 - s.eta;
    case 6: return 1.0 - std::min(s.alpha / 2.0, s.eta);
    default: throw std::invalid_argument("unknown theorem " + std::to_string(theorem));
  }
}

/// Displayed iteration complexities times ln(1/eps), with kappa = L_max / mu:
///   theorems 3, 4: max{kappa (1 + omega/n), omega + 1}
///   theorem 6:     max{2 (omega + 1), (1 + 6 omega/n) kappa}
///   theorems 1, 2, 5: kappa (1 + omega/n)
inline double iteration_bound(int theorem, const SmoothnessInfo& info,
                              const std::vector<double>& omega, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("iteration_bound: eps outside (0, 1)");
  const double nn = static_cast<double>(omega.size());
  const double w = *std::max_element(omega.begin(), omega.end());
  const double kappa = info.L_max / info.mu;
  const double log_term = std::log(1.0 / eps);
  switch (theorem) {
    case 3:
    case 4: return std::max(kappa * (1.0 + w / nn), w + 1.0) * log_term;
    case 6: return std::max(2.0 * (w + 1.0), (1.0 + 6.0 * w / nn) * kappa) * log_term;
    case 1:
    case 2:
    case 5: return kappa * (1.0 + w / nn) * log_term;
    default: throw std::invalid_argument("unknown theorem " + std::to_string(theorem));
  }
}

/// Neighbourhood radius of DCGD with fixed shifts:
/// (2 gamma / mu) (1/n) sum_i (omega_i / n) ||grad f_i(x*) - h_i||^2.
inline double fixed_shift_floor(double gamma, const SmoothnessInfo& info,
                                const std::vector<double>& omega, const ReferenceSolution& ref,
                                const std::vector<Vector>& shifts) {
  const double nn = static_cast<double>(omega.size());
  double total = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    total += omega[i] / nn * (ref.local_gradients[i] - shifts[i]).squaredNorm();
  }
  return 2.0 * gamma / info.mu * total / nn;
}

/// Neighbourhood radius of GDCI: eta (2 omega / n) (1/n) sum_i ||x* - gamma grad f_i(x*)||^2.
inline double gdci_floor(const StepSizes& s, const std::vector<double>& omega,
                         const ReferenceSolution& ref) {
  const double nn = static_cast<double>(omega.size());
  const double w = *std::max_element(omega.begin(), omega.end());
  double total = 0.0;
  for (const auto& g : ref.local_gradients) total += (ref.x_star - s.gamma * g).squaredNorm();
  return s.eta * (2.0 * w / nn) * total / nn;
}

/// T_i(x*) = x* - gamma grad f_i(x*), the fixed points of the vr_gdci shifts.
inline std::vector<Vector> iterate_targets(const ReferenceSolution& ref, double gamma) {
  std::vector<Vector> out;
  for (const auto& g : ref.local_gradients) out.push_back(ref.x_star - gamma * g);
  return out;
}

/// Lyapunov functions:
///   3: ||x - x*||^2 + M gamma^2 (1/n) sum_i omega_i ||h_i - grad f_i(x*)||^2
///   4: ||x - x*||^2 + M gamma^2 (1/n) sum_i ||h_i - grad f_i(x*)||^2
///   6: ||x - x*||^2 + (4 eta^2 omega / (alpha n)) (1/n) sum_i ||h_i - T_i(x*)||^2
inline double lyapunov(int theorem, const IterateState& state, const ReferenceSolution& ref,
                       const StepSizes& s, const std::vector<double>& omega) {
  const double distance = (state.x - ref.x_star).squaredNorm();
  if (static_cast<int>(omega.size()) != state.shifts.workers()) {
    throw std::invalid_argument("lyapunov: state does not match the worker count");
  }
  const double nn = static_cast<double>(omega.size());
  switch (theorem) {
    case 3:
      return distance + s.M * s.gamma * s.gamma * shift_residual(state.shifts, ref.local_gradients, omega);
    case 4:
      return distance + s.M * s.gamma * s.gamma * shift_residual(state.shifts, ref.local_gradients);
    case 6: {
      const double w = *std::max_element(omega.begin(), omega.end());
      return distance + 4.0 * s.eta * s.eta * w / (s.alpha * nn) *
                            shift_residual(state.shifts, iterate_targets(ref, s.gamma));
    }
    default:
      throw std::invalid_argument("no Lyapunov function for theorem " + std::to_string(theorem));
  }
}

}  // namespace shiftcomp
