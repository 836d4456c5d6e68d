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
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftcomp/algorithms.hpp"
#include "shiftcomp/compressors.hpp"
#include "shiftcomp/harness.hpp"
#include "shiftcomp/shifts.hpp"
#include "shiftcomp/stats.hpp"

namespace shiftcomp {

struct Check {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::int64_t samples = 100000;  // compressor and estimator Monte-Carlo draws
  int lyapunov_states = 5;
  int lyapunov_draws = 10000;
  std::uint64_t seed = 20240611;
  Fault fault = Fault::kNone;     // injected into every Rand-K compressor
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"compressors", "estimators", "lyapunov", "reductions",
                                              "all"};
  return names;
}

namespace detail {

inline std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

inline std::string format_scale(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

inline CompressorSpec faulty(CompressorSpec spec, Fault fault) {
  if (spec.kind == CompressorKind::kRandK) spec.fault = fault;
  return spec;
}

inline Vector gaussian(int dim, Stream& rng) {
  Vector x(dim);
  for (int j = 0; j < dim; ++j) x[j] = rng.normal();
  return x;
}

}  // namespace detail

// -----------------------------------------------------------------------------
// compressors

inline std::vector<Check> verify_compressors(const VerifyOptions& opt) {
  std::vector<Check> out;
  const std::string suite = "compressors";
  Stream data = seed_stream(opt.seed, -1, 0, Purpose::kMonteCarlo);

  for (int k : {8, 24, 40}) {
    const CompressorSpec spec = detail::faulty(CompressorSpec::rand_k(80, k), opt.fault);
    const Vector x = detail::gaussian(80, data);
    Stream rng = seed_stream(opt.seed, k, 1, Purpose::kMonteCarlo);
    const VarianceReport r = variance_check(spec, x, opt.samples, rng);
    const double target = 80.0 / k - 1.0;
    const bool ok = r.unbiased_ok && std::abs(r.variance_ratio - target) <= kVarianceSlack * target;
    out.push_back({suite, "rand_k_k" + std::to_string(k), ok,
                   detail::fmt("variance ratio %.5f vs %.5f (+-5%%), max |z| of mean %.2f", r.variance_ratio,
                               target, r.max_standard_score)});
  }

  {
    int violations = 0;
    int equalities_missed = 0;
    Stream rng = seed_stream(opt.seed, -1, 2, Purpose::kMonteCarlo);
    for (int t = 0; t < 10000; ++t) {
      const int d = 2 + static_cast<int>(rng.below(79));
      const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d)));
      const CompressorSpec spec = CompressorSpec::top_k(d, k);
      const Vector x = detail::gaussian(d, rng);
      const Vector c = compress(spec, x, rng).dense_value;
      if ((c - x).squaredNorm() > (1.0 - spec.delta()) * x.squaredNorm()) ++violations;
      // Equal magnitudes meet the bound with equality.
      const Vector flat = Vector::Constant(d, 1.5);
      const double lhs = (compress(spec, flat, rng).dense_value - flat).squaredNorm();
      if (std::abs(lhs - (1.0 - spec.delta()) * flat.squaredNorm()) > 1e-12 * flat.squaredNorm()) ++equalities_missed;
    }
    out.push_back({suite, "top_k_contraction", violations == 0 && equalities_missed == 0,
                   std::to_string(violations) + " violations, " + std::to_string(equalities_missed) +
                       " missed equalities over 10000 vectors"});
  }

  {
    const CompressorSpec c = CompressorSpec::top_k(80, 8);
    const CompressorSpec q = detail::faulty(CompressorSpec::rand_k(80, 8), opt.fault);
    const InducedCompressor ind(c, q);
    const Vector x = detail::gaussian(80, data);
    Stream rng = seed_stream(opt.seed, -1, 3, Purpose::kMonteCarlo);
    VectorMoments mean(80);
    ScalarMoments err;
    for (std::int64_t t = 0; t < opt.samples; ++t) {
      const Vector v = induce(c, q, x, rng).dense_value;
      mean.add(v);
      err.add((v - x).squaredNorm());
    }
    const double ratio = err.mean() / x.squaredNorm();
    const double z = max_standard_score(mean, x);
    const bool ok = ratio <= ind.omega() * (1.0 + kVarianceSlack) && z <= kMeanStandardErrors;
    out.push_back({suite, "induced_top_k_rand_k", ok,
                   detail::fmt("variance ratio %.5f vs omega(1-delta) = %.5f, max |z| %.2f", ratio,
                               ind.omega(), z)});
  }

  {
    const CompressorSpec spec = CompressorSpec::natural_dithering(80, 2);
    const Vector x = detail::gaussian(80, data);
    Stream rng = seed_stream(opt.seed, -1, 4, Purpose::kMonteCarlo);
    const VarianceReport r = variance_check(spec, x, opt.samples, rng);
    out.push_back({suite, "natural_dithering_s2", r.unbiased_ok && r.variance_ok,
                   detail::fmt("variance ratio %.5f vs calibrated omega %.5f, max |z| %.2f", r.variance_ratio,
                               r.declared_bound, r.max_standard_score)});
  }

  {
    const CompressorSpec spec = CompressorSpec::bernoulli(80, 0.25);
    const Vector x = detail::gaussian(80, data);
    Stream rng = seed_stream(opt.seed, -1, 5, Purpose::kMonteCarlo);
    const VarianceReport r = variance_check(spec, x, opt.samples, rng);
    const bool ok = std::abs(r.variance_ratio - 0.75) <= kVarianceSlack * 0.75;
    out.push_back({suite, "bernoulli_p0.25", ok,
                   detail::fmt("E||B(x)-x||^2/||x||^2 = %.5f vs 0.75", r.variance_ratio)});
  }

  {
    // Shift a shifted Rand-K by v; variance is measured around h + v.
    const CompressorSpec base = detail::faulty(CompressorSpec::rand_k(80, 8), opt.fault);
    const ShiftedCompressor first{base, detail::gaussian(80, data)};
    const ShiftedCompressor twice = shift(first, detail::gaussian(80, data));
    const Vector x = detail::gaussian(80, data);
    const Vector center = twice.shift;
    Stream rng = seed_stream(opt.seed, -1, 6, Purpose::kMonteCarlo);
    VectorMoments mean(80);
    ScalarMoments err;
    for (std::int64_t t = 0; t < opt.samples; ++t) {
      const Vector v = twice.apply(x, rng);
      mean.add(v);
      err.add((v - x).squaredNorm());
    }
    const double bound = base.omega() * (x - center).squaredNorm();
    const double z = max_standard_score(mean, x);
    out.push_back({suite, "shifted_rand_k", err.mean() <= bound * (1.0 + kVarianceSlack) && z <= kMeanStandardErrors,
                   detail::fmt("variance %.5g vs omega ||x - (h+v)||^2 = %.5g, max |z| %.2f", err.mean(), bound, z)});
  }

  for (double t : {1.0, -2.0, 0.5}) {
    const CompressorSpec spec = detail::faulty(CompressorSpec::rand_k(80, 8), opt.fault);
    const Vector z = detail::gaussian(80, data);
    Stream rng = seed_stream(opt.seed, -1, 7, Purpose::kMonteCarlo);
    VectorMoments mean(80);
    ScalarMoments err;
    for (std::int64_t s = 0; s < opt.samples; ++s) {
      const Vector v = negation_scaled(spec, t, z, rng);
      mean.add(v);
      err.add((v - z).squaredNorm());
    }
    const double ratio = err.mean() / z.squaredNorm();
    const double score = max_standard_score(mean, z);
    out.push_back({suite, "negation_scaled_t" + detail::format_scale(t),
                   ratio <= spec.omega() * (1.0 + kVarianceSlack) && score <= kMeanStandardErrors,
                   detail::fmt("variance ratio %.5f vs omega %.5f, max |z| %.2f", ratio, spec.omega(), score)});
  }

  {
    int mismatches = 0;
    Stream rng = seed_stream(opt.seed, -1, 8, Purpose::kMonteCarlo);
    const std::vector<CompressorSpec> specs{
        CompressorSpec::identity(80),         CompressorSpec::zero(80),
        CompressorSpec::rand_k(80, 8),        CompressorSpec::top_k(80, 8),
        CompressorSpec::natural_dithering(80, 3), CompressorSpec::bernoulli(80, 0.5)};
    for (int t = 0; t < 200; ++t) {
      for (const auto& spec : specs) {
        const Vector x = detail::gaussian(80, rng);
        const CompressedMessage m = compress(spec, x, rng);
        if (decode(m, 80) != m.dense_value || bit_cost(spec, m) != m.bits) ++mismatches;
      }
      const CompressedMessage m = induce(specs[3], specs[2], detail::gaussian(80, rng), rng);
      if (decode(m, 80) != m.dense_value) ++mismatches;
    }
    out.push_back({suite, "decode_round_trip", mismatches == 0,
                   std::to_string(mismatches) + " mismatches over 1400 messages"});
  }
  return out;
}

// -----------------------------------------------------------------------------
// estimators

/// A state in which shifts are far from optimal, reproducible from `seed`.
inline ShiftState random_shift_state(const ShiftStrategy& strategy, const Instance& inst,
                                     const Vector& x, std::uint64_t seed) {
  const Problem& problem = *inst.problem;
  ShiftState state = initial_shifts(strategy, problem, x, &inst.reference, seed);
  Stream rng = seed_stream(seed, -1, 11, Purpose::kMonteCarlo);
  const int n = problem.workers();
  switch (strategy.kind) {
    case ShiftKind::kFixed:
    case ShiftKind::kDiana:
      for (int i = 0; i < n; ++i) state.local[i] = inst.reference.local_gradients[i] + 100.0 * detail::gaussian(problem.dim(), rng);
      break;
    case ShiftKind::kRandDiana:
      for (int i = 0; i < n; ++i) {
        state.reference[i] = inst.reference.x_star + detail::gaussian(problem.dim(), rng);
        state.local[i] = problem.local_gradient(i, state.reference[i]);
      }
      break;
    case ShiftKind::kStar:
      break;
  }
  state.aggregate = state.mean_local();
  return state;
}

inline Check estimator_unbiasedness(const std::string& name, const Instance& inst,
                                    const std::vector<CompressorSpec>& q, const ShiftStrategy& strategy,
                                    const VerifyOptions& opt) {
  const Problem& problem = *inst.problem;
  Stream rng = seed_stream(opt.seed, -1, 10, Purpose::kMonteCarlo);
  const Vector x = inst.reference.x_star + 10.0 * detail::gaussian(problem.dim(), rng);
  const ShiftState shifts = random_shift_state(strategy, inst, x, opt.seed);
  const Vector target = problem.gradient(x);
  VectorMoments mean(problem.dim());
  for (std::int64_t t = 0; t < opt.samples; ++t) {
    mean.add(estimate_gradient(problem, q, strategy, shifts, x, 0, derive_seed(opt.seed, t)).estimate);
  }
  const double z = max_standard_score(mean, target);
  return {"estimators", name, z <= kMeanStandardErrors,
          detail::fmt("max |z| of E[g] vs grad f(x) over %g draws: %.3f (limit 4)", static_cast<double>(opt.samples), z)};
}

inline std::vector<Check> verify_estimators(const Instance& inst, const VerifyOptions& opt) {
  const Problem& problem = *inst.problem;
  const int n = problem.workers();
  const int d = problem.dim();
  const std::vector<CompressorSpec> q(n, detail::faulty(CompressorSpec::rand_k(d, std::max(1, d / 4)), opt.fault));
  std::vector<Check> out;
  for (auto kind : {ShiftKind::kFixed, ShiftKind::kStar, ShiftKind::kDiana, ShiftKind::kRandDiana}) {
    ShiftStrategy s;
    s.kind = kind;
    s.alpha = 0.2;
    if (kind == ShiftKind::kRandDiana) s.probs.assign(n, 0.2);
    out.push_back(estimator_unbiasedness(std::string(to_string(kind)), inst, q, s, opt));
  }
  ShiftStrategy induced;
  induced.kind = ShiftKind::kDiana;
  induced.alpha = 0.2;
  induced.inner.assign(n, CompressorSpec::top_k(d, std::max(1, d / 10)));
  out.push_back(estimator_unbiasedness("diana_top_k_inner", inst, q, induced, opt));
  return out;
}

// -----------------------------------------------------------------------------
// lyapunov

struct ContractionResult {
  int theorem = 0;
  double rate = 0.0;        // stated by the theorem
  double tight_rate = 0.0;  // theorem 3 with omega folded into V; else = rate
  std::vector<double> ratios;  // E[V^{k+1}] / V^k per state
  std::vector<double> standard_errors;
};

/// Frozen-state Monte-Carlo of one step from `states` random states.
inline ContractionResult lyapunov_contraction(const Instance& inst, const RunConfig& cfg, int states,
                                              int draws, std::uint64_t seed) {
  const MethodSetup setup = resolve_method(cfg, inst);
  const int th = setup.lyapunov_theorem;
  if (th == 0) throw std::invalid_argument("configuration has no Lyapunov function");
  const Problem& problem = *inst.problem;
  const ReferenceSolution& ref = inst.reference;
  const int n = problem.workers();
  const int d = problem.dim();
  const StepSizes& s = setup.steps;
  const double w = *std::max_element(setup.omega.begin(), setup.omega.end());
  ContractionResult res;
  res.theorem = th;
  res.rate = theorem_rate(th, s, inst.info, setup.omega);
  res.tight_rate = th == 3 ? std::max(1.0 - s.gamma * inst.info.mu, 1.0 - s.alpha + 2.0 / (n * s.M)) : res.rate;
  const std::vector<Vector> target = th == 6 ? iterate_targets(ref, s.gamma) : ref.local_gradients;
  // Shift perturbations sized so both parts of V are comparable.
  const double weight = th == 3   ? s.M * s.gamma * s.gamma * w
                        : th == 4 ? s.M * s.gamma * s.gamma
                                  : 4.0 * s.eta * s.eta * w / (s.alpha * n);
  for (int st = 0; st < states; ++st) {
    Stream rng = seed_stream(seed, st, th, Purpose::kMonteCarlo);
    IterateState state;
    state.x = ref.x_star + detail::gaussian(d, rng);
    const double mix = 0.2 + 1.6 * rng.uniform();
    state.shifts.local.resize(n);
    if (th == 4) state.shifts.reference.resize(n);
    for (int i = 0; i < n; ++i) {
      if (th == 4) {
        // Rand-DIANA shifts are gradients at reference points.
        state.shifts.reference[i] = ref.x_star + mix * detail::gaussian(d, rng) / std::sqrt(weight * inst.info.local[i] * inst.info.local[i]);
        state.shifts.local[i] = problem.local_gradient(i, state.shifts.reference[i]);
      } else {
        state.shifts.local[i] = target[i] + mix / std::sqrt(weight) * detail::gaussian(d, rng);
      }
    }
    state.shifts.aggregate = state.shifts.mean_local();
    const double v0 = lyapunov(th, state, ref, s, setup.omega);
    ScalarMoments next;
    for (int t = 0; t < draws; ++t) {
      IterateState copy = state;
      advance(copy, cfg, inst, setup, derive_seed(seed + 1 + st, t));
      next.add(lyapunov(th, copy, ref, s, setup.omega));
    }
    res.ratios.push_back(next.mean() / v0);
    res.standard_errors.push_back(next.standard_error() / v0);
  }
  return res;
}

inline RunConfig lyapunov_config(int theorem, double q) {
  RunConfig c;
  c.compressors = {CompressorConfig{CompressorKind::kRandK, 0, q}};
  switch (theorem) {
    case 3: c.shift.kind = ShiftKind::kDiana; break;
    case 4: c.shift.kind = ShiftKind::kRandDiana; break;
    case 6: c.method = Method::kVrGdci; break;
    default: throw std::invalid_argument("no Lyapunov function for theorem " + std::to_string(theorem));
  }
  return c;
}

inline std::vector<Check> verify_lyapunov(const Instance& inst, const VerifyOptions& opt) {
  std::vector<Check> out;
  for (int th : {3, 4, 6}) {
    RunConfig cfg = lyapunov_config(th, 0.25);
    const ContractionResult r = lyapunov_contraction(inst, cfg, opt.lyapunov_states, opt.lyapunov_draws, opt.seed);
    const double worst = *std::max_element(r.ratios.begin(), r.ratios.end());
    out.push_back({"lyapunov", "theorem" + std::to_string(th), worst <= r.rate * 1.05,
                   detail::fmt("worst E[V+]/V %.5f vs rate %.6f x 1.05", worst, r.rate)});
    if (th == 3) {
      out.push_back({"lyapunov", "theorem3_tight", worst <= r.tight_rate * 1.05,
                     detail::fmt("worst E[V+]/V %.5f vs 1 - alpha + 2/(nM) form %.6f x 1.05", worst, r.tight_rate)});
    }
  }
  return out;
}

// -----------------------------------------------------------------------------
// reductions

/// Max over 50 steps of ||x_method - x_gd|| / max(1, ||x_gd||).
inline double reduction_gap(const Instance& inst, Method method, ShiftKind kind, std::uint64_t seed) {
  const Problem& problem = *inst.problem;
  RunConfig cfg;
  cfg.method = method;
  cfg.shift.kind = kind;
  cfg.compressors = {CompressorConfig{CompressorKind::kIdentity}};
  MethodSetup setup = resolve_method(cfg, inst);
  double gd_step = setup.steps.gamma;
  if (method == Method::kGdci) {
    setup.steps.eta = 1.0;
    setup.steps.gamma = 1.0 / inst.info.L;
    gd_step = setup.steps.gamma;
  } else if (method == Method::kVrGdci) {
    setup.steps.alpha = 1.0;
    gd_step = setup.steps.eta * setup.steps.gamma;
  }
  IterateState state = initial_state(cfg, inst, setup, seed);
  Vector gd = state.x;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    advance(state, cfg, inst, setup, seed);
    gd -= gd_step * problem.gradient(gd);
    worst = std::max(worst, (state.x - gd).norm() / std::max(1.0, gd.norm()));
  }
  return worst;
}

inline std::vector<Check> verify_reductions(const Instance& inst, const VerifyOptions& opt) {
  std::vector<Check> out;
  auto add = [&](const std::string& name, Method m, ShiftKind k) {
    const double gap = reduction_gap(inst, m, k, opt.seed);
    out.push_back({"reductions", name, gap <= 1e-12, detail::fmt("max relative gap to GD %.3g (limit 1e-12)", gap)});
  };
  add("dcgd_fixed", Method::kDcgdShift, ShiftKind::kFixed);
  add("dcgd_star", Method::kDcgdShift, ShiftKind::kStar);
  add("dcgd_diana", Method::kDcgdShift, ShiftKind::kDiana);
  add("dcgd_rand_diana", Method::kDcgdShift, ShiftKind::kRandDiana);
  add("gdci_eta1", Method::kGdci, ShiftKind::kFixed);
  add("vr_gdci_alpha1", Method::kVrGdci, ShiftKind::kFixed);
  return out;
}

// -----------------------------------------------------------------------------

/// The ridge instance used throughout: m = 100, d = 80, n = 10, lambda = 1/m.
inline Instance default_instance() { return build_instance(ProblemConfig{}); }

inline std::vector<Check> run_suite(const std::string& suite, const VerifyOptions& opt) {
  const auto& names = suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end()) {
    throw std::invalid_argument("unknown suite '" + suite + "'");
  }
  std::vector<Check> out;
  auto append = [&out](std::vector<Check> more) { out.insert(out.end(), more.begin(), more.end()); };
  if (suite == "compressors" || suite == "all") append(verify_compressors(opt));
  if (suite != "compressors") {
    const Instance inst = default_instance();
    if (suite == "estimators" || suite == "all") append(verify_estimators(inst, opt));
    if (suite == "lyapunov" || suite == "all") append(verify_lyapunov(inst, opt));
    if (suite == "reductions" || suite == "all") append(verify_reductions(inst, opt));
  }
  return out;
}

}  // namespace shiftcomp
