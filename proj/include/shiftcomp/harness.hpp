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
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftcomp/algorithms.hpp"
#include "shiftcomp/compressors.hpp"
#include "shiftcomp/datagen.hpp"
#include "shiftcomp/problems.hpp"
#include "shiftcomp/rng.hpp"
#include "shiftcomp/shifts.hpp"

namespace shiftcomp {

// -----------------------------------------------------------------------------
// Configuration

enum class DataSource { kRegression, kInterpolation, kClassification, kLibsvm };

struct ProblemConfig {
  LossKind loss = LossKind::kRidge;
  DataSource source = DataSource::kRegression;
  int rows = 100;  // m
  int dim = 80;    // d
  int workers = 10;
  int informative = 10;
  double noise = 0.0;
  std::uint64_t data_seed = 0;
  std::string path;            // libsvm input
  bool normalize = false;      // max-abs feature scaling for libsvm input
  std::optional<double> lambda;        // default: 1/m for ridge, 0 for interpolation
  std::optional<double> target_kappa;  // tunes lambda; default 100 for logistic
  double reference_tol = 1e-32;
};

/// A compressor family with its size given either absolutely (k) or as the
/// kept fraction q = k/d.
struct CompressorConfig {
  CompressorKind kind = CompressorKind::kIdentity;
  int k = 0;
  double q = 0.0;
  int levels = 0;
  double p = 1.0;

  CompressorSpec spec(int dim) const {
    auto size = [&] {
      if (k > 0) return k;
      if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("compressor: need k or q in (0, 1]");
      return std::max(1, static_cast<int>(std::lround(q * dim)));
    };
    switch (kind) {
      case CompressorKind::kIdentity: return CompressorSpec::identity(dim);
      case CompressorKind::kZero: return CompressorSpec::zero(dim);
      case CompressorKind::kRandK: return CompressorSpec::rand_k(dim, size());
      case CompressorKind::kTopK: return CompressorSpec::top_k(dim, size());
      case CompressorKind::kNaturalDithering: return CompressorSpec::natural_dithering(dim, levels);
      case CompressorKind::kBernoulli: return CompressorSpec::bernoulli(dim, p);
    }
    throw std::invalid_argument("compressor: unknown kind");
  }
};

struct ShiftConfig {
  ShiftKind kind = ShiftKind::kFixed;
  std::vector<CompressorConfig> inner;  // one entry broadcasts to all workers
  std::optional<double> alpha;          // diana; default from theorem 3
  std::optional<double> p;              // rand_diana; default 1/(omega + 1)
};

struct StepConfig {
  int theorem = 0;  // 0: pick from the method and shift kind
  std::optional<double> gamma;
  std::optional<double> eta;
  std::optional<double> alpha;
  std::optional<double> M;
  std::optional<double> M_scale;
  double multiplier = 1.0;  // applied to gamma
  bool cap_gdci = true;
};

struct RunConfig {
  std::string name = "run";
  ProblemConfig problem;
  std::vector<CompressorConfig> compressors{CompressorConfig{}};  // one entry broadcasts
  Method method = Method::kDcgdShift;
  ShiftConfig shift;
  StepConfig steps;
  std::int64_t max_iters = 100000;
  std::int64_t max_bits = 0;  // 0: unlimited
  double eps = 1e-10;
  std::uint64_t seed = 0;
  int seeds = 1;
  double x0_scale = 10.0;
  bool x0_scale_is_variance = false;
};

// -----------------------------------------------------------------------------
// Problem instance

/// Problem plus its constants and reference solution, shared by all runs on it.
struct Instance {
  std::shared_ptr<const Problem> problem;
  SmoothnessInfo info;
  ReferenceSolution reference;
  std::vector<std::string> warnings;
};

inline Instance build_instance(const ProblemConfig& cfg) {
  Dataset data;
  Instance inst;
  switch (cfg.source) {
    case DataSource::kRegression:
      data = make_regression(cfg.rows, cfg.dim, cfg.informative, cfg.noise, cfg.data_seed).dataset;
      break;
    case DataSource::kInterpolation:
      data = make_interpolation_regression(cfg.rows, cfg.dim, cfg.workers, cfg.data_seed).dataset;
      break;
    case DataSource::kClassification:
      data = make_classification(cfg.rows, cfg.dim, cfg.data_seed);
      break;
    case DataSource::kLibsvm: {
      LibsvmParseResult parsed = parse_libsvm(cfg.path);
      data = std::move(parsed.dataset);
      inst.warnings = std::move(parsed.warnings);
      if (cfg.normalize) normalize_features(data);
      break;
    }
  }
  const std::vector<Shard> shards = shard(data, cfg.workers, cfg.data_seed);
  Problem base(cfg.loss, data, shards, 0.0);
  double lambda = 0.0;
  if (cfg.lambda) {
    lambda = *cfg.lambda;
  } else if (cfg.target_kappa) {
    lambda = tune_regularizer_for_condition(base, *cfg.target_kappa);
  } else if (cfg.source == DataSource::kInterpolation) {
    lambda = 0.0;  // any lambda > 0 moves x* off the shared weights
  } else if (cfg.loss == LossKind::kLogistic) {
    lambda = tune_regularizer_for_condition(base, 100.0);
  } else {
    lambda = 1.0 / static_cast<double>(data.rows());
  }
  inst.problem = std::make_shared<const Problem>(base.with_lambda(lambda));
  inst.info = smoothness_constants(*inst.problem);
  inst.reference = solve_reference(*inst.problem, cfg.reference_tol);
  return inst;
}

// -----------------------------------------------------------------------------
// Resolved method

/// Everything a run needs beyond the instance, with step sizes filled in.
struct MethodSetup {
  std::vector<CompressorSpec> q;
  std::vector<double> omega;
  ShiftStrategy strategy;
  StepSizes steps;
  int theorem = 0;
  int lyapunov_theorem = 0;  // 0: none defined
};

inline int default_theorem(Method method, ShiftKind kind) {
  switch (method) {
    case Method::kGdci: return 5;
    case Method::kVrGdci: return 6;
    case Method::kDcgdShift: break;
  }
  switch (kind) {
    case ShiftKind::kFixed: return 1;
    case ShiftKind::kStar: return 2;
    case ShiftKind::kDiana: return 3;
    case ShiftKind::kRandDiana: return 4;
  }
  return 1;
}

inline std::vector<CompressorSpec> expand(const std::vector<CompressorConfig>& cfg, int workers,
                                          int dim, const char* what) {
  if (cfg.size() != 1 && static_cast<int>(cfg.size()) != workers) {
    throw std::invalid_argument(std::string(what) + ": give one entry or one per worker");
  }
  std::vector<CompressorSpec> out;
  for (int i = 0; i < workers; ++i) out.push_back(cfg[cfg.size() == 1 ? 0 : i].spec(dim));
  return out;
}

inline MethodSetup resolve_method(const RunConfig& cfg, const Instance& inst) {
  const Problem& problem = *inst.problem;
  const int n = problem.workers();
  MethodSetup setup;
  setup.q = expand(cfg.compressors, n, problem.dim(), "compressors");
  for (const auto& spec : setup.q) {
    if (!spec.unbiased()) {
      throw std::invalid_argument("compressors: main compressors must be unbiased");
    }
    setup.omega.push_back(spec.omega());
  }
  setup.strategy.kind = cfg.method == Method::kDcgdShift ? cfg.shift.kind : ShiftKind::kFixed;
  std::vector<double> inner_delta;
  if (!cfg.shift.inner.empty() && cfg.method == Method::kDcgdShift) {
    setup.strategy.inner = expand(cfg.shift.inner, n, problem.dim(), "shift.inner");
    for (int i = 0; i < n; ++i) inner_delta.push_back(setup.strategy.inner_delta(i));
  }

  setup.theorem = cfg.steps.theorem != 0 ? cfg.steps.theorem
                                         : default_theorem(cfg.method, setup.strategy.kind);
  StepOptions opts;
  opts.alpha = cfg.steps.alpha ? cfg.steps.alpha : cfg.shift.alpha;
  opts.M = cfg.steps.M;
  opts.M_scale = cfg.steps.M_scale;
  opts.p = cfg.shift.p;
  opts.allow_violation = cfg.steps.M_scale.has_value() || cfg.steps.M.has_value();
  setup.steps = auto_stepsizes(setup.theorem, inst.info, setup.omega, inner_delta, opts);
  if (cfg.method == Method::kGdci && cfg.steps.cap_gdci) setup.steps = cap_gdci_step(setup.steps, inst.info);
  if (cfg.steps.gamma) setup.steps.gamma = *cfg.steps.gamma;
  if (cfg.steps.eta) setup.steps.eta = *cfg.steps.eta;
  setup.steps.gamma *= cfg.steps.multiplier;

  setup.strategy.alpha = setup.steps.alpha;
  if (setup.strategy.kind == ShiftKind::kRandDiana) setup.strategy.probs.assign(n, setup.steps.p);
  setup.strategy.validate(n, problem.dim());

  if (cfg.method == Method::kVrGdci) {
    setup.lyapunov_theorem = 6;
  } else if (cfg.method == Method::kDcgdShift && setup.strategy.kind == ShiftKind::kDiana) {
    setup.lyapunov_theorem = 3;
  } else if (cfg.method == Method::kDcgdShift && setup.strategy.kind == ShiftKind::kRandDiana) {
    setup.lyapunov_theorem = 4;
  }
  return setup;
}

// -----------------------------------------------------------------------------
// Runs

enum class RunStatus { kConverged = 0, kBudget = 2, kDiverged = 3 };

inline constexpr double kDivergenceThreshold = 1e12;

struct TrajectoryPoint {
  std::int64_t k = 0;
  double rel_error = 0.0;
  std::int64_t bits = 0;
  double lyapunov = std::numeric_limits<double>::quiet_NaN();
};

struct RunRecord {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<TrajectoryPoint> trajectory;
  RunStatus status = RunStatus::kBudget;
  std::string diagnostic;
  StepSizes steps;
  double initial_distance = 0.0;  // ||x^0 - x*||^2
  Vector final_x;

  std::optional<std::int64_t> iterations_to(double eps) const {
    for (const auto& p : trajectory) {
      if (p.rel_error <= eps) return p.k;
    }
    return std::nullopt;
  }
  std::optional<std::int64_t> bits_to(double eps) const {
    for (const auto& p : trajectory) {
      if (p.rel_error <= eps) return p.bits;
    }
    return std::nullopt;
  }
};

inline Vector initial_point(const RunConfig& cfg, int dim, std::uint64_t seed) {
  const double sd = cfg.x0_scale_is_variance ? std::sqrt(cfg.x0_scale) : cfg.x0_scale;
  Stream rng = seed_stream(seed, -1, 0, Purpose::kInitialPoint);
  Vector x(dim);
  for (int j = 0; j < dim; ++j) x[j] = sd * rng.normal();
  return x;
}

/// Initial state of a run: x^0, shifts, and the dense sends needed for the
/// master to know h^0 (rand_diana only).
inline IterateState initial_state(const RunConfig& cfg, const Instance& inst,
                                  const MethodSetup& setup, std::uint64_t seed) {
  const Problem& problem = *inst.problem;
  IterateState state;
  state.x = initial_point(cfg, problem.dim(), seed);
  if (cfg.method == Method::kVrGdci) {
    state.shifts.local.assign(problem.workers(), Vector::Zero(problem.dim()));
    state.shifts.aggregate = Vector::Zero(problem.dim());
  } else {
    state.shifts = initial_shifts(setup.strategy, problem, state.x, &inst.reference, seed);
  }
  if (cfg.method == Method::kDcgdShift && setup.strategy.kind == ShiftKind::kRandDiana) {
    state.bits = problem.workers() * dense_bits(problem.dim());
  }
  return state;
}

inline void advance(IterateState& state, const RunConfig& cfg, const Instance& inst,
                    const MethodSetup& setup, std::uint64_t seed) {
  const Problem& problem = *inst.problem;
  switch (cfg.method) {
    case Method::kDcgdShift:
      dcgd_shift_step(state, problem, setup.q, setup.strategy, setup.steps, seed);
      break;
    case Method::kGdci:
      gdci_step(state, problem, setup.q, setup.steps.eta, setup.steps.gamma, seed);
      break;
    case Method::kVrGdci:
      vr_gdci_step(state, problem, setup.q, setup.steps.alpha, setup.steps.eta, setup.steps.gamma,
                   seed);
      break;
  }
}

/// Runs until rel_error <= eps (converged), a budget is spent (budget), or
/// rel_error exceeds 1e12 or stops being finite (diverged).
inline RunRecord run(const RunConfig& cfg, const Instance& inst, const MethodSetup& setup,
                     std::uint64_t seed) {
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (cfg.max_iters < 1) throw std::invalid_argument("max_iters must be positive");
  if (cfg.max_bits < 0) throw std::invalid_argument("max_bits must be non-negative");
  const ReferenceSolution& ref = inst.reference;
  RunRecord record;
  record.name = cfg.name;
  record.seed = seed;
  record.steps = setup.steps;
  IterateState state = initial_state(cfg, inst, setup, seed);
  record.initial_distance = (state.x - ref.x_star).squaredNorm();
  if (record.initial_distance == 0.0) {
    throw std::invalid_argument("initial point coincides with the solution");
  }
  record.trajectory.reserve(static_cast<std::size_t>(std::min<std::int64_t>(cfg.max_iters + 1, 1 << 20)));

  auto observe = [&] {
    TrajectoryPoint p;
    p.k = state.k;
    p.rel_error = (state.x - ref.x_star).squaredNorm() / record.initial_distance;
    p.bits = state.bits;
    if (setup.lyapunov_theorem != 0) {
      p.lyapunov = lyapunov(setup.lyapunov_theorem, state, ref, setup.steps, setup.omega);
    }
    record.trajectory.push_back(p);
    return p;
  };

  TrajectoryPoint p = observe();
  while (true) {
    if (!std::isfinite(p.rel_error) || p.rel_error > kDivergenceThreshold) {
      record.status = RunStatus::kDiverged;
      record.diagnostic = "relative error " + std::to_string(p.rel_error) + " at k = " +
                          std::to_string(p.k) + " exceeds the divergence threshold";
      break;
    }
    if (p.rel_error <= cfg.eps) {
      record.status = RunStatus::kConverged;
      break;
    }
    if (state.k >= cfg.max_iters) {
      record.status = RunStatus::kBudget;
      record.diagnostic = "iteration budget exhausted";
      break;
    }
    if (cfg.max_bits > 0 && state.bits >= cfg.max_bits) {
      record.status = RunStatus::kBudget;
      record.diagnostic = "bit budget exhausted";
      break;
    }
    advance(state, cfg, inst, setup, seed);
    p = observe();
  }
  record.final_x = state.x;
  return record;
}

inline RunRecord run(const RunConfig& cfg, const Instance& inst) {
  return run(cfg, inst, resolve_method(cfg, inst), cfg.seed);
}

inline RunRecord run(const RunConfig& cfg) { return run(cfg, build_instance(cfg.problem)); }

/// Seed of replicate s: the master seed itself for s = 0, a derived one after.
inline std::uint64_t replicate_seed(std::uint64_t master, int s) {
  return s == 0 ? master : derive_seed(master, static_cast<std::uint64_t>(s));
}

struct MonteCarloRecord {
  std::vector<RunRecord> runs;
  // Per k over all runs; a run that stopped early holds its last value.
  std::vector<double> mean_rel_error;
  std::vector<double> min_rel_error;
  std::vector<double> max_rel_error;
  std::vector<double> mean_bits;
};

/// Mean and envelope of already finished runs.
inline MonteCarloRecord aggregate_runs(std::vector<RunRecord> runs) {
  if (runs.empty()) throw std::invalid_argument("need at least one run");
  MonteCarloRecord mc;
  mc.runs = std::move(runs);
  std::size_t longest = 0;
  for (const auto& r : mc.runs) longest = std::max(longest, r.trajectory.size());
  const double n = static_cast<double>(mc.runs.size());
  mc.mean_rel_error.assign(longest, 0.0);
  mc.min_rel_error.assign(longest, INFINITY);
  mc.max_rel_error.assign(longest, -INFINITY);
  mc.mean_bits.assign(longest, 0.0);
  for (const auto& r : mc.runs) {
    for (std::size_t t = 0; t < longest; ++t) {
      const auto& p = r.trajectory[std::min(t, r.trajectory.size() - 1)];
      mc.mean_rel_error[t] += p.rel_error / n;
      mc.mean_bits[t] += static_cast<double>(p.bits) / n;
      mc.min_rel_error[t] = std::min(mc.min_rel_error[t], p.rel_error);
      mc.max_rel_error[t] = std::max(mc.max_rel_error[t], p.rel_error);
    }
  }
  return mc;
}

inline MonteCarloRecord run_monte_carlo(const RunConfig& cfg, const Instance& inst, int n_seeds) {
  if (n_seeds < 1) throw std::invalid_argument("need at least one seed");
  const MethodSetup setup = resolve_method(cfg, inst);
  std::vector<RunRecord> runs;
  for (int s = 0; s < n_seeds; ++s) runs.push_back(run(cfg, inst, setup, replicate_seed(cfg.seed, s)));
  return aggregate_runs(std::move(runs));
}

inline MonteCarloRecord run_monte_carlo(const RunConfig& cfg, int n_seeds) {
  return run_monte_carlo(cfg, build_instance(cfg.problem), n_seeds);
}

}  // namespace shiftcomp
