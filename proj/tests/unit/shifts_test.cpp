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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "shiftcomp/algorithms.hpp"
#include "shiftcomp/shifts.hpp"
#include "test_util.hpp"

namespace shiftcomp {
namespace {

using testing::random_vector;
using testing::ridge_instance;

std::vector<CompressorSpec> rand_k_all(int n, int d, int k) {
  return std::vector<CompressorSpec>(static_cast<std::size_t>(n), CompressorSpec::rand_k(d, k));
}

ShiftStrategy strategy(ShiftKind kind, double alpha = 1.0, double p = 1.0, int n = 10) {
  ShiftStrategy s;
  s.kind = kind;
  s.alpha = alpha;
  if (kind == ShiftKind::kRandDiana) s.probs.assign(static_cast<std::size_t>(n), p);
  return s;
}

// One estimator round plus shift update at frozen x; returns extra bits.
std::int64_t one_round(const Problem& problem, const std::vector<CompressorSpec>& q, const ShiftStrategy& s,
                       ShiftState& state, const Vector& x, std::int64_t k, std::uint64_t seed) {
  const EstimatorRound round = estimate_gradient(problem, q, s, state, x, k, seed);
  return update_shifts(state, s, round.workers, x, k, seed);
}

double bregman(const Problem& p, int i, const Vector& x, const ReferenceSolution& ref) {
  return p.local_value(i, x) - p.local_value(i, ref.x_star) - ref.local_gradients[i].dot(x - ref.x_star);
}

TEST(UpdateShifts, FixedNeverMoves) {
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  const ShiftStrategy s = strategy(ShiftKind::kFixed);
  Stream rng = seed_stream(1, -1, 0, Purpose::kMonteCarlo);
  ShiftState state = initial_shifts(s, p, random_vector(80, rng), &inst.reference, 1);
  const ShiftState before = state;
  for (int k = 0; k < 100; ++k) EXPECT_EQ(one_round(p, rand_k_all(10, 80, 8), s, state, random_vector(80, rng), k, 1), 0);
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(state.local[i].isZero());
  EXPECT_EQ(state.aggregate, before.aggregate);
}

TEST(UpdateShifts, StarWithZeroInnerStaysOptimal) {
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  const ShiftStrategy s = strategy(ShiftKind::kStar);
  Stream rng = seed_stream(2, -1, 0, Purpose::kMonteCarlo);
  ShiftState state = initial_shifts(s, p, random_vector(80, rng), &inst.reference, 2);
  for (int k = 0; k < 20; ++k) {
    one_round(p, rand_k_all(10, 80, 8), s, state, random_vector(80, rng), k, 2);
    for (int i = 0; i < 10; ++i) ASSERT_EQ(state.local[i], inst.reference.local_gradients[i]);
  }
  EXPECT_THROW(initial_shifts(s, p, Vector::Zero(80), nullptr, 2), std::invalid_argument);
}

TEST(UpdateShifts, DianaIdentityTracksGradient) {
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  const ShiftStrategy s = strategy(ShiftKind::kDiana, 1.0);
  const std::vector<CompressorSpec> q(10, CompressorSpec::identity(80));
  Stream rng = seed_stream(3, -1, 0, Purpose::kMonteCarlo);
  ShiftState state = initial_shifts(s, p, Vector::Zero(80), &inst.reference, 3);
  for (int k = 0; k < 5; ++k) {
    const Vector x = random_vector(80, rng);
    one_round(p, q, s, state, x, k, 3);
    for (int i = 0; i < 10; ++i) {
      const Vector g = p.local_gradient(i, x);
      ASSERT_LE((state.local[i] - g).norm(), 1e-12 * g.norm());
    }
  }
}

TEST(UpdateShifts, RandDianaAlwaysRefreshingMatchesDianaStepOne) {
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  const std::vector<CompressorSpec> q(10, CompressorSpec::identity(80));
  const ShiftStrategy diana = strategy(ShiftKind::kDiana, 1.0);
  const ShiftStrategy rand = strategy(ShiftKind::kRandDiana, 1.0, 1.0);
  StepSizes steps;
  steps.gamma = 1.0 / inst.info.L;
  Stream rng = seed_stream(4, -1, 0, Purpose::kMonteCarlo);
  const Vector x0 = random_vector(80, rng, 10.0);
  IterateState a{x0, 0, 0, initial_shifts(diana, p, x0, &inst.reference, 4)};
  IterateState b{x0, 0, 0, initial_shifts(rand, p, x0, &inst.reference, 4)};
  // Start diana where rand_diana starts: h_i = grad f_i(x0).
  for (int i = 0; i < 10; ++i) a.shifts.local[i] = p.local_gradient(i, x0);
  a.shifts.aggregate = a.shifts.mean_local();
  for (int k = 0; k < 30; ++k) {
    dcgd_shift_step(a, p, q, diana, steps, 4);
    dcgd_shift_step(b, p, q, rand, steps, 4);
    ASSERT_LE((a.x - b.x).norm(), 1e-12 * std::max(1.0, a.x.norm())) << k;
  }
}

TEST(UpdateShifts, MasterAggregateStaysTheMean) {
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  std::vector<ShiftStrategy> all{strategy(ShiftKind::kDiana, 0.2), strategy(ShiftKind::kRandDiana, 1.0, 0.3),
                                 strategy(ShiftKind::kStar), strategy(ShiftKind::kDiana, 0.2)};
  all[2].inner.assign(10, CompressorSpec::top_k(80, 4));
  all[3].inner.assign(10, CompressorSpec::top_k(80, 4));
  Stream rng = seed_stream(5, -1, 0, Purpose::kMonteCarlo);
  for (const auto& s : all) {
    ShiftState state = initial_shifts(s, p, random_vector(80, rng), &inst.reference, 5);
    for (int k = 0; k < 200; ++k) {
      one_round(p, rand_k_all(10, 80, 8), s, state, random_vector(80, rng, 5.0), k, 5);
      const Vector mean = state.mean_local();
      ASSERT_LE((state.aggregate - mean).norm(), 1e-12 * std::max(1.0, mean.norm()));
    }
  }
}

TEST(UpdateShifts, BitAccounting) {
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  Stream rng = seed_stream(6, -1, 0, Purpose::kMonteCarlo);
  const Vector x = random_vector(80, rng);

  ShiftStrategy plain = strategy(ShiftKind::kDiana, 0.2);
  ShiftState a = initial_shifts(plain, p, x, &inst.reference, 6);
  EXPECT_EQ(one_round(p, rand_k_all(10, 80, 8), plain, a, x, 0, 6), 0);

  ShiftStrategy inner = plain;
  inner.inner.assign(10, CompressorSpec::top_k(80, 4));
  ShiftState b = initial_shifts(inner, p, x, &inst.reference, 6);
  EXPECT_EQ(one_round(p, rand_k_all(10, 80, 8), inner, b, x, 0, 6), 10 * 4 * 71);

  const ShiftStrategy rand = strategy(ShiftKind::kRandDiana, 1.0, 0.3);
  ShiftState c = initial_shifts(rand, p, x, &inst.reference, 6);
  std::int64_t refreshes = 0;
  for (int i = 0; i < 10; ++i) {
    Stream coin = seed_stream(6, i, 0, Purpose::kRefresh);
    refreshes += coin.bernoulli(0.3);
  }
  EXPECT_EQ(one_round(p, rand_k_all(10, 80, 8), rand, c, x, 0, 6), refreshes * 64 * 80);
}

TEST(ShiftResidual, Examples) {
  const Instance& inst = ridge_instance();
  ShiftState optimal;
  optimal.local = inst.reference.local_gradients;
  EXPECT_EQ(shift_residual(optimal, inst.reference.local_gradients), 0.0);

  ShiftState one;
  one.local = {Vector::Unit(2, 0)};
  EXPECT_DOUBLE_EQ(shift_residual(one, {Vector::Zero(2)}, {3.0}), 3.0);
}

TEST(ShiftResidual, MatchesNaiveLoop) {
  Stream rng = seed_stream(7, -1, 0, Purpose::kMonteCarlo);
  ShiftState s;
  std::vector<Vector> target;
  std::vector<double> w;
  for (int i = 0; i < 6; ++i) {
    s.local.push_back(random_vector(5, rng));
    target.push_back(random_vector(5, rng));
    w.push_back(1.0 + i);
  }
  double weighted = 0.0, plain = 0.0;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 5; ++j) {
      const double e = s.local[i][j] - target[i][j];
      weighted += w[i] * e * e;
      plain += e * e;
    }
  }
  EXPECT_NEAR(shift_residual(s, target, w), weighted / 6, 1e-12 * weighted);
  EXPECT_NEAR(shift_residual(s, target), plain / 6, 1e-12 * plain);
  EXPECT_THROW(shift_residual(s, {target[0]}), std::invalid_argument);
}

TEST(ShiftLemma, DianaContraction) {
  // E[sigma+] <= (1 - alpha) sigma + 2 alpha max_i(L_i omega_i) D_f(x, x*).
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  const auto q = rand_k_all(10, 80, 20);
  const std::vector<double> omega(10, 3.0);
  const double alpha = 1.0 / (1.0 + 3.0);
  const ShiftStrategy s = strategy(ShiftKind::kDiana, alpha);
  Stream rng = seed_stream(8, -1, 0, Purpose::kMonteCarlo);
  const Vector x = inst.reference.x_star + random_vector(80, rng);
  ShiftState start = initial_shifts(s, p, x, &inst.reference, 8);
  for (int i = 0; i < 10; ++i) start.local[i] = inst.reference.local_gradients[i] + 20.0 * random_vector(80, rng);
  start.aggregate = start.mean_local();
  double df = 0.0, max_lw = 0.0;
  for (int i = 0; i < 10; ++i) {
    df += bregman(p, i, x, inst.reference) / 10;
    max_lw = std::max(max_lw, inst.info.local[i] * 3.0);
  }
  const double sigma = shift_residual(start, inst.reference.local_gradients, omega);
  ScalarMoments next;
  for (int t = 0; t < 10000; ++t) {
    ShiftState copy = start;
    one_round(p, q, s, copy, x, 0, derive_seed(8, t));
    next.add(shift_residual(copy, inst.reference.local_gradients, omega));
  }
  EXPECT_LE(next.mean(), ((1 - alpha) * sigma + 2 * alpha * max_lw * df) * 1.05);
}

TEST(ShiftLemma, RandDianaRecursion) {
  // E[sigma+] <= (1 - p) sigma + 2 p L_max D_f(x, x*), unweighted sigma.
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  const double prob = 0.25;
  const ShiftStrategy s = strategy(ShiftKind::kRandDiana, 1.0, prob);
  Stream rng = seed_stream(9, -1, 0, Purpose::kMonteCarlo);
  const Vector x = inst.reference.x_star + random_vector(80, rng);
  ShiftState start = initial_shifts(s, p, x, &inst.reference, 9);
  for (int i = 0; i < 10; ++i) {
    start.reference[i] = inst.reference.x_star + 3.0 * random_vector(80, rng);
    start.local[i] = p.local_gradient(i, start.reference[i]);
  }
  start.aggregate = start.mean_local();
  double df = 0.0;
  for (int i = 0; i < 10; ++i) df += bregman(p, i, x, inst.reference) / 10;
  const double sigma = shift_residual(start, inst.reference.local_gradients);
  ScalarMoments next;
  for (int t = 0; t < 10000; ++t) {
    ShiftState copy = start;
    one_round(p, rand_k_all(10, 80, 20), s, copy, x, 0, derive_seed(9, t));
    next.add(shift_residual(copy, inst.reference.local_gradients));
  }
  EXPECT_LE(next.mean(), ((1 - prob) * sigma + 2 * prob * inst.info.L_max * df) * 1.05);
}

TEST(ShiftLemma, StarEstimatorVariance) {
  const Instance& inst = ridge_instance();
  const Problem& p = *inst.problem;
  const double omega = 3.0;
  const ShiftStrategy s = strategy(ShiftKind::kStar);
  Stream rng = seed_stream(10, -1, 0, Purpose::kMonteCarlo);
  const Vector x = inst.reference.x_star + random_vector(80, rng);
  const ShiftState state = initial_shifts(s, p, x, &inst.reference, 10);
  const Vector grad = p.gradient(x);
  double exact = 0.0, bound = 0.0;
  for (int i = 0; i < 10; ++i) {
    exact += omega * (p.local_gradient(i, x) - inst.reference.local_gradients[i]).squaredNorm() / 100;
    bound += (omega / 10) * (2.0 / 10) * 2 * inst.info.local[i] * bregman(p, i, x, inst.reference);
  }
  ScalarMoments var;
  for (int t = 0; t < 20000; ++t) {
    var.add((estimate_gradient(p, rand_k_all(10, 80, 20), s, state, x, 0, derive_seed(10, t)).estimate - grad)
                .squaredNorm());
  }
  EXPECT_NEAR(var.mean(), exact, 0.05 * exact);
  EXPECT_LE(var.mean(), bound * 1.05);
}

}  // namespace
}  // namespace shiftcomp
