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

#include <gtest/gtest.h>

#include "shiftcomp/problems.hpp"
#include "test_util.hpp"

namespace shiftcomp {
namespace {

using testing::explicit_problem;
using testing::random_vector;

Problem random_problem(LossKind loss, int m, int d, int n, double lambda, std::uint64_t seed) {
  Dataset data = loss == LossKind::kRidge ? make_regression(m, d, std::min(d, 3), 1.0, seed).dataset
                                          : make_classification(m, d, seed);
  return Problem(loss, data, shard(data, n, seed), lambda);
}

Vector finite_difference_gradient(const Problem& p, const Vector& x) {
  const double h = 1e-6;
  Vector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector a = x, b = x;
    a[j] += h;
    b[j] -= h;
    g[j] = (p.value(a) - p.value(b)) / (2 * h);
  }
  return g;
}

TEST(Gradient, IdentityDesignSingleWorker) {
  const Problem p = explicit_problem(LossKind::kRidge, Matrix::Identity(2, 2), Vector::Zero(2), 1, 0.0);
  Vector x(2);
  x << 1, 2;
  EXPECT_EQ(p.local_gradient(0, x), x);
  EXPECT_EQ(p.gradient(x), x);
  EXPECT_DOUBLE_EQ(p.value(x), 2.5);
}

TEST(Gradient, LogisticWithZeroFeaturesIsRegularizer) {
  Vector y(4);
  y << 1, -1, 1, -1;
  const Problem p = explicit_problem(LossKind::kLogistic, Matrix::Zero(4, 3), y, 2, 0.3);
  Vector x(3);
  x << 1, -2, 0.5;
  for (int i = 0; i < 2; ++i) EXPECT_LE((p.local_gradient(i, x) - 0.3 * x).norm(), 1e-15);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (auto loss : {LossKind::kRidge, LossKind::kLogistic}) {
    const Problem p = random_problem(loss, 40, 6, 4, 0.1, 3);
    Stream rng = seed_stream(1, -1, 0, Purpose::kMonteCarlo);
    for (int t = 0; t < 100; ++t) {
      const Vector x = random_vector(6, rng, loss == LossKind::kRidge ? 1.0 : 0.5);
      const Vector g = p.gradient(x);
      const Vector fd = finite_difference_gradient(p, x);
      ASSERT_LE((g - fd).norm(), 1e-5 * std::max(1.0, g.norm())) << static_cast<int>(loss);
    }
  }
}

TEST(Gradient, LocalGradientsAverageToGlobal) {
  for (auto loss : {LossKind::kRidge, LossKind::kLogistic}) {
    const Problem p = random_problem(loss, 50, 8, 5, 0.05, 4);
    Stream rng = seed_stream(2, -1, 0, Purpose::kMonteCarlo);
    for (int t = 0; t < 20; ++t) {
      const Vector x = random_vector(8, rng);
      Vector mean = Vector::Zero(8);
      double value = 0.0;
      for (int i = 0; i < 5; ++i) {
        mean += p.local_gradient(i, x) / 5.0;
        value += p.local_value(i, x) / 5.0;
      }
      const Vector g = p.gradient(x);
      EXPECT_LE((mean - g).norm(), 1e-12 * std::max(1.0, g.norm()));
      EXPECT_NEAR(value, p.value(x), 1e-12 * std::max(1.0, std::abs(value)));
    }
  }
}

TEST(Gradient, ScalingReproducesUnshardedObjective) {
  // f = 1/2 ||Ax - y||^2 + lambda/2 ||x||^2 for any sharding.
  const RegressionData r = make_regression(30, 4, 2, 1.0, 6);
  const Problem p(LossKind::kRidge, r.dataset, shard(r.dataset, 3, 1), 0.2);
  Stream rng = seed_stream(3, -1, 0, Purpose::kMonteCarlo);
  const Vector x = random_vector(4, rng);
  const double direct = 0.5 * (r.dataset.features * x - r.dataset.labels).squaredNorm() + 0.1 * x.squaredNorm();
  EXPECT_NEAR(p.value(x), direct, 1e-10 * direct);
}

TEST(Gradient, BadWorkerIndexThrows) {
  const Problem p = random_problem(LossKind::kRidge, 20, 3, 2, 0.0, 1);
  EXPECT_THROW(p.local_gradient(2, Vector::Zero(3)), std::out_of_range);
  EXPECT_THROW(p.local_gradient(-1, Vector::Zero(3)), std::out_of_range);
  EXPECT_THROW(p.gradient(Vector::Zero(4)), std::invalid_argument);
}

TEST(Convexity, FirstOrderWitnesses) {
  for (auto loss : {LossKind::kRidge, LossKind::kLogistic}) {
    const Problem p = random_problem(loss, 40, 5, 4, 0.1, 7);
    const SmoothnessInfo info = smoothness_constants(p);
    Stream rng = seed_stream(4, -1, 0, Purpose::kMonteCarlo);
    for (int t = 0; t < 200; ++t) {
      const Vector x = random_vector(5, rng);
      const Vector y = random_vector(5, rng);
      EXPECT_GE(p.value(y), p.value(x) + p.gradient(x).dot(y - x) - 1e-10);
      EXPECT_GE((p.gradient(x) - p.gradient(y)).dot(x - y), info.mu * (x - y).squaredNorm() - 1e-10);
      EXPECT_LE((p.gradient(x) - p.gradient(y)).norm(), info.L * (x - y).norm() * (1 + 1e-10));
    }
  }
}

TEST(Smoothness, IdentityDesign) {
  const Problem p = explicit_problem(LossKind::kRidge, Matrix::Identity(3, 3), Vector::Zero(3), 1, 0.0);
  const SmoothnessInfo info = smoothness_constants(p);
  EXPECT_NEAR(info.L, 1.0, 1e-12);
  EXPECT_NEAR(info.local[0], 1.0, 1e-12);
  EXPECT_NEAR(info.mu, 1.0, 1e-12);
  EXPECT_NEAR(info.kappa(), 1.0, 1e-12);
}

TEST(Smoothness, RegularizerBoundsMu) {
  const Problem p = random_problem(LossKind::kRidge, 10, 20, 2, 0.7, 8);  // rank deficient data
  const SmoothnessInfo info = smoothness_constants(p);
  EXPECT_GE(info.mu, 0.7 * (1 - 1e-12));
  EXPECT_LE(info.mu, info.L);
  EXPECT_LE(info.L, info.L_max * (1 + 1e-12));
}

TEST(Smoothness, PowerIterationAgreesWithEigensolver) {
  const Problem p = random_problem(LossKind::kRidge, 100, 80, 10, 0.01, 9);
  const SmoothnessInfo info = smoothness_constants(p);
  Eigen::SelfAdjointEigenSolver<Matrix> global(p.hessian(Vector::Zero(80)));
  EXPECT_NEAR(info.L, global.eigenvalues().maxCoeff(), 1e-8 * info.L);
  EXPECT_NEAR(info.mu, global.eigenvalues().minCoeff(), 1e-8 * info.L);
  for (int i = 0; i < 10; ++i) {
    Eigen::SelfAdjointEigenSolver<Matrix> local(p.local_hessian(i, Vector::Zero(80)));
    EXPECT_NEAR(info.local[i], local.eigenvalues().maxCoeff(), 1e-8 * info.local[i]);
  }
}

TEST(Smoothness, LogisticUsesCurvatureBound) {
  const Problem p = random_problem(LossKind::kLogistic, 60, 5, 3, 0.2, 10);
  const SmoothnessInfo info = smoothness_constants(p);
  EXPECT_DOUBLE_EQ(info.mu, 0.2);
  for (int i = 0; i < 3; ++i) {
    // (n/(4m)) lambda_max(A_i^T A_i) + lambda
    const Matrix& a = p.local_features(i);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a.transpose() * a);
    EXPECT_NEAR(info.local[i], 3.0 / (4.0 * 60) * eig.eigenvalues().maxCoeff() + 0.2, 1e-9);
  }
}

TEST(Reference, IdentityLeastSquares) {
  Vector y(2);
  y << 3, 4;
  const Problem p = explicit_problem(LossKind::kRidge, Matrix::Identity(2, 2), y, 1, 0.0);
  const ReferenceSolution ref = solve_reference(p);
  EXPECT_NEAR(ref.x_star[0], 3.0, 1e-14);
  EXPECT_NEAR(ref.x_star[1], 4.0, 1e-14);
  EXPECT_NEAR(ref.f_star, 0.0, 1e-20);
}

TEST(Reference, RidgeSatisfiesNormalEquations) {
  const RegressionData r = make_regression(100, 80, 10, 0.0, 0);
  const Problem p(LossKind::kRidge, r.dataset, shard(r.dataset, 10, 0), 0.01);
  const ReferenceSolution ref = solve_reference(p);
  const Matrix& a = r.dataset.features;
  const Vector lhs = (a.transpose() * a + 0.01 * Matrix::Identity(80, 80)) * ref.x_star;
  const Vector rhs = a.transpose() * r.dataset.labels;
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
  EXPECT_LE(ref.grad_norm_sq, 1e-20 * rhs.squaredNorm());
  ASSERT_EQ(ref.local_gradients.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(ref.local_gradients[i], p.local_gradient(i, ref.x_star));
}

TEST(Reference, LogisticMatchesPlainGradientDescent) {
  Matrix a(4, 2);
  a << 1, 1, 2, 0.5, -1, -1, -0.5, -2;
  Vector y(4);
  y << 1, 1, -1, -1;
  const Problem p = explicit_problem(LossKind::kLogistic, a, y, 2, 1.0);
  const ReferenceSolution ref = solve_reference(p, 1e-20);
  EXPECT_LE(ref.grad_norm_sq, 1e-20);
  // Independent oracle: plain GD with step 1/L.
  const double L = smoothness_constants(p).L;
  Vector x = Vector::Zero(2);
  for (int t = 0; t < 20000; ++t) x -= p.gradient(x) / L;
  EXPECT_LE((x - ref.x_star).norm(), 1e-8);
}

TEST(Reference, SingularSystemWithoutRegularizer) {
  const Problem p = random_problem(LossKind::kRidge, 10, 20, 2, 0.0, 11);
  EXPECT_THROW(solve_reference(p), SingularSystem);
}

TEST(TuneRegularizer, AlreadyOnTarget) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 10.0;
  const Problem p = explicit_problem(LossKind::kRidge, a, Vector::Zero(2), 1, 0.0);
  EXPECT_EQ(tune_regularizer_for_condition(p, 100.0), 0.0);
}

TEST(TuneRegularizer, ClosedFormTarget) {
  // (100 + l) / (1 + l) = 2  =>  l = 98.
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 10.0;
  const Problem p = explicit_problem(LossKind::kRidge, a, Vector::Zero(2), 1, 0.0);
  EXPECT_NEAR(tune_regularizer_for_condition(p, 2.0), 98.0, 0.98);
  EXPECT_THROW(tune_regularizer_for_condition(p, 200.0), std::invalid_argument);
  EXPECT_THROW(tune_regularizer_for_condition(p, 1.0), std::invalid_argument);
}

TEST(TuneRegularizer, RecomputedKappaOnRandomInstances) {
  // Fewer rows than columns: the data alone is singular, so any kappa is reachable.
  for (auto loss : {LossKind::kRidge, LossKind::kLogistic}) {
    const Problem p = random_problem(loss, 8, 10, 4, 0.0, 12);
    const double lambda = tune_regularizer_for_condition(p, 100.0);
    const SmoothnessInfo info = smoothness_constants(p.with_lambda(lambda));
    EXPECT_NEAR(info.kappa(), 100.0, 1.0) << static_cast<int>(loss);
  }
}

}  // namespace
}  // namespace shiftcomp
