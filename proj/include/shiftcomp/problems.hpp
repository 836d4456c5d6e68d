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

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftcomp/datagen.hpp"
#include "shiftcomp/stats.hpp"

namespace shiftcomp {

enum class LossKind { kRidge, kLogistic };

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, stopping once the Rayleigh quotient is stable to `tol`.
inline double power_iteration(const Matrix& sym, double tol = 1e-15, int max_iter = 200000) {
  const Eigen::Index d = sym.rows();
  if (d == 0) return 0.0;
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = 1.0 + 1e-3 * static_cast<double>(j + 1);
  v.normalize();
  double estimate = v.dot(sym * v);
  int stable = 0;
  Vector w(d);
  for (int it = 0; it < max_iter; ++it) {
    w.noalias() = sym * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = v.dot(sym * v);
    if (std::abs(next - estimate) <= tol * std::abs(next)) {
      if (++stable >= 3) return next;
    } else {
      stable = 0;
    }
    estimate = next;
  }
  return estimate;
}

inline double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

/// Finite-sum objective f = (1/n) sum_i f_i, with
///   ridge:    f_i(x) = (n/2) ||A_i x - y_i||^2 + (lambda/2) ||x||^2
///   logistic: f_i(x) = (n/m) sum_l log(1 + exp(-b_l a_l^T x)) + (lambda/2) ||x||^2
/// so that f is the un-sharded objective over all m rows. Immutable.
class Problem {
 public:
  Problem(LossKind loss, const Dataset& data, const std::vector<Shard>& shards, double lambda)
      : loss_(loss), dim_(static_cast<int>(data.cols())), rows_(data.rows()), lambda_(lambda) {
    if (shards.empty()) throw std::invalid_argument("problem needs at least one shard");
    if (lambda < 0.0) throw std::invalid_argument("regularizer must be non-negative");
    if (loss == LossKind::kLogistic) {
      for (Eigen::Index r = 0; r < data.rows(); ++r) {
        if (data.labels[r] != 1.0 && data.labels[r] != -1.0) {
          throw std::invalid_argument("logistic loss needs labels in {-1, +1}");
        }
      }
    }
    const double n = static_cast<double>(shards.size());
    weight_ = loss == LossKind::kRidge ? n : n / static_cast<double>(rows_);
    for (const auto& s : shards) {
      Matrix a(static_cast<Eigen::Index>(s.rows.size()), dim_);
      Vector y(static_cast<Eigen::Index>(s.rows.size()));
      for (std::size_t t = 0; t < s.rows.size(); ++t) {
        a.row(static_cast<Eigen::Index>(t)) = data.features.row(s.rows[t]);
        y[static_cast<Eigen::Index>(t)] = data.labels[s.rows[t]];
      }
      features_.push_back(std::move(a));
      labels_.push_back(std::move(y));
    }
  }

  LossKind loss() const { return loss_; }
  int dim() const { return dim_; }
  int workers() const { return static_cast<int>(features_.size()); }
  Eigen::Index rows() const { return rows_; }
  double lambda() const { return lambda_; }
  const Matrix& local_features(int i) const { return features_.at(check(i)); }
  const Vector& local_labels(int i) const { return labels_.at(check(i)); }

  Problem with_lambda(double lambda) const {
    if (lambda < 0.0) throw std::invalid_argument("regularizer must be non-negative");
    Problem copy = *this;
    copy.lambda_ = lambda;
    return copy;
  }

  void local_gradient(int i, const Vector& x, Vector& out) const {
    check(i);
    check_dim(x);
    const Matrix& a = features_[i];
    if (loss_ == LossKind::kRidge) {
      out.noalias() = a.transpose() * (a * x - labels_[i]);
      out *= weight_;
    } else {
      Vector coef = a * x;
      for (Eigen::Index l = 0; l < coef.size(); ++l) {
        const double b = labels_[i][l];
        coef[l] = -b * sigmoid(-b * coef[l]);
      }
      out.noalias() = a.transpose() * coef;
      out *= weight_;
    }
    out += lambda_ * x;
  }

  Vector local_gradient(int i, const Vector& x) const {
    Vector out(dim_);
    local_gradient(i, x, out);
    return out;
  }

  double local_value(int i, const Vector& x) const {
    check(i);
    check_dim(x);
    const Matrix& a = features_[i];
    double data_term = 0.0;
    if (loss_ == LossKind::kRidge) {
      data_term = 0.5 * weight_ * (a * x - labels_[i]).squaredNorm();
    } else {
      const Vector margin = a * x;
      for (Eigen::Index l = 0; l < margin.size(); ++l) {
        data_term += softplus(-labels_[i][l] * margin[l]);
      }
      data_term *= weight_;
    }
    return data_term + 0.5 * lambda_ * x.squaredNorm();
  }

  double value(const Vector& x) const {
    double total = 0.0;
    for (int i = 0; i < workers(); ++i) total += local_value(i, x);
    return total / workers();
  }

  Vector gradient(const Vector& x) const {
    Vector total = Vector::Zero(dim_);
    Vector g(dim_);
    for (int i = 0; i < workers(); ++i) {
      local_gradient(i, x, g);
      total += g;
    }
    return total / workers();
  }

  /// Exact Hessian of f_i at x (constant for ridge).
  Matrix local_hessian(int i, const Vector& x) const {
    check(i);
    const Matrix& a = features_[i];
    Matrix h(dim_, dim_);
    if (loss_ == LossKind::kRidge) {
      h.noalias() = weight_ * a.transpose() * a;
    } else {
      check_dim(x);
      const Vector margin = a * x;
      Vector curvature(margin.size());
      for (Eigen::Index l = 0; l < margin.size(); ++l) {
        const double s = sigmoid(margin[l]);
        curvature[l] = s * (1.0 - s);
      }
      h.noalias() = weight_ * a.transpose() * curvature.asDiagonal() * a;
    }
    h.diagonal().array() += lambda_;
    return h;
  }

  Matrix hessian(const Vector& x) const {
    Matrix total = Matrix::Zero(dim_, dim_);
    for (int i = 0; i < workers(); ++i) total += local_hessian(i, x);
    return total / workers();
  }

  /// Matrix whose top eigenvalue is the smoothness constant of f_i:
  /// the Hessian for ridge, (n/(4m)) A_i^T A_i + lambda I for logistic.
  Matrix local_curvature_bound(int i) const {
    check(i);
    const Matrix& a = features_[i];
    const double scale = loss_ == LossKind::kRidge ? weight_ : weight_ / 4.0;
    Matrix h(dim_, dim_);
    h.noalias() = scale * a.transpose() * a;
    h.diagonal().array() += lambda_;
    return h;
  }

  Matrix curvature_bound() const {
    Matrix total = Matrix::Zero(dim_, dim_);
    for (int i = 0; i < workers(); ++i) total += local_curvature_bound(i);
    return total / workers();
  }

  static double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  }

  static double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
  }

 private:
  int check(int i) const {
    if (i < 0 || i >= workers()) {
      throw std::out_of_range("worker index " + std::to_string(i) + " out of range [0, " +
                              std::to_string(workers()) + ")");
    }
    return i;
  }
  void check_dim(const Vector& x) const {
    if (x.size() != dim_) throw std::invalid_argument("point has wrong dimension");
  }

  LossKind loss_;
  int dim_;
  Eigen::Index rows_;
  double lambda_;
  double weight_ = 1.0;
  std::vector<Matrix> features_;
  std::vector<Vector> labels_;
};

struct SmoothnessInfo {
  double L = 0.0;
  std::vector<double> local;  // L_i
  double L_max = 0.0;
  double mu = 0.0;

  double kappa() const { return mu > 0.0 ? L / mu : INFINITY; }
};

/// Ridge: L_i = lambda_max(H_i), L = lambda_max(H), mu = lambda_min(H).
/// Logistic: L_i = lambda_max((n/(4m)) A_i^T A_i) + lambda, mu = lambda.
inline SmoothnessInfo smoothness_constants(const Problem& problem) {
  SmoothnessInfo info;
  for (int i = 0; i < problem.workers(); ++i) {
    info.local.push_back(power_iteration(problem.local_curvature_bound(i)));
  }
  info.L_max = *std::max_element(info.local.begin(), info.local.end());
  const Matrix global = problem.curvature_bound();
  info.L = power_iteration(global);
  info.mu = problem.loss() == LossKind::kRidge ? std::max(0.0, min_eigenvalue(global))
                                               : problem.lambda();
  return info;
}

struct ReferenceSolution {
  Vector x_star;
  std::vector<Vector> local_gradients;  // grad f_i(x*)
  std::vector<double> grad_norms;       // ||grad f_i(x*)||
  double f_star = 0.0;
  double grad_norm_sq = 0.0;            // ||grad f(x*)||^2
  bool converged = true;
};

class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline ReferenceSolution finish_reference(const Problem& problem, Vector x, double tol) {
  ReferenceSolution ref;
  ref.x_star = std::move(x);
  for (int i = 0; i < problem.workers(); ++i) {
    ref.local_gradients.push_back(problem.local_gradient(i, ref.x_star));
    ref.grad_norms.push_back(ref.local_gradients.back().norm());
  }
  ref.f_star = problem.value(ref.x_star);
  ref.grad_norm_sq = problem.gradient(ref.x_star).squaredNorm();
  ref.converged = ref.grad_norm_sq <= tol;
  return ref;
}

inline Vector ridge_solve(const Problem& problem) {
  const int d = problem.dim();
  Matrix h = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (int i = 0; i < problem.workers(); ++i) {
    const Matrix& a = problem.local_features(i);
    h.noalias() += a.transpose() * a;
    rhs.noalias() += a.transpose() * problem.local_labels(i);
  }
  h.diagonal().array() += problem.lambda();
  const double top = power_iteration(h, 1e-10);
  if (top == 0.0 || min_eigenvalue(h) <= 1e-13 * top) {
    throw SingularSystem("normal equations are singular (rank-deficient design, lambda = 0)");
  }
  Eigen::LDLT<Matrix> ldlt(h);
  if (ldlt.info() != Eigen::Success) throw SingularSystem("normal equations factorization failed");
  Vector x = ldlt.solve(rhs);
  for (int polish = 0; polish < 3; ++polish) {
    const Vector residual = rhs - h * x;
    x += ldlt.solve(residual);
  }
  return x;
}

}  // namespace detail

/// Ridge: normal equations plus iterative refinement. Logistic: Nesterov's
/// accelerated gradient until ||grad f||^2 <= tol, then Newton polishing.
inline ReferenceSolution solve_reference(const Problem& problem, double tol = 1e-32,
                                         int max_iter = 1000000) {
  if (problem.loss() == LossKind::kRidge) {
    return detail::finish_reference(problem, detail::ridge_solve(problem), tol);
  }
  if (!(problem.lambda() > 0.0)) {
    throw SingularSystem("logistic reference needs lambda > 0");
  }
  const SmoothnessInfo info = smoothness_constants(problem);
  const double momentum =
      (std::sqrt(info.L) - std::sqrt(info.mu)) / (std::sqrt(info.L) + std::sqrt(info.mu));
  Vector x = Vector::Zero(problem.dim());
  Vector previous = x;
  double best = problem.gradient(x).squaredNorm();
  for (int it = 0; it < max_iter && best > tol; ++it) {
    const Vector y = x + momentum * (x - previous);
    previous = x;
    x = y - problem.gradient(y) / info.L;
    const double g2 = problem.gradient(x).squaredNorm();
    best = g2;
    // AGD stalls at the floating-point floor; Newton takes it from there.
    if (g2 <= std::max(tol, 1e-20)) break;
  }
  for (int newton = 0; newton < 50; ++newton) {
    const Vector g = problem.gradient(x);
    const double g2 = g.squaredNorm();
    if (g2 <= tol) break;
    const Vector step = problem.hessian(x).ldlt().solve(g);
    const Vector candidate = x - step;
    if (problem.gradient(candidate).squaredNorm() >= g2) break;
    x = candidate;
  }
  return detail::finish_reference(problem, std::move(x), tol);
}

/// lambda with L(lambda) / mu(lambda) = target, by bisection on the
/// data-only constants L0, mu0: kappa(lambda) = (L0 + lambda) / (mu0 + lambda).
inline double tune_regularizer_for_condition(const Problem& problem, double target_kappa) {
  if (!(target_kappa > 1.0)) throw std::invalid_argument("target condition number must exceed 1");
  const Problem bare = problem.with_lambda(0.0);
  const Matrix curvature = bare.curvature_bound();
  const double L0 = power_iteration(curvature);
  const double mu0 =
      problem.loss() == LossKind::kRidge ? std::max(0.0, min_eigenvalue(curvature)) : 0.0;
  auto kappa = [&](double lambda) {
    return (mu0 + lambda) > 0.0 ? (L0 + lambda) / (mu0 + lambda) : INFINITY;
  };
  const double at_zero = kappa(0.0);
  if (std::abs(at_zero - target_kappa) <= 1e-9 * target_kappa) return 0.0;
  if (target_kappa > at_zero) {
    throw std::invalid_argument("condition number " + std::to_string(target_kappa) +
                                " unattainable: data alone gives " + std::to_string(at_zero));
  }
  double lo = 0.0;
  double hi = std::max(1.0, L0);
  while (kappa(hi) > target_kappa) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kappa(mid) > target_kappa ? lo : hi) = mid;
    if (hi - lo <= 1e-14 * hi) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace shiftcomp
