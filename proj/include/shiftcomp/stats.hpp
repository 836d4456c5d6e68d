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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>

namespace shiftcomp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Streaming per-coordinate mean and variance (Welford).
class VectorMoments {
 public:
  explicit VectorMoments(Eigen::Index dim)
      : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

  void add(const Vector& sample) {
    ++count_;
    const Vector delta = sample - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_.array() += delta.array() * (sample - mean_).array();
  }

  std::int64_t count() const { return count_; }
  const Vector& mean() const { return mean_; }

  /// Unbiased sample variance per coordinate.
  Vector variance() const {
    if (count_ < 2) return Vector::Zero(mean_.size());
    return m2_ / static_cast<double>(count_ - 1);
  }

  /// Standard error of the mean per coordinate.
  Vector standard_error() const {
    return (variance() / static_cast<double>(std::max<std::int64_t>(count_, 1)))
        .array()
        .sqrt();
  }

 private:
  std::int64_t count_ = 0;
  Vector mean_;
  Vector m2_;
};

/// Streaming mean/variance of a scalar.
class ScalarMoments {
 public:
  void add(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }
  std::int64_t count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const {
    return count_ < 2 ? 0.0 : m2_ / static_cast<double>(count_ - 1);
  }
  double standard_error() const {
    return count_ == 0 ? 0.0
                       : std::sqrt(variance() / static_cast<double>(count_));
  }

 private:
  std::int64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Largest |mean_j - target_j| / se_j. Coordinates with zero standard error
/// must match the target to rounding, otherwise the result is +inf.
inline double max_standard_score(const VectorMoments& moments,
                                 const Vector& target) {
  const Vector se = moments.standard_error();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < target.size(); ++j) {
    const double diff = std::abs(moments.mean()[j] - target[j]);
    const double scale = 1e-12 * std::max(1.0, std::abs(target[j]));
    if (se[j] <= scale) {
      if (diff > scale) return INFINITY;
      continue;
    }
    worst = std::max(worst, diff / se[j]);
  }
  return worst;
}

}  // namespace shiftcomp
