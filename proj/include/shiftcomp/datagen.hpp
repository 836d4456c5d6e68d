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
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftcomp/rng.hpp"
#include "shiftcomp/stats.hpp"

namespace shiftcomp {

enum class DatasetKind { kRegression, kBinary };

struct Dataset {
  Matrix features;  // m x d
  Vector labels;    // m
  DatasetKind kind = DatasetKind::kRegression;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }
};

struct RegressionData {
  Dataset dataset;
  Vector weights;  // ground truth
};

/// Rows of the parent dataset owned by one worker.
struct Shard {
  int worker = 0;
  std::vector<Eigen::Index> rows;
};

/// Gaussian design, ground truth supported on `n_informative` random
/// coordinates with entries uniform on [0, 100), labels A w + noise * N(0, 1).
inline RegressionData make_regression(int m, int d, int n_informative, double noise_std,
                                      std::uint64_t seed) {
  if (m < 1 || d < 1) throw std::invalid_argument("make_regression: sizes must be positive");
  if (n_informative < 1 || n_informative > d) {
    throw std::invalid_argument("make_regression: need 1 <= n_informative <= d");
  }
  if (noise_std < 0.0) throw std::invalid_argument("make_regression: negative noise");
  Stream rng = seed_stream(seed, -1, 0, Purpose::kData);
  RegressionData out;
  out.dataset.kind = DatasetKind::kRegression;
  out.dataset.features.resize(m, d);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < d; ++c) out.dataset.features(r, c) = rng.normal();
  }
  std::vector<int> cols(d);
  std::iota(cols.begin(), cols.end(), 0);
  for (int j = 0; j < n_informative; ++j) {
    const auto r = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - j)));
    std::swap(cols[j], cols[r]);
  }
  out.weights = Vector::Zero(d);
  for (int j = 0; j < n_informative; ++j) out.weights[cols[j]] = 100.0 * rng.uniform();
  out.dataset.labels = out.dataset.features * out.weights;
  if (noise_std > 0.0) {
    for (int r = 0; r < m; ++r) out.dataset.labels[r] += noise_std * rng.normal();
  }
  return out;
}

/// Noise-free labels from one dense shared weight vector, so every worker's
/// residual vanishes at the ground truth.
inline RegressionData make_interpolation_regression(int m, int d, int workers,
                                                    std::uint64_t seed) {
  if (workers < 1 || m < workers) {
    throw std::invalid_argument("make_interpolation_regression: need 1 <= workers <= m");
  }
  return make_regression(m, d, d, 0.0, seed);
}

/// Synthetic binary classification: labels sign(A w + 0.1 N(0,1)) in {-1, +1}.
inline Dataset make_classification(int m, int d, std::uint64_t seed) {
  if (m < 1 || d < 1) throw std::invalid_argument("make_classification: sizes must be positive");
  Stream rng = seed_stream(seed, -1, 1, Purpose::kData);
  Dataset out;
  out.kind = DatasetKind::kBinary;
  out.features.resize(m, d);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < d; ++c) out.features(r, c) = rng.normal();
  }
  Vector w(d);
  for (int c = 0; c < d; ++c) w[c] = rng.normal();
  const Vector margin = out.features * w;
  out.labels.resize(m);
  for (int r = 0; r < m; ++r) {
    out.labels[r] = margin[r] + 0.1 * rng.normal() >= 0.0 ? 1.0 : -1.0;
  }
  return out;
}

// -----------------------------------------------------------------------------
// LibSVM text format

struct LibsvmParseResult {
  Dataset dataset;
  std::vector<std::string> warnings;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline double parse_double(const std::string& token, std::size_t line) {
  const char* begin = token.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw ParseError(line, "invalid number '" + token + "'");
  }
  return v;
}

}  // namespace detail

/// Parses "label idx:val idx:val ..." with 1-based indices. `dim` = 0 takes
/// the largest index seen. Labels are mapped to {-1, +1}; more than two
/// distinct labels is an error. Duplicate or out-of-order indices produce
/// warnings (the last value of a duplicate wins).
inline LibsvmParseResult parse_libsvm(std::istream& in, int dim = 0) {
  struct Row {
    double label;
    std::vector<std::pair<int, double>> entries;
  };
  std::vector<Row> rows;
  std::vector<std::string> warnings;
  std::string text;
  std::size_t line_no = 0;
  int max_index = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.resize(hash);
    std::istringstream tokens(text);
    std::string token;
    if (!(tokens >> token)) continue;  // blank line
    Row row;
    row.label = detail::parse_double(token, line_no);
    int previous = 0;
    std::set<int> seen;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == token.size()) {
        throw ParseError(line_no, "expected idx:val, got '" + token + "'");
      }
      const std::string idx_text = token.substr(0, colon);
      if (idx_text.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError(line_no, "invalid index '" + idx_text + "'");
      }
      const long idx = std::strtol(idx_text.c_str(), nullptr, 10);
      if (idx < 1 || idx > (1L << 30)) throw ParseError(line_no, "index out of range");
      const double value = detail::parse_double(token.substr(colon + 1), line_no);
      const int index = static_cast<int>(idx);
      if (!seen.insert(index).second) {
        warnings.push_back("line " + std::to_string(line_no) + ": duplicate index " +
                           std::to_string(index));
      } else if (index < previous) {
        warnings.push_back("line " + std::to_string(line_no) + ": index " +
                           std::to_string(index) + " out of order");
      }
      previous = std::max(previous, index);
      max_index = std::max(max_index, index);
      row.entries.emplace_back(index, value);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(line_no, "no data rows");
  if (dim == 0) dim = max_index;
  if (dim < max_index) {
    throw ParseError(line_no, "index " + std::to_string(max_index) + " exceeds dimension " +
                                  std::to_string(dim));
  }

  std::set<double> distinct;
  for (const auto& row : rows) distinct.insert(row.label);
  if (distinct.size() > 2) {
    throw std::invalid_argument("libsvm: labels are not binary (" +
                                std::to_string(distinct.size()) + " distinct values)");
  }
  // Two labels: smaller -> -1, larger -> +1. One label keeps its sign.
  std::map<double, double> mapping;
  if (distinct.size() == 2) {
    mapping[*distinct.begin()] = -1.0;
    mapping[*distinct.rbegin()] = 1.0;
  } else {
    const double only = *distinct.begin();
    mapping[only] = only > 0.0 ? 1.0 : -1.0;
  }

  LibsvmParseResult out;
  out.warnings = std::move(warnings);
  out.dataset.kind = DatasetKind::kBinary;
  out.dataset.features = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), dim);
  out.dataset.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.dataset.labels[static_cast<Eigen::Index>(r)] = mapping.at(rows[r].label);
    for (const auto& [index, value] : rows[r].entries) {
      out.dataset.features(static_cast<Eigen::Index>(r), index - 1) = value;
    }
  }
  return out;
}

inline LibsvmParseResult parse_libsvm(const std::string& path, int dim = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open libsvm file '" + path + "'");
  return parse_libsvm(in, dim);
}

/// Writes nonzero entries with 17 significant digits, so parsing the output
/// reproduces the dataset exactly.
inline void write_libsvm(const Dataset& data, std::ostream& out) {
  char buf[64];
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g", data.labels[r]);
    out << buf;
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      const double v = data.features(r, c);
      if (v == 0.0) continue;
      std::snprintf(buf, sizeof buf, " %lld:%.17g", static_cast<long long>(c + 1), v);
      out << buf;
    }
    out << '\n';
  }
}

/// Scales every column to unit max-abs (columns of zeros untouched).
inline void normalize_features(Dataset& data) {
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const double scale = data.features.col(c).cwiseAbs().maxCoeff();
    if (scale > 0.0) data.features.col(c) /= scale;
  }
}

// -----------------------------------------------------------------------------
// Sharding

/// Random permutation of the m rows cut into n contiguous blocks whose sizes
/// differ by at most one.
inline std::vector<Shard> shard(Eigen::Index m, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("shard: need at least one worker");
  if (n > m) {
    throw std::invalid_argument("shard: " + std::to_string(n) + " workers for " +
                                std::to_string(m) + " rows");
  }
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Stream rng = seed_stream(seed, -1, 0, Purpose::kShard);
  for (std::size_t j = perm.size() - 1; j > 0; --j) {
    const auto r = static_cast<std::size_t>(rng.below(j + 1));
    std::swap(perm[j], perm[r]);
  }
  std::vector<Shard> shards(static_cast<std::size_t>(n));
  const Eigen::Index base = m / n;
  const Eigen::Index extra = m % n;
  Eigen::Index offset = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Index size = base + (i < extra ? 1 : 0);
    shards[i].worker = i;
    shards[i].rows.assign(perm.begin() + offset, perm.begin() + offset + size);
    offset += size;
  }
  return shards;
}

inline std::vector<Shard> shard(const Dataset& data, int n, std::uint64_t seed) {
  return shard(data.rows(), n, seed);
}

}  // namespace shiftcomp
