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
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "shiftcomp/rng.hpp"
#include "shiftcomp/stats.hpp"

namespace shiftcomp {

enum class CompressorKind {
  kIdentity,
  kZero,
  kRandK,
  kTopK,
  kNaturalDithering,
  kBernoulli,
};

inline std::string_view to_string(CompressorKind kind) {
  switch (kind) {
    case CompressorKind::kIdentity: return "identity";
    case CompressorKind::kZero: return "zero";
    case CompressorKind::kRandK: return "rand_k";
    case CompressorKind::kTopK: return "top_k";
    case CompressorKind::kNaturalDithering: return "natural_dithering";
    case CompressorKind::kBernoulli: return "bernoulli";
  }
  return "unknown";
}

/// Deliberate implementation faults, used to check that the statistical
/// verification suites are able to fail.
enum class Fault {
  kNone,
  kRandKScale,  // scale Rand-K by d/(K+1) instead of d/K
};

/// Bits per transmitted float.
inline constexpr std::int64_t kFloatBits = 64;

/// ceil(log2(d)), the bits needed to address one of d coordinates.
inline std::int64_t index_bits(std::int64_t dim) {
  return dim <= 1 ? 0 : std::bit_width(static_cast<std::uint64_t>(dim - 1));
}

inline std::int64_t dense_bits(std::int64_t dim) { return kFloatBits * dim; }

namespace detail {
inline double calibrate_natural_dithering(int dim, int levels);
}

/// A compressor family with its parameters and declared variance constants.
struct CompressorSpec {
  CompressorKind kind = CompressorKind::kIdentity;
  int dim = 0;
  int k = 0;                 // Rand-K / Top-K
  int levels = 0;            // natural dithering s
  double prob = 1.0;         // Bernoulli p
  double calibrated_omega = 0.0;  // natural dithering only
  Fault fault = Fault::kNone;

  static CompressorSpec identity(int dim) {
    CompressorSpec spec{CompressorKind::kIdentity, dim};
    spec.validate();
    return spec;
  }
  static CompressorSpec zero(int dim) {
    CompressorSpec spec{CompressorKind::kZero, dim};
    spec.validate();
    return spec;
  }
  static CompressorSpec rand_k(int dim, int k) {
    CompressorSpec spec{CompressorKind::kRandK, dim, k};
    spec.validate();
    return spec;
  }
  static CompressorSpec top_k(int dim, int k) {
    CompressorSpec spec{CompressorKind::kTopK, dim, k};
    spec.validate();
    return spec;
  }
  static CompressorSpec bernoulli(int dim, double p) {
    CompressorSpec spec{CompressorKind::kBernoulli, dim};
    spec.prob = p;
    spec.validate();
    return spec;
  }
  /// Calibrates omega by Monte-Carlo over random unit vectors (max ratio x1.1).
  static CompressorSpec natural_dithering(int dim, int levels) {
    CompressorSpec spec{CompressorKind::kNaturalDithering, dim};
    spec.levels = levels;
    spec.validate();
    spec.calibrated_omega = detail::calibrate_natural_dithering(dim, levels);
    return spec;
  }

  void validate() const {
    if (dim <= 0) throw std::invalid_argument("compressor dimension must be positive");
    switch (kind) {
      case CompressorKind::kRandK:
      case CompressorKind::kTopK:
        if (k < 1 || k > dim) {
          throw std::invalid_argument("K = " + std::to_string(k) +
                                      " out of range [1, " + std::to_string(dim) + "]");
        }
        break;
      case CompressorKind::kNaturalDithering:
        if (levels < 1 || levels > 60) {
          throw std::invalid_argument("natural dithering needs 1 <= s <= 60");
        }
        break;
      case CompressorKind::kBernoulli:
        if (!(prob > 0.0 && prob <= 1.0)) {
          throw std::invalid_argument("Bernoulli probability must lie in (0, 1]");
        }
        break;
      default:
        break;
    }
  }

  bool unbiased() const {
    return kind == CompressorKind::kIdentity || kind == CompressorKind::kRandK ||
           kind == CompressorKind::kNaturalDithering;
  }
  bool contractive() const {
    return kind == CompressorKind::kIdentity || kind == CompressorKind::kTopK ||
           kind == CompressorKind::kBernoulli;
  }

  /// Declared variance constant of an unbiased compressor.
  double omega() const {
    switch (kind) {
      case CompressorKind::kIdentity: return 0.0;
      case CompressorKind::kRandK: return static_cast<double>(dim) / k - 1.0;
      case CompressorKind::kNaturalDithering: return calibrated_omega;
      default:
        throw std::logic_error(std::string(to_string(kind)) + " is not unbiased");
    }
  }

  /// Declared contraction constant. The zero map reports 0, which is how
  /// step-size formulas treat a missing inner compressor.
  double delta() const {
    switch (kind) {
      case CompressorKind::kIdentity: return 1.0;
      case CompressorKind::kTopK: return static_cast<double>(k) / dim;
      case CompressorKind::kBernoulli: return prob;
      case CompressorKind::kZero: return 0.0;
      default:
        throw std::logic_error(std::string(to_string(kind)) + " is not contractive");
    }
  }

  friend bool operator==(const CompressorSpec&, const CompressorSpec&) = default;
};

// -----------------------------------------------------------------------------
// Messages

/// Full vector.
struct DensePayload {
  std::vector<double> values;
};

/// Index/value pairs, values already scaled; indices ascending.
struct SparsePayload {
  std::vector<std::int32_t> indices;
  std::vector<double> values;
};

/// Norm plus a sign and a level index per coordinate. Level 0 is zero,
/// level l >= 1 is 2^(l - s).
struct QuantizedPayload {
  double norm = 0.0;
  int levels = 0;
  std::vector<std::int8_t> signs;
  std::vector<std::uint8_t> level_index;
};

/// Nothing but (possibly) a flag: decodes to the zero vector.
struct EmptyPayload {};

struct CompressedMessage;

/// Concatenation of independently decoded parts, summed on decode.
struct CompositePayload {
  std::vector<CompressedMessage> parts;
};

using Payload = std::variant<EmptyPayload, DensePayload, SparsePayload,
                             QuantizedPayload, CompositePayload>;

/// What a worker puts on the wire: the payload, its exact cost in bits, and
/// the dense vector the receiver reconstructs.
struct CompressedMessage {
  Payload payload;
  std::int64_t bits = 0;
  Vector dense_value;
};

inline double quantized_level(int level_index, int levels) {
  return level_index == 0 ? 0.0 : std::ldexp(1.0, level_index - levels);
}

inline Vector decode(const Payload& payload, int dim);

inline Vector decode(const CompressedMessage& message, int dim) {
  return decode(message.payload, dim);
}

inline Vector decode(const Payload& payload, int dim) {
  Vector out = Vector::Zero(dim);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DensePayload>) {
          if (static_cast<int>(p.values.size()) != dim) {
            throw std::invalid_argument("dense payload has wrong length");
          }
          for (int j = 0; j < dim; ++j) out[j] = p.values[j];
        } else if constexpr (std::is_same_v<T, SparsePayload>) {
          for (std::size_t t = 0; t < p.indices.size(); ++t) {
            out[p.indices[t]] = p.values[t];
          }
        } else if constexpr (std::is_same_v<T, QuantizedPayload>) {
          for (int j = 0; j < dim; ++j) {
            out[j] = p.signs[j] * (p.norm * quantized_level(p.level_index[j], p.levels));
          }
        } else if constexpr (std::is_same_v<T, CompositePayload>) {
          for (const auto& part : p.parts) out += decode(part.payload, dim);
        }
      },
      payload);
  return out;
}

/// Bit cost of a message produced by `spec`.
///   dense: 64 d; sparse: K (64 + ceil(log2 d)); natural dithering:
///   d (1 + ceil(log2(s + 1))) + 64; Bernoulli: 64 d when it fires, else a
///   1-bit flag; zero map: 0.
inline std::int64_t bit_cost(const CompressorSpec& spec, const CompressedMessage& message) {
  const std::int64_t d = spec.dim;
  switch (spec.kind) {
    case CompressorKind::kIdentity: return dense_bits(d);
    case CompressorKind::kZero: return 0;
    case CompressorKind::kRandK:
    case CompressorKind::kTopK: {
      const auto& sparse = std::get<SparsePayload>(message.payload);
      return static_cast<std::int64_t>(sparse.indices.size()) *
             (kFloatBits + index_bits(d));
    }
    case CompressorKind::kNaturalDithering:
      return d * (1 + index_bits(spec.levels + 1)) + kFloatBits;
    case CompressorKind::kBernoulli:
      return std::holds_alternative<DensePayload>(message.payload) ? dense_bits(d) : 1;
  }
  return 0;
}

// -----------------------------------------------------------------------------
// Operators

namespace detail {

inline void check_dim(const CompressorSpec& spec, const Vector& x) {
  if (x.size() != spec.dim) {
    throw std::invalid_argument("dimension mismatch: compressor expects " +
                                std::to_string(spec.dim) + ", got " +
                                std::to_string(x.size()));
  }
}

inline std::vector<std::int32_t> sample_subset(int dim, int k, Stream& rng) {
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  std::vector<std::int32_t> idx(dim);
  std::iota(idx.begin(), idx.end(), 0);
  for (int j = 0; j < k; ++j) {
    const auto r = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(dim - j)));
    std::swap(idx[j], idx[r]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::vector<std::int32_t> top_indices(const Vector& x, int k) {
  std::vector<std::int32_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Larger magnitude first, lower index among ties.
  auto before = [&x](std::int32_t a, std::int32_t b) {
    const double fa = std::abs(x[a]);
    const double fb = std::abs(x[b]);
    return fa > fb || (fa == fb && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), before);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Bracketing levels [lo, hi] of r in {0} U {2^(l-s)}, r in [0, 1].
inline int lower_level(double r, int levels) {
  int l = levels;
  while (l > 0 && quantized_level(l, levels) > r) --l;
  return l;
}

inline CompressedMessage natural_dithering(const CompressorSpec& spec, const Vector& x,
                                           Stream& rng) {
  const int d = spec.dim;
  QuantizedPayload q;
  q.levels = spec.levels;
  q.norm = x.norm();
  q.signs.assign(d, 0);
  q.level_index.assign(d, 0);
  Vector dense = Vector::Zero(d);
  if (q.norm > 0.0) {
    for (int j = 0; j < d; ++j) {
      const double r = std::min(1.0, std::abs(x[j]) / q.norm);
      int l = lower_level(r, spec.levels);
      if (l < spec.levels) {
        const double lo = quantized_level(l, spec.levels);
        const double hi = quantized_level(l + 1, spec.levels);
        if (rng.uniform() * (hi - lo) < r - lo) ++l;
      }
      q.signs[j] = static_cast<std::int8_t>(x[j] < 0.0 ? -1 : 1);
      q.level_index[j] = static_cast<std::uint8_t>(l);
      dense[j] = q.signs[j] * (q.norm * quantized_level(l, spec.levels));
    }
  }
  CompressedMessage message{std::move(q), 0, std::move(dense)};
  message.bits = bit_cost(spec, message);
  return message;
}

/// Exact E||Q(x) - x||^2 / ||x||^2 of natural dithering for a fixed x.
inline double natural_dithering_ratio(const Vector& x, int levels) {
  const double norm = x.norm();
  if (norm == 0.0) return 0.0;
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double r = std::min(1.0, std::abs(x[j]) / norm);
    const int l = lower_level(r, levels);
    if (l == levels) continue;
    const double lo = quantized_level(l, levels);
    const double hi = quantized_level(l + 1, levels);
    total += (hi - r) * (r - lo);
  }
  return total;
}

inline double calibrate_natural_dithering(int dim, int levels) {
  constexpr int kVectors = 10000;
  Stream rng = seed_stream(0x6e6174757261ULL, dim, levels, Purpose::kCalibration);
  double worst = 0.0;
  Vector x(dim);
  for (int t = 0; t < kVectors; ++t) {
    for (int j = 0; j < dim; ++j) x[j] = rng.normal();
    worst = std::max(worst, natural_dithering_ratio(x, levels));
  }
  return 1.1 * worst;
}

}  // namespace detail

/// Applies `spec` to `x`, drawing randomness from `rng`.
inline CompressedMessage compress(const CompressorSpec& spec, const Vector& x, Stream& rng) {
  detail::check_dim(spec, x);
  const int d = spec.dim;
  switch (spec.kind) {
    case CompressorKind::kIdentity: {
      CompressedMessage m{DensePayload{std::vector<double>(x.data(), x.data() + d)}, 0, x};
      m.bits = bit_cost(spec, m);
      return m;
    }
    case CompressorKind::kZero:
      return CompressedMessage{EmptyPayload{}, 0, Vector::Zero(d)};
    case CompressorKind::kRandK:
    case CompressorKind::kTopK: {
      SparsePayload sparse;
      double scale = 1.0;
      if (spec.kind == CompressorKind::kRandK) {
        sparse.indices = detail::sample_subset(d, spec.k, rng);
        scale = spec.fault == Fault::kRandKScale
                    ? static_cast<double>(d) / (spec.k + 1)
                    : static_cast<double>(d) / spec.k;
      } else {
        sparse.indices = detail::top_indices(x, spec.k);
      }
      Vector dense = Vector::Zero(d);
      sparse.values.reserve(sparse.indices.size());
      for (const auto j : sparse.indices) {
        const double v = scale * x[j];
        sparse.values.push_back(v);
        dense[j] = v;
      }
      CompressedMessage m{std::move(sparse), 0, std::move(dense)};
      m.bits = bit_cost(spec, m);
      return m;
    }
    case CompressorKind::kNaturalDithering:
      return detail::natural_dithering(spec, x, rng);
    case CompressorKind::kBernoulli: {
      CompressedMessage m;
      if (rng.bernoulli(spec.prob)) {
        m = CompressedMessage{DensePayload{std::vector<double>(x.data(), x.data() + d)}, 0, x};
      } else {
        m = CompressedMessage{EmptyPayload{}, 0, Vector::Zero(d)};
      }
      m.bits = bit_cost(spec, m);
      return m;
    }
  }
  throw std::logic_error("unhandled compressor kind");
}

// -----------------------------------------------------------------------------
// Compressor algebra

/// x -> shift + base(x - shift), a member of U(omega; shift) when base is in
/// U(omega).
struct ShiftedCompressor {
  CompressorSpec base;
  Vector shift;

  static ShiftedCompressor unshifted(const CompressorSpec& spec) {
    return {spec, Vector::Zero(spec.dim)};
  }

  CompressedMessage apply_message(const Vector& x, Stream& rng) const {
    if (x.size() != shift.size()) throw std::invalid_argument("dimension mismatch");
    return compress(base, x - shift, rng);
  }

  Vector apply(const Vector& x, Stream& rng) const {
    return shift + apply_message(x, rng).dense_value;
  }
};

/// Shifting a shifted compressor: x -> v + base(x - v), whose shift is h + v.
inline ShiftedCompressor shift(const ShiftedCompressor& base, const Vector& v) {
  if (v.size() != base.shift.size()) throw std::invalid_argument("dimension mismatch");
  return {base.base, base.shift + v};
}

/// C(x) + Q(x - C(x)) for a contractive C and an unbiased Q.
struct InducedCompressor {
  CompressorSpec biased;
  CompressorSpec unbiased;

  InducedCompressor(CompressorSpec c, CompressorSpec q)
      : biased(std::move(c)), unbiased(std::move(q)) {
    if (biased.dim != unbiased.dim) throw std::invalid_argument("dimension mismatch");
  }

  /// omega * (1 - delta)
  double omega() const { return unbiased.omega() * (1.0 - biased.delta()); }
};

inline CompressedMessage induce(const CompressorSpec& biased, const CompressorSpec& unbiased,
                                const Vector& x, Stream& rng) {
  if (biased.dim != unbiased.dim) throw std::invalid_argument("dimension mismatch");
  CompressedMessage c = compress(biased, x, rng);
  CompressedMessage q = compress(unbiased, x - c.dense_value, rng);
  Vector dense = c.dense_value + q.dense_value;
  const std::int64_t bits = c.bits + q.bits;
  CompositePayload composite;
  composite.parts.push_back(std::move(c));
  composite.parts.push_back(std::move(q));
  return CompressedMessage{std::move(composite), bits, std::move(dense)};
}

/// (1/gamma) [x - Q(x - gamma z)], unbiased for z with shift x / gamma.
/// `bits`, when given, receives the cost of the underlying message.
inline Vector iterate_compressor(const CompressorSpec& spec, const Vector& anchor, double gamma,
                                 const Vector& z, Stream& rng, std::int64_t* bits = nullptr) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (anchor.size() != z.size()) throw std::invalid_argument("dimension mismatch");
  const CompressedMessage m = compress(spec, anchor - gamma * z, rng);
  if (bits != nullptr) *bits = m.bits;
  return (anchor - m.dense_value) / gamma;
}

/// -t Q(-z / t); stays in U(omega) for any t != 0.
inline Vector negation_scaled(const CompressorSpec& spec, double t, const Vector& z,
                              Stream& rng) {
  if (t == 0.0) throw std::invalid_argument("scale must be nonzero");
  return -t * compress(spec, -z / t, rng).dense_value;
}

// -----------------------------------------------------------------------------
// Monte-Carlo variance check

struct VarianceReport {
  Vector mean;
  double variance_ratio = 0.0;   // empirical E||Q(x) - x||^2 / ||x||^2
  double declared_bound = 0.0;   // omega (unbiased) or 1 - delta (contractive)
  double max_standard_score = 0.0;  // of the mean against x
  bool unbiased_ok = true;       // only meaningful for unbiased kinds
  bool variance_ok = true;
  std::int64_t samples = 0;
};

inline constexpr double kMeanStandardErrors = 4.0;
inline constexpr double kVarianceSlack = 0.05;

inline VarianceReport variance_check(const CompressorSpec& spec, const Vector& x,
                                     std::int64_t samples, Stream& rng) {
  if (samples < 1000) throw std::invalid_argument("variance_check needs at least 1000 samples");
  detail::check_dim(spec, x);
  VectorMoments moments(x.size());
  ScalarMoments sq_error;
  for (std::int64_t t = 0; t < samples; ++t) {
    const Vector q = compress(spec, x, rng).dense_value;
    moments.add(q);
    sq_error.add((q - x).squaredNorm());
  }
  VarianceReport report;
  report.samples = samples;
  report.mean = moments.mean();
  const double norm2 = x.squaredNorm();
  report.variance_ratio = norm2 > 0.0 ? sq_error.mean() / norm2 : sq_error.mean();
  report.max_standard_score = max_standard_score(moments, x);
  if (spec.unbiased()) {
    report.declared_bound = spec.omega();
    report.unbiased_ok = report.max_standard_score <= kMeanStandardErrors;
  } else {
    report.declared_bound = 1.0 - spec.delta();
    report.unbiased_ok = false;
  }
  report.variance_ok = norm2 > 0.0
                           ? report.variance_ratio <= report.declared_bound * (1.0 + kVarianceSlack) + 1e-15
                           : sq_error.mean() == 0.0;
  return report;
}

}  // namespace shiftcomp
