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
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftcomp/harness.hpp"

namespace shiftcomp {

using Json = nlohmann::json;

/// Schema violation, tagged with the dotted path of the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A parsed experiment file: the base run plus optional compare entries,
/// each already merged over the base.
struct ExperimentConfig {
  RunConfig base;
  std::vector<RunConfig> compare;
  bool has_compare = false;
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void expect_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

inline void only_keys(const Json& j, const std::string& path,
                      std::initializer_list<const char*> allowed) {
  expect_object(j, path);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError(join(path, it.key()), "unknown key");
  }
}

inline double get_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline double get_positive(const Json& j, const std::string& path) {
  const double v = get_number(j, path);
  if (!(v > 0.0)) throw ConfigError(path, "must be positive");
  return v;
}

inline std::int64_t get_integer(const Json& j, const std::string& path, std::int64_t lo,
                                std::int64_t hi = std::numeric_limits<std::int64_t>::max()) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  const std::int64_t v = j.get<std::int64_t>();
  if (v < lo || v > hi) {
    throw ConfigError(path, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return v;
}

inline bool get_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

inline std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

/// Number or the string "auto" (returned as nullopt).
inline std::optional<double> get_auto(const Json& j, const std::string& path) {
  if (j.is_string() && j.get<std::string>() == "auto") return std::nullopt;
  if (!j.is_number()) throw ConfigError(path, "expected a number or \"auto\"");
  return j.get<double>();
}

template <typename Enum>
Enum get_enum(const Json& j, const std::string& path,
              std::initializer_list<std::pair<const char*, Enum>> names) {
  const std::string s = get_string(j, path);
  std::string options;
  for (const auto& [name, value] : names) {
    if (s == name) return value;
    options += options.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(path, "unknown value '" + s + "' (expected one of: " + options + ")");
}

inline CompressorConfig parse_compressor(const Json& j, const std::string& path) {
  only_keys(j, path, {"kind", "k", "q", "levels", "p"});
  if (!j.contains("kind")) throw ConfigError(join(path, "kind"), "missing required field");
  CompressorConfig c;
  c.kind = get_enum<CompressorKind>(j["kind"], join(path, "kind"),
                                    {{"identity", CompressorKind::kIdentity},
                                     {"zero", CompressorKind::kZero},
                                     {"rand_k", CompressorKind::kRandK},
                                     {"top_k", CompressorKind::kTopK},
                                     {"natural_dithering", CompressorKind::kNaturalDithering},
                                     {"bernoulli", CompressorKind::kBernoulli}});
  if (j.contains("k")) c.k = static_cast<int>(get_integer(j["k"], join(path, "k"), 1, 1 << 30));
  if (j.contains("q")) {
    c.q = get_number(j["q"], join(path, "q"));
    if (!(c.q > 0.0 && c.q <= 1.0)) throw ConfigError(join(path, "q"), "must lie in (0, 1]");
  }
  if (j.contains("levels")) {
    c.levels = static_cast<int>(get_integer(j["levels"], join(path, "levels"), 1, 62));
  }
  if (j.contains("p")) {
    c.p = get_number(j["p"], join(path, "p"));
    if (!(c.p > 0.0 && c.p <= 1.0)) throw ConfigError(join(path, "p"), "must lie in (0, 1]");
  }
  const bool sized = c.kind == CompressorKind::kRandK || c.kind == CompressorKind::kTopK;
  if (sized && c.k == 0 && c.q == 0.0) throw ConfigError(path, "rand_k/top_k need k or q");
  if (c.kind == CompressorKind::kNaturalDithering && c.levels == 0) {
    throw ConfigError(join(path, "levels"), "missing required field");
  }
  return c;
}

inline std::vector<CompressorConfig> parse_compressor_list(const Json& j, const std::string& path) {
  std::vector<CompressorConfig> out;
  if (j.is_array()) {
    if (j.empty()) throw ConfigError(path, "empty list");
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.push_back(parse_compressor(j[i], path + "[" + std::to_string(i) + "]"));
    }
  } else {
    out.push_back(parse_compressor(j, path));
  }
  return out;
}

inline ProblemConfig parse_problem(const Json& j, const std::string& path) {
  only_keys(j, path, {"loss", "source", "rows", "dim", "workers", "informative", "noise",
                      "data_seed", "path", "normalize", "lambda", "target_kappa",
                      "reference_tol"});
  ProblemConfig p;
  if (j.contains("loss")) {
    p.loss = get_enum<LossKind>(j["loss"], join(path, "loss"),
                                {{"ridge", LossKind::kRidge}, {"logistic", LossKind::kLogistic}});
  }
  if (j.contains("source")) {
    p.source = get_enum<DataSource>(j["source"], join(path, "source"),
                                    {{"regression", DataSource::kRegression},
                                     {"interpolation", DataSource::kInterpolation},
                                     {"classification", DataSource::kClassification},
                                     {"libsvm", DataSource::kLibsvm}});
  }
  if (j.contains("rows")) p.rows = static_cast<int>(get_integer(j["rows"], join(path, "rows"), 1, 1 << 24));
  if (j.contains("dim")) p.dim = static_cast<int>(get_integer(j["dim"], join(path, "dim"), 1, 1 << 20));
  if (j.contains("workers")) {
    p.workers = static_cast<int>(get_integer(j["workers"], join(path, "workers"), 1, 1 << 20));
  }
  if (j.contains("informative")) {
    p.informative = static_cast<int>(get_integer(j["informative"], join(path, "informative"), 1, 1 << 20));
  }
  if (j.contains("noise")) {
    p.noise = get_number(j["noise"], join(path, "noise"));
    if (p.noise < 0.0) throw ConfigError(join(path, "noise"), "must be non-negative");
  }
  if (j.contains("data_seed")) {
    p.data_seed = static_cast<std::uint64_t>(get_integer(j["data_seed"], join(path, "data_seed"), 0));
  }
  if (j.contains("path")) p.path = get_string(j["path"], join(path, "path"));
  if (j.contains("normalize")) p.normalize = get_bool(j["normalize"], join(path, "normalize"));
  if (j.contains("lambda")) {
    p.lambda = get_number(j["lambda"], join(path, "lambda"));
    if (*p.lambda < 0.0) throw ConfigError(join(path, "lambda"), "must be non-negative");
  }
  if (j.contains("target_kappa")) {
    p.target_kappa = get_number(j["target_kappa"], join(path, "target_kappa"));
    if (!(*p.target_kappa > 1.0)) throw ConfigError(join(path, "target_kappa"), "must exceed 1");
  }
  if (j.contains("reference_tol")) p.reference_tol = get_positive(j["reference_tol"], join(path, "reference_tol"));
  if (p.source == DataSource::kLibsvm && p.path.empty()) {
    throw ConfigError(join(path, "path"), "libsvm source needs a path");
  }
  if (p.source != DataSource::kLibsvm && p.workers > p.rows) {
    throw ConfigError(join(path, "workers"), "more workers than rows");
  }
  if (p.informative > p.dim) throw ConfigError(join(path, "informative"), "exceeds dim");
  return p;
}

inline ShiftConfig parse_shift(const Json& j, const std::string& path) {
  only_keys(j, path, {"kind", "alpha", "p", "inner"});
  ShiftConfig s;
  if (!j.contains("kind")) throw ConfigError(join(path, "kind"), "missing required field");
  s.kind = get_enum<ShiftKind>(j["kind"], join(path, "kind"),
                               {{"fixed", ShiftKind::kFixed},
                                {"star", ShiftKind::kStar},
                                {"diana", ShiftKind::kDiana},
                                {"rand_diana", ShiftKind::kRandDiana}});
  if (j.contains("alpha")) {
    s.alpha = get_auto(j["alpha"], join(path, "alpha"));
    if (s.alpha && !(*s.alpha > 0.0 && *s.alpha <= 1.0)) {
      throw ConfigError(join(path, "alpha"), "must lie in (0, 1]");
    }
  }
  if (j.contains("p")) {
    s.p = get_auto(j["p"], join(path, "p"));
    if (s.p && !(*s.p > 0.0 && *s.p <= 1.0)) throw ConfigError(join(path, "p"), "must lie in (0, 1]");
  }
  if (j.contains("inner")) s.inner = parse_compressor_list(j["inner"], join(path, "inner"));
  return s;
}

inline StepConfig parse_steps(const Json& j, const std::string& path) {
  only_keys(j, path, {"theorem", "gamma", "eta", "alpha", "M", "M_scale", "multiplier", "cap_gdci"});
  StepConfig s;
  if (j.contains("theorem")) {
    const Json& t = j["theorem"];
    if (!(t.is_string() && t.get<std::string>() == "auto")) {
      s.theorem = static_cast<int>(get_integer(t, join(path, "theorem"), 1, 6));
    }
  }
  if (j.contains("gamma")) s.gamma = get_positive(j["gamma"], join(path, "gamma"));
  if (j.contains("eta")) {
    s.eta = get_positive(j["eta"], join(path, "eta"));
    if (*s.eta > 1.0) throw ConfigError(join(path, "eta"), "must lie in (0, 1]");
  }
  if (j.contains("alpha")) {
    s.alpha = get_positive(j["alpha"], join(path, "alpha"));
    if (*s.alpha > 1.0) throw ConfigError(join(path, "alpha"), "must lie in (0, 1]");
  }
  if (j.contains("M")) s.M = get_positive(j["M"], join(path, "M"));
  if (j.contains("M_scale")) s.M_scale = get_positive(j["M_scale"], join(path, "M_scale"));
  if (j.contains("multiplier")) s.multiplier = get_positive(j["multiplier"], join(path, "multiplier"));
  if (j.contains("cap_gdci")) s.cap_gdci = get_bool(j["cap_gdci"], join(path, "cap_gdci"));
  return s;
}

/// Reads the run fields of `j` (a merged document) into a RunConfig.
inline RunConfig parse_run(const Json& j, const std::string& path, bool allow_compare) {
  if (allow_compare) {
    only_keys(j, path, {"name", "problem", "algorithm", "compressor", "compressors", "shift",
                        "steps", "budget", "eps", "seed", "seeds", "x0", "compare"});
  } else {
    only_keys(j, path, {"name", "problem", "algorithm", "compressor", "compressors", "shift",
                        "steps", "budget", "eps", "seed", "seeds", "x0"});
  }
  RunConfig c;
  if (j.contains("name")) {
    c.name = get_string(j["name"], join(path, "name"));
    // Names become file names.
    const bool safe = !c.name.empty() && c.name.front() != '.' &&
                      std::all_of(c.name.begin(), c.name.end(), [](char ch) {
                        return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
                      });
    if (!safe) throw ConfigError(join(path, "name"), "use letters, digits, '_', '-' or '.'");
  }
  if (j.contains("problem")) c.problem = parse_problem(j["problem"], join(path, "problem"));
  if (!j.contains("algorithm")) throw ConfigError(join(path, "algorithm"), "missing required field");
  c.method = get_enum<Method>(j["algorithm"], join(path, "algorithm"),
                              {{"dcgd_shift", Method::kDcgdShift},
                               {"gdci", Method::kGdci},
                               {"vr_gdci", Method::kVrGdci}});
  if (j.contains("compressor") && j.contains("compressors")) {
    throw ConfigError(join(path, "compressors"), "give either compressor or compressors");
  }
  if (j.contains("compressor")) {
    c.compressors = {parse_compressor(j["compressor"], join(path, "compressor"))};
  } else if (j.contains("compressors")) {
    c.compressors = parse_compressor_list(j["compressors"], join(path, "compressors"));
  }
  if (j.contains("shift")) {
    c.shift = parse_shift(j["shift"], join(path, "shift"));
    if (c.method != Method::kDcgdShift && c.shift.kind != ShiftKind::kFixed) {
      throw ConfigError(join(path, "shift.kind"), "shift strategies apply to dcgd_shift only");
    }
  }
  if (j.contains("steps")) c.steps = parse_steps(j["steps"], join(path, "steps"));
  if (j.contains("budget")) {
    const Json& b = j["budget"];
    const std::string bp = join(path, "budget");
    only_keys(b, bp, {"iters", "bits"});
    if (b.contains("iters")) c.max_iters = get_integer(b["iters"], join(bp, "iters"), 1);
    if (b.contains("bits")) c.max_bits = get_integer(b["bits"], join(bp, "bits"), 0);
  }
  if (j.contains("eps")) c.eps = get_positive(j["eps"], join(path, "eps"));
  if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(get_integer(j["seed"], join(path, "seed"), 0));
  if (j.contains("seeds")) c.seeds = static_cast<int>(get_integer(j["seeds"], join(path, "seeds"), 1, 100000));
  if (j.contains("x0")) {
    const Json& x = j["x0"];
    const std::string xp = join(path, "x0");
    only_keys(x, xp, {"scale", "is_variance"});
    if (x.contains("scale")) c.x0_scale = get_positive(x["scale"], join(xp, "scale"));
    if (x.contains("is_variance")) c.x0_scale_is_variance = get_bool(x["is_variance"], join(xp, "is_variance"));
  }
  return c;
}

/// Objects merge key by key with `over` winning; everything else is replaced.
inline Json merge(Json base, const Json& over) {
  if (!base.is_object() || !over.is_object()) return over;
  for (auto it = over.begin(); it != over.end(); ++it) {
    base[it.key()] = base.contains(it.key()) ? merge(base[it.key()], it.value()) : it.value();
  }
  return base;
}

inline Json load_json(const std::filesystem::path& file, int depth) {
  if (depth > 16) throw ConfigError("include", "include chain too deep (cycle?)");
  std::ifstream in(file);
  if (!in) throw ConfigError("", "cannot open config '" + file.string() + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("", "'" + file.string() + "' is not valid JSON: " + e.what());
  }
  expect_object(j, "");
  if (j.contains("include")) {
    std::vector<std::string> names;
    const Json& inc = j["include"];
    if (inc.is_string()) {
      names.push_back(inc.get<std::string>());
    } else if (inc.is_array()) {
      for (std::size_t i = 0; i < inc.size(); ++i) names.push_back(get_string(inc[i], "include[" + std::to_string(i) + "]"));
    } else {
      throw ConfigError("include", "expected a path or a list of paths");
    }
    Json merged = Json::object();
    for (const auto& name : names) {
      std::filesystem::path p(name);
      if (p.is_relative()) p = file.parent_path() / p;
      merged = merge(merged, load_json(p, depth + 1));
    }
    j.erase("include");
    j = merge(merged, j);
  }
  return j;
}

}  // namespace detail

/// Parses an already loaded document (includes resolved).
inline ExperimentConfig parse_experiment(const Json& doc) {
  ExperimentConfig out;
  detail::expect_object(doc, "");
  Json base = doc;
  Json compare;
  if (base.contains("compare")) {
    compare = base["compare"];
    base.erase("compare");
    out.has_compare = true;
    if (!compare.is_array() || compare.empty()) {
      throw ConfigError("compare", "expected a non-empty list of method blocks");
    }
  }
  if (!out.has_compare) {
    out.base = detail::parse_run(base, "", false);
    return out;
  }
  // The base may omit the algorithm when every entry supplies one.
  Json base_for_check = base;
  if (!base_for_check.contains("algorithm")) base_for_check["algorithm"] = "dcgd_shift";
  out.base = detail::parse_run(base_for_check, "", false);
  std::set<std::string> names;
  for (std::size_t i = 0; i < compare.size(); ++i) {
    const std::string path = "compare[" + std::to_string(i) + "]";
    detail::expect_object(compare[i], path);
    if (compare[i].contains("problem")) {
      throw ConfigError(path + ".problem", "methods in a compare block share one problem");
    }
    RunConfig c = detail::parse_run(detail::merge(base, compare[i]), path, false);
    if (!compare[i].contains("name")) throw ConfigError(path + ".name", "missing required field");
    if (!names.insert(c.name).second) throw ConfigError(path + ".name", "duplicate name '" + c.name + "'");
    out.compare.push_back(std::move(c));
  }
  return out;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& file) {
  return parse_experiment(detail::load_json(file, 0));
}

}  // namespace shiftcomp
