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

#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "shiftcomp/config.hpp"
#include "shiftcomp/output.hpp"

namespace shiftcomp {
namespace {

namespace fs = std::filesystem;

std::string error_path(const Json& doc) {
  try {
    parse_experiment(doc);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("shiftcomp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

TEST(Config, MinimalRun) {
  const ExperimentConfig e = parse_experiment(Json::parse(R"({
    "algorithm": "dcgd_shift",
    "compressor": {"kind": "rand_k", "q": 0.1},
    "shift": {"kind": "diana", "alpha": "auto"},
    "budget": {"iters": 500, "bits": 0},
    "eps": 1e-7, "seed": 3
  })"));
  EXPECT_FALSE(e.has_compare);
  const RunConfig& c = e.base;
  EXPECT_EQ(c.method, Method::kDcgdShift);
  ASSERT_EQ(c.compressors.size(), 1u);
  EXPECT_EQ(c.compressors[0].kind, CompressorKind::kRandK);
  EXPECT_DOUBLE_EQ(c.compressors[0].q, 0.1);
  EXPECT_EQ(c.shift.kind, ShiftKind::kDiana);
  EXPECT_FALSE(c.shift.alpha.has_value());
  EXPECT_EQ(c.max_iters, 500);
  EXPECT_EQ(c.max_bits, 0);
  EXPECT_DOUBLE_EQ(c.eps, 1e-7);
  EXPECT_EQ(c.seed, 3u);
}

TEST(Config, ErrorsCarryTheFieldPath) {
  EXPECT_EQ(error_path(Json::parse(R"({"eps": 1e-6})")), "algorithm");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift", "epsilon": 1})")), "epsilon");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "newton"})")), "algorithm");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift", "problem": {"rows": -3}})")), "problem.rows");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift", "problem": {"dims": 3}})")), "problem.dims");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift", "compressor": {"kind": "rand_k", "q": 2}})")),
            "compressor.q");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift", "steps": {"gamma": 0}})")), "steps.gamma");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift", "budget": {"iters": 0}})")), "budget.iters");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "gdci", "shift": {"kind": "diana"}})")), "shift.kind");
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift",
      "problem": {"rows": 5, "workers": 10}})")), "problem.workers");
}

TEST(Config, CompareEntriesMergeOverTheBase) {
  const ExperimentConfig e = parse_experiment(Json::parse(R"({
    "problem": {"rows": 50, "dim": 20, "workers": 5},
    "compressor": {"kind": "rand_k", "k": 4},
    "eps": 1e-6,
    "compare": [
      {"name": "diana", "algorithm": "dcgd_shift", "shift": {"kind": "diana"}},
      {"name": "rand", "algorithm": "dcgd_shift", "shift": {"kind": "rand_diana", "p": 0.5}},
      {"name": "gdci", "algorithm": "gdci", "compressor": {"kind": "natural_dithering", "levels": 2}}
    ]
  })"));
  ASSERT_TRUE(e.has_compare);
  ASSERT_EQ(e.compare.size(), 3u);
  for (const auto& c : e.compare) {
    EXPECT_EQ(c.problem.rows, 50);
    EXPECT_DOUBLE_EQ(c.eps, 1e-6);
  }
  EXPECT_EQ(e.compare[0].compressors[0].k, 4);
  EXPECT_DOUBLE_EQ(*e.compare[1].shift.p, 0.5);
  EXPECT_EQ(e.compare[2].method, Method::kGdci);
  EXPECT_EQ(e.compare[2].compressors[0].kind, CompressorKind::kNaturalDithering);
}

TEST(Config, CompareErrors) {
  EXPECT_EQ(error_path(Json::parse(R"({"compare": [
      {"name": "a", "algorithm": "dcgd_shift"},
      {"name": "b", "algorithm": "dcgd_shift", "shift": {"kind": "nope"}}]})")),
            "compare[1].shift.kind");
  EXPECT_EQ(error_path(Json::parse(R"({"compare": [
      {"name": "a", "algorithm": "dcgd_shift"}, {"name": "a", "algorithm": "gdci"}]})")),
            "compare[1].name");
  EXPECT_EQ(error_path(Json::parse(R"({"compare": [{"algorithm": "dcgd_shift"}]})")), "compare[0].name");
  EXPECT_EQ(error_path(Json::parse(R"({"compare": [
      {"name": "a", "algorithm": "dcgd_shift", "problem": {"rows": 10}}]})")),
            "compare[0].problem");
  EXPECT_EQ(error_path(Json::parse(R"({"compare": []})")), "compare");
}

TEST(Config, NamesMustBeSafeFileNames) {
  EXPECT_EQ(error_path(Json::parse(R"({"name": "../x", "algorithm": "dcgd_shift"})")), "name");
  EXPECT_EQ(error_path(Json::parse(R"({"name": "", "algorithm": "dcgd_shift"})")), "name");
  EXPECT_EQ(error_path(Json::parse(R"({"name": "a b", "algorithm": "dcgd_shift"})")), "name");
  EXPECT_EQ(error_path(Json::parse(R"({"name": "diana_q0.1-v2", "algorithm": "dcgd_shift"})")), "<no error>");
}

TEST(Config, AutoValues) {
  const ExperimentConfig e = parse_experiment(Json::parse(R"({
    "algorithm": "dcgd_shift", "shift": {"kind": "rand_diana", "alpha": "auto", "p": "auto"},
    "steps": {"theorem": "auto"}})"));
  EXPECT_FALSE(e.base.shift.alpha.has_value());
  EXPECT_FALSE(e.base.shift.p.has_value());
  EXPECT_EQ(e.base.steps.theorem, 0);
  EXPECT_EQ(error_path(Json::parse(R"({"algorithm": "dcgd_shift", "shift": {"kind": "diana", "alpha": "fast"}})")),
            "shift.alpha");
}

TEST(Config, IncludesMergeRelativeToTheFile) {
  const fs::path dir = scratch_dir("include");
  fs::create_directories(dir / "common");
  write(dir / "common" / "problem.json", R"({"problem": {"rows": 40, "dim": 8, "workers": 4}, "eps": 1e-3})");
  write(dir / "exp.json", R"({"include": "common/problem.json", "algorithm": "dcgd_shift", "eps": 1e-5,
                             "problem": {"dim": 12}})");
  const ExperimentConfig e = load_experiment(dir / "exp.json");
  EXPECT_EQ(e.base.problem.rows, 40);
  EXPECT_EQ(e.base.problem.dim, 12);
  EXPECT_EQ(e.base.problem.workers, 4);
  EXPECT_DOUBLE_EQ(e.base.eps, 1e-5);
}

TEST(Config, IncludeCycleIsAnError) {
  const fs::path dir = scratch_dir("cycle");
  write(dir / "a.json", R"({"include": "b.json", "algorithm": "dcgd_shift"})");
  write(dir / "b.json", R"({"include": "a.json"})");
  try {
    load_experiment(dir / "a.json");
    FAIL() << "expected a ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "include");
  }
}

TEST(Config, UnreadableOrMalformedFiles) {
  const fs::path dir = scratch_dir("bad");
  EXPECT_THROW(load_experiment(dir / "missing.json"), ConfigError);
  write(dir / "broken.json", R"({"algorithm": )");
  EXPECT_THROW(load_experiment(dir / "broken.json"), ConfigError);
  write(dir / "array.json", "[1, 2]");
  EXPECT_THROW(load_experiment(dir / "array.json"), ConfigError);
}

TEST(Output, FormatDouble) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(std::nan("")), "");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

RunRecord tiny_record() {
  RunRecord r;
  r.name = "m";
  r.seed = 7;
  r.status = RunStatus::kConverged;
  r.trajectory = {{0, 1.0, 0, std::nan("")}, {1, 0.5, 128, std::nan("")}, {2, 0.01, 256, std::nan("")}};
  return r;
}

TEST(Output, TrajectoryCsv) {
  EXPECT_EQ(trajectory_csv(tiny_record()),
            "k,rel_error,cum_bits,lyapunov\n0,1,0,\n1,0.5,128,\n2,0.01,256,\n");
}

TEST(Output, SummaryCsv) {
  const std::string s = summary_csv({tiny_record()}, 0.1);
  EXPECT_EQ(s,
            "method,seed,status,eps,iters_to_eps,bits_to_eps,final_k,final_rel_error,final_bits\n"
            "m,7,converged,0.10000000000000001,2,256,2,0.01,256\n");
  const std::string unreached = summary_csv({tiny_record()}, 1e-9);
  EXPECT_NE(unreached.find("m,7,converged,1.0000000000000001e-09,,,2,"), std::string::npos) << unreached;
}

TEST(Output, EnvelopeCsv) {
  RunRecord a = tiny_record();
  RunRecord b = tiny_record();
  b.trajectory[1].rel_error = 0.25;
  const std::string s = envelope_csv(aggregate_runs({a, b}));
  EXPECT_EQ(s.substr(0, s.find('\n')), "k,mean_rel_error,min_rel_error,max_rel_error,mean_cum_bits");
  EXPECT_NE(s.find("\n1,0.375,0.25,0.5,128\n"), std::string::npos) << s;
}

TEST(Output, WriteAtomicallyLeavesNoTemporary) {
  const fs::path dir = scratch_dir("atomic");
  const fs::path target = dir / "out.csv";
  write_atomically(target, "first\n");
  write_atomically(target, "second\n");
  std::ifstream in(target);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "second");
  EXPECT_FALSE(fs::exists(dir / "out.csv.tmp"));
  EXPECT_THROW(write_atomically(dir / "no" / "such" / "dir.csv", "x"), std::runtime_error);
}

TEST(Output, GnuplotScriptNamesEveryFile) {
  const std::string s = gnuplot_script({"a.csv", "b.csv"}, {"A", "B"});
  EXPECT_NE(s.find("'a.csv'"), std::string::npos);
  EXPECT_NE(s.find("title 'B'"), std::string::npos);
}

}  // namespace
}  // namespace shiftcomp
