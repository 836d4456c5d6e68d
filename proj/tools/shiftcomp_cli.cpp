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
//
// shiftcomp: run, compare and verify compressed gradient methods.
//
//   shiftcomp run configs/ridge_diana.json --out results/
//   shiftcomp compare configs/ridge_compare.json --seeds 5 --gnuplot
//   shiftcomp verify all --json
//
// Exit codes: 0 converged, 1 bad config or usage, 2 budget exhausted,
// 3 diverged. With several runs the worst code wins.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shiftcomp.hpp"

namespace fs = std::filesystem;
using namespace shiftcomp;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  std::optional<double> eps;
  std::optional<std::int64_t> budget_bits;
  std::optional<std::int64_t> budget_iters;

  void apply(RunConfig& c) const {
    if (seed) c.seed = *seed;
    if (seeds) c.seeds = *seeds;
    if (eps) c.eps = *eps;
    if (budget_bits) c.max_bits = *budget_bits;
    if (budget_iters) c.max_iters = *budget_iters;
  }
};

int exit_code(RunStatus s) { return static_cast<int>(s); }

/// Runs fn(0..count-1) on at most `jobs` threads; rethrows the first error.
void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SHIFTCOMP_OUT"); env != nullptr && *env != '\0') return env;
  return "out";
}

void print_warnings(const Instance& inst) {
  for (const auto& w : inst.warnings) std::cerr << "warning: " << w << '\n';
}

void print_summary(const std::vector<RunRecord>& records, double eps) {
  std::printf("%-24s %8s %10s %14s %16s %12s\n", "method", "seed", "status", "iters_to_eps", "bits_to_eps",
              "final_error");
  for (const auto& r : records) {
    const auto iters = r.iterations_to(eps);
    const auto bits = r.bits_to(eps);
    std::printf("%-24s %8llu %10s %14s %16s %12.4g\n", r.name.c_str(),
                static_cast<unsigned long long>(r.seed), std::string(status_name(r.status)).c_str(),
                iters ? std::to_string(*iters).c_str() : "-", bits ? std::to_string(*bits).c_str() : "-",
                r.trajectory.back().rel_error);
    if (!r.diagnostic.empty() && r.status == RunStatus::kDiverged) {
      std::fprintf(stderr, "%s: %s\n", r.name.c_str(), r.diagnostic.c_str());
    }
  }
}

/// Runs every (method, seed) pair of `methods` on one instance and writes
/// <file>.csv per method, envelopes when seeds > 1, summary.csv and plot.gp.
int execute(const std::vector<RunConfig>& methods, const std::vector<std::string>& files,
            const fs::path& out, unsigned jobs, bool gnuplot) {
  const Instance inst = build_instance(methods.front().problem);
  print_warnings(inst);
  std::vector<MethodSetup> setups;
  for (const auto& m : methods) setups.push_back(resolve_method(m, inst));

  std::vector<std::pair<std::size_t, int>> tasks;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (int s = 0; s < methods[m].seeds; ++s) tasks.emplace_back(m, s);
  }
  std::vector<RunRecord> records(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t t) {
    const auto [m, s] = tasks[t];
    records[t] = run(methods[m], inst, setups[m], replicate_seed(methods[m].seed, s));
  });

  fs::create_directories(out);
  int code = 0;
  std::size_t t = 0;
  std::vector<std::string> csvs;
  std::vector<std::string> titles;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const RunRecord& first = records[t];
    write_atomically(out / (files[m] + ".csv"), trajectory_csv(first));
    csvs.push_back(files[m] + ".csv");
    titles.push_back(methods[m].name);
    if (methods[m].seeds > 1) {
      const MonteCarloRecord mc = aggregate_runs(
          {records.begin() + static_cast<std::ptrdiff_t>(t),
           records.begin() + static_cast<std::ptrdiff_t>(t + methods[m].seeds)});
      write_atomically(out / ("envelope_" + files[m] + ".csv"), envelope_csv(mc));
    }
    for (int s = 0; s < methods[m].seeds; ++s, ++t) code = std::max(code, exit_code(records[t].status));
  }
  write_atomically(out / "summary.csv", summary_csv(records, methods.front().eps));
  if (gnuplot) write_atomically(out / "plot.gp", gnuplot_script(csvs, titles));
  print_summary(records, methods.front().eps);
  return code;
}

int cmd_run(const std::string& config, const Overrides& o, const std::string& out, unsigned jobs,
            bool gnuplot) {
  ExperimentConfig exp = load_experiment(config);
  if (exp.has_compare) throw ConfigError("compare", "run takes a single method; use compare");
  o.apply(exp.base);
  return execute({exp.base}, {"trajectory"}, output_dir(out), jobs, gnuplot);
}

int cmd_compare(const std::string& config, const Overrides& o, const std::string& out, unsigned jobs,
                bool gnuplot) {
  ExperimentConfig exp = load_experiment(config);
  if (!exp.has_compare) throw ConfigError("compare", "missing required field");
  std::vector<std::string> files;
  for (std::size_t i = 0; i < exp.compare.size(); ++i) {
    RunConfig& c = exp.compare[i];
    if (c.name == "summary" || c.name == "trajectory" || c.name.rfind("envelope_", 0) == 0) {
      throw ConfigError("compare[" + std::to_string(i) + "].name", "'" + c.name + "' is reserved");
    }
    o.apply(c);
    files.push_back(c.name);
  }
  for (const auto& c : exp.compare) {
    if (c.eps != exp.compare.front().eps) {
      throw ConfigError("eps", "methods in a compare block share one eps");
    }
  }
  return execute(exp.compare, files, output_dir(out), jobs, gnuplot);
}

int cmd_verify(const std::string& suite, const VerifyOptions& opt, bool json, const std::string& report) {
  const std::vector<Check> checks = run_suite(suite, opt);
  bool all = true;
  nlohmann::json doc;
  doc["suite"] = suite;
  doc["fault"] = opt.fault == Fault::kNone ? "none" : "rand_k_scale";
  doc["samples"] = opt.samples;
  doc["checks"] = nlohmann::json::array();
  for (const auto& c : checks) {
    all = all && c.passed;
    doc["checks"].push_back({{"suite", c.suite}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    if (!json) std::printf("%-4s %-12s %-24s %s\n", c.passed ? "PASS" : "FAIL", c.suite.c_str(), c.name.c_str(),
                           c.detail.c_str());
  }
  doc["passed"] = all;
  if (json) std::cout << doc.dump(2) << '\n';
  if (!report.empty()) write_atomically(report, doc.dump(2) + "\n");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator for distributed gradient methods with shifted compressors"};
  app.require_subcommand(1);

  Overrides o;
  std::string config;
  std::string out;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool gnuplot = false;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (default: $SHIFTCOMP_OUT, else ./out)");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--seeds", o.seeds, "number of Monte-Carlo seeds")->check(CLI::Range(1, 100000));
    sub->add_option("--eps", o.eps, "target relative error")->check(CLI::PositiveNumber);
    sub->add_option("--budget-bits", o.budget_bits, "stop after this many communicated bits (0: none)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--budget-iters", o.budget_iters, "stop after this many iterations")->check(CLI::PositiveNumber);
    sub->add_option("-j,--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
    sub->add_flag("--gnuplot", gnuplot, "also write plot.gp");
  };
  CLI::App* run_cmd = app.add_subcommand("run", "run one method, write trajectory.csv and summary.csv");
  add_run_flags(run_cmd);
  CLI::App* compare_cmd = app.add_subcommand("compare", "run every method of a compare block");
  add_run_flags(compare_cmd);

  std::string suite;
  VerifyOptions vopt;
  std::string fault = "none";
  bool json = false;
  std::string report;
  CLI::App* verify_cmd = app.add_subcommand("verify", "run statistical self-checks");
  verify_cmd->add_option("suite", suite, "compressors, estimators, lyapunov, reductions or all")
      ->required()
      ->check(CLI::IsMember(suite_names()));
  verify_cmd->add_option("--samples", vopt.samples, "Monte-Carlo draws per check")->check(CLI::Range(1000, 100000000));
  verify_cmd->add_option("--seed", vopt.seed, "seed of the checks");
  verify_cmd->add_option("--fault", fault, "inject a fault: none or rand_k_scale")
      ->check(CLI::IsMember({"none", "rand_k_scale"}));
  verify_cmd->add_flag("--json", json, "print the report as JSON");
  verify_cmd->add_option("--report", report, "also write the JSON report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) return cmd_run(config, o, out, jobs, gnuplot);
    if (*compare_cmd) return cmd_compare(config, o, out, jobs, gnuplot);
    if (fault == "rand_k_scale") vopt.fault = Fault::kRandKScale;
    return cmd_verify(suite, vopt, json, report);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
