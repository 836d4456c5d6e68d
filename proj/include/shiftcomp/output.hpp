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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "shiftcomp/harness.hpp"

namespace shiftcomp {

/// 17 significant digits; NaN (undefined Lyapunov value) is an empty field.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename, so readers never see a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw std::runtime_error("short write to '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::string trajectory_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "k,rel_error,cum_bits,lyapunov\n";
  for (const auto& p : record.trajectory) {
    out << p.k << ',' << format_double(p.rel_error) << ',' << p.bits << ','
        << format_double(p.lyapunov) << '\n';
  }
  return out.str();
}

inline std::string_view status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kConverged: return "converged";
    case RunStatus::kBudget: return "budget";
    case RunStatus::kDiverged: return "diverged";
  }
  return "?";
}

/// One row per method: bits and iterations to eps (empty when not reached).
inline std::string summary_csv(const std::vector<RunRecord>& records, double eps) {
  std::ostringstream out;
  out << "method,seed,status,eps,iters_to_eps,bits_to_eps,final_k,final_rel_error,final_bits\n";
  for (const auto& r : records) {
    const auto iters = r.iterations_to(eps);
    const auto bits = r.bits_to(eps);
    const auto& last = r.trajectory.back();
    out << r.name << ',' << r.seed << ',' << status_name(r.status) << ',' << format_double(eps) << ','
        << (iters ? std::to_string(*iters) : "") << ',' << (bits ? std::to_string(*bits) : "") << ','
        << last.k << ',' << format_double(last.rel_error) << ',' << last.bits << '\n';
  }
  return out.str();
}

/// Mean trajectory of a Monte-Carlo batch with its min/max envelope.
inline std::string envelope_csv(const MonteCarloRecord& mc) {
  std::ostringstream out;
  out << "k,mean_rel_error,min_rel_error,max_rel_error,mean_cum_bits\n";
  for (std::size_t t = 0; t < mc.mean_rel_error.size(); ++t) {
    out << t << ',' << format_double(mc.mean_rel_error[t]) << ',' << format_double(mc.min_rel_error[t])
        << ',' << format_double(mc.max_rel_error[t]) << ',' << format_double(mc.mean_bits[t]) << '\n';
  }
  return out.str();
}

/// log10 relative error against cumulative bits, one line per CSV file.
inline std::string gnuplot_script(const std::vector<std::string>& csv_files,
                                  const std::vector<std::string>& titles) {
  std::ostringstream out;
  out << "set datafile separator ','\n"
      << "set xlabel 'communicated bits'\n"
      << "set ylabel 'log10 relative error'\n"
      << "set key outside\n"
      << "plot ";
  for (std::size_t i = 0; i < csv_files.size(); ++i) {
    if (i) out << ", \\\n     ";
    out << "'" << csv_files[i] << "' using 3:(log10($2)) every ::1 with lines title '" << titles[i] << "'";
  }
  out << '\n';
  return out.str();
}

}  // namespace shiftcomp
