// Copyright 2026 the huntline authors
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

#pragma once

#include <iomanip>
#include <sstream>
#include <string>

#include "huntline/metrics.hpp"
#include "huntline/pipeline.hpp"

namespace huntline {

namespace report_detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace report_detail

// Phase-level precision with Wilson intervals over pooled counts, plus micro
// and macro rows.
inline std::string render_precision_table(const EvalReport& report, const std::string& arm) {
  using report_detail::fixed;
  using report_detail::pad;
  auto it = report.aggregates.find(arm);
  if (it == report.aggregates.end()) return "(no data for arm " + arm + ")\n";
  const auto& phases = it->second;

  std::ostringstream out;
  out << "Alert-level precision by attack phase (" << arm << " arm)\n";
  out << pad("Phase", 16) << pad("TP", 6) << pad("FP", 6) << pad("Pr", 8) << "95% CI\n";
  std::vector<std::pair<std::int64_t, std::int64_t>> macro_inputs;
  for (Phase phase : all_phases()) {
    const auto& agg = phases.at(to_string(phase));
    const PrfCounts& c = agg.pooled;
    std::string pr = "-", ci = "-";
    if (c.tp + c.fp > 0) {
      auto [lo, hi] = wilson_ci(c.tp, c.tp + c.fp);
      pr = fixed(round_percent(static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)), 1) + "%";
      ci = fixed(round_percent(lo), 1) + "-" + fixed(round_percent(hi), 1) + "%";
      macro_inputs.emplace_back(c.tp, c.tp + c.fp);
    }
    out << pad(to_string(phase), 16) << pad(std::to_string(c.tp), 6)
        << pad(std::to_string(c.fp), 6) << pad(pr, 8) << ci << "\n";
  }
  PrfCounts micro = phases.at("micro").pooled;
  if (micro.tp + micro.fp > 0) {
    auto [lo, hi] = wilson_ci(micro.tp, micro.tp + micro.fp);
    out << pad("Micro", 16) << pad(std::to_string(micro.tp), 6)
        << pad(std::to_string(micro.fp), 6)
        << pad(fixed(round_percent(static_cast<double>(micro.tp) /
                                   static_cast<double>(micro.tp + micro.fp)),
                     1) + "%",
               8)
        << fixed(round_percent(lo), 1) << "-" << fixed(round_percent(hi), 1) << "%\n";
  }
  if (!macro_inputs.empty()) {
    double mean = 0.0;
    for (auto& [s, n] : macro_inputs) mean += static_cast<double>(s) / static_cast<double>(n);
    mean /= static_cast<double>(macro_inputs.size());
    auto [lo, hi] = macro_proportion_ci(macro_inputs);
    out << pad("Macro", 16) << pad("-", 6) << pad("-", 6)
        << pad(fixed(round_percent(mean), 1) + "%", 8) << fixed(round_percent(lo), 1) << "-"
        << fixed(round_percent(hi), 1) << "%\n";
  }
  return out.str();
}

// Gap-recovery table: per phase, removed/visible alert means, precision,
// recall, and F1 (mean +- std across repeats) for both arms.
inline std::string render_recovery_table(const EvalReport& report) {
  using report_detail::fixed;
  using report_detail::pad;
  std::ostringstream out;
  out << "Offline gap-recovery by removed phase\n";
  out << pad("Phase", 16) << pad("A_rm", 6) << pad("A_vis", 7) << pad("Pr", 6) << pad("Re", 6)
      << pad("F1(full)", 13) << pad("F1(baseline)", 15) << "dF1\n";

  auto full = report.aggregates.find("full");
  auto base = report.aggregates.find("baseline");
  auto row = [&](const std::string& label, const std::string& key) {
    std::string a_rm = "-", a_vis = "-";
    auto rv = report.alerts_removed_visible.find(key);
    if (rv != report.alerts_removed_visible.end()) {
      a_rm = fixed(rv->second.first, 1);
      a_vis = fixed(rv->second.second, 1);
    }
    std::string pr = "-", re = "-", f1f = "-", f1b = "-", delta = "-";
    double f1_full = 0.0, f1_base = 0.0;
    bool have_full = false, have_base = false;
    if (full != report.aggregates.end() && full->second.count(key)) {
      const auto& agg = full->second.at(key);
      pr = fixed(agg.precision_mean, 2);
      re = fixed(agg.recall_mean, 2);
      f1f = fixed(agg.f1_mean, 2) + "+-" + fixed(agg.f1_std, 2);
      f1_full = agg.f1_mean;
      have_full = true;
    }
    if (base != report.aggregates.end() && base->second.count(key)) {
      const auto& agg = base->second.at(key);
      f1b = fixed(agg.f1_mean, 2) + "+-" + fixed(agg.f1_std, 2);
      f1_base = agg.f1_mean;
      have_base = true;
      if (!have_full) {
        pr = fixed(agg.precision_mean, 2);
        re = fixed(agg.recall_mean, 2);
      }
    }
    if (have_full && have_base) {
      delta = (f1_full - f1_base >= 0 ? "+" : "") + fixed(f1_full - f1_base, 2);
    }
    out << pad(label, 16) << pad(a_rm, 6) << pad(a_vis, 7) << pad(pr, 6) << pad(re, 6)
        << pad(f1f, 13) << pad(f1b, 15) << delta << "\n";
  };
  for (Phase phase : all_phases()) row(to_string(phase), to_string(phase));
  row("Macro", "macro");
  row("Micro", "micro");
  return out.str();
}

// Scale, cost, and stability summary.
inline std::string render_ops_summary(const EvalReport& report) {
  using report_detail::fixed;
  const OpsSummary& ops = report.ops;
  std::ostringstream out;
  out << "Scale, cost, and stability\n";
  out << "  telemetry tables selected (median):   " << fixed(ops.tables_selected_median, 1)
      << "\n";
  out << "  raw rows before aggregation (median): " << fixed(ops.raw_rows_median, 0) << "\n";
  out << "  timeline rows after aggregation:      " << fixed(ops.post_rows_median, 0)
      << " (median)\n";
  out << "  compression ratio:                    " << fixed(ops.compression_median, 1)
      << "x median, " << fixed(ops.compression_mean, 1) << "x mean\n";
  out << "  token cost per investigation (USD):   p50 " << fixed(ops.cost_p50, 2) << ", p75 "
      << fixed(ops.cost_p75, 2) << ", p95 " << fixed(ops.cost_p95, 2) << "\n";
  out << "  schema-invalid response rate:         "
      << fixed(ops.invalid_response_rate * 100.0, 2) << "%\n";
  out << "  job-level failure rate:               " << fixed(ops.job_failure_rate * 100.0, 2)
      << "%\n";
  out << "  grounding-audit violations:           " << ops.audit_violations << "\n";
  return out.str();
}

inline std::string render_eval_report(const EvalReport& report) {
  std::string out;
  if (report.aggregates.count("full")) out += render_precision_table(report, "full") + "\n";
  if (!report.aggregates.empty() && !report.aggregates.count("full")) {
    out += render_precision_table(report, report.aggregates.begin()->first) + "\n";
  }
  out += render_recovery_table(report) + "\n";
  out += render_ops_summary(report);
  return out;
}

}  // namespace huntline
