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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "huntline/alerting.hpp"
#include "huntline/investigation.hpp"
#include "huntline/metrics.hpp"
#include "huntline/scenario.hpp"
#include "huntline/store.hpp"
#include "huntline/timeline.hpp"

namespace huntline {

// Everything a single incident run needs, shared and immutable.
struct Runtime {
  const TelemetryStore* store = nullptr;
  const ContractGateway* gateway = nullptr;
  const AttackMap* attack = nullptr;
  const Denylist* denylist = nullptr;
  TimelineConfig timeline_cfg;
  InvestigationConfig investigation_cfg;
};

struct IncidentRunResult {
  std::string arm;  // "full" or "baseline"
  ActivityTimeline timeline;
  InvestigationResult investigation;
  std::vector<GapFinding> findings;
  std::vector<DynamicAlert> alerts;
  std::vector<ContractOutcome> outcomes;
  bool job_ok = true;
  std::string error;

  UsageReport usage() const { return usage_report(outcomes); }

  Json report_json() const {
    Json alerts_json = Json::array();
    for (const auto& a : alerts) alerts_json.push_back(a.to_json());
    Json findings_json = Json::array();
    for (const auto& f : findings) findings_json.push_back(f.to_json());
    Json outcome_log = Json::array();
    for (const auto& o : outcomes) {
      Json entry = o.to_json();
      entry.erase("output");  // transcripts keep decisions and violations, not payloads
      outcome_log.push_back(std::move(entry));
    }
    return Json{{"arm", arm},
                {"incident_id", timeline.incident_id},
                {"job_ok", job_ok},
                {"error", error},
                {"build_stats", timeline.build_stats.to_json()},
                {"investigation", investigation.to_json()},
                {"findings", findings_json},
                {"alerts", alerts_json},
                {"contract_outcomes", outcome_log},
                {"usage", usage().to_json()}};
  }
};

// Full pipeline: timeline construction, planner-executor investigation, gap
// assessment, alert generation.
inline IncidentRunResult run_full(const Incident& incident, const Runtime& rt,
                                  const std::vector<FeedRecord>& ueba,
                                  const std::vector<FeedRecord>& ti) {
  IncidentRunResult result;
  result.arm = "full";
  try {
    TimelineBuilder builder(*rt.store, *rt.gateway, *rt.denylist, rt.timeline_cfg);
    result.timeline = builder.build(incident, ueba, ti, result.outcomes);

    Investigator investigator(*rt.gateway, rt.investigation_cfg);
    result.investigation = investigator.investigate(incident, result.timeline, result.outcomes);

    Alerting alerting(*rt.gateway, *rt.attack);
    result.findings =
        alerting.assess_gaps(result.investigation.summary, result.investigation.tasks,
                             result.investigation.evidence, result.timeline, incident,
                             result.outcomes);
    result.alerts = alerting.generate_alerts(result.findings, incident, result.timeline,
                                             result.investigation.evidence, result.outcomes);
  } catch (const JobFailureError& e) {
    result.job_ok = false;
    result.error = e.what();
  }
  return result;
}

// Row-only variant: identical timeline, per-row classification instead of the
// planner-executor loop, same alert validation.
inline IncidentRunResult run_baseline_arm(const Incident& incident, const Runtime& rt,
                                          const std::vector<FeedRecord>& ueba,
                                          const std::vector<FeedRecord>& ti) {
  IncidentRunResult result;
  result.arm = "baseline";
  try {
    TimelineBuilder builder(*rt.store, *rt.gateway, *rt.denylist, rt.timeline_cfg);
    result.timeline = builder.build(incident, ueba, ti, result.outcomes);
    result.investigation.summary = summarize_incident(incident);
    result.alerts = run_baseline(result.timeline, incident, *rt.gateway, *rt.attack,
                                 rt.investigation_cfg.concurrency, result.outcomes);
  } catch (const JobFailureError& e) {
    result.job_ok = false;
    result.error = e.what();
  }
  return result;
}

// ---------------------------------------------------------------------------
// evaluation matrix

struct CohortSpec {
  struct Entry {
    std::string template_name;
    std::uint64_t seed = 0;
  };
  std::vector<Entry> entries;
  int repeats = 3;
  bool full_arm = true;
  bool baseline_arm = true;
};

// Ten scenarios cycling through the shipped templates; seeds derive from the
// run seed so the whole cohort is reproducible from one number.
inline CohortSpec default_cohort(std::uint64_t base_seed) {
  static const std::vector<std::string> cycle = {"ransomware", "initial-access", "exfiltration"};
  CohortSpec cohort;
  for (int i = 1; i <= 10; ++i) {
    cohort.entries.push_back(
        {cycle[(i - 1) % cycle.size()], base_seed * 100 + static_cast<std::uint64_t>(i)});
  }
  return cohort;
}

struct CaseRecord {
  std::string scenario_id;
  std::string template_name;
  Phase phase = Phase::InitialAccess;
  std::string arm;
  int repeat = 1;
  RecoveryCounts recovery;
  BuildStats build_stats;
  double cost_usd = 0.0;
  std::int64_t total_attempts = 0;
  std::int64_t invalid_attempts = 0;
  int alerts_emitted = 0;
  int removed_alerts = 0;
  int visible_alerts = 0;
  int tasks_planned = 0;
  int rounds_executed = 0;
  int investigation_rounds = 0;
  int audit_violations = 0;
  bool job_ok = true;

  Json to_json() const {
    return Json{{"scenario_id", scenario_id},
                {"template", template_name},
                {"phase", to_string(phase)},
                {"arm", arm},
                {"repeat", repeat},
                {"recovery", recovery.to_json()},
                {"build_stats", build_stats.to_json()},
                {"cost_usd", cost_usd},
                {"total_attempts", total_attempts},
                {"invalid_attempts", invalid_attempts},
                {"alerts_emitted", alerts_emitted},
                {"removed_alerts", removed_alerts},
                {"visible_alerts", visible_alerts},
                {"tasks_planned", tasks_planned},
                {"rounds_executed", rounds_executed},
                {"investigation_rounds", investigation_rounds},
                {"audit_violations", audit_violations},
                {"job_ok", job_ok}};
  }
};

struct ArmPhaseAggregate {
  // one pooled count set per repeat, plus mean/std of derived metrics
  std::vector<PrfCounts> per_repeat;
  double precision_mean = 0.0, precision_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
  PrfCounts pooled;

  void finalize() {
    std::vector<double> ps, rs, f1s;
    for (const auto& c : per_repeat) {
      if (auto p = c.precision()) ps.push_back(*p);
      rs.push_back(c.recall());
      f1s.push_back(c.f1());
      pooled.merge(c);
    }
    precision_mean = mean_of(ps);
    precision_std = std_of(ps);
    recall_mean = mean_of(rs);
    recall_std = std_of(rs);
    f1_mean = mean_of(f1s);
    f1_std = std_of(f1s);
  }

  Json to_json() const {
    return Json{{"precision_mean", precision_mean}, {"precision_std", precision_std},
                {"recall_mean", recall_mean},       {"recall_std", recall_std},
                {"f1_mean", f1_mean},               {"f1_std", f1_std},
                {"pooled", pooled.to_json()}};
  }
};

struct OpsSummary {
  double tables_selected_median = 0.0;
  double raw_rows_median = 0.0;
  double post_rows_median = 0.0;
  double compression_median = 0.0;
  double compression_mean = 0.0;
  double cost_p50 = 0.0, cost_p75 = 0.0, cost_p95 = 0.0;
  double invalid_response_rate = 0.0;
  double job_failure_rate = 0.0;
  std::int64_t audit_violations = 0;

  Json to_json() const {
    return Json{{"tables_selected_median", tables_selected_median},
                {"raw_rows_median", raw_rows_median},
                {"post_rows_median", post_rows_median},
                {"compression_median", compression_median},
                {"compression_mean", compression_mean},
                {"cost_p50", cost_p50},
                {"cost_p75", cost_p75},
                {"cost_p95", cost_p95},
                {"invalid_response_rate", invalid_response_rate},
                {"job_failure_rate", job_failure_rate},
                {"audit_violations", audit_violations}};
  }
};

struct EvalReport {
  Json config;
  std::vector<CaseRecord> cases;
  // arm -> phase-name (or "macro"/"micro") -> aggregate
  std::map<std::string, std::map<std::string, ArmPhaseAggregate>> aggregates;
  OpsSummary ops;
  // mean removed/visible alerts per phase, mirrored in the report table
  std::map<std::string, std::pair<double, double>> alerts_removed_visible;

  Json to_json() const {
    Json cases_json = Json::array();
    for (const auto& c : cases) cases_json.push_back(c.to_json());
    Json aggregates_json = Json::object();
    for (const auto& [arm, phases] : aggregates) {
      Json phase_json = Json::object();
      for (const auto& [phase, agg] : phases) phase_json[phase] = agg.to_json();
      aggregates_json[arm] = phase_json;
    }
    Json removed = Json::object();
    for (const auto& [phase, rv] : alerts_removed_visible) {
      removed[phase] = Json{{"removed_mean", rv.first}, {"visible_mean", rv.second}};
    }
    return Json{{"config", config},
                {"cases", cases_json},
                {"aggregates", aggregates_json},
                {"alerts_removed_visible", removed},
                {"ops", ops.to_json()}};
  }
};

// Pure fold over completed case records.
inline void compute_metrics(EvalReport& report) {
  std::set<int> repeats;
  std::set<std::string> arms;
  for (const auto& c : report.cases) {
    repeats.insert(c.repeat);
    arms.insert(c.arm);
  }

  for (const auto& arm : arms) {
    std::map<std::string, ArmPhaseAggregate>& by_phase = report.aggregates[arm];
    for (Phase phase : all_phases()) {
      ArmPhaseAggregate agg;
      for (int rep : repeats) {
        PrfCounts pooled;
        for (const auto& c : report.cases) {
          if (c.arm == arm && c.repeat == rep && c.phase == phase) pooled.merge(c.recovery.counts);
        }
        agg.per_repeat.push_back(pooled);
      }
      agg.finalize();
      by_phase[to_string(phase)] = std::move(agg);
    }
    // micro: pooled counts across phases per repeat
    ArmPhaseAggregate micro;
    for (int rep : repeats) {
      PrfCounts pooled;
      for (const auto& c : report.cases) {
        if (c.arm == arm && c.repeat == rep) pooled.merge(c.recovery.counts);
      }
      micro.per_repeat.push_back(pooled);
    }
    micro.finalize();
    // macro: unweighted mean of per-phase metrics per repeat
    ArmPhaseAggregate macro;
    {
      std::vector<double> ps, rs, f1s;
      std::size_t rep_count = repeats.size();
      for (std::size_t r = 0; r < rep_count; ++r) {
        std::vector<double> phase_p, phase_r, phase_f1;
        for (Phase phase : all_phases()) {
          const auto& agg = by_phase[to_string(phase)];
          const PrfCounts& c = agg.per_repeat[r];
          if (auto p = c.precision()) phase_p.push_back(*p);
          phase_r.push_back(c.recall());
          phase_f1.push_back(c.f1());
        }
        if (!phase_p.empty()) ps.push_back(mean_of(phase_p));
        rs.push_back(mean_of(phase_r));
        f1s.push_back(mean_of(phase_f1));
      }
      macro.precision_mean = mean_of(ps);
      macro.precision_std = std_of(ps);
      macro.recall_mean = mean_of(rs);
      macro.recall_std = std_of(rs);
      macro.f1_mean = mean_of(f1s);
      macro.f1_std = std_of(f1s);
      for (Phase phase : all_phases()) macro.pooled.merge(by_phase[to_string(phase)].pooled);
    }
    by_phase["micro"] = std::move(micro);
    by_phase["macro"] = std::move(macro);
  }

  // removed/visible alert means per phase (same for both arms)
  for (Phase phase : all_phases()) {
    std::vector<double> removed, visible;
    for (const auto& c : report.cases) {
      if (c.phase != phase || c.repeat != *repeats.begin()) continue;
      if (c.arm != *arms.begin()) continue;
      removed.push_back(static_cast<double>(c.removed_alerts));
      visible.push_back(static_cast<double>(c.visible_alerts));
    }
    report.alerts_removed_visible[to_string(phase)] = {mean_of(removed), mean_of(visible)};
  }

  // ops summary: timeline stats and costs from the full arm when present
  const std::string stats_arm = arms.count("full") ? "full" : *arms.begin();
  std::vector<double> tables, raw, post, compression, costs;
  std::int64_t attempts = 0, invalid = 0, failures = 0, total_jobs = 0, audit_violations = 0;
  for (const auto& c : report.cases) {
    ++total_jobs;
    if (!c.job_ok) ++failures;
    attempts += c.total_attempts;
    invalid += c.invalid_attempts;
    audit_violations += c.audit_violations;
    if (c.arm != stats_arm) continue;
    tables.push_back(static_cast<double>(c.build_stats.tables_selected));
    raw.push_back(static_cast<double>(c.build_stats.raw_row_count));
    post.push_back(static_cast<double>(c.build_stats.post_aggregation_row_count));
    compression.push_back(c.build_stats.compression_ratio);
    costs.push_back(c.cost_usd);
  }
  report.ops.tables_selected_median = median_of(tables);
  report.ops.raw_rows_median = median_of(raw);
  report.ops.post_rows_median = median_of(post);
  report.ops.compression_median = median_of(compression);
  report.ops.compression_mean = mean_of(compression);
  report.ops.cost_p50 = percentile_of(costs, 50);
  report.ops.cost_p75 = percentile_of(costs, 75);
  report.ops.cost_p95 = percentile_of(costs, 95);
  report.ops.invalid_response_rate =
      attempts == 0 ? 0.0 : static_cast<double>(invalid) / static_cast<double>(attempts);
  report.ops.job_failure_rate =
      total_jobs == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(total_jobs);
  report.ops.audit_violations = audit_violations;
}

struct EvalOptions {
  std::filesystem::path scenarios_dir;  // where bundles are generated
  std::filesystem::path data_dir;       // attack map, denylist, contracts, prices
  std::string price_profile = "default";
  unsigned concurrency = 4;
  std::uint64_t seed = 7;
  bool retry_feedback = true;
  TimelineConfig timeline_cfg;
  InvestigationConfig investigation_cfg;
};

// Runs scenarios x phases x arms x repeats against scripted-oracle fixtures
// bundled with each scenario.
inline EvalReport run_eval(const CohortSpec& cohort, const EvalOptions& options) {
  const AttackMap attack = AttackMap::load(options.data_dir / "attack_techniques.json");
  const Denylist denylist = Denylist::load(options.data_dir / "denylist.json");
  const ContractRegistry registry = ContractRegistry::load_dir(options.data_dir / "contracts");
  const PriceProfile prices =
      PriceProfile::load(options.data_dir / "price_profiles.json", options.price_profile);

  EvalReport report;
  report.config = Json{{"seed", options.seed},
                       {"repeats", cohort.repeats},
                       {"scenarios", static_cast<int>(cohort.entries.size())},
                       {"arms", Json::array()},
                       {"price_profile", options.price_profile}};
  if (cohort.full_arm) report.config["arms"].push_back("full");
  if (cohort.baseline_arm) report.config["arms"].push_back("baseline");

  for (const auto& entry : cohort.entries) {
    ScenarioOptions sopt;  // eval cohort: every stage alerted, all phases removable
    Scenario scenario = generate_scenario(
        entry.template_name, entry.seed,
        options.scenarios_dir / (entry.template_name + "-" +
                                 (entry.seed % 100 < 10 ? "0" : "") +
                                 std::to_string(entry.seed % 100)),
        sopt);
    validate_scenario(scenario, attack);

    TelemetryStore store = load_store(scenario.manifest_path(),
                                      options.timeline_cfg.max_lookback_hours);
    auto ueba = load_feed(scenario.ueba_path());
    auto ti = load_feed(scenario.ti_path());
    ScriptedBackend oracle = ScriptedBackend::load_dir(scenario.oracle_dir());
    GatewayOptions gw_options;
    gw_options.prices = prices;
    gw_options.retry_feedback = options.retry_feedback;
    ContractGateway gateway(registry, oracle, gw_options);

    Runtime rt;
    rt.store = &store;
    rt.gateway = &gateway;
    rt.attack = &attack;
    rt.denylist = &denylist;
    rt.timeline_cfg = options.timeline_cfg;
    rt.timeline_cfg.concurrency = options.concurrency;
    rt.investigation_cfg = options.investigation_cfg;
    rt.investigation_cfg.concurrency = options.concurrency;

    for (Phase phase : all_phases()) {
      auto [visible, spec] = hold_out(scenario.incident, phase, scenario.scenario_id);
      std::vector<std::string> arms;
      if (cohort.full_arm) arms.push_back("full");
      if (cohort.baseline_arm) arms.push_back("baseline");
      for (const auto& arm : arms) {
        for (int rep = 1; rep <= cohort.repeats; ++rep) {
          IncidentRunResult run = arm == "full" ? run_full(visible, rt, ueba, ti)
                                                : run_baseline_arm(visible, rt, ueba, ti);
          CaseRecord rec;
          rec.scenario_id = scenario.scenario_id;
          rec.template_name = scenario.template_name;
          rec.phase = phase;
          rec.arm = arm;
          rec.repeat = rep;
          rec.recovery = score_recovery(run.alerts, spec, scenario.ground_truth);
          rec.build_stats = run.timeline.build_stats;
          UsageReport usage = run.usage();
          rec.cost_usd = usage.total.cost_usd;
          rec.total_attempts = usage.total_attempts;
          rec.invalid_attempts = usage.invalid_attempts;
          rec.alerts_emitted = static_cast<int>(run.alerts.size());
          rec.removed_alerts = static_cast<int>(spec.removed_alert_ids.size());
          rec.visible_alerts = spec.visible_alert_count;
          rec.tasks_planned = static_cast<int>(run.investigation.tasks.size());
          rec.rounds_executed = run.timeline.build_stats.expansion_rounds;
          rec.investigation_rounds = run.investigation.rounds_executed;
          rec.audit_violations = static_cast<int>(
              audit_alerts(run.alerts, run.timeline, visible, attack).size());
          rec.job_ok = run.job_ok;
          report.cases.push_back(std::move(rec));
        }
      }
    }
  }
  compute_metrics(report);
  return report;
}

}  // namespace huntline
