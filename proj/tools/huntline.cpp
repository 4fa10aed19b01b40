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

#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "huntline/pipeline.hpp"
#include "huntline/remote.hpp"
#include "huntline/report.hpp"

namespace {

using namespace huntline;

constexpr int kExitOk = 0;
constexpr int kExitJobFailure = 1;
constexpr int kExitConfigError = 2;

struct GlobalOptions {
  std::filesystem::path data_dir;
  std::string model_backend = "oracle";
  std::string endpoint = "http://localhost:8080";
  std::string model = "gpt-4.1";
  std::filesystem::path out = "out";
  std::uint64_t seed = 7;
  unsigned concurrency = 4;
  std::string price_profile = "default";
  std::string format = "table";
  std::int64_t row_budget = 1000;
  int max_frontier = 10;
  int max_lookback_hours = 720;
  double min_priority = 0.25;
};

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("HUNTLINE_DATA_DIR")) return env;
  return std::filesystem::path(HUNTLINE_SOURCE_DIR) / "data";
}

// Nonzero exits carry a machine-readable error record on stderr, and in
// <out>/error.json when the output directory is usable.
int fail(const GlobalOptions& opts, int code, const std::string& kind,
         const std::string& message) {
  Json record{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << record.dump() << "\n";
  try {
    write_file(opts.out / "error.json", record.dump(2) + "\n");
  } catch (...) {
    // stderr record already emitted
  }
  return code;
}

struct Loaded {
  AttackMap attack;
  Denylist denylist;
  ContractRegistry registry;
  PriceProfile prices;
};

Loaded load_shared(const GlobalOptions& opts) {
  Loaded l;
  l.attack = AttackMap::load(opts.data_dir / "attack_techniques.json");
  l.denylist = Denylist::load(opts.data_dir / "denylist.json");
  l.registry = ContractRegistry::load_dir(opts.data_dir / "contracts");
  l.prices = PriceProfile::load(opts.data_dir / "price_profiles.json", opts.price_profile);
  return l;
}

// "oracle" (scenario-bundled fixtures), "oracle:<dir>", or "remote".
std::unique_ptr<ModelBackend> make_backend(const GlobalOptions& opts,
                                           const std::filesystem::path& scenario_oracle_dir) {
  if (opts.model_backend == "remote") {
    RemoteBackendConfig cfg;
    cfg.endpoint = opts.endpoint;
    cfg.model = opts.model;
    cfg.max_in_flight = static_cast<int>(opts.concurrency);
    return std::make_unique<HttpBackend>(cfg);
  }
  if (opts.model_backend == "oracle") {
    if (scenario_oracle_dir.empty()) {
      throw ConfigError("--model-backend oracle needs a scenario bundle or oracle:<dir>");
    }
    return std::make_unique<ScriptedBackend>(ScriptedBackend::load_dir(scenario_oracle_dir));
  }
  if (opts.model_backend.rfind("oracle:", 0) == 0) {
    return std::make_unique<ScriptedBackend>(
        ScriptedBackend::load_dir(opts.model_backend.substr(7)));
  }
  throw ConfigError("unknown --model-backend: " + opts.model_backend);
}

TimelineConfig timeline_config(const GlobalOptions& opts) {
  TimelineConfig cfg;
  cfg.row_budget = opts.row_budget;
  cfg.max_frontier = opts.max_frontier;
  cfg.max_lookback_hours = opts.max_lookback_hours;
  cfg.concurrency = opts.concurrency;
  return cfg;
}

void write_run_artifacts(const std::filesystem::path& dir, const IncidentRunResult& run) {
  write_file(dir / "run_report.json", run.report_json().dump(2) + "\n");
  write_file(dir / "timeline.json", run.timeline.to_json().dump() + "\n");
  emit(run.alerts, dir / "alerts.jsonl");
}

int cmd_investigate(const GlobalOptions& opts, const std::string& scenario_arg,
                    const std::string& incidents_file, const std::string& tables_manifest,
                    const std::string& ueba_file, const std::string& ti_file) {
  Loaded shared = load_shared(opts);
  GatewayOptions gw_options;
  gw_options.prices = shared.prices;

  std::vector<Incident> incidents;
  std::filesystem::path manifest;
  std::filesystem::path oracle_dir;
  std::vector<FeedRecord> ueba, ti;
  std::vector<GroundTruthStage> ground_truth;  // present only for scenario bundles

  if (!scenario_arg.empty()) {
    std::filesystem::path bundle = scenario_arg;
    if (!std::filesystem::is_directory(bundle)) {
      // "<template>-<NN>" generates a demo bundle with two open gaps
      auto dash = scenario_arg.find_last_of('-');
      if (dash == std::string::npos) {
        throw ConfigError("scenario not found: " + scenario_arg);
      }
      ScenarioOptions sopt;
      sopt.unalerted_quiet_stages = 2;
      bundle = opts.out / "scenarios" / scenario_arg;
      generate_scenario(scenario_arg.substr(0, dash),
                        std::stoull(scenario_arg.substr(dash + 1)), bundle, sopt);
    }
    Scenario scenario = Scenario::load(bundle);
    validate_scenario(scenario, shared.attack);
    incidents = {scenario.incident};
    manifest = scenario.manifest_path();
    oracle_dir = scenario.oracle_dir();
    ueba = load_feed(scenario.ueba_path());
    ti = load_feed(scenario.ti_path());
    ground_truth = scenario.ground_truth;
  } else {
    if (incidents_file.empty() || tables_manifest.empty()) {
      throw ConfigError("either --scenario or both --incidents and --tables are required");
    }
    incidents = load_incidents(incidents_file, shared.attack);
    manifest = tables_manifest;
    if (!ueba_file.empty()) ueba = load_feed(ueba_file);
    if (!ti_file.empty()) ti = load_feed(ti_file);
  }

  TelemetryStore store = load_store(manifest, opts.max_lookback_hours);
  auto backend = make_backend(opts, oracle_dir);
  ContractGateway gateway(shared.registry, *backend, gw_options);

  Runtime rt;
  rt.store = &store;
  rt.gateway = &gateway;
  rt.attack = &shared.attack;
  rt.denylist = &shared.denylist;
  rt.timeline_cfg = timeline_config(opts);
  rt.investigation_cfg.concurrency = opts.concurrency;

  BatchConfig batching;
  batching.min_priority = opts.min_priority;
  auto batches = batch_incidents(incidents, batching);

  int failures = 0;
  int investigated = 0;
  int total_alerts = 0;
  for (const auto& batch : batches) {
    for (const auto& incident : batch) {
      IncidentRunResult run = run_full(incident, rt, ueba, ti);
      auto dir = opts.out / "investigate" / incident.incident_id;
      write_run_artifacts(dir, run);
      ++investigated;
      total_alerts += static_cast<int>(run.alerts.size());
      if (!run.job_ok) {
        ++failures;
        std::cerr << incident.incident_id << ": job failed: " << run.error << "\n";
        continue;
      }
      std::cout << incident.incident_id << ": " << run.alerts.size() << " dynamic alert(s), "
                << run.timeline.build_stats.post_aggregation_row_count << " timeline rows ("
                << run.timeline.build_stats.raw_row_count << " raw, "
                << run.timeline.build_stats.tables_selected << " tables), cost $"
                << report_detail::fixed(run.usage().total.cost_usd, 2) << "\n";
      for (const auto& a : run.alerts) {
        std::cout << "  [" << to_string(a.severity) << "] " << a.title << " ("
                  << a.mitre_techniques.front() << ")\n";
      }
    }
  }
  std::cout << investigated << " incident(s) investigated, " << total_alerts
            << " alert(s) emitted, artifacts under " << (opts.out / "investigate").string()
            << "\n";
  if (failures > 0) {
    return fail(opts, kExitJobFailure, "JobFailure",
                std::to_string(failures) + " incident job(s) failed after retries");
  }
  return kExitOk;
}

int cmd_eval(const GlobalOptions& opts, const std::string& cohort_arg, int repeats,
             bool baseline_only, bool full_only) {
  CohortSpec cohort;
  if (cohort_arg == "default") {
    cohort = default_cohort(opts.seed);
  } else {
    Json spec = read_json(cohort_arg);
    for (const auto& e : spec.at("entries")) {
      cohort.entries.push_back({e.at("template").get<std::string>(),
                                e.at("seed").get<std::uint64_t>()});
    }
    if (spec.contains("repeats")) cohort.repeats = spec["repeats"].get<int>();
  }
  if (repeats > 0) cohort.repeats = repeats;
  if (baseline_only && full_only) throw ConfigError("--baseline-only conflicts with --full-only");
  if (baseline_only) cohort.full_arm = false;
  if (full_only) cohort.baseline_arm = false;

  EvalOptions options;
  options.scenarios_dir = opts.out / "scenarios";
  options.data_dir = opts.data_dir;
  options.price_profile = opts.price_profile;
  options.concurrency = opts.concurrency;
  options.seed = opts.seed;
  options.timeline_cfg = timeline_config(opts);
  options.investigation_cfg.concurrency = opts.concurrency;

  EvalReport report = run_eval(cohort, options);
  write_file(opts.out / "eval" / "eval_report.json", report.to_json().dump(2) + "\n");
  std::vector<Json> case_lines;
  for (const auto& c : report.cases) case_lines.push_back(c.to_json());
  write_jsonl(opts.out / "eval" / "cases.jsonl", case_lines);
  const std::string rendered = render_eval_report(report);
  write_file(opts.out / "eval" / "report.txt", rendered);

  if (opts.format == "json") {
    std::cout << report.to_json().dump(2) << "\n";
  } else {
    std::cout << rendered;
  }
  return kExitOk;
}

int cmd_report(const GlobalOptions& opts, const std::string& dir) {
  std::filesystem::path report_path = std::filesystem::path(dir) / "eval_report.json";
  if (!std::filesystem::exists(report_path)) {
    report_path = std::filesystem::path(dir) / "eval" / "eval_report.json";
  }
  if (!std::filesystem::exists(report_path)) {
    throw Error("MissingReports", "no eval_report.json under " + dir);
  }
  Json j = read_json(report_path);
  if (opts.format == "json") {
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  // Rebuild the report struct from raw cases so table and json views always
  // come from the same numbers.
  EvalReport report;
  report.config = j.at("config");
  for (const auto& c : j.at("cases")) {
    CaseRecord rec;
    rec.scenario_id = c.at("scenario_id").get<std::string>();
    rec.template_name = c.at("template").get<std::string>();
    rec.phase = phase_from_string(c.at("phase").get<std::string>());
    rec.arm = c.at("arm").get<std::string>();
    rec.repeat = c.at("repeat").get<int>();
    rec.recovery.counts.tp = c.at("recovery").at("tp").get<std::int64_t>();
    rec.recovery.counts.fp = c.at("recovery").at("fp").get<std::int64_t>();
    rec.recovery.counts.fn = c.at("recovery").at("fn").get<std::int64_t>();
    rec.build_stats = BuildStats::from_json(c.at("build_stats"));
    rec.cost_usd = c.at("cost_usd").get<double>();
    rec.total_attempts = c.at("total_attempts").get<std::int64_t>();
    rec.invalid_attempts = c.at("invalid_attempts").get<std::int64_t>();
    rec.alerts_emitted = c.at("alerts_emitted").get<int>();
    rec.removed_alerts = c.at("removed_alerts").get<int>();
    rec.visible_alerts = c.at("visible_alerts").get<int>();
    rec.audit_violations = c.at("audit_violations").get<int>();
    rec.job_ok = c.at("job_ok").get<bool>();
    report.cases.push_back(std::move(rec));
  }
  compute_metrics(report);
  std::cout << render_eval_report(report);
  return kExitOk;
}

int cmd_audit(const GlobalOptions& opts, const std::string& alerts_file,
              const std::string& timeline_file, const std::string& incidents_file) {
  Loaded shared = load_shared(opts);
  auto alerts = load_alerts(alerts_file);
  auto timeline = ActivityTimeline::from_json(read_json(timeline_file));
  auto incidents = load_incidents(incidents_file, shared.attack);
  const Incident* incident = nullptr;
  for (const auto& inc : incidents) {
    if (inc.incident_id == timeline.incident_id) incident = &inc;
  }
  if (!incident) {
    throw ConfigError("no incident " + timeline.incident_id + " in " + incidents_file);
  }
  auto violations = audit_alerts(alerts, timeline, *incident, shared.attack);
  for (const auto& v : violations) std::cout << "VIOLATION " << v << "\n";
  std::cout << alerts.size() << " alert(s) audited, " << violations.size() << " violation(s)\n";
  return violations.empty() ? kExitOk : kExitJobFailure;
}

int cmd_gen_scenario(const GlobalOptions& opts, const std::string& template_name,
                     std::uint64_t seed, int unalerted) {
  ScenarioOptions sopt;
  sopt.unalerted_quiet_stages = unalerted;
  char ord[16];
  std::snprintf(ord, sizeof(ord), "%02llu", static_cast<unsigned long long>(seed % 100));
  auto dir = opts.out / "scenarios" / (template_name + "-" + ord);
  Scenario s = generate_scenario(template_name, seed, dir, sopt);
  Loaded shared = load_shared(opts);
  validate_scenario(s, shared.attack);
  std::cout << s.scenario_id << " written to " << dir.string() << " ("
            << s.incident.alerts.size() << " alerts, " << s.ground_truth.size()
            << " ground-truth stages)\n";
  return kExitOk;
}

void apply_config_file(const std::string& path, GlobalOptions& opts) {
  Json cfg = read_json(path);
  if (cfg.contains("data_dir")) opts.data_dir = cfg["data_dir"].get<std::string>();
  if (cfg.contains("model_backend")) opts.model_backend = cfg["model_backend"].get<std::string>();
  if (cfg.contains("endpoint")) opts.endpoint = cfg["endpoint"].get<std::string>();
  if (cfg.contains("model")) opts.model = cfg["model"].get<std::string>();
  if (cfg.contains("out")) opts.out = cfg["out"].get<std::string>();
  if (cfg.contains("seed")) opts.seed = cfg["seed"].get<std::uint64_t>();
  if (cfg.contains("concurrency")) opts.concurrency = cfg["concurrency"].get<unsigned>();
  if (cfg.contains("price_profile")) opts.price_profile = cfg["price_profile"].get<std::string>();
  if (cfg.contains("format")) opts.format = cfg["format"].get<std::string>();
  if (cfg.contains("row_budget")) opts.row_budget = cfg["row_budget"].get<std::int64_t>();
  if (cfg.contains("max_frontier")) opts.max_frontier = cfg["max_frontier"].get<int>();
  if (cfg.contains("max_lookback_hours")) {
    opts.max_lookback_hours = cfg["max_lookback_hours"].get<int>();
  }
  if (cfg.contains("min_priority")) opts.min_priority = cfg["min_priority"].get<double>();
}

}  // namespace

int main(int argc, char** argv) {
  GlobalOptions opts;
  opts.data_dir = default_data_dir();

  CLI::App app{"huntline: incident timeline construction, bounded investigation, and dynamic alerting"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_file;
  app.add_option("--config", config_file, "JSON config file; flags override its values");
  auto* opt_data = app.add_option("--data-dir", opts.data_dir,
                                  "directory with contracts/, attack_techniques.json, denylist.json");
  auto* opt_backend =
      app.add_option("--model-backend", opts.model_backend,
                     "oracle | oracle:<fixture-dir> | remote");
  auto* opt_endpoint = app.add_option("--endpoint", opts.endpoint,
                                      "chat-completions-compatible base URL (remote backend)");
  auto* opt_model = app.add_option("--model", opts.model, "model name for the remote backend");
  auto* opt_out = app.add_option("--out", opts.out, "output directory");
  auto* opt_seed = app.add_option("--seed", opts.seed, "run seed");
  auto* opt_conc = app.add_option("--concurrency", opts.concurrency, "max parallel workers");
  auto* opt_price = app.add_option("--price-profile", opts.price_profile,
                                   "named token price profile");
  auto* opt_format = app.add_option("--format", opts.format, "table | json")
                         ->check(CLI::IsMember({"table", "json"}));
  auto* opt_budget = app.add_option("--row-budget", opts.row_budget,
                                    "per-table post-aggregation row budget");
  auto* opt_frontier = app.add_option("--max-frontier", opts.max_frontier,
                                      "entity cap per expansion round");
  auto* opt_lookback = app.add_option("--max-lookback-hours", opts.max_lookback_hours,
                                      "hard cap on retrieval lookback windows");
  auto* opt_priority = app.add_option("--min-priority", opts.min_priority,
                                      "incident selection threshold");

  auto* investigate = app.add_subcommand("investigate", "build timelines, investigate, emit alerts");
  std::string scenario_arg, incidents_file, tables_manifest, ueba_file, ti_file;
  investigate->add_option("--scenario", scenario_arg, "scenario bundle dir or <template>-<NN>");
  investigate->add_option("--incidents", incidents_file, "incident JSONL file");
  investigate->add_option("--tables", tables_manifest, "telemetry manifest JSON");
  investigate->add_option("--ueba", ueba_file, "UEBA feed JSONL");
  investigate->add_option("--ti", ti_file, "threat-intel feed JSONL");

  auto* eval = app.add_subcommand("eval", "offline gap-recovery evaluation matrix");
  std::string cohort_arg = "default";
  int repeats = 0;
  bool baseline_only = false, full_only = false;
  eval->add_option("--cohort", cohort_arg, "default or a cohort spec JSON file");
  eval->add_option("--repeats", repeats, "repeated runs per case (default 3)");
  eval->add_flag("--baseline-only", baseline_only, "run only the row-only baseline arm");
  eval->add_flag("--full-only", full_only, "run only the full pipeline arm");

  auto* report = app.add_subcommand("report", "render tables from a completed eval");
  std::string report_dir;
  report->add_option("dir", report_dir, "directory containing eval_report.json")->required();

  auto* audit = app.add_subcommand("audit", "grounding audit over emitted alerts");
  std::string audit_alerts_file, audit_timeline_file, audit_incidents_file;
  audit->add_option("--alerts", audit_alerts_file, "alerts JSONL")->required();
  audit->add_option("--timeline", audit_timeline_file, "timeline JSON")->required();
  audit->add_option("--incidents", audit_incidents_file, "incident JSONL")->required();

  auto* gen = app.add_subcommand("gen-scenario", "generate a synthetic attack scenario bundle");
  std::string gen_template = "ransomware";
  std::uint64_t gen_seed = 1;
  int gen_unalerted = 0;
  gen->add_option("--template", gen_template, "ransomware | initial-access | exfiltration");
  gen->add_option("--scenario-seed", gen_seed, "scenario seed (last two digits name the bundle)");
  gen->add_option("--unalerted", gen_unalerted, "quiet stages left without incident alerts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fail(opts, kExitConfigError, "ConfigError", std::string("usage: ") + e.what());
  }

  try {
    if (!config_file.empty()) {
      GlobalOptions from_file = opts;
      apply_config_file(config_file, from_file);
      // flags win over config file values
      if (!*opt_data) opts.data_dir = from_file.data_dir;
      if (!*opt_backend) opts.model_backend = from_file.model_backend;
      if (!*opt_endpoint) opts.endpoint = from_file.endpoint;
      if (!*opt_model) opts.model = from_file.model;
      if (!*opt_out) opts.out = from_file.out;
      if (!*opt_seed) opts.seed = from_file.seed;
      if (!*opt_conc) opts.concurrency = from_file.concurrency;
      if (!*opt_price) opts.price_profile = from_file.price_profile;
      if (!*opt_format) opts.format = from_file.format;
      if (!*opt_budget) opts.row_budget = from_file.row_budget;
      if (!*opt_frontier) opts.max_frontier = from_file.max_frontier;
      if (!*opt_lookback) opts.max_lookback_hours = from_file.max_lookback_hours;
      if (!*opt_priority) opts.min_priority = from_file.min_priority;
    }
    if (opts.concurrency == 0) throw ConfigError("--concurrency must be positive");
    if (opts.row_budget <= 0) throw ConfigError("--row-budget must be positive");
    if (opts.max_frontier <= 0) throw ConfigError("--max-frontier must be positive");

    if (*investigate) {
      return cmd_investigate(opts, scenario_arg, incidents_file, tables_manifest, ueba_file,
                             ti_file);
    }
    if (*eval) return cmd_eval(opts, cohort_arg, repeats, baseline_only, full_only);
    if (*report) return cmd_report(opts, report_dir);
    if (*audit) return cmd_audit(opts, audit_alerts_file, audit_timeline_file,
                                 audit_incidents_file);
    if (*gen) return cmd_gen_scenario(opts, gen_template, gen_seed, gen_unalerted);
    return fail(opts, kExitConfigError, "ConfigError", "no subcommand selected");
  } catch (const ConfigError& e) {
    return fail(opts, kExitConfigError, "ConfigError", e.what());
  } catch (const JobFailureError& e) {
    return fail(opts, kExitJobFailure, "JobFailure", e.what());
  } catch (const Error& e) {
    return fail(opts, kExitConfigError, e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(opts, kExitJobFailure, "InternalError", e.what());
  }
}
