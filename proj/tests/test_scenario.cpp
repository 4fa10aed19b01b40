#include <catch2/catch.hpp>

#include "huntline/pipeline.hpp"
#include "huntline/report.hpp"
#include "huntline/scenario.hpp"
#include "support.hpp"

using namespace huntline;

namespace {

std::map<std::string, std::string> dir_digest(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    out[std::filesystem::relative(entry.path(), dir).string()] =
        fnv1a64_hex(read_file(entry.path()));
  }
  return out;
}

Runtime make_runtime(const TelemetryStore& store, const ContractGateway& gateway,
                     const Denylist& denylist) {
  Runtime rt;
  rt.store = &store;
  rt.gateway = &gateway;
  rt.attack = &testsupport::attack_map();
  rt.denylist = &denylist;
  rt.timeline_cfg.concurrency = 2;
  rt.investigation_cfg.concurrency = 2;
  return rt;
}

}  // namespace

TEST_CASE("generate_scenario is deterministic per (template, seed)") {
  testsupport::TempDir dir("scen-det");
  auto a = generate_scenario("ransomware", 7, dir.path() / "a");
  auto b = generate_scenario("ransomware", 7, dir.path() / "b");
  CHECK(a.scenario_id == "ransomware-07");
  CHECK(dir_digest(dir.path() / "a") == dir_digest(dir.path() / "b"));

  SECTION("seed changes entity values but not stage structure") {
    auto c = generate_scenario("ransomware", 8, dir.path() / "c");
    REQUIRE(c.ground_truth.size() == a.ground_truth.size());
    for (std::size_t i = 0; i < a.ground_truth.size(); ++i) {
      CHECK(c.ground_truth[i].stage_id == a.ground_truth[i].stage_id);
      CHECK(c.ground_truth[i].phase == a.ground_truth[i].phase);
    }
    CHECK(c.incident.entities() != a.incident.entities());
  }
}

TEST_CASE("generate_scenario rejects unknown templates") {
  testsupport::TempDir dir("scen-bad");
  CHECK_THROWS_AS(generate_scenario("cryptomining", 1, dir.path()), Error);
}

TEST_CASE("generated scenarios pass self-validation and load back") {
  testsupport::TempDir dir("scen-valid");
  for (const std::string tpl : {"ransomware", "initial-access", "exfiltration"}) {
    auto s = generate_scenario(tpl, 3, dir.path() / tpl);
    CHECK_NOTHROW(validate_scenario(s, testsupport::attack_map()));
    auto loaded = Scenario::load(dir.path() / tpl);
    CHECK(loaded.scenario_id == s.scenario_id);
    CHECK(loaded.incident.to_json() == s.incident.to_json());
    CHECK(loaded.ground_truth.size() == 6);
    // every phase is removable in the eval cohort configuration
    for (Phase p : all_phases()) {
      CHECK_NOTHROW(hold_out(loaded.incident, p, loaded.scenario_id));
    }
  }
}

TEST_CASE("hold_out removes exactly the target phase") {
  Incident inc;
  inc.incident_id = "inc-h";
  inc.threat_type = "x";
  inc.priority_score = 0.5;
  auto add = [&](const std::string& id, Phase phase, const std::string& technique) {
    Alert a;
    a.alert_id = id;
    a.detector_id = "d";
    a.title = "t";
    a.techniques = {technique};
    a.phase = phase;
    a.entities = {normalize_entity(EntityKind::User, "u@x.com")};
    inc.alerts.push_back(a);
  };
  for (int i = 0; i < 2; ++i) add("ia" + std::to_string(i), Phase::InitialAccess, "T1566");
  for (int i = 0; i < 3; ++i) add("ex" + std::to_string(i), Phase::Execution, "T1059");
  for (int i = 0; i < 4; ++i) add("pc" + std::to_string(i), Phase::PostCompromise, "T1486");

  auto [visible, spec] = hold_out(inc, Phase::Execution, "s");
  CHECK(visible.alerts.size() == 6);
  CHECK(spec.removed_alert_ids.size() == 3);
  CHECK(spec.visible_alert_count == 6);
  for (const auto& a : visible.alerts) CHECK(a.phase != Phase::Execution);

  SECTION("missing phase throws") {
    Incident only_ia;
    only_ia.incident_id = "x";
    only_ia.threat_type = "t";
    for (auto& a : inc.alerts) {
      if (a.phase == Phase::InitialAccess) only_ia.alerts.push_back(a);
    }
    CHECK_THROWS_AS(hold_out(only_ia, Phase::Execution, "s"), PhaseNotPresentError);
    CHECK_THROWS_AS(hold_out(only_ia, Phase::InitialAccess, "s"), WouldEmptyIncidentError);
  }
}

TEST_CASE("score_recovery implements the fixed rubric") {
  GroundTruthStage stage;
  stage.stage_id = "pc-impact";
  stage.phase = Phase::PostCompromise;
  stage.techniques = {"T1486"};
  stage.entities = {normalize_entity(EntityKind::Device, "ws-7")};
  stage.evidence_row_ids = {"r1", "r2"};

  HoldOutSpec spec;
  spec.scenario_id = "s";
  spec.removed_phase = Phase::PostCompromise;

  DynamicAlert alert;
  alert.alert_id = "dyn-1";
  alert.incident_id = "inc";
  alert.title = "t";
  alert.description = "d";
  alert.mitre_techniques = {"T1486"};
  alert.remediation = {"r"};
  alert.implicated_entities = {normalize_entity(EntityKind::Device, "ws-7")};
  alert.evidence_row_ids = {"r1"};
  alert.phase = Phase::PostCompromise;

  SECTION("exact match") {
    auto r = score_recovery({alert}, spec, {stage});
    CHECK(r.counts.tp == 1);
    CHECK(r.counts.fp == 0);
    CHECK(r.counts.fn == 0);
  }
  SECTION("no alerts, two held-out stages") {
    GroundTruthStage stage2 = stage;
    stage2.stage_id = "pc-lateral";
    auto r = score_recovery({}, spec, {stage, stage2});
    CHECK(r.counts.fn == 2);
    CHECK(r.counts.tp + r.counts.fn == 2);
  }
  SECTION("right phase but evidence outside ground truth is a false positive") {
    DynamicAlert off = alert;
    off.evidence_row_ids = {"elsewhere"};
    auto r = score_recovery({off}, spec, {stage});
    CHECK(r.counts.tp == 0);
    CHECK(r.counts.fp == 1);
    CHECK(r.counts.fn == 1);
  }
  SECTION("wrong phase never matches") {
    DynamicAlert off = alert;
    off.phase = Phase::Execution;
    auto r = score_recovery({off}, spec, {stage});
    CHECK(r.counts.fp == 1);
  }
  SECTION("stages outside the removed phase are ignored") {
    GroundTruthStage other = stage;
    other.stage_id = "ia";
    other.phase = Phase::InitialAccess;
    auto r = score_recovery({alert}, spec, {stage, other});
    CHECK(r.counts.tp + r.counts.fn == 1);
  }
  SECTION("order-insensitive in the emitted list") {
    DynamicAlert dup = alert;
    dup.alert_id = "dyn-2";
    dup.evidence_row_ids = {"r2"};
    auto r1 = score_recovery({alert, dup}, spec, {stage});
    auto r2 = score_recovery({dup, alert}, spec, {stage});
    CHECK(r1.to_json() == r2.to_json());
    CHECK(r1.counts.tp == 1);  // one stage, however many matching alerts
    CHECK(r1.counts.fp == 0);
  }
}

TEST_CASE("full pipeline recovers a held-out phase on a generated scenario") {
  testsupport::TempDir dir("scen-e2e");
  auto scenario = generate_scenario("ransomware", 1, dir.path() / "s");
  auto store = load_store(scenario.manifest_path());
  auto ueba = load_feed(scenario.ueba_path());
  auto ti = load_feed(scenario.ti_path());
  auto oracle = ScriptedBackend::load_dir(scenario.oracle_dir());
  ContractGateway gateway(testsupport::contracts_registry(), oracle);
  Denylist denylist = Denylist::load(testsupport::data_dir() / "denylist.json");
  Runtime rt = make_runtime(store, gateway, denylist);

  for (Phase phase : all_phases()) {
    auto [visible, spec] = hold_out(scenario.incident, phase, scenario.scenario_id);
    auto run = run_full(visible, rt, ueba, ti);
    REQUIRE(run.job_ok);
    auto score = score_recovery(run.alerts, spec, scenario.ground_truth);
    INFO("phase " << to_string(phase));
    CHECK(score.counts.tp == 2);
    CHECK(score.counts.fp == 0);
    CHECK(score.counts.fn == 0);
    CHECK(run.timeline.build_stats.expansion_rounds == 2);
    CHECK(run.investigation.rounds_executed == 2);
    CHECK(run.timeline.build_stats.compression_ratio >= 2.0);
    CHECK(audit_alerts(run.alerts, run.timeline, visible, testsupport::attack_map()).empty());
  }
}

TEST_CASE("row-only baseline misses quiet stages and flags the decoy") {
  testsupport::TempDir dir("scen-base");
  auto scenario = generate_scenario("ransomware", 2, dir.path() / "s");
  auto store = load_store(scenario.manifest_path());
  auto ueba = load_feed(scenario.ueba_path());
  auto ti = load_feed(scenario.ti_path());
  auto oracle = ScriptedBackend::load_dir(scenario.oracle_dir());
  ContractGateway gateway(testsupport::contracts_registry(), oracle);
  Denylist denylist = Denylist::load(testsupport::data_dir() / "denylist.json");
  Runtime rt = make_runtime(store, gateway, denylist);

  auto [visible, spec] = hold_out(scenario.incident, Phase::PostCompromise,
                                  scenario.scenario_id);
  auto run = run_baseline_arm(visible, rt, ueba, ti);
  REQUIRE(run.job_ok);
  auto score = score_recovery(run.alerts, spec, scenario.ground_truth);
  CHECK(score.counts.tp == 1);   // loud stage recovered row-by-row
  CHECK(score.counts.fn == 1);   // quiet cross-row stage missed
  CHECK(score.counts.fp == 1);   // benign-but-suspicious decoy flagged
  CHECK(score.counts.f1() == Approx(0.5));
  // Baseline alerts still pass validation and grounding.
  CHECK(audit_alerts(run.alerts, run.timeline, visible, testsupport::attack_map()).empty());

  SECTION("an all-benign classifier emits nothing") {
    ScriptedBackend benign;
    benign.add_playbook(Json{
        {"contract_id", "row_classify"},
        {"rules", Json::array({Json{{"respond", Json{{"malicious", false},
                                                     {"rationale", "baseline activity"}}}}})}});
    // reuse timeline built by the scripted oracle for construction contracts
    std::vector<ContractOutcome> outcomes;
    ContractGateway benign_gw(testsupport::contracts_registry(), benign);
    auto alerts = run_baseline(run.timeline, visible, benign_gw, testsupport::attack_map(), 2,
                               outcomes);
    CHECK(alerts.empty());
  }
}

TEST_CASE("demo scenarios leave quiet gaps that a normal run surfaces") {
  testsupport::TempDir dir("scen-demo");
  ScenarioOptions opt;
  opt.unalerted_quiet_stages = 2;
  auto scenario = generate_scenario("ransomware", 1, dir.path() / "s", opt);
  CHECK(scenario.incident.alerts.size() == 4);  // two quiet stages left open

  auto store = load_store(scenario.manifest_path());
  auto ueba = load_feed(scenario.ueba_path());
  auto ti = load_feed(scenario.ti_path());
  auto oracle = ScriptedBackend::load_dir(scenario.oracle_dir());
  ContractGateway gateway(testsupport::contracts_registry(), oracle);
  Denylist denylist = Denylist::load(testsupport::data_dir() / "denylist.json");
  Runtime rt = make_runtime(store, gateway, denylist);

  auto run = run_full(scenario.incident, rt, ueba, ti);
  REQUIRE(run.job_ok);
  CHECK(run.alerts.size() == 2);  // the two unalerted stages become dynamic alerts
  std::set<std::string> techniques;
  for (const auto& a : run.alerts) {
    techniques.insert(a.mitre_techniques.begin(), a.mitre_techniques.end());
  }
  CHECK(techniques == std::set<std::string>{"T1047", "T1021.002"});
  CHECK(audit_alerts(run.alerts, run.timeline, scenario.incident, testsupport::attack_map())
            .empty());
}

TEST_CASE("eval matrix aggregates cases into report tables") {
  testsupport::TempDir dir("scen-eval");
  CohortSpec cohort;
  cohort.entries = {{"ransomware", 901}, {"exfiltration", 902}};
  cohort.repeats = 1;

  EvalOptions options;
  options.scenarios_dir = dir.path() / "scenarios";
  options.data_dir = testsupport::data_dir();
  options.concurrency = 2;
  options.seed = 9;

  auto report = run_eval(cohort, options);
  CHECK(report.cases.size() == 2 * 3 * 2);  // scenarios x phases x arms
  REQUIRE(report.aggregates.count("full"));
  REQUIRE(report.aggregates.count("baseline"));
  CHECK(report.aggregates.at("full").at("macro").f1_mean == Approx(1.0));
  CHECK(report.aggregates.at("baseline").at("macro").f1_mean <= 0.60);
  CHECK(report.ops.compression_median >= 2.0);
  CHECK(report.ops.job_failure_rate == 0.0);
  CHECK(report.ops.audit_violations == 0);

  auto rendered = render_eval_report(report);
  CHECK(rendered.find("Offline gap-recovery") != std::string::npos);
  CHECK(rendered.find("Macro") != std::string::npos);
  CHECK(rendered.find("compression ratio") != std::string::npos);

  SECTION("baseline-only cohorts render baseline rows only") {
    CohortSpec base_only = cohort;
    base_only.full_arm = false;
    base_only.entries = {{"ransomware", 903}};
    EvalOptions o2 = options;
    o2.scenarios_dir = dir.path() / "scenarios2";
    auto r2 = run_eval(base_only, o2);
    CHECK(r2.aggregates.count("full") == 0);
    CHECK(r2.aggregates.count("baseline") == 1);
    CHECK(r2.cases.size() == 3);
  }
}
