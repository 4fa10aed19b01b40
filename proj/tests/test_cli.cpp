#include <catch2/catch.hpp>

#include <cstdlib>

#include "huntline/pipeline.hpp"
#include "huntline/remote.hpp"
#include "support.hpp"

using namespace huntline;

namespace {

int run_cli(const std::string& args, const std::filesystem::path& log) {
  std::string cmd = std::string(HUNTLINE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cli investigate on a demo scenario emits alerts and artifacts") {
  testsupport::TempDir dir("cli-investigate");
  auto log = dir.path() / "log.txt";
  int code = run_cli("--out " + (dir.path() / "out").string() +
                         " investigate --scenario ransomware-01",
                     log);
  INFO(read_file(log));
  REQUIRE(code == 0);
  std::string output = read_file(log);
  CHECK(output.find("2 dynamic alert(s)") != std::string::npos);

  auto run_dir = dir.path() / "out" / "investigate" / "inc-ransomware-01";
  REQUIRE(std::filesystem::exists(run_dir / "alerts.jsonl"));
  REQUIRE(std::filesystem::exists(run_dir / "timeline.json"));
  REQUIRE(std::filesystem::exists(run_dir / "run_report.json"));
  CHECK(load_alerts(run_dir / "alerts.jsonl").size() == 2);

  SECTION("audit over the emitted artifacts is clean") {
    int audit_code = run_cli(
        "audit --alerts " + (run_dir / "alerts.jsonl").string() + " --timeline " +
            (run_dir / "timeline.json").string() + " --incidents " +
            (dir.path() / "out" / "scenarios" / "ransomware-01" / "incident.jsonl").string(),
        dir.path() / "audit.txt");
    INFO(read_file(dir.path() / "audit.txt"));
    CHECK(audit_code == 0);
    CHECK(read_file(dir.path() / "audit.txt").find("0 violation(s)") != std::string::npos);
  }
}

TEST_CASE("cli rejects unreadable inputs with exit code 2") {
  testsupport::TempDir dir("cli-badcfg");
  int code = run_cli("--out " + (dir.path() / "out").string() +
                         " investigate --incidents /nonexistent/i.jsonl --tables /nonexistent/m.json"
                         " --model-backend oracle:/nonexistent",
                     dir.path() / "log.txt");
  CHECK(code == 2);
  // machine-readable error record
  auto error_file = dir.path() / "out" / "error.json";
  REQUIRE(std::filesystem::exists(error_file));
  Json record = read_json(error_file);
  CHECK(record.at("exit_code") == 2);
  CHECK(record.contains("error"));

  SECTION("missing eval report") {
    int report_code = run_cli("--out " + (dir.path() / "out").string() + " report " +
                                  dir.path().string(),
                              dir.path() / "r.txt");
    CHECK(report_code == 2);
  }
}

TEST_CASE("cli gen-scenario writes a self-validated bundle") {
  testsupport::TempDir dir("cli-gen");
  int code = run_cli("--out " + (dir.path() / "out").string() +
                         " gen-scenario --template exfiltration --scenario-seed 5",
                     dir.path() / "log.txt");
  INFO(read_file(dir.path() / "log.txt"));
  REQUIRE(code == 0);
  auto bundle = dir.path() / "out" / "scenarios" / "exfiltration-05";
  CHECK(std::filesystem::exists(bundle / "scenario.json"));
  auto scenario = Scenario::load(bundle);
  CHECK(scenario.scenario_id == "exfiltration-05");
}

TEST_CASE("cli eval renders identical numbers in table and json form") {
  testsupport::TempDir dir("cli-eval");
  // Two-scenario cohort keeps the smoke test quick.
  Json cohort{{"entries", Json::array({Json{{"template", "ransomware"}, {"seed", 11}},
                                       Json{{"template", "initial-access"}, {"seed", 12}}})},
              {"repeats", 1}};
  write_file(dir.path() / "cohort.json", cohort.dump());

  int code = run_cli("--out " + (dir.path() / "out").string() + " --seed 5 eval --cohort " +
                         (dir.path() / "cohort.json").string(),
                     dir.path() / "log.txt");
  INFO(read_file(dir.path() / "log.txt"));
  REQUIRE(code == 0);
  REQUIRE(std::filesystem::exists(dir.path() / "out" / "eval" / "eval_report.json"));

  // report --format json round-trips to the same numbers
  int json_code = run_cli("--format json report " + (dir.path() / "out" / "eval").string(),
                          dir.path() / "as_json.txt");
  REQUIRE(json_code == 0);
  Json from_cli = Json::parse(read_file(dir.path() / "as_json.txt"));
  Json from_file = read_json(dir.path() / "out" / "eval" / "eval_report.json");
  CHECK(from_cli == from_file);

  int table_code = run_cli("report " + (dir.path() / "out" / "eval").string(),
                           dir.path() / "as_table.txt");
  REQUIRE(table_code == 0);
  std::string table = read_file(dir.path() / "as_table.txt");
  CHECK(table.find("Offline gap-recovery") != std::string::npos);
  CHECK(table == read_file(dir.path() / "out" / "eval" / "report.txt"));
}

TEST_CASE("hermetic oracle runs never touch the network backend") {
  auto before = HttpBackend::request_count().load();

  testsupport::TempDir dir("cli-hermetic");
  auto scenario = generate_scenario("ransomware", 21, dir.path() / "s");
  auto store = load_store(scenario.manifest_path());
  auto ueba = load_feed(scenario.ueba_path());
  auto ti = load_feed(scenario.ti_path());
  auto oracle = ScriptedBackend::load_dir(scenario.oracle_dir());
  ContractGateway gateway(testsupport::contracts_registry(), oracle);
  Denylist denylist = Denylist::load(testsupport::data_dir() / "denylist.json");
  Runtime rt;
  rt.store = &store;
  rt.gateway = &gateway;
  rt.attack = &testsupport::attack_map();
  rt.denylist = &denylist;
  rt.timeline_cfg.concurrency = 2;
  rt.investigation_cfg.concurrency = 2;

  auto run = run_full(scenario.incident, rt, ueba, ti);
  REQUIRE(run.job_ok);
  CHECK(HttpBackend::request_count().load() == before);
}
