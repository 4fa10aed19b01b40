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
#include <set>
#include <string>
#include <vector>

#include "huntline/alerting.hpp"
#include "huntline/contracts.hpp"
#include "huntline/core.hpp"
#include "huntline/investigation.hpp"
#include "huntline/metrics.hpp"
#include "huntline/oracle.hpp"
#include "huntline/store.hpp"
#include "huntline/timeline.hpp"

namespace huntline {

// ---------------------------------------------------------------------------
// ground truth and holdout

struct GroundTruthStage {
  std::string stage_id;
  Phase phase = Phase::InitialAccess;
  std::vector<std::string> techniques;
  std::set<Entity> entities;
  std::vector<std::string> evidence_row_ids;
  bool alerted = true;

  Json to_json() const {
    return Json{{"stage_id", stage_id},
                {"phase", to_string(phase)},
                {"techniques", techniques},
                {"entities", canonical_entities(entities)},
                {"evidence_row_ids", evidence_row_ids},
                {"alerted", alerted}};
  }

  static GroundTruthStage from_json(const Json& j) {
    GroundTruthStage s;
    s.stage_id = j.at("stage_id").get<std::string>();
    s.phase = phase_from_string(j.at("phase").get<std::string>());
    s.techniques = j.at("techniques").get<std::vector<std::string>>();
    for (const auto& e : j.at("entities")) {
      s.entities.insert(Entity::parse_canonical(e.get<std::string>()));
    }
    s.evidence_row_ids = j.at("evidence_row_ids").get<std::vector<std::string>>();
    s.alerted = j.at("alerted").get<bool>();
    return s;
  }
};

struct HoldOutSpec {
  std::string scenario_id;
  Phase removed_phase = Phase::InitialAccess;
  std::vector<std::string> removed_alert_ids;
  int visible_alert_count = 0;

  Json to_json() const {
    return Json{{"scenario_id", scenario_id},
                {"removed_phase", to_string(removed_phase)},
                {"removed_alert_ids", removed_alert_ids},
                {"visible_alert_count", visible_alert_count}};
  }
};

class PhaseNotPresentError : public Error {
 public:
  explicit PhaseNotPresentError(const std::string& phase)
      : Error("PhaseNotPresent", "no alerts in phase " + phase) {}
};

class WouldEmptyIncidentError : public Error {
 public:
  WouldEmptyIncidentError() : Error("WouldEmptyIncident", "holdout would remove every alert") {}
};

// Removes all alerts of one phase; telemetry stays untouched.
inline std::pair<Incident, HoldOutSpec> hold_out(const Incident& incident, Phase phase,
                                                 const std::string& scenario_id) {
  Incident visible = incident;
  visible.alerts.clear();
  HoldOutSpec spec;
  spec.scenario_id = scenario_id;
  spec.removed_phase = phase;
  for (const auto& a : incident.alerts) {
    if (a.phase == phase) {
      spec.removed_alert_ids.push_back(a.alert_id);
    } else {
      visible.alerts.push_back(a);
    }
  }
  if (spec.removed_alert_ids.empty()) throw PhaseNotPresentError(to_string(phase));
  if (visible.alerts.empty()) throw WouldEmptyIncidentError();
  spec.visible_alert_count = static_cast<int>(visible.alerts.size());
  return {std::move(visible), std::move(spec)};
}

// ---------------------------------------------------------------------------
// recovery scoring

struct RecoveryCounts {
  PrfCounts counts;
  std::set<std::string> matched_stages;
  std::vector<std::string> fp_alert_ids;

  Json to_json() const {
    Json j = counts.to_json();
    j["matched_stages"] =
        std::vector<std::string>(matched_stages.begin(), matched_stages.end());
    j["fp_alert_ids"] = fp_alert_ids;
    return j;
  }
};

// Fixed rubric. An emitted alert matches a held-out stage when its phase is
// the removed phase, it shares a technique or an entity with the stage, and
// it cites at least one of the stage's evidence rows. Stages matched by any
// alert count once; alerts matching no stage are false positives; unmatched
// stages are false negatives. Pure and order-insensitive in the alert list.
inline RecoveryCounts score_recovery(const std::vector<DynamicAlert>& emitted,
                                     const HoldOutSpec& spec,
                                     const std::vector<GroundTruthStage>& ground_truth) {
  std::vector<const GroundTruthStage*> held_out;
  for (const auto& s : ground_truth) {
    if (s.phase == spec.removed_phase) held_out.push_back(&s);
  }

  RecoveryCounts result;
  for (const auto& alert : emitted) {
    bool matched_any = false;
    if (alert.phase == spec.removed_phase) {
      for (const GroundTruthStage* stage : held_out) {
        bool technique_overlap = false;
        for (const auto& t : alert.mitre_techniques) {
          if (std::find(stage->techniques.begin(), stage->techniques.end(), t) !=
              stage->techniques.end()) {
            technique_overlap = true;
          }
        }
        bool entity_overlap = false;
        for (const auto& e : alert.implicated_entities) {
          if (stage->entities.count(e)) entity_overlap = true;
        }
        if (!technique_overlap && !entity_overlap) continue;
        bool evidence_overlap = false;
        for (const auto& row : alert.evidence_row_ids) {
          if (std::find(stage->evidence_row_ids.begin(), stage->evidence_row_ids.end(), row) !=
              stage->evidence_row_ids.end()) {
            evidence_overlap = true;
          }
        }
        if (!evidence_overlap) continue;
        result.matched_stages.insert(stage->stage_id);
        matched_any = true;
      }
    }
    if (!matched_any) result.fp_alert_ids.push_back(alert.alert_id);
  }
  std::sort(result.fp_alert_ids.begin(), result.fp_alert_ids.end());
  result.counts.tp = static_cast<std::int64_t>(result.matched_stages.size());
  result.counts.fp = static_cast<std::int64_t>(result.fp_alert_ids.size());
  result.counts.fn = static_cast<std::int64_t>(held_out.size()) - result.counts.tp;
  return result;
}

// ---------------------------------------------------------------------------
// row-only baseline

// Replaces the planner-executor loop with one classification contract per
// timeline row (alert rows excluded); flagged rows become single-row alerts
// that still pass the shared validation, novelty, and dedup checks.
inline std::vector<DynamicAlert> run_baseline(const ActivityTimeline& timeline,
                                              const Incident& incident,
                                              const ContractGateway& gateway,
                                              const AttackMap& attack, unsigned concurrency,
                                              std::vector<ContractOutcome>& outcomes) {
  Json lite = Investigator::incident_lite(incident);
  std::vector<const EventRow*> rows;
  for (const auto& r : timeline.rows) {
    if (!r.is_alert_row) rows.push_back(&r);
  }

  struct RowVerdict {
    std::optional<AlertCandidate> candidate;
    ContractOutcome outcome;
  };
  auto verdicts = parallel_map(rows, concurrency, [&](const EventRow* row) {
    Json digest{{"row_id", row->row_id},
                {"table", row->table},
                {"timestamp", to_rfc3339(row->timestamp)},
                {"is_aggregate", row->is_aggregate},
                {"entities", canonical_entities(row->all_entities())},
                {"attributes", row->attributes}};
    if (row->aggregate_meta) digest["aggregate_meta"] = row->aggregate_meta->to_json();
    RowVerdict v;
    v.outcome = gateway.execute("row_classify", Json{{"incident", lite}, {"row", digest}});
    if (v.outcome.valid() && (*v.outcome.output)["malicious"].get<bool>()) {
      const Json& o = *v.outcome.output;
      AlertCandidate c;
      c.title = o.at("title").get<std::string>();
      c.description = o.at("rationale").get<std::string>();
      c.severity = severity_from_string(o.at("severity").get<std::string>());
      c.techniques = {o.at("technique").get<std::string>()};
      c.remediation = o.at("remediation").get<std::vector<std::string>>();
      c.entities = row->all_entities();
      c.evidence_row_ids = {row->row_id};
      v.candidate = std::move(c);
    }
    return v;
  });

  std::map<std::string, std::vector<Stance>> stances;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (verdicts[i].candidate) stances[rows[i]->row_id].push_back(Stance::Supports);
  }
  AlertValidator validator(incident, timeline, attack, std::move(stances));
  std::vector<DynamicAlert> alerts;
  for (auto& v : verdicts) {
    if (v.candidate) {
      if (auto alert = validator.accept(*v.candidate, alerts)) {
        alerts.push_back(std::move(*alert));
      }
    }
    outcomes.push_back(std::move(v.outcome));
  }
  return alerts;
}

// ---------------------------------------------------------------------------
// scenario bundles

struct Scenario {
  std::string scenario_id;
  std::string template_name;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  Incident incident;
  std::vector<GroundTruthStage> ground_truth;

  std::filesystem::path manifest_path() const { return dir / "tables" / "manifest.json"; }
  std::filesystem::path oracle_dir() const { return dir / "oracle"; }
  std::filesystem::path ueba_path() const { return dir / "feeds" / "ueba.jsonl"; }
  std::filesystem::path ti_path() const { return dir / "feeds" / "ti.jsonl"; }

  static Scenario load(const std::filesystem::path& dir) {
    Json meta = read_json(dir / "scenario.json");
    Scenario s;
    s.scenario_id = meta.at("scenario_id").get<std::string>();
    s.template_name = meta.at("template").get<std::string>();
    s.seed = meta.at("seed").get<std::uint64_t>();
    s.dir = dir;
    s.incident = Incident::from_json(meta.at("incident"));
    for (const auto& g : meta.at("ground_truth")) {
      s.ground_truth.push_back(GroundTruthStage::from_json(g));
    }
    return s;
  }
};

struct ScenarioOptions {
  // Stages (by quiet flavor order) left without an alert; the eval cohort
  // uses 0 so every stage is removable, demos use 2 to leave open gaps.
  int unalerted_quiet_stages = 0;
  double noise_scale = 1.0;
};

namespace scenario_detail {

inline const std::vector<std::string>& first_names() {
  static const std::vector<std::string> v = {"maya",  "jonas", "priya", "tomas", "aisha",
                                             "felix", "nora",  "ravi",  "elena", "marco"};
  return v;
}

inline const std::vector<std::string>& last_names() {
  static const std::vector<std::string> v = {"reyes",  "kovacs", "okafor", "lindgren", "tanaka",
                                             "moreau", "silva",  "novak",  "haddad",   "byrne"};
  return v;
}

inline const std::vector<std::string>& org_names() {
  static const std::vector<std::string> v = {"northwind", "fabrikam", "contoso", "tailspin",
                                             "proseware", "lamna"};
  return v;
}

struct RowSink {
  std::map<std::string, std::vector<Json>> tables;
  std::map<std::string, int> counters;

  std::string add(const std::string& table, const std::string& prefix, Instant ts, Json fields) {
    int n = ++counters[prefix];
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s-%04d", prefix.c_str(), n);
    fields["row_id"] = buf;
    fields["timestamp"] = to_rfc3339(ts);
    tables[table].push_back(std::move(fields));
    return buf;
  }
};

struct World {
  Entity victim_user, victim_device, lateral_device, attacker_ip, attacker_ip2;
  Entity c2_url, payload_hash, attacker_email, cloud_store, admin_ip;
  std::string org;
  Instant end;  // incident creation time; telemetry lies within [end-72h, end]
};

inline std::string hex_hash(Rng& rng) {
  static const char* digits = "0123456789abcdef";
  std::string h;
  for (int i = 0; i < 64; ++i) h += digits[rng.below(16)];
  return h;
}

inline World make_world(Rng& rng) {
  World w;
  w.org = rng.pick(org_names());
  std::string user = rng.pick(first_names()) + "." + rng.pick(last_names());
  w.victim_user = normalize_entity(EntityKind::User, user + "@" + w.org + ".example");
  w.victim_device =
      normalize_entity(EntityKind::Device, "ws-" + std::to_string(100 + rng.below(900)));
  w.lateral_device =
      normalize_entity(EntityKind::Device, "srv-file-" + std::to_string(10 + rng.below(90)));
  w.attacker_ip = normalize_entity(EntityKind::Ip, "203.0.113." + std::to_string(2 + rng.below(250)));
  w.attacker_ip2 =
      normalize_entity(EntityKind::Ip, "198.51.100." + std::to_string(2 + rng.below(250)));
  w.c2_url = normalize_entity(
      EntityKind::Url, "https://cdn-" + rng.pick(last_names()) + std::to_string(rng.below(100)) +
                           ".example.net/sync");
  w.payload_hash = normalize_entity(EntityKind::FileHash, hex_hash(rng));
  w.attacker_email = normalize_entity(
      EntityKind::Email, "billing@" + rng.pick(org_names()) + "-invoices.example");
  w.cloud_store = normalize_entity(EntityKind::CloudResource,
                                   "storage://ext-archive-" + std::to_string(rng.below(1000)));
  w.admin_ip = normalize_entity(EntityKind::Ip, "10.20.30." + std::to_string(2 + rng.below(250)));
  w.end = from_rfc3339("2026-03-10T06:00:00Z") + static_cast<Instant>(rng.below(28)) * 86400;
  return w;
}

inline std::vector<TableSchema> table_schemas() {
  auto col = [](const std::string& name, ColumnType t,
                std::optional<EntityKind> k = std::nullopt) {
    return ColumnDef{name, t, k};
  };
  std::vector<TableSchema> out;
  out.push_back({"SignInEvents",
                 "Interactive and non-interactive account sign-in activity.",
                 {col("user", ColumnType::String, EntityKind::User),
                  col("source_ip", ColumnType::String, EntityKind::Ip),
                  col("device", ColumnType::String, EntityKind::Device),
                  col("action", ColumnType::String), col("result", ColumnType::String),
                  col("client_app", ColumnType::String)}});
  out.push_back({"ProcessEvents",
                 "Process creation with command lines and parent lineage.",
                 {col("device", ColumnType::String, EntityKind::Device),
                  col("user", ColumnType::String, EntityKind::User),
                  col("process_name", ColumnType::String),
                  col("command_line", ColumnType::String),
                  col("parent_process", ColumnType::String),
                  col("file_hash", ColumnType::String, EntityKind::FileHash)}});
  out.push_back({"NetworkEvents",
                 "Outbound and inbound network connections per device.",
                 {col("device", ColumnType::String, EntityKind::Device),
                  col("remote_ip", ColumnType::String, EntityKind::Ip),
                  col("remote_url", ColumnType::String, EntityKind::Url),
                  col("port", ColumnType::Int), col("bytes_out", ColumnType::Int),
                  col("direction", ColumnType::String)}});
  out.push_back({"EmailEvents",
                 "Inbound email delivery with URLs and attachments.",
                 {col("recipient", ColumnType::String, EntityKind::User),
                  col("sender", ColumnType::String, EntityKind::Email),
                  col("subject", ColumnType::String),
                  col("url", ColumnType::String, EntityKind::Url),
                  col("attachment_hash", ColumnType::String, EntityKind::FileHash),
                  col("verdict", ColumnType::String)}});
  out.push_back({"FileEvents",
                 "File create, write, rename, and delete operations.",
                 {col("device", ColumnType::String, EntityKind::Device),
                  col("user", ColumnType::String, EntityKind::User),
                  col("file_path", ColumnType::String),
                  col("file_hash", ColumnType::String, EntityKind::FileHash),
                  col("operation", ColumnType::String)}});
  out.push_back({"CloudStorageEvents",
                 "Uploads and downloads against cloud storage resources.",
                 {col("user", ColumnType::String, EntityKind::User),
                  col("resource", ColumnType::String, EntityKind::CloudResource),
                  col("client_ip", ColumnType::String, EntityKind::Ip),
                  col("operation", ColumnType::String), col("bytes", ColumnType::Int)}});
  out.push_back({"RegistryEvents",
                 "Registry key and value modifications.",
                 {col("device", ColumnType::String, EntityKind::Device),
                  col("user", ColumnType::String, EntityKind::User),
                  col("registry_key", ColumnType::String),
                  col("value_name", ColumnType::String),
                  col("operation", ColumnType::String)}});
  return out;
}

struct StageSpec {
  std::string id;
  Phase phase;
  std::string technique;
  std::string flavor;  // phish | valid-account | payload | admin-exec | impact |
                       // lateral | cloud-exfil | cred-dump | mail-rule | beacon
  bool loud = false;
  std::string detector;
  std::string alert_title;
  Severity severity = Severity::Medium;
  Instant hours_before_end = 0;
};

inline std::vector<StageSpec> stages_for(const std::string& template_name) {
  if (template_name == "ransomware") {
    return {
        {"ia-phish", Phase::InitialAccess, "T1566", "phish", true, "EmailProtection",
         "Malicious invoice attachment delivered", Severity::High, 40},
        {"ia-account", Phase::InitialAccess, "T1078", "valid-account", false,
         "IdentityProtection", "Sign-in from unfamiliar infrastructure", Severity::Medium, 38},
        {"ex-payload", Phase::Execution, "T1059.001", "payload", true, "EndpointEDR",
         "Encoded PowerShell launched from office document", Severity::High, 30},
        {"ex-wmi", Phase::Execution, "T1047", "admin-exec", false, "EndpointEDR",
         "Remote WMI process creation", Severity::Medium, 28},
        {"pc-lateral", Phase::PostCompromise, "T1021.002", "lateral", false,
         "LateralMovementDetection", "Admin share access to file server", Severity::Medium, 20},
        {"pc-impact", Phase::PostCompromise, "T1486", "impact", true, "RansomwareDetection",
         "Mass file encryption burst", Severity::High, 6},
    };
  }
  if (template_name == "initial-access") {
    return {
        {"ia-phish", Phase::InitialAccess, "T1566.002", "phish", true, "EmailProtection",
         "Credential-harvesting link delivered", Severity::High, 42},
        {"ia-remote", Phase::InitialAccess, "T1078", "valid-account", false,
         "IdentityProtection", "Legacy-protocol sign-in from new location", Severity::Medium,
         39},
        {"ex-userrun", Phase::Execution, "T1204.002", "payload", true, "EndpointEDR",
         "User opened weaponized attachment", Severity::High, 31},
        {"ex-schtask", Phase::Execution, "T1053.005", "admin-exec", false, "EndpointEDR",
         "Scheduled task registered by office process", Severity::Medium, 29},
        {"pc-creddump", Phase::PostCompromise, "T1003.001", "cred-dump", true,
         "CredentialGuard", "LSASS memory access by unsigned tool", Severity::High, 22},
        {"pc-mailrule", Phase::PostCompromise, "T1114.003", "mail-rule", false,
         "MailboxAudit", "External auto-forwarding rule created", Severity::Medium, 18},
    };
  }
  if (template_name == "exfiltration") {
    return {
        {"ia-phish", Phase::InitialAccess, "T1566", "phish", true, "EmailProtection",
         "Phishing message with staging link", Severity::High, 44},
        {"ia-account", Phase::InitialAccess, "T1078", "valid-account", false,
         "IdentityProtection", "Unusual OAuth client sign-in", Severity::Medium, 41},
        {"ex-script", Phase::Execution, "T1059.001", "payload", true, "EndpointEDR",
         "Collection script execution", Severity::High, 33},
        {"ex-wmi", Phase::Execution, "T1047", "admin-exec", false, "EndpointEDR",
         "WMI-driven archive staging", Severity::Medium, 30},
        {"pc-beacon", Phase::PostCompromise, "T1071.001", "beacon", false, "NetworkDetection",
         "Periodic web-protocol beaconing", Severity::Medium, 24},
        {"pc-exfil", Phase::PostCompromise, "T1567.002", "cloud-exfil", true, "DlpDetection",
         "Bulk upload to external cloud storage", Severity::High, 8},
    };
  }
  throw Error("UnknownTemplate", "no scenario template named " + template_name);
}

}  // namespace scenario_detail

Scenario generate_scenario(const std::string& template_name, std::uint64_t seed,
                           const std::filesystem::path& out_dir, ScenarioOptions options = {});

// ---------------------------------------------------------------------------
// implementation

inline Scenario generate_scenario(const std::string& template_name, std::uint64_t seed,
                                  const std::filesystem::path& out_dir, ScenarioOptions options) {
  using namespace scenario_detail;
  auto stage_specs = stages_for(template_name);  // validates the template name

  Rng rng(fnv1a64(template_name) ^ (seed * 0x9e3779b97f4a7c15ull + 1));
  World w = make_world(rng);
  RowSink sink;
  const Instant end = w.end;
  auto at_hours = [&](double hours_before) {
    return end - static_cast<Instant>(hours_before * 3600.0);
  };

  // --- background noise ----------------------------------------------------
  const auto scale = [&](int n) {
    return std::max(1, static_cast<int>(n * options.noise_scale));
  };
  std::vector<std::string> client_apps = {"browser", "outlook", "teams", "sync-client"};
  std::vector<std::string> benign_users;
  for (int i = 0; i < 6; ++i) {
    benign_users.push_back(rng.pick(first_names()) + "." + rng.pick(last_names()) + "@" + w.org +
                           ".example");
  }

  int n_signin = scale(1150);
  for (int i = 0; i < n_signin; ++i) {
    bool failure = rng.below(20) == 0;
    sink.add("SignInEvents", "n-si", at_hours(0.5 + rng.unit() * 46.0),
             Json{{"user", w.victim_user.value},
                  {"source_ip", "10.0.0.53"},
                  {"device", w.victim_device.value},
                  {"action", "sign_in"},
                  {"result", failure ? "failure" : "success"},
                  {"client_app", client_apps[rng.below(client_apps.size())]}});
  }

  int n_proc = scale(1080);
  for (int i = 0; i < n_proc; ++i) {
    bool routine = rng.below(10) < 9;  // 90% heartbeat services, rest ad-hoc
    std::string name = routine ? "svchost.exe" : "app-" + std::to_string(rng.below(400)) + ".exe";
    sink.add("ProcessEvents", "n-pr", at_hours(0.5 + rng.unit() * 46.0),
             Json{{"device", w.victim_device.value},
                  {"user", w.victim_user.value},
                  {"process_name", name},
                  {"command_line", routine ? name + " -k netsvcs" : name + " /id " +
                                                 std::to_string(rng.below(100000))},
                  {"parent_process", routine ? "services.exe" : "explorer.exe"},
                  {"file_hash", nullptr}});
  }

  int n_net = scale(290);
  for (int i = 0; i < n_net; ++i) {
    sink.add("NetworkEvents", "n-ne", at_hours(0.5 + rng.unit() * 46.0),
             Json{{"device", w.victim_device.value},
                  {"remote_ip", nullptr},
                  {"remote_url", "https://update.contoso-corp.example"},
                  {"port", 443},
                  {"bytes_out", static_cast<int>(200 + rng.below(4000))},
                  {"direction", "outbound"}});
  }

  int n_mail = scale(55);
  for (int i = 0; i < n_mail; ++i) {
    sink.add("EmailEvents", "n-em", at_hours(0.5 + rng.unit() * 46.0),
             Json{{"recipient", w.victim_user.value},
                  {"sender", benign_users[rng.below(benign_users.size())]},
                  {"subject", "re: weekly sync " + std::to_string(rng.below(100))},
                  {"url", nullptr},
                  {"attachment_hash", nullptr},
                  {"verdict", "clean"}});
  }

  int n_file = scale(110);
  for (int i = 0; i < n_file; ++i) {
    sink.add("FileEvents", "n-fi", at_hours(0.5 + rng.unit() * 46.0),
             Json{{"device", w.victim_device.value},
                  {"user", w.victim_user.value},
                  {"file_path", "c:/users/docs/report-" + std::to_string(rng.below(500)) + ".docx"},
                  {"file_hash", nullptr},
                  {"operation", rng.below(2) ? "write" : "read"}});
  }

  int n_cloud = scale(65);
  for (int i = 0; i < n_cloud; ++i) {
    sink.add("CloudStorageEvents", "n-cl", at_hours(0.5 + rng.unit() * 46.0),
             Json{{"user", w.victim_user.value},
                  {"resource", "storage://corp-share"},
                  {"client_ip", nullptr},
                  {"operation", rng.below(3) ? "download" : "upload"},
                  {"bytes", static_cast<int>(1000 + rng.below(90000))}});
  }

  int n_reg = scale(90);
  for (int i = 0; i < n_reg; ++i) {
    sink.add("RegistryEvents", "n-rg", at_hours(0.5 + rng.unit() * 46.0),
             Json{{"device", w.victim_device.value},
                  {"user", w.victim_user.value},
                  {"registry_key", "hklm/software/policies/entry-" + std::to_string(rng.below(60))},
                  {"value_name", "state"},
                  {"operation", "set"}});
  }

  // Benign-but-suspicious decoy: an IT vulnerability scan sweeping the victim
  // workstation. Exists so row-local judgment has something tempting to flag.
  std::vector<std::string> decoy_rows;
  std::string decoy_key_row;
  for (int i = 0; i < 12; ++i) {
    std::string id =
        sink.add("NetworkEvents", "scan", at_hours(26.0 + i * 0.01),
                 Json{{"device", w.victim_device.value},
                      {"remote_ip", w.admin_ip.value},
                      {"remote_url", nullptr},
                      {"port", static_cast<int>(1000 + i * 137)},
                      {"bytes_out", 120},
                      {"direction", "inbound"}});
    decoy_rows.push_back(id);
    if (i == 7) decoy_key_row = id;
  }

  // --- attack stages --------------------------------------------------------
  struct StageData {
    StageSpec spec;
    std::set<Entity> entities;
    std::vector<std::string> evidence;
    std::string loud_row;  // the row a row-local classifier would flag
  };
  std::vector<StageData> stages;

  for (const auto& spec : stage_specs) {
    StageData st;
    st.spec = spec;
    const Instant t0 = at_hours(static_cast<double>(spec.hours_before_end));

    if (spec.flavor == "phish") {
      st.entities = {w.victim_user, w.attacker_email, w.c2_url};
      for (int i = 0; i < 3; ++i) {
        std::string id = sink.add(
            "EmailEvents", "ph-em", t0 + i * 240,
            Json{{"recipient", w.victim_user.value},
                 {"sender", w.attacker_email.value},
                 {"subject", i == 0 ? "overdue invoice - action required" : "re: overdue invoice"},
                 {"url", w.c2_url.value},
                 {"attachment_hash", i == 0 ? Json(w.payload_hash.value) : Json(nullptr)},
                 {"verdict", i == 0 ? "malware_detected" : "delivered"}});
        st.evidence.push_back(id);
        if (i == 0) st.loud_row = id;
      }
      // Distinct action keeps these rows out of the bulk sign-in aggregates
      // while still reading as ordinary successful authentications.
      st.evidence.push_back(sink.add("SignInEvents", "ph-si", t0 + 1800,
                                     Json{{"user", w.victim_user.value},
                                          {"source_ip", w.attacker_ip.value},
                                          {"device", w.victim_device.value},
                                          {"action", "interactive_signin"},
                                          {"result", "success"},
                                          {"client_app", "browser"}}));
      st.entities.insert(w.attacker_ip);
    } else if (spec.flavor == "valid-account") {
      st.entities = {w.victim_user, w.attacker_ip};
      for (int i = 0; i < 4; ++i) {
        std::string id = sink.add("SignInEvents", "va-si", t0 + i * 3600,
                                  Json{{"user", w.victim_user.value},
                                       {"source_ip", w.attacker_ip.value},
                                       {"device", w.victim_device.value},
                                       {"action", "interactive_signin"},
                                       {"result", "success"},
                                       {"client_app", "legacy-auth"}});
        st.evidence.push_back(id);
      }
    } else if (spec.flavor == "payload") {
      st.entities = {w.victim_device, w.payload_hash, w.victim_user};
      std::string drop = sink.add("FileEvents", "pl-fi", t0,
                                  Json{{"device", w.victim_device.value},
                                       {"user", w.victim_user.value},
                                       {"file_path", "c:/users/downloads/invoice_viewer.exe"},
                                       {"file_hash", w.payload_hash.value},
                                       {"operation", "create"}});
      st.evidence.push_back(drop);
      std::string enc = sink.add(
          "ProcessEvents", "pl-pr", t0 + 120,
          Json{{"device", w.victim_device.value},
               {"user", w.victim_user.value},
               {"process_name", "powershell.exe"},
               {"command_line", "powershell.exe -nop -w hidden -enc JABzAD0ATgBlAHcALQBPAGIAagBlAGMAdA=="},
               {"parent_process", "winword.exe"},
               {"file_hash", nullptr}});
      st.evidence.push_back(enc);
      st.loud_row = enc;
      st.evidence.push_back(sink.add("ProcessEvents", "pl-pr", t0 + 180,
                                     Json{{"device", w.victim_device.value},
                                          {"user", w.victim_user.value},
                                          {"process_name", "invoice_viewer.exe"},
                                          {"command_line", "invoice_viewer.exe /quiet"},
                                          {"parent_process", "powershell.exe"},
                                          {"file_hash", w.payload_hash.value}}));
    } else if (spec.flavor == "admin-exec") {
      st.entities = {w.victim_device, w.victim_user};
      for (int i = 0; i < 2; ++i) {
        std::string cmd = spec.technique == "T1053.005"
                              ? "schtasks /create /tn updater /tr c:/programdata/sync.cmd /sc hourly"
                              : "wmic /node:" + w.lateral_device.value +
                                    " process call create c:/windows/temp/sync.cmd";
        std::string id = sink.add("ProcessEvents", "ax-pr", t0 + i * 600,
                                  Json{{"device", w.victim_device.value},
                                       {"user", w.victim_user.value},
                                       {"process_name", spec.technique == "T1053.005"
                                                            ? "schtasks.exe"
                                                            : "wmic.exe"},
                                       {"command_line", cmd},
                                       {"parent_process", "cmd.exe"},
                                       {"file_hash", nullptr}});
        st.evidence.push_back(id);
      }
    } else if (spec.flavor == "impact") {
      st.entities = {w.victim_device, w.victim_user};
      int burst = 30;
      for (int i = 0; i < burst; ++i) {
        std::string id = sink.add(
            "FileEvents", "im-fi", t0 + i * 20,
            Json{{"device", w.victim_device.value},
                 {"user", w.victim_user.value},
                 {"file_path", "c:/users/docs/report-" + std::to_string(i) + ".docx.locked"},
                 {"file_hash", nullptr},
                 {"operation", "rename"}});
        if (i < 4) st.evidence.push_back(id);
      }
      std::string note = sink.add("FileEvents", "im-fi", t0 + burst * 20,
                                  Json{{"device", w.victim_device.value},
                                       {"user", w.victim_user.value},
                                       {"file_path", "c:/users/docs/HOW_TO_RECOVER.txt"},
                                       {"file_hash", nullptr},
                                       {"operation", "create"}});
      st.evidence.push_back(note);
      st.loud_row = note;
    } else if (spec.flavor == "lateral") {
      st.entities = {w.victim_device, w.lateral_device, w.victim_user};
      for (int i = 0; i < 5; ++i) {
        std::string id = sink.add("NetworkEvents", "lt-ne", t0 + i * 300,
                                  Json{{"device", w.victim_device.value},
                                       {"remote_ip", nullptr},
                                       {"remote_url", nullptr},
                                       {"port", 445},
                                       {"bytes_out", static_cast<int>(4000 + rng.below(2000))},
                                       {"direction", "outbound"}});
        if (i < 2) st.evidence.push_back(id);
      }
      st.evidence.push_back(sink.add("SignInEvents", "lt-si", t0 + 1500,
                                     Json{{"user", w.victim_user.value},
                                          {"source_ip", nullptr},
                                          {"device", w.lateral_device.value},
                                          {"action", "remote_logon"},
                                          {"result", "success"},
                                          {"client_app", "smb"}}));
      for (int i = 0; i < 3; ++i) {
        std::string id = sink.add("FileEvents", "lt-fi", t0 + 1800 + i * 120,
                                  Json{{"device", w.lateral_device.value},
                                       {"user", w.victim_user.value},
                                       {"file_path", "d:/shares/finance/export-" +
                                                         std::to_string(i) + ".bak"},
                                       {"file_hash", nullptr},
                                       {"operation", "write"}});
        if (i == 0) st.evidence.push_back(id);
      }
      // Second-hop beacons reachable only after the round-2 pivot onto the
      // file server.
      for (int i = 0; i < 6; ++i) {
        std::string id = sink.add("NetworkEvents", "lt2-ne", t0 + 3600 + i * 420,
                                  Json{{"device", w.lateral_device.value},
                                       {"remote_ip", w.attacker_ip2.value},
                                       {"remote_url", nullptr},
                                       {"port", 8443},
                                       {"bytes_out", 900},
                                       {"direction", "outbound"}});
        if (i == 0) st.evidence.push_back(id);
      }
      st.entities.insert(w.attacker_ip2);
    } else if (spec.flavor == "cloud-exfil") {
      st.entities = {w.victim_user, w.cloud_store, w.attacker_ip};
      for (int i = 0; i < 8; ++i) {
        std::string id = sink.add("CloudStorageEvents", "xf-cl", t0 + i * 240,
                                  Json{{"user", w.victim_user.value},
                                       {"resource", w.cloud_store.value},
                                       {"client_ip", w.attacker_ip.value},
                                       {"operation", "upload"},
                                       {"bytes", static_cast<int>(40000000 + rng.below(20000000))}});
        if (i < 4) st.evidence.push_back(id);
        if (i == 0) st.loud_row = id;
      }
    } else if (spec.flavor == "cred-dump") {
      st.entities = {w.victim_device, w.victim_user};
      std::string dump = sink.add(
          "ProcessEvents", "cd-pr", t0,
          Json{{"device", w.victim_device.value},
               {"user", w.victim_user.value},
               {"process_name", "procdump64.exe"},
               {"command_line", "procdump64.exe -accepteula -ma lsass.exe c:/temp/ls.dmp"},
               {"parent_process", "cmd.exe"},
               {"file_hash", nullptr}});
      st.evidence.push_back(dump);
      st.loud_row = dump;
      st.evidence.push_back(sink.add("FileEvents", "cd-fi", t0 + 60,
                                     Json{{"device", w.victim_device.value},
                                          {"user", w.victim_user.value},
                                          {"file_path", "c:/temp/ls.dmp"},
                                          {"file_hash", nullptr},
                                          {"operation", "create"}}));
    } else if (spec.flavor == "mail-rule") {
      st.entities = {w.victim_user, w.attacker_email};
      for (int i = 0; i < 2; ++i) {
        std::string id = sink.add(
            "EmailEvents", "mr-em", t0 + i * 300,
            Json{{"recipient", w.victim_user.value},
                 {"sender", w.victim_user.value},
                 {"subject", i == 0 ? "[mailbox rule created] auto-forward to external"
                                    : "[mailbox rule updated] forward-all enabled"},
                 {"url", nullptr},
                 {"attachment_hash", nullptr},
                 {"verdict", "rule_audit"}});
        st.evidence.push_back(id);
      }
    } else if (spec.flavor == "beacon") {
      st.entities = {w.victim_device, w.c2_url};
      for (int i = 0; i < 10; ++i) {
        std::string id = sink.add("NetworkEvents", "bc-ne", t0 + i * 900,
                                  Json{{"device", w.victim_device.value},
                                       {"remote_ip", w.attacker_ip2.value},
                                       {"remote_url", w.c2_url.value},
                                       {"port", 443},
                                       {"bytes_out", 512},
                                       {"direction", "outbound"}});
        if (i < 3) st.evidence.push_back(id);
      }
      st.entities.insert(w.attacker_ip2);
    } else {
      throw Error("UnknownTemplate", "unhandled stage flavor " + spec.flavor);
    }
    stages.push_back(std::move(st));
  }

  // --- incident -------------------------------------------------------------
  char ord[16];
  std::snprintf(ord, sizeof(ord), "%02llu", static_cast<unsigned long long>(seed % 100));
  const std::string scenario_id = template_name + "-" + ord;

  Incident incident;
  incident.incident_id = "inc-" + scenario_id;
  incident.threat_type = template_name;
  incident.priority_score = 0.82 + static_cast<double>(seed % 10) / 100.0;
  incident.created_at = end;

  int quiet_left_unalerted = options.unalerted_quiet_stages;
  int alert_no = 0;
  for (auto& st : stages) {
    bool alerted = true;
    if (!st.spec.loud && quiet_left_unalerted > 0 && st.spec.phase != Phase::InitialAccess) {
      alerted = false;  // leave a quiet, non-IA stage open as a real gap
      --quiet_left_unalerted;
    }
    if (!alerted) continue;
    Alert a;
    a.alert_id = "al-" + scenario_id + "-" + std::to_string(++alert_no);
    a.detector_id = st.spec.detector;
    a.title = st.spec.alert_title;
    a.severity = st.spec.severity;
    a.techniques = {st.spec.technique};
    a.phase = st.spec.phase;
    a.timestamp = at_hours(static_cast<double>(st.spec.hours_before_end)) + 900;
    if (st.spec.flavor == "phish") {
      a.entities = {w.victim_user, w.attacker_email};
    } else if (st.spec.flavor == "valid-account") {
      a.entities = {w.victim_user, w.attacker_ip};
    } else if (st.spec.flavor == "payload") {
      a.entities = {w.victim_device, w.payload_hash};
    } else if (st.spec.flavor == "lateral") {
      a.entities = {w.victim_device, w.lateral_device};
    } else if (st.spec.flavor == "cloud-exfil") {
      a.entities = {w.victim_user, w.cloud_store};
    } else if (st.spec.flavor == "mail-rule") {
      a.entities = {w.victim_user, w.attacker_email};
    } else if (st.spec.flavor == "beacon") {
      a.entities = {w.victim_device, w.c2_url};
    } else {
      a.entities = {w.victim_device, w.victim_user};
    }
    incident.alerts.push_back(std::move(a));
  }

  // --- ground truth ----------------------------------------------------------
  std::vector<GroundTruthStage> ground_truth;
  std::set<std::string> alerted_techniques;
  for (const auto& a : incident.alerts) {
    alerted_techniques.insert(a.techniques.begin(), a.techniques.end());
  }
  for (const auto& st : stages) {
    GroundTruthStage g;
    g.stage_id = st.spec.id;
    g.phase = st.spec.phase;
    g.techniques = {st.spec.technique};
    g.entities = st.entities;
    g.evidence_row_ids = st.evidence;
    g.alerted = alerted_techniques.count(st.spec.technique) > 0;
    ground_truth.push_back(std::move(g));
  }

  // --- feeds ------------------------------------------------------------------
  std::vector<Json> ueba;
  ueba.push_back(FeedRecord{w.victim_user, "anomalous sign-in pattern", 0.8,
                            at_hours(44), at_hours(30)}
                     .to_json());
  ueba.push_back(FeedRecord{w.lateral_device, "unusual remote logon volume", 0.7,
                            at_hours(22), at_hours(16)}
                     .to_json());
  ueba.push_back(FeedRecord{normalize_entity(EntityKind::User, "ghost@" + w.org + ".example"),
                            "dormant account activity", 0.6, at_hours(30), at_hours(29)}
                     .to_json());
  std::vector<Json> ti;
  ti.push_back(FeedRecord{w.attacker_ip, "known hostile infrastructure", 0.95, at_hours(72),
                          at_hours(0)}
                   .to_json());
  ti.push_back(FeedRecord{w.c2_url, "malware distribution endpoint", 0.9, at_hours(72),
                          at_hours(0)}
                   .to_json());
  ti.push_back(FeedRecord{w.attacker_ip2, "suspicious bulletproof hosting", 0.85, at_hours(72),
                          at_hours(0)}
                   .to_json());
  ti.push_back(FeedRecord{normalize_entity(EntityKind::Ip, "192.0.2.77"), "sinkholed botnet",
                          0.9, at_hours(72), at_hours(0)}
                   .to_json());

  // --- oracle playbooks -------------------------------------------------------
  std::vector<Json> playbooks;
  {
    // table selection: six tables in round 1, a focused subset in round 2
    Json rules = Json::array();
    auto table_rule = [&](const std::string& table, int round, bool select, int lookback,
                          const std::string& why) {
      Json r{{"name", table + "-r" + std::to_string(round)},
             {"match", Json::array({Json{{"pointer", "/table/name"}, {"op", "equals"}, {"value", table}},
                                    Json{{"pointer", "/round"}, {"op", "equals"}, {"value", round}}})}};
      Json resp{{"select", select}, {"rationale", why}};
      if (select) resp["lookback_hours"] = lookback;
      r["respond"] = resp;
      rules.push_back(r);
    };
    for (const std::string t : {"SignInEvents", "ProcessEvents", "NetworkEvents", "EmailEvents",
                                "FileEvents", "CloudStorageEvents"}) {
      table_rule(t, 1, true, 72, "activity type matches the incident's attack pattern");
    }
    table_rule("RegistryEvents", 1, false, 0, "no registry-centric techniques in play");
    for (const std::string t : {"SignInEvents", "NetworkEvents", "FileEvents"}) {
      table_rule(t, 2, true, 48, "verify follow-on activity around pivot entities");
    }
    rules.push_back(Json{{"name", "r2-default-skip"},
                         {"respond", Json{{"select", false},
                                          {"rationale", "second round stays narrow"}}}});
    playbooks.push_back(Json{{"contract_id", "table_selection"}, {"rules", rules}});
  }
  {
    Json rules = Json::array();
    Json signin_rule{
        {"name", "signin"},
        {"match", Json::array({Json{{"pointer", "/table/name"}, {"op", "equals"}, {"value", "SignInEvents"}}})},
        {"respond",
         Json{{"levels",
               Json::array(
                   {Json{{"group_keys", Json::array({"action", "result"})},
                         {"support_threshold", 10},
                         {"rationale", "sign-ins repeat along action and outcome"}},
                    Json{{"group_keys", Json::array({"action"})},
                         {"support_threshold", 10},
                         {"rationale", "coarser fallback keeps failures visible"}}})}}}};
    if (seed % 3 == 0) signin_rule["invalid_attempts"] = 1;  // exercise one retry
    rules.push_back(signin_rule);
    rules.push_back(Json{
        {"name", "process"},
        {"match", Json::array({Json{{"pointer", "/table/name"}, {"op", "equals"}, {"value", "ProcessEvents"}}})},
        {"respond",
         Json{{"levels",
               Json::array(
                   {Json{{"group_keys", Json::array({"process_name", "parent_process"})},
                         {"support_threshold", 10},
                         {"rationale", "service heartbeats dominate the volume"}},
                    Json{{"group_keys", Json::array({"process_name"})},
                         {"support_threshold", 10},
                         {"rationale", "collapse remaining repetition by image"}}})}}}});
    rules.push_back(Json{
        {"name", "default"},
        {"respond",
         Json{{"levels", Json::array({Json{{"group_keys", Json::array({"$input:/candidate_columns/0"})},
                                           {"support_threshold", 12},
                                           {"rationale", "generic concentration fallback"}}})}}}});
    playbooks.push_back(Json{{"contract_id", "grouping_plan"}, {"rules", rules}});
  }
  {
    Json pivots = Json::array({w.lateral_device.canonical(), w.attacker_ip.canonical(),
                               w.attacker_ip2.canonical(), w.c2_url.canonical(),
                               w.cloud_store.canonical()});
    Json select_tpl;
    select_tpl["$select"] = Json{{"from", "/candidate_entities"},
                                 {"any_of", pivots},
                                 {"wrap", "entity"},
                                 {"extra", Json{{"rationale",
                                                 "tied to suspicious activity around the incident"}}}};
    Json rules = Json::array();
    rules.push_back(Json{{"name", "r1"},
                         {"match", Json::array({Json{{"pointer", "/round"}, {"op", "equals"}, {"value", 1}}})},
                         {"respond", Json{{"selected", select_tpl}}}});
    rules.push_back(Json{{"name", "r2"}, {"respond", Json{{"selected", Json::array()}}}});
    playbooks.push_back(Json{{"contract_id", "entity_selection"}, {"rules", rules}});
  }
  {
    auto scoped = [&](std::initializer_list<Entity> wanted, const std::string& from) {
      Json any = Json::array();
      for (const auto& e : wanted) any.push_back(e.canonical());
      Json t;
      t["$select"] = Json{{"from", from}, {"any_of", any}};
      return t;
    };
    Json r1_tasks = Json::array();
    r1_tasks.push_back(Json{{"kind", "depth"},
                            {"entity_scope", scoped({w.victim_user, w.victim_device},
                                                    "/incident_entities")},
                            {"hypothesis", "compromise"},
                            {"evidence_sought",
                             "initial access traces and authentication anomalies"}});
    r1_tasks.push_back(Json{{"kind", "depth"},
                            {"entity_scope", scoped({w.victim_device, w.payload_hash},
                                                    "/incident_entities")},
                            {"hypothesis", "execution"},
                            {"evidence_sought", "payload delivery and process lineage"}});
    r1_tasks.push_back(Json{{"kind", "depth"},
                            {"entity_scope", scoped({w.victim_user}, "/incident_entities")},
                            {"hypothesis", "benign-admin"},
                            {"evidence_sought", "routine activity that could explain the alerts"}});
    Json r2_tasks = Json::array();
    r2_tasks.push_back(Json{{"kind", "depth"},
                            {"entity_scope", scoped({w.victim_device, w.victim_user},
                                                    "/incident_entities")},
                            {"hypothesis", "persistence"},
                            {"evidence_sought", "follow-on activity confirming progression"}});
    r2_tasks.push_back(Json{{"kind", "lateral"},
                            {"entity_scope", scoped({w.lateral_device, w.attacker_ip,
                                                     w.attacker_ip2},
                                                    "/lateral_candidates")},
                            {"hypothesis", "lateral-movement"},
                            {"evidence_sought", "activity on surfaced hosts and infrastructure"}});
    r2_tasks.push_back(Json{{"kind", "lateral"},
                            {"entity_scope", scoped({w.c2_url, w.cloud_store, w.attacker_email},
                                                    "/lateral_candidates")},
                            {"hypothesis", "other"},
                            {"evidence_sought", "exfiltration or command channels"}});
    Json rules = Json::array();
    rules.push_back(Json{{"name", "r1"},
                         {"match", Json::array({Json{{"pointer", "/round"}, {"op", "equals"}, {"value", 1}}})},
                         {"prune_empty_scope", true},
                         {"respond", Json{{"tasks", r1_tasks}}}});
    rules.push_back(Json{{"name", "r2"},
                         {"prune_empty_scope", true},
                         {"respond", Json{{"tasks", r2_tasks}}}});
    playbooks.push_back(Json{{"contract_id", "plan_tasks"}, {"rules", rules}});
  }
  {
    Json keep = Json::object();
    for (const auto& st : stages) {
      for (const auto& row : st.evidence) {
        keep[row] = Json{{"stance", "Supports"},
                         {"explanation", st.spec.alert_title + " trace (" + st.spec.technique + ")"}};
      }
    }
    keep[decoy_key_row] = Json{{"stance", "Contextualizes"},
                               {"explanation", "inbound sweep from the IT scan console"}};
    Json kept_tpl;
    kept_tpl["$keep_rows"] = Json{{"ids_from", "/candidate_row_ids"}, {"keep", keep}};
    playbooks.push_back(Json{{"contract_id", "filter_evidence"},
                             {"rules", Json::array({Json{{"respond", Json{{"kept", kept_tpl}}}}})}});
  }
  {
    Json rules = Json::array();
    for (const auto& st : stages) {
      std::string gap_kind = st.spec.flavor == "lateral" || st.spec.flavor == "cloud-exfil"
                                 ? "NewEntity"
                                 : (st.spec.loud ? "MissingStage" : "MissingTechnique");
      Json finding{{"gap_kind", gap_kind},
                   {"phase", to_string(st.spec.phase)},
                   {"techniques", Json::array({st.spec.technique})},
                   {"implicated_entities", canonical_entities(st.entities)},
                   {"supporting_evidence", std::vector<std::string>(
                                               st.evidence.begin(),
                                               st.evidence.begin() +
                                                   std::min<std::size_t>(3, st.evidence.size()))},
                   {"narrative", st.spec.alert_title +
                                     " confirmed by independent telemetry evidence"}};
      rules.push_back(Json{
          {"name", st.spec.id},
          {"match",
           Json::array({Json{{"pointer", "/known_techniques"}, {"op", "not_contains"},
                             {"value", st.spec.technique}},
                        Json{{"pointer", "/evidence_row_ids"}, {"op", "contains"},
                             {"value", st.evidence.front()}}})},
          {"respond", Json::array({finding})}});
    }
    playbooks.push_back(Json{{"contract_id", "assess_gaps"},
                             {"combine", "append"},
                             {"append_key", "findings"},
                             {"rules", rules}});
  }
  {
    Json rules = Json::array();
    for (const auto& st : stages) {
      Json alert{{"title", st.spec.alert_title},
                 {"description",
                  "Investigation of incident telemetry shows " + st.spec.alert_title +
                      ", supported by correlated rows across the activity timeline and not "
                      "represented by the incident's existing alerts."},
                 {"severity", to_string(st.spec.severity)},
                 {"mitre_techniques", "$input:/finding/techniques"},
                 {"remediation",
                  Json::array({"Isolate the implicated assets and reset exposed credentials",
                               "Hunt for the cited indicators across the estate"})},
                 {"implicated_entities", "$input:/finding/implicated_entities"},
                 {"evidence_row_ids", "$input:/finding/supporting_evidence"}};
      rules.push_back(Json{
          {"name", st.spec.id},
          {"match", Json::array({Json{{"pointer", "/finding/techniques"}, {"op", "contains"},
                                      {"value", st.spec.technique}}})},
          {"respond", alert}});
    }
    playbooks.push_back(Json{{"contract_id", "generate_alert"}, {"rules", rules}});
  }
  {
    Json rules = Json::array();
    for (const auto& st : stages) {
      if (!st.spec.loud) continue;  // quiet stages look benign row by row
      rules.push_back(Json{
          {"name", st.spec.id},
          {"match",
           Json::array({Json{{"pointer", "/row/row_id"}, {"op", "equals"}, {"value", st.loud_row}},
                        Json{{"pointer", "/incident/known_techniques"}, {"op", "not_contains"},
                             {"value", st.spec.technique}}})},
          {"respond", Json{{"malicious", true},
                           {"technique", st.spec.technique},
                           {"severity", to_string(st.spec.severity)},
                           {"title", st.spec.alert_title + " (row-level)"},
                           {"remediation", Json::array({"Review the flagged event and contain the asset"})},
                           {"rationale", "row content matches a known-malicious pattern"}}}});
    }
    rules.push_back(Json{
        {"name", "decoy"},
        {"match", Json::array({Json{{"pointer", "/row/row_id"}, {"op", "equals"},
                                    {"value", decoy_key_row}}})},
        {"respond", Json{{"malicious", true},
                         {"technique", "T1046"},
                         {"severity", "Medium"},
                         {"title", "Port sweep against workstation"},
                         {"remediation", Json::array({"Verify scanner ownership"})},
                         {"rationale", "sequential port probes resemble network discovery"}}}});
    rules.push_back(Json{{"name", "default"},
                         {"respond", Json{{"malicious", false},
                                          {"rationale", "routine activity consistent with baseline"}}}});
    playbooks.push_back(Json{{"contract_id", "row_classify"}, {"rules", rules}});
  }

  // --- write the bundle --------------------------------------------------------
  std::filesystem::create_directories(out_dir / "tables");
  std::filesystem::create_directories(out_dir / "feeds");
  std::filesystem::create_directories(out_dir / "oracle");

  Json manifest{{"tables", Json::array()}};
  for (const auto& schema : table_schemas()) {
    Json entry = schema.to_json();
    entry["path"] = schema.name + ".jsonl";
    manifest["tables"].push_back(entry);
    write_jsonl(out_dir / "tables" / (schema.name + ".jsonl"), sink.tables[schema.name]);
  }
  write_file(out_dir / "tables" / "manifest.json", manifest.dump(2) + "\n");
  write_jsonl(out_dir / "feeds" / "ueba.jsonl", ueba);
  write_jsonl(out_dir / "feeds" / "ti.jsonl", ti);
  for (const auto& playbook : playbooks) {
    write_file(out_dir / "oracle" / (playbook.at("contract_id").get<std::string>() + ".json"),
               playbook.dump(2) + "\n");
  }
  write_jsonl(out_dir / "incident.jsonl", {incident.to_json()});

  Json gt = Json::array();
  for (const auto& g : ground_truth) gt.push_back(g.to_json());
  Json meta{{"scenario_id", scenario_id},
            {"template", template_name},
            {"seed", seed},
            {"incident", incident.to_json()},
            {"ground_truth", gt}};
  write_file(out_dir / "scenario.json", meta.dump(2) + "\n");

  Scenario s;
  s.scenario_id = scenario_id;
  s.template_name = template_name;
  s.seed = seed;
  s.dir = out_dir;
  s.incident = incident;
  s.ground_truth = ground_truth;
  return s;
}

// Structural self-checks over a generated bundle; throws on violation.
inline void validate_scenario(const Scenario& scenario, const AttackMap& attack) {
  validate_incident(scenario.incident, attack);
  std::set<std::string> row_ids;
  Json manifest = read_json(scenario.manifest_path());
  for (const auto& entry : manifest.at("tables")) {
    for_each_jsonl(scenario.dir / "tables" / entry.at("path").get<std::string>(),
                   [&](std::size_t, const Json& j) {
                     row_ids.insert(j.at("row_id").get<std::string>());
                   });
  }
  std::set<std::string> stage_techniques;
  std::set<Entity> stage_entities;
  for (const auto& g : scenario.ground_truth) {
    stage_entities.insert(g.entities.begin(), g.entities.end());
  }
  for (const auto& g : scenario.ground_truth) {
    if (g.evidence_row_ids.empty()) {
      throw Error("BadScenario", g.stage_id + ": stage has no evidence rows");
    }
    for (const auto& row : g.evidence_row_ids) {
      if (!row_ids.count(row)) {
        throw Error("BadScenario", g.stage_id + ": evidence row " + row + " not in telemetry");
      }
    }
    stage_techniques.insert(g.techniques.begin(), g.techniques.end());
    if (attack.phase_of(g.techniques.front()) != g.phase) {
      throw Error("BadScenario", g.stage_id + ": phase disagrees with technique mapping");
    }
  }
  for (const auto& a : scenario.incident.alerts) {
    for (const auto& t : a.techniques) {
      if (!stage_techniques.count(t)) {
        throw Error("BadScenario",
                    a.alert_id + ": alert technique " + t + " not covered by ground truth");
      }
    }
    for (const auto& e : a.entities) {
      if (!stage_entities.count(e)) {
        throw Error("BadScenario",
                    a.alert_id + ": alert entity " + e.canonical() + " not in ground truth");
      }
    }
  }
}

}  // namespace huntline
