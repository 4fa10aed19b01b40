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

#include "huntline/contracts.hpp"
#include "huntline/core.hpp"
#include "huntline/investigation.hpp"
#include "huntline/timeline.hpp"

namespace huntline {

enum class GapKind { MissingStage, MissingTechnique, NewEntity };

inline const char* to_string(GapKind k) {
  switch (k) {
    case GapKind::MissingStage: return "MissingStage";
    case GapKind::MissingTechnique: return "MissingTechnique";
    case GapKind::NewEntity: return "NewEntity";
  }
  return "?";
}

inline GapKind gap_kind_from_string(const std::string& s) {
  if (s == "MissingStage") return GapKind::MissingStage;
  if (s == "MissingTechnique") return GapKind::MissingTechnique;
  if (s == "NewEntity") return GapKind::NewEntity;
  throw Error("BadGapKind", "unknown gap kind: " + s);
}

struct GapFinding {
  GapKind gap_kind = GapKind::MissingStage;
  Phase phase = Phase::InitialAccess;
  std::vector<std::string> techniques;
  std::set<Entity> implicated_entities;
  std::vector<std::string> supporting_evidence;  // row ids, non-empty
  std::string narrative;

  Json to_json() const {
    return Json{{"gap_kind", to_string(gap_kind)},
                {"phase", to_string(phase)},
                {"techniques", techniques},
                {"implicated_entities", canonical_entities(implicated_entities)},
                {"supporting_evidence", supporting_evidence},
                {"narrative", narrative}};
  }
};

struct DynamicAlert {
  std::string alert_id;
  std::string incident_id;
  std::string title;
  std::string description;
  Severity severity = Severity::Medium;
  std::vector<std::string> mitre_techniques;
  std::vector<std::string> remediation;
  std::set<Entity> implicated_entities;
  std::vector<std::string> evidence_row_ids;
  Phase phase = Phase::InitialAccess;

  Json to_json() const {
    Json ents = Json::array();
    for (const auto& e : implicated_entities) ents.push_back(e.to_json());
    return Json{{"alert_id", alert_id},
                {"incident_id", incident_id},
                {"title", title},
                {"description", description},
                {"severity", to_string(severity)},
                {"mitre_techniques", mitre_techniques},
                {"remediation", remediation},
                {"implicated_entities", ents},
                {"evidence_row_ids", evidence_row_ids},
                {"phase", to_string(phase)}};
  }

  static DynamicAlert from_json(const Json& j) {
    DynamicAlert a;
    a.alert_id = j.at("alert_id").get<std::string>();
    a.incident_id = j.at("incident_id").get<std::string>();
    a.title = j.at("title").get<std::string>();
    a.description = j.at("description").get<std::string>();
    a.severity = severity_from_string(j.at("severity").get<std::string>());
    a.mitre_techniques = j.at("mitre_techniques").get<std::vector<std::string>>();
    a.remediation = j.at("remediation").get<std::vector<std::string>>();
    for (const auto& e : j.at("implicated_entities")) {
      a.implicated_entities.insert(Entity::from_json(e));
    }
    a.evidence_row_ids = j.at("evidence_row_ids").get<std::vector<std::string>>();
    a.phase = phase_from_string(j.at("phase").get<std::string>());
    return a;
  }
};

// ---------------------------------------------------------------------------
// deterministic acceptance checks shared by the investigation pipeline and
// the row-only baseline

struct AlertCandidate {
  std::string title;
  std::string description;
  Severity severity = Severity::Medium;
  std::vector<std::string> techniques;
  std::vector<std::string> remediation;
  std::set<Entity> entities;
  std::vector<std::string> evidence_row_ids;
};

class AlertValidator {
 public:
  AlertValidator(const Incident& incident, const ActivityTimeline& timeline,
                 const AttackMap& attack, std::map<std::string, std::vector<Stance>> row_stances)
      : incident_(&incident),
        timeline_(&timeline),
        attack_(&attack),
        row_stances_(std::move(row_stances)),
        incident_techniques_(incident.technique_set()),
        incident_entities_(incident.entities()),
        timeline_entities_(timeline.all_entities()) {}

  // Applies grounding, novelty, duplicate, and severity rules; returns the
  // finished alert or nothing (suppression), never a partial alert.
  std::optional<DynamicAlert> accept(const AlertCandidate& candidate,
                                     const std::vector<DynamicAlert>& already_emitted,
                                     std::string* reject_reason = nullptr) {
    auto reject = [&](const std::string& why) -> std::optional<DynamicAlert> {
      if (reject_reason) *reject_reason = why;
      return std::nullopt;
    };
    if (candidate.techniques.empty() || candidate.entities.empty() ||
        candidate.evidence_row_ids.empty() || candidate.remediation.empty()) {
      return reject("missing required content");
    }
    for (const auto& t : candidate.techniques) {
      if (!attack_->contains(t)) return reject("unknown technique " + t);
    }
    for (const auto& e : candidate.entities) {
      if (!timeline_entities_.count(e)) {
        return reject("entity " + e.canonical() + " not present in timeline");
      }
    }
    for (const auto& row_id : candidate.evidence_row_ids) {
      const EventRow* row = timeline_->find_row(row_id);
      if (!row) return reject("evidence row " + row_id + " not in timeline");
      if (row->is_alert_row) return reject("evidence row " + row_id + " is an alert row");
    }

    // Gap soundness: at least one technique or entity beyond the incident's
    // existing alert set.
    bool novel_technique = false;
    for (const auto& t : candidate.techniques) {
      if (!incident_techniques_.count(t)) novel_technique = true;
    }
    bool novel_entity = false;
    for (const auto& e : candidate.entities) {
      if (!incident_entities_.count(e)) novel_entity = true;
    }
    if (!novel_technique && !novel_entity) {
      return reject("duplicates activity already covered by incident alerts");
    }

    // Duplicate if techniques and entities are both subsets of an existing
    // incident alert or an alert already emitted in this run.
    std::set<std::string> tset(candidate.techniques.begin(), candidate.techniques.end());
    for (const auto& a : incident_->alerts) {
      if (subset_of(tset, std::set<std::string>(a.techniques.begin(), a.techniques.end())) &&
          subset_of(candidate.entities, a.entities)) {
        return reject("duplicate of incident alert " + a.alert_id);
      }
    }
    for (const auto& a : already_emitted) {
      if (subset_of(tset, std::set<std::string>(a.mitre_techniques.begin(),
                                                a.mitre_techniques.end())) &&
          subset_of(candidate.entities, a.implicated_entities)) {
        return reject("duplicate of dynamic alert " + a.alert_id);
      }
    }

    DynamicAlert alert;
    alert.incident_id = incident_->incident_id;
    alert.alert_id = "dyn-" + incident_->incident_id + "-" +
                     std::to_string(already_emitted.size() + 1);
    alert.title = candidate.title;
    alert.description = candidate.description;
    alert.severity = clamp_severity(candidate);
    alert.mitre_techniques = candidate.techniques;
    alert.remediation = candidate.remediation;
    alert.implicated_entities = candidate.entities;
    alert.evidence_row_ids = candidate.evidence_row_ids;
    alert.phase = attack_->phase_of(candidate.techniques.front());
    return alert;
  }

 private:
  template <typename T>
  static bool subset_of(const std::set<T>& a, const std::set<T>& b) {
    for (const auto& x : a) {
      if (!b.count(x)) return false;
    }
    return true;
  }

  // An alert backed only by Contextualizes-stance evidence is capped at Medium.
  Severity clamp_severity(const AlertCandidate& candidate) const {
    bool any_known = false;
    bool all_contextual = true;
    for (const auto& row_id : candidate.evidence_row_ids) {
      auto it = row_stances_.find(row_id);
      if (it == row_stances_.end()) continue;
      for (Stance s : it->second) {
        any_known = true;
        if (s != Stance::Contextualizes) all_contextual = false;
      }
    }
    if (any_known && all_contextual && candidate.severity > Severity::Medium) {
      return Severity::Medium;
    }
    return candidate.severity;
  }

  const Incident* incident_;
  const ActivityTimeline* timeline_;
  const AttackMap* attack_;
  std::map<std::string, std::vector<Stance>> row_stances_;
  std::set<std::string> incident_techniques_;
  std::set<Entity> incident_entities_;
  std::set<Entity> timeline_entities_;
};

inline std::map<std::string, std::vector<Stance>> stance_index(
    const std::vector<EvidenceItem>& evidence) {
  std::map<std::string, std::vector<Stance>> out;
  for (const auto& e : evidence) out[e.row_id].push_back(e.stance);
  return out;
}

// ---------------------------------------------------------------------------
// gap assessment and alert generation

class Alerting {
 public:
  Alerting(const ContractGateway& gateway, const AttackMap& attack)
      : gateway_(&gateway), attack_(&attack) {}

  // One contract execution over the collected evidence (grouped by task);
  // findings are then re-checked deterministically (phase consistency,
  // novelty) before use.
  std::vector<GapFinding> assess_gaps(const IncidentSummary& summary,
                                      const std::vector<InvestigativeTask>& tasks,
                                      const std::vector<EvidenceItem>& evidence,
                                      const ActivityTimeline& timeline, const Incident& incident,
                                      std::vector<ContractOutcome>& outcomes) const {
    if (evidence.empty()) return {};  // nothing to assess, no model call

    std::map<std::string, std::string> hypothesis_of;
    for (const auto& t : tasks) hypothesis_of[t.task_id] = t.hypothesis;
    Json evidence_json = Json::array();
    Json evidence_ids = Json::array();
    std::set<std::string> seen_ids;
    for (const auto& item : evidence) {
      const EventRow* row = timeline.find_row(item.row_id);
      if (!row || row->is_alert_row) continue;
      Json e = item.to_json();
      auto h = hypothesis_of.find(item.task_id);
      e["hypothesis"] = h == hypothesis_of.end() ? "" : h->second;
      e["table"] = row->table;
      e["timestamp"] = to_rfc3339(row->timestamp);
      e["entities"] = canonical_entities(row->all_entities());
      evidence_json.push_back(std::move(e));
      if (seen_ids.insert(item.row_id).second) evidence_ids.push_back(item.row_id);
    }
    if (evidence_json.empty()) return {};

    Json enrichments = Json::array();
    for (const auto& e : timeline.enrichments) enrichments.push_back(e.to_json());

    const std::set<std::string> known_techniques = incident.technique_set();
    Json input{{"summary", summary.to_json()},
               {"known_techniques", std::vector<std::string>(known_techniques.begin(),
                                                             known_techniques.end())},
               {"known_entities", canonical_entities(incident.entities())},
               {"evidence", evidence_json},
               {"evidence_row_ids", evidence_ids},
               {"candidate_entities", canonical_entities(timeline.all_entities())},
               {"enrichments", enrichments}};

    ContractOutcome outcome = gateway_->execute("assess_gaps", input);
    std::vector<GapFinding> findings;
    if (outcome.valid()) {
      for (const auto& f : (*outcome.output)["findings"]) {
        GapFinding finding;
        finding.gap_kind = gap_kind_from_string(f.at("gap_kind").get<std::string>());
        finding.phase = phase_from_string(f.at("phase").get<std::string>());
        finding.techniques = f.at("techniques").get<std::vector<std::string>>();
        for (const auto& e : f.at("implicated_entities")) {
          finding.implicated_entities.insert(Entity::parse_canonical(e.get<std::string>()));
        }
        finding.supporting_evidence =
            f.at("supporting_evidence").get<std::vector<std::string>>();
        finding.narrative = f.at("narrative").get<std::string>();
        if (accept_finding(finding, incident)) findings.push_back(std::move(finding));
      }
    }
    outcomes.push_back(std::move(outcome));
    return findings;
  }

  // One generation contract per finding; candidates pass through the shared
  // validator (schema is contract-side, novelty/dedup/severity here).
  std::vector<DynamicAlert> generate_alerts(const std::vector<GapFinding>& findings,
                                            const Incident& incident,
                                            const ActivityTimeline& timeline,
                                            const std::vector<EvidenceItem>& evidence,
                                            std::vector<ContractOutcome>& outcomes) const {
    AlertValidator validator(incident, timeline, *attack_, stance_index(evidence));
    Json lite = Investigator::incident_lite(incident);

    std::vector<DynamicAlert> alerts;
    for (const auto& finding : findings) {
      Json input{{"finding", finding.to_json()},
                 {"incident", lite},
                 {"allowed_techniques", finding.techniques},
                 {"allowed_entities", canonical_entities(finding.implicated_entities)},
                 {"allowed_evidence", finding.supporting_evidence}};
      ContractOutcome outcome = gateway_->execute("generate_alert", input);
      if (outcome.valid()) {
        const Json& o = *outcome.output;
        AlertCandidate candidate;
        candidate.title = o.at("title").get<std::string>();
        candidate.description = o.at("description").get<std::string>();
        candidate.severity = severity_from_string(o.at("severity").get<std::string>());
        candidate.techniques = o.at("mitre_techniques").get<std::vector<std::string>>();
        candidate.remediation = o.at("remediation").get<std::vector<std::string>>();
        for (const auto& e : o.at("implicated_entities")) {
          candidate.entities.insert(Entity::parse_canonical(e.get<std::string>()));
        }
        candidate.evidence_row_ids = o.at("evidence_row_ids").get<std::vector<std::string>>();
        if (auto alert = validator.accept(candidate, alerts)) {
          alerts.push_back(std::move(*alert));
        }
      }
      outcomes.push_back(std::move(outcome));
    }
    return alerts;
  }

 private:
  // Phase must match the mapped phase of the first technique, and the finding
  // must introduce something the incident's alerts do not already cover.
  bool accept_finding(const GapFinding& finding, const Incident& incident) const {
    if (finding.techniques.empty()) return false;
    for (const auto& t : finding.techniques) {
      if (!attack_->contains(t)) return false;
    }
    if (attack_->phase_of(finding.techniques.front()) != finding.phase) return false;

    const std::set<std::string> known = incident.technique_set();
    const std::set<Entity> known_entities = incident.entities();
    bool all_techniques_known = true;
    for (const auto& t : finding.techniques) {
      if (!known.count(t)) all_techniques_known = false;
    }
    bool all_entities_known = true;
    for (const auto& e : finding.implicated_entities) {
      if (!known_entities.count(e)) all_entities_known = false;
    }
    return !(all_techniques_known && all_entities_known);
  }

  const ContractGateway* gateway_;
  const AttackMap* attack_;
};

// ---------------------------------------------------------------------------
// emission

struct EmissionReceipt {
  struct Entry {
    std::string alert_id;
    std::int64_t offset = 0;  // byte offset of the record in the sink file
  };
  std::vector<Entry> entries;
  int skipped_duplicates = 0;

  Json to_json() const {
    Json es = Json::array();
    for (const auto& e : entries) {
      es.push_back(Json{{"alert_id", e.alert_id}, {"offset", e.offset}});
    }
    return Json{{"entries", es}, {"skipped_duplicates", skipped_duplicates}};
  }
};

class SinkUnavailableError : public Error {
 public:
  explicit SinkUnavailableError(const std::string& path)
      : Error("SinkUnavailable", "cannot append to alert sink: " + path) {}
};

// Append-only JSONL sink; re-emission of an alert_id already present in the
// file is a no-op, so emission is idempotent.
inline EmissionReceipt emit(const std::vector<DynamicAlert>& alerts,
                            const std::filesystem::path& sink) {
  std::set<std::string> existing;
  std::error_code ec;
  if (std::filesystem::exists(sink, ec)) {
    try {
      for_each_jsonl(sink, [&](std::size_t, const Json& j) {
        existing.insert(j.at("alert_id").get<std::string>());
      });
    } catch (const std::exception&) {
      throw SinkUnavailableError(sink.string());
    }
  }
  if (sink.has_parent_path()) std::filesystem::create_directories(sink.parent_path(), ec);
  std::ofstream out(sink, std::ios::binary | std::ios::app);
  if (!out) throw SinkUnavailableError(sink.string());

  EmissionReceipt receipt;
  std::int64_t offset = std::filesystem::exists(sink)
                            ? static_cast<std::int64_t>(std::filesystem::file_size(sink))
                            : 0;
  for (const auto& a : alerts) {
    if (existing.count(a.alert_id)) {
      ++receipt.skipped_duplicates;
      continue;
    }
    std::string line = a.to_json().dump() + "\n";
    out << line;
    if (!out) throw SinkUnavailableError(sink.string());
    receipt.entries.push_back({a.alert_id, offset});
    offset += static_cast<std::int64_t>(line.size());
    existing.insert(a.alert_id);
  }
  out.flush();
  if (!out) throw SinkUnavailableError(sink.string());
  return receipt;
}

// ---------------------------------------------------------------------------
// standalone grounding audit over emitted alerts

// Machine-checkable validation of an alert file against its timeline and
// original incident: entity/evidence resolution, technique validity, phase
// consistency, and gap soundness.
inline std::vector<std::string> audit_alerts(const std::vector<DynamicAlert>& alerts,
                                             const ActivityTimeline& timeline,
                                             const Incident& incident, const AttackMap& attack) {
  std::vector<std::string> violations;
  auto flag = [&](const DynamicAlert& a, const std::string& what) {
    violations.push_back(a.alert_id + ": " + what);
  };
  const std::set<Entity> timeline_entities = timeline.all_entities();
  const std::set<std::string> known_techniques = incident.technique_set();
  const std::set<Entity> known_entities = incident.entities();

  for (const auto& a : alerts) {
    if (a.incident_id != incident.incident_id) flag(a, "incident_id mismatch");
    if (a.title.empty()) flag(a, "empty title");
    if (a.description.empty()) flag(a, "empty description");
    if (a.remediation.empty()) flag(a, "empty remediation");
    if (a.mitre_techniques.empty()) flag(a, "no techniques");
    if (a.implicated_entities.empty()) flag(a, "no implicated entities");
    if (a.evidence_row_ids.empty()) flag(a, "no evidence rows");

    for (const auto& t : a.mitre_techniques) {
      if (!is_technique_id(t)) {
        flag(a, "malformed technique id " + t);
      } else if (!attack.contains(t)) {
        flag(a, "unmapped technique " + t);
      }
    }
    if (!a.mitre_techniques.empty() && attack.contains(a.mitre_techniques.front()) &&
        attack.phase_of(a.mitre_techniques.front()) != a.phase) {
      flag(a, "phase does not match primary technique");
    }
    for (const auto& e : a.implicated_entities) {
      if (!timeline_entities.count(e)) flag(a, "entity " + e.canonical() + " unresolved");
    }
    for (const auto& row_id : a.evidence_row_ids) {
      const EventRow* row = timeline.find_row(row_id);
      if (!row) {
        flag(a, "evidence row " + row_id + " unresolved");
      } else if (row->is_alert_row) {
        flag(a, "evidence row " + row_id + " is an alert row");
      }
    }

    bool novel = false;
    for (const auto& t : a.mitre_techniques) {
      if (!known_techniques.count(t)) novel = true;
    }
    for (const auto& e : a.implicated_entities) {
      if (!known_entities.count(e)) novel = true;
    }
    if (!novel) flag(a, "introduces no new technique or entity");
  }
  return violations;
}

inline std::vector<DynamicAlert> load_alerts(const std::filesystem::path& path) {
  std::vector<DynamicAlert> out;
  for_each_jsonl(path, [&](std::size_t, const Json& j) {
    out.push_back(DynamicAlert::from_json(j));
  });
  return out;
}

}  // namespace huntline
