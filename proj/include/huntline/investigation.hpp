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

#include "huntline/contracts.hpp"
#include "huntline/core.hpp"
#include "huntline/timeline.hpp"

namespace huntline {

// ---------------------------------------------------------------------------
// incident summary

struct DetectorGroup {
  std::string detector_id;
  int alert_count = 0;
  std::string representative_title;  // title of the group's earliest alert
  std::set<Entity> entities;
  std::set<std::string> techniques;
  Instant first_seen = 0;
  Instant last_seen = 0;

  Json to_json() const {
    return Json{{"detector_id", detector_id},
                {"alert_count", alert_count},
                {"representative_title", representative_title},
                {"entities", canonical_entities(entities)},
                {"techniques", std::vector<std::string>(techniques.begin(), techniques.end())},
                {"first_seen", to_rfc3339(first_seen)},
                {"last_seen", to_rfc3339(last_seen)}};
  }
};

struct IncidentSummary {
  std::string incident_id;
  std::string threat_type;
  std::vector<DetectorGroup> detector_groups;
  std::set<Phase> phase_coverage;

  std::set<Entity> entities() const {
    std::set<Entity> out;
    for (const auto& g : detector_groups) out.insert(g.entities.begin(), g.entities.end());
    return out;
  }

  Json to_json() const {
    Json groups = Json::array();
    for (const auto& g : detector_groups) groups.push_back(g.to_json());
    Json phases = Json::array();
    for (Phase p : phase_coverage) phases.push_back(to_string(p));
    return Json{{"incident_id", incident_id},
                {"threat_type", threat_type},
                {"detector_groups", groups},
                {"phase_coverage", phases}};
  }
};

inline IncidentSummary summarize_incident(const Incident& incident) {
  IncidentSummary s;
  s.incident_id = incident.incident_id;
  s.threat_type = incident.threat_type;

  std::map<std::string, std::vector<const Alert*>> by_detector;
  for (const auto& a : incident.alerts) {
    by_detector[a.detector_id].push_back(&a);
    s.phase_coverage.insert(a.phase);
  }
  for (auto& [detector, alerts] : by_detector) {
    DetectorGroup g;
    g.detector_id = detector;
    g.alert_count = static_cast<int>(alerts.size());
    const Alert* earliest = alerts.front();
    for (const Alert* a : alerts) {
      if (a->timestamp < earliest->timestamp ||
          (a->timestamp == earliest->timestamp && a->alert_id < earliest->alert_id)) {
        earliest = a;
      }
      g.entities.insert(a->entities.begin(), a->entities.end());
      g.techniques.insert(a->techniques.begin(), a->techniques.end());
      g.first_seen = g.first_seen == 0 ? a->timestamp : std::min(g.first_seen, a->timestamp);
      g.last_seen = std::max(g.last_seen, a->timestamp);
    }
    g.representative_title = earliest->title;
    s.detector_groups.push_back(std::move(g));
  }
  return s;
}

// ---------------------------------------------------------------------------
// task budget

struct TaskBudget {
  int max_tasks_total = 4;
  int max_tasks_per_round = 2;
};

// Step function over the incident prioritization score.
inline TaskBudget derive_budget(double priority_score) {
  if (priority_score < 0.0 || priority_score > 1.0) {
    throw Error("OutOfRange", "priority score outside [0,1]");
  }
  TaskBudget b;
  if (priority_score < 0.3) {
    b.max_tasks_total = 4;
  } else if (priority_score <= 0.7) {
    b.max_tasks_total = 8;
  } else {
    b.max_tasks_total = 12;
  }
  b.max_tasks_per_round = b.max_tasks_total / 2;
  return b;
}

// ---------------------------------------------------------------------------
// tasks and evidence

enum class TaskKind { Depth, Lateral };

inline const char* to_string(TaskKind k) { return k == TaskKind::Depth ? "depth" : "lateral"; }

enum class Stance { Supports, Refutes, Contextualizes };

inline const char* to_string(Stance s) {
  switch (s) {
    case Stance::Supports: return "Supports";
    case Stance::Refutes: return "Refutes";
    case Stance::Contextualizes: return "Contextualizes";
  }
  return "?";
}

inline Stance stance_from_string(const std::string& s) {
  if (s == "Supports") return Stance::Supports;
  if (s == "Refutes") return Stance::Refutes;
  if (s == "Contextualizes") return Stance::Contextualizes;
  throw Error("BadStance", "unknown stance: " + s);
}

struct InvestigativeTask {
  std::string task_id;
  int round = 1;
  TaskKind kind = TaskKind::Depth;
  std::set<Entity> entity_scope;
  std::string hypothesis;  // compromise | execution | persistence | lateral-movement | benign-admin | other
  std::string evidence_sought;

  Json to_json() const {
    return Json{{"task_id", task_id},
                {"round", round},
                {"kind", to_string(kind)},
                {"entity_scope", canonical_entities(entity_scope)},
                {"hypothesis", hypothesis},
                {"evidence_sought", evidence_sought}};
  }
};

struct EvidenceItem {
  std::string task_id;
  std::string row_id;
  Stance stance = Stance::Contextualizes;
  std::string explanation;

  Json to_json() const {
    return Json{{"task_id", task_id},
                {"row_id", row_id},
                {"stance", to_string(stance)},
                {"explanation", explanation}};
  }
};

struct InvestigationResult {
  IncidentSummary summary;
  TaskBudget budget;
  std::vector<InvestigativeTask> tasks;
  std::vector<EvidenceItem> evidence;
  int rounds_executed = 0;

  Json to_json() const {
    Json ts = Json::array();
    for (const auto& t : tasks) ts.push_back(t.to_json());
    Json es = Json::array();
    for (const auto& e : evidence) es.push_back(e.to_json());
    return Json{{"summary", summary.to_json()},
                {"budget", Json{{"max_tasks_total", budget.max_tasks_total},
                                {"max_tasks_per_round", budget.max_tasks_per_round}}},
                {"tasks", ts},
                {"evidence", es},
                {"rounds_executed", rounds_executed}};
  }
};

// ---------------------------------------------------------------------------
// investigator

struct InvestigationConfig {
  int filter_batch_size = 25;  // candidate rows per relevance-filter call
  unsigned concurrency = 4;
};

class Investigator {
 public:
  Investigator(const ContractGateway& gateway, InvestigationConfig config = {})
      : gateway_(&gateway), config_(config) {}

  // Single planning contract per round. Round 1 allows depth tasks over
  // incident entities only; round 2 adds lateral tasks over entities the
  // timeline surfaced beyond the incident. Suppression yields no tasks.
  std::vector<InvestigativeTask> plan(const IncidentSummary& summary,
                                      const ActivityTimeline& timeline,
                                      const std::vector<EvidenceItem>& prior_evidence, int round,
                                      int max_tasks,
                                      std::vector<ContractOutcome>& outcomes) const {
    if (round != 1 && round != 2) throw Error("BadRound", "round must be 1 or 2");
    if (max_tasks <= 0) return {};

    const std::set<Entity> incident_entities = summary.entities();
    std::vector<std::string> lateral;
    for (const auto& e : timeline.non_alert_entities()) {
      if (!incident_entities.count(e)) lateral.push_back(e.canonical());
    }
    std::vector<std::string> allowed_kinds = {"depth"};
    if (round == 2) allowed_kinds.push_back("lateral");

    std::set<std::string> tables;
    std::int64_t row_count = 0;
    for (const auto& r : timeline.rows) {
      if (r.is_alert_row) continue;
      tables.insert(r.table);
      ++row_count;
    }
    Json enrichments = Json::array();
    for (const auto& e : timeline.enrichments) {
      enrichments.push_back(
          Json{{"target", e.target_entity ? e.target_entity->canonical() : *e.target_row},
               {"source", e.source == Enrichment::Source::Ueba ? "UEBA" : "ThreatIntel"},
               {"label", e.label},
               {"score", e.score}});
    }
    Json prior = Json::array();
    for (const auto& e : prior_evidence) prior.push_back(e.to_json());

    Json input{{"summary", summary.to_json()},
               {"round", round},
               {"max_tasks", max_tasks},
               {"allowed_kinds", allowed_kinds},
               {"incident_entities", canonical_entities(incident_entities)},
               {"lateral_candidates", lateral},
               {"timeline_overview",
                Json{{"row_count", row_count},
                     {"tables", std::vector<std::string>(tables.begin(), tables.end())},
                     {"enrichments", enrichments}}},
               {"prior_evidence", prior}};

    ContractOutcome outcome = gateway_->execute("plan_tasks", input);
    std::vector<InvestigativeTask> tasks;
    if (outcome.valid()) {
      int n = 0;
      for (const auto& t : (*outcome.output)["tasks"]) {
        InvestigativeTask task;
        task.task_id = "r" + std::to_string(round) + "-t" + std::to_string(++n);
        task.round = round;
        task.kind = t.at("kind") == "lateral" ? TaskKind::Lateral : TaskKind::Depth;
        for (const auto& e : t.at("entity_scope")) {
          task.entity_scope.insert(Entity::parse_canonical(e.get<std::string>()));
        }
        task.hypothesis = t.at("hypothesis").get<std::string>();
        task.evidence_sought = t.at("evidence_sought").get<std::string>();
        tasks.push_back(std::move(task));
        if (static_cast<int>(tasks.size()) >= max_tasks) break;  // grounding already caps
      }
    }
    outcomes.push_back(std::move(outcome));
    return tasks;
  }

  // Gathers candidate rows by entity match (alert rows excluded), then runs
  // one relevance-filter contract per batch of at most filter_batch_size
  // rows. A suppressed filter call drops its whole batch.
  std::vector<EvidenceItem> execute(const std::vector<InvestigativeTask>& tasks,
                                    const ActivityTimeline& timeline, const Json& incident_lite,
                                    std::vector<ContractOutcome>& outcomes) const {
    struct TaskRun {
      std::vector<EvidenceItem> items;
      std::vector<ContractOutcome> outcomes;
    };
    auto runs = parallel_map(tasks, config_.concurrency, [&](const InvestigativeTask& task) {
      TaskRun run;
      std::vector<const EventRow*> candidates;
      for (const auto& r : timeline.rows) {
        if (r.is_alert_row) continue;
        bool match = false;
        for (const auto& e : task.entity_scope) {
          if (r.pivot_entities.count(e) || r.related_entities.count(e)) match = true;
        }
        if (match) candidates.push_back(&r);
      }
      std::set<std::string> kept_rows;
      for (std::size_t start = 0; start < candidates.size();
           start += static_cast<std::size_t>(config_.filter_batch_size)) {
        std::size_t end = std::min(candidates.size(),
                                   start + static_cast<std::size_t>(config_.filter_batch_size));
        Json rows = Json::array();
        Json ids = Json::array();
        for (std::size_t i = start; i < end; ++i) {
          const EventRow& r = *candidates[i];
          Json digest{{"row_id", r.row_id},
                      {"table", r.table},
                      {"timestamp", to_rfc3339(r.timestamp)},
                      {"is_aggregate", r.is_aggregate},
                      {"entities", canonical_entities(r.all_entities())},
                      {"attributes", r.attributes}};
          if (r.aggregate_meta) digest["aggregate_meta"] = r.aggregate_meta->to_json();
          rows.push_back(std::move(digest));
          ids.push_back(r.row_id);
        }
        Json input{{"task", Json{{"task_id", task.task_id},
                                 {"kind", to_string(task.kind)},
                                 {"hypothesis", task.hypothesis},
                                 {"evidence_sought", task.evidence_sought},
                                 {"entity_scope", canonical_entities(task.entity_scope)}}},
                   {"incident", incident_lite},
                   {"rows", rows},
                   {"candidate_row_ids", ids}};
        ContractOutcome outcome = gateway_->execute("filter_evidence", input);
        if (outcome.valid()) {
          for (const auto& k : (*outcome.output)["kept"]) {
            const std::string row_id = k.at("row_id").get<std::string>();
            if (!kept_rows.insert(row_id).second) continue;
            EvidenceItem item;
            item.task_id = task.task_id;
            item.row_id = row_id;
            item.stance = stance_from_string(k.at("stance").get<std::string>());
            item.explanation = k.at("explanation").get<std::string>();
            run.items.push_back(std::move(item));
          }
        }
        run.outcomes.push_back(std::move(outcome));
      }
      return run;
    });

    std::vector<EvidenceItem> evidence;
    for (auto& run : runs) {
      for (auto& item : run.items) evidence.push_back(std::move(item));
      for (auto& o : run.outcomes) outcomes.push_back(std::move(o));
    }
    return evidence;
  }

  // Exactly two plan/execute rounds under the priority-derived budget.
  InvestigationResult investigate(const Incident& incident, const ActivityTimeline& timeline,
                                  std::vector<ContractOutcome>& outcomes) const {
    InvestigationResult result;
    result.summary = summarize_incident(incident);
    result.budget = derive_budget(incident.priority_score);

    Json lite = incident_lite(incident);
    for (int round = 1; round <= 2; ++round) {
      ++result.rounds_executed;
      int remaining = result.budget.max_tasks_total - static_cast<int>(result.tasks.size());
      int max_tasks = std::min(result.budget.max_tasks_per_round, remaining);
      auto tasks = plan(result.summary, timeline, result.evidence, round, max_tasks, outcomes);
      auto evidence = execute(tasks, timeline, lite, outcomes);
      for (auto& t : tasks) result.tasks.push_back(std::move(t));
      for (auto& e : evidence) result.evidence.push_back(std::move(e));
    }
    return result;
  }

  static Json incident_lite(const Incident& incident) {
    const std::set<std::string> technique_set = incident.technique_set();
    return Json{{"incident_id", incident.incident_id},
                {"threat_type", incident.threat_type},
                {"known_techniques",
                 std::vector<std::string>(technique_set.begin(), technique_set.end())},
                {"entities", canonical_entities(incident.entities())}};
  }

 private:
  const ContractGateway* gateway_;
  InvestigationConfig config_;
};

}  // namespace huntline
