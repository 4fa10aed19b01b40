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
#include "huntline/store.hpp"

namespace huntline {

class JobFailureError : public Error {
 public:
  explicit JobFailureError(const std::string& detail) : Error("JobFailure", detail) {}
};

// Compact incident context shared by several prompt contracts.
inline Json incident_context(const Incident& inc) {
  Json titles = Json::array();
  for (const auto& a : inc.alerts) titles.push_back(a.title);
  const std::set<std::string> technique_set = inc.technique_set();
  std::vector<std::string> techniques(technique_set.begin(), technique_set.end());
  return Json{{"incident_id", inc.incident_id},
              {"threat_type", inc.threat_type},
              {"priority_score", inc.priority_score},
              {"known_techniques", techniques},
              {"entities", canonical_entities(inc.entities())},
              {"alert_titles", titles}};
}

// ---------------------------------------------------------------------------
// plan / frontier / schedule types

struct TableDecision {
  std::string table;
  bool selected = false;
  int lookback_hours = 0;  // meaningful only when selected
  std::string rationale;

  Json to_json() const {
    Json j{{"table", table}, {"selected", selected}, {"rationale", rationale}};
    if (selected) j["lookback_hours"] = lookback_hours;
    return j;
  }
};

struct RetrievalPlan {
  std::vector<TableDecision> decisions;  // one per registered table

  std::vector<TableDecision> selected() const {
    std::vector<TableDecision> out;
    for (const auto& d : decisions) {
      if (d.selected) out.push_back(d);
    }
    return out;
  }

  Json to_json() const {
    Json j = Json::array();
    for (const auto& d : decisions) j.push_back(d.to_json());
    return j;
  }
};

struct EntityFrontier {
  int round = 1;
  std::set<Entity> entities;
  std::map<Entity, std::vector<std::string>> provenance;  // empty for round-1 entities

  Json to_json() const {
    Json prov = Json::object();
    for (const auto& [e, rows] : provenance) prov[e.canonical()] = rows;
    return Json{{"round", round},
                {"entities", canonical_entities(entities)},
                {"provenance", prov}};
  }
};

struct GroupingLevel {
  std::vector<std::string> group_keys;
  int support_threshold = 10;
  std::string rationale;
};

struct GroupingSchedule {
  std::vector<GroupingLevel> levels;  // most detailed first
  std::int64_t row_budget = 1000;
  int max_levels = 3;

  bool empty() const { return levels.empty(); }
};

struct Enrichment {
  enum class Source { Ueba, ThreatIntel };

  std::optional<Entity> target_entity;
  std::optional<std::string> target_row;
  Source source = Source::Ueba;
  std::string label;
  double score = 0.0;

  Json to_json() const {
    Json j{{"source", source == Source::Ueba ? "UEBA" : "ThreatIntel"},
           {"label", label},
           {"score", score}};
    if (target_entity) j["target"] = Json{{"entity", target_entity->canonical()}};
    if (target_row) j["target"] = Json{{"row_id", *target_row}};
    return j;
  }

  static Enrichment from_json(const Json& j) {
    Enrichment e;
    e.source = j.at("source") == "UEBA" ? Source::Ueba : Source::ThreatIntel;
    e.label = j.at("label").get<std::string>();
    e.score = j.at("score").get<double>();
    const Json& t = j.at("target");
    if (t.contains("entity")) e.target_entity = Entity::parse_canonical(t["entity"]);
    if (t.contains("row_id")) e.target_row = t["row_id"].get<std::string>();
    return e;
  }
};

struct BuildStats {
  std::int64_t raw_row_count = 0;              // retrieved rows after dedup, pre-aggregation
  std::int64_t post_aggregation_row_count = 0; // non-alert rows in the final timeline
  int tables_selected = 0;                     // distinct tables chosen across rounds
  double compression_ratio = 1.0;
  int expansion_rounds = 0;

  Json to_json() const {
    return Json{{"raw_row_count", raw_row_count},
                {"post_aggregation_row_count", post_aggregation_row_count},
                {"tables_selected", tables_selected},
                {"compression_ratio", compression_ratio},
                {"expansion_rounds", expansion_rounds}};
  }

  static BuildStats from_json(const Json& j) {
    BuildStats s;
    s.raw_row_count = j.at("raw_row_count").get<std::int64_t>();
    s.post_aggregation_row_count = j.at("post_aggregation_row_count").get<std::int64_t>();
    s.tables_selected = j.at("tables_selected").get<int>();
    s.compression_ratio = j.at("compression_ratio").get<double>();
    s.expansion_rounds = j.at("expansion_rounds").get<int>();
    return s;
  }
};

struct ActivityTimeline {
  std::string incident_id;
  std::vector<EventRow> rows;  // sorted by (timestamp, row_id); alert rows flagged
  std::vector<Enrichment> enrichments;
  BuildStats build_stats;

  const EventRow* find_row(const std::string& row_id) const {
    for (const auto& r : rows) {
      if (r.row_id == row_id) return &r;
    }
    return nullptr;
  }

  std::set<Entity> all_entities() const {
    std::set<Entity> out;
    for (const auto& r : rows) {
      auto e = r.all_entities();
      out.insert(e.begin(), e.end());
    }
    return out;
  }

  std::set<Entity> non_alert_entities() const {
    std::set<Entity> out;
    for (const auto& r : rows) {
      if (r.is_alert_row) continue;
      auto e = r.all_entities();
      out.insert(e.begin(), e.end());
    }
    return out;
  }

  Json to_json() const {
    Json rs = Json::array();
    for (const auto& r : rows) rs.push_back(r.to_json());
    Json es = Json::array();
    for (const auto& e : enrichments) es.push_back(e.to_json());
    return Json{{"incident_id", incident_id},
                {"rows", rs},
                {"enrichments", es},
                {"build_stats", build_stats.to_json()}};
  }

  static ActivityTimeline from_json(const Json& j) {
    ActivityTimeline t;
    t.incident_id = j.at("incident_id").get<std::string>();
    for (const auto& r : j.at("rows")) t.rows.push_back(EventRow::from_json(r));
    for (const auto& e : j.at("enrichments")) t.enrichments.push_back(Enrichment::from_json(e));
    t.build_stats = BuildStats::from_json(j.at("build_stats"));
    return t;
  }
};

// ---------------------------------------------------------------------------
// enrichment feeds

struct FeedRecord {
  Entity entity;
  std::string label;
  double score = 0.0;
  Instant window_start = 0;
  Instant window_end = 0;

  Json to_json() const {
    return Json{{"entity", entity.to_json()},
                {"label", label},
                {"score", score},
                {"window", Json{{"start", to_rfc3339(window_start)}, {"end", to_rfc3339(window_end)}}}};
  }

  static FeedRecord from_json(const Json& j) {
    FeedRecord r;
    r.entity = Entity::from_json(j.at("entity"));
    r.label = j.at("label").get<std::string>();
    r.score = j.at("score").get<double>();
    r.window_start = from_rfc3339(j.at("window").at("start").get<std::string>());
    r.window_end = from_rfc3339(j.at("window").at("end").get<std::string>());
    if (r.score < 0.0 || r.score > 1.0) throw Error("BadFeed", "score out of [0,1]");
    return r;
  }
};

inline std::vector<FeedRecord> load_feed(const std::filesystem::path& path) {
  std::vector<FeedRecord> out;
  for_each_jsonl(path, [&](std::size_t, const Json& j) { out.push_back(FeedRecord::from_json(j)); });
  return out;
}

// ---------------------------------------------------------------------------
// low-signal deny-list

class Denylist {
 public:
  static Denylist load(const std::filesystem::path& path) { return from_json(read_json(path)); }

  static Denylist from_json(const Json& j) {
    Denylist d;
    for (const auto& e : j.at("entries")) {
      EntityKind kind = entity_kind_from_string(e.at("kind").get<std::string>());
      if (e.contains("cidr")) {
        if (kind != EntityKind::Ip) throw ConfigError("cidr entries must have kind Ip");
        d.cidrs_.push_back(parse_cidr(e["cidr"].get<std::string>()));
      } else {
        d.exact_.insert(normalize_entity(kind, e.at("value").get<std::string>()));
      }
    }
    return d;
  }

  bool contains(const Entity& e) const {
    if (exact_.count(e)) return true;
    if (e.kind == EntityKind::Ip) {
      std::uint32_t addr;
      if (!to_v4(e.value, addr)) return false;
      for (const auto& [base, bits] : cidrs_) {
        std::uint32_t mask = bits == 0 ? 0 : ~std::uint32_t(0) << (32 - bits);
        if ((addr & mask) == (base & mask)) return true;
      }
    }
    return false;
  }

  std::size_t size() const { return exact_.size() + cidrs_.size(); }

 private:
  static bool to_v4(const std::string& s, std::uint32_t& out) {
    unsigned a, b, c, d;
    if (std::sscanf(s.c_str(), "%u.%u.%u.%u", &a, &b, &c, &d) != 4) return false;
    if (a > 255 || b > 255 || c > 255 || d > 255) return false;
    out = (a << 24) | (b << 16) | (c << 8) | d;
    return true;
  }

  static std::pair<std::uint32_t, int> parse_cidr(const std::string& s) {
    auto slash = s.find('/');
    if (slash == std::string::npos) throw ConfigError("bad cidr: " + s);
    std::uint32_t base;
    if (!to_v4(s.substr(0, slash), base)) throw ConfigError("bad cidr base: " + s);
    int bits = std::stoi(s.substr(slash + 1));
    if (bits < 0 || bits > 32) throw ConfigError("bad cidr bits: " + s);
    return {base, bits};
  }

  std::set<Entity> exact_;
  std::vector<std::pair<std::uint32_t, int>> cidrs_;
};

// ---------------------------------------------------------------------------
// incident batching

struct BatchConfig {
  double min_priority = 0.25;
};

// Partition above-threshold incidents by threat type; batches ordered by
// descending max priority, incidents within a batch by priority then id.
inline std::vector<std::vector<Incident>> batch_incidents(std::vector<Incident> incidents,
                                                          const BatchConfig& cfg = {}) {
  std::map<std::string, std::vector<Incident>> by_type;
  for (auto& inc : incidents) {
    if (inc.priority_score < cfg.min_priority) continue;
    by_type[inc.threat_type].push_back(std::move(inc));
  }
  std::vector<std::vector<Incident>> batches;
  for (auto& [type, batch] : by_type) {
    std::sort(batch.begin(), batch.end(), [](const Incident& a, const Incident& b) {
      return a.priority_score != b.priority_score ? a.priority_score > b.priority_score
                                                  : a.incident_id < b.incident_id;
    });
    batches.push_back(std::move(batch));
  }
  std::sort(batches.begin(), batches.end(), [](const auto& a, const auto& b) {
    double pa = a.front().priority_score, pb = b.front().priority_score;
    return pa != pb ? pa > pb : a.front().threat_type < b.front().threat_type;
  });
  return batches;
}

// ---------------------------------------------------------------------------
// adaptive aggregation

inline EventRow make_aggregate(const GroupingLevel& level, int level_number,
                               const std::vector<const EventRow*>& members,
                               const std::string& id_salt);

// Cascading group-by: each level groups the rows still passing through by
// (group keys, hour bin); groups at or above the support threshold collapse
// into one aggregate row per (group, hour), the rest continue to the next,
// coarser level. Stops once aggregates + passthrough fit the row budget.
inline std::vector<EventRow> aggregate_table(const std::vector<EventRow>& rows,
                                             const GroupingSchedule& schedule,
                                             const std::string& id_salt = "") {
  if (schedule.empty()) throw Error("EmptySchedule", "grouping schedule has no levels");
  for (const auto& r : rows) {
    if (r.is_aggregate) throw Error("BadInput", "aggregate_table over aggregate rows");
  }

  std::vector<EventRow> passthrough = rows;
  std::vector<EventRow> aggregates;

  for (std::size_t level_idx = 0; level_idx < schedule.levels.size(); ++level_idx) {
    const GroupingLevel& level = schedule.levels[level_idx];

    std::map<std::string, std::vector<const EventRow*>> groups;
    for (const auto& r : passthrough) {
      std::string key = std::to_string(hour_bin(r.timestamp));
      for (const auto& col : level.group_keys) {
        key += "|";
        key += r.attributes.contains(col) ? r.attributes[col].dump() : "null";
      }
      groups[key].push_back(&r);
    }

    std::vector<EventRow> next_passthrough;
    for (const auto& [key, members] : groups) {
      if (static_cast<int>(members.size()) >= level.support_threshold) {
        aggregates.push_back(make_aggregate(level, static_cast<int>(level_idx) + 1, members,
                                            id_salt));
      } else {
        for (const EventRow* m : members) next_passthrough.push_back(*m);
      }
    }
    passthrough = std::move(next_passthrough);
    if (static_cast<std::int64_t>(aggregates.size() + passthrough.size()) <=
        schedule.row_budget) {
      break;
    }
  }

  std::vector<EventRow> result = std::move(aggregates);
  result.insert(result.end(), passthrough.begin(), passthrough.end());
  std::sort(result.begin(), result.end(), row_order_less);
  return result;
}

inline EventRow make_aggregate(const GroupingLevel& level, int level_number,
                               const std::vector<const EventRow*>& members,
                               const std::string& id_salt) {
  const EventRow& first = *members.front();
  Instant bin = hour_bin(first.timestamp);

  EventRow agg;
  agg.table = first.table;
  agg.timestamp = bin;
  agg.is_aggregate = true;

  AggregateMeta meta;
  meta.event_count = static_cast<std::int64_t>(members.size());
  std::string key_repr;
  for (const auto& col : level.group_keys) {
    Json v = first.attributes.contains(col) ? first.attributes[col] : Json();
    meta.group_keys.emplace_back(col, v);
    agg.attributes[col] = v;
    key_repr += col + "=" + v.dump() + "|";
  }
  agg.row_id = "agg:" + (id_salt.empty() ? "" : id_salt + ":") + first.table + ":L" +
               std::to_string(level_number) + ":" + std::to_string(bin / 3600) + ":" +
               fnv1a64_hex(key_repr);

  std::set<Entity> all;
  std::set<std::string> key_cols(level.group_keys.begin(), level.group_keys.end());
  for (const EventRow* m : members) {
    for (const auto& e : m->pivot_entities) agg.pivot_entities.insert(e);
    auto ents = m->all_entities();
    all.insert(ents.begin(), ents.end());
    // Related entities are capped; the full distinct count lives in the meta.
    for (const auto& e : m->related_entities) {
      if (agg.related_entities.size() < 10) agg.related_entities.insert(e);
    }
    for (const auto& [col, v] : m->attributes.items()) {
      if (key_cols.count(col) || v.is_null()) continue;
      auto& samples = meta.sample_values[col];
      if (samples.size() >= 3) continue;
      if (std::find(samples.begin(), samples.end(), v) == samples.end()) samples.push_back(v);
    }
  }
  meta.entity_count = static_cast<std::int64_t>(all.size());
  agg.aggregate_meta = std::move(meta);
  return agg;
}

// ---------------------------------------------------------------------------
// builder

struct TimelineConfig {
  std::int64_t row_budget = 1000;  // per-table post-aggregation target
  int max_levels = 3;
  std::int64_t row_cap = 20000;  // per (table, round) retrieval cap
  int max_lookback_hours = 720;
  int max_frontier = 10;
  unsigned concurrency = 4;
};

class TimelineBuilder {
 public:
  TimelineBuilder(const TelemetryStore& store, const ContractGateway& gateway,
                  const Denylist& denylist, TimelineConfig config = {})
      : store_(&store), gateway_(&gateway), denylist_(&denylist), config_(config) {}

  const TimelineConfig& config() const { return config_; }

  // One selection contract per kind-compatible table, in parallel; suppressed
  // or failed outcomes exclude the table. Throws JobFailure only when every
  // attempted call hit a backend failure.
  RetrievalPlan select_tables(const Json& incident_ctx, const EntityFrontier& frontier,
                              std::vector<ContractOutcome>& outcomes) const {
    std::set<EntityKind> frontier_kinds;
    for (const auto& e : frontier.entities) frontier_kinds.insert(e.kind);

    struct Item {
      TableSchema schema;
      bool compatible = false;
    };
    std::vector<Item> items;
    for (const auto& schema : store_->schemas()) {
      bool compatible = false;
      for (EntityKind k : schema.pivotable_kinds()) {
        if (frontier_kinds.count(k)) compatible = true;
      }
      items.push_back({schema, compatible});
    }

    auto results = parallel_map(items, config_.concurrency, [&](const Item& item) {
      std::pair<TableDecision, std::optional<ContractOutcome>> out;
      out.first.table = item.schema.name;
      if (!item.compatible) {
        out.first.selected = false;
        out.first.rationale = "no pivotable column matches a frontier entity kind";
        return out;
      }
      Json input{{"incident", incident_ctx},
                 {"round", frontier.round},
                 {"frontier_entities", canonical_entities(frontier.entities)},
                 {"table", item.schema.to_json()},
                 {"max_lookback_hours", config_.max_lookback_hours}};
      ContractOutcome outcome = gateway_->execute("table_selection", input);
      if (outcome.valid()) {
        const Json& o = *outcome.output;
        out.first.selected = o.at("select").get<bool>();
        if (out.first.selected) out.first.lookback_hours = o.at("lookback_hours").get<int>();
        out.first.rationale = o.at("rationale").get<std::string>();
      } else {
        out.first.selected = false;
        out.first.rationale = "excluded: contract outcome " + std::string(to_string(outcome.status));
      }
      out.second = std::move(outcome);
      return out;
    });

    RetrievalPlan plan;
    int attempted = 0, backend_failures = 0;
    for (auto& [decision, outcome] : results) {
      plan.decisions.push_back(decision);
      if (outcome) {
        ++attempted;
        if (outcome->status == OutcomeStatus::BackendFailure) ++backend_failures;
        outcomes.push_back(std::move(*outcome));
      }
    }
    if (attempted > 0 && backend_failures == attempted) {
      throw JobFailureError("table selection failed for every table");
    }
    return plan;
  }

  // Parallel per-table queries over [now - lookback, now]; rows deduplicated
  // by row_id across tables and rounds via `seen`. Per-table errors are
  // recorded in the plan rationale space and never abort the round.
  std::vector<EventRow> expand(const EntityFrontier& frontier, const RetrievalPlan& plan,
                               Instant now, std::set<std::string>& seen) const {
    auto selected = plan.selected();
    auto per_table = parallel_map(selected, config_.concurrency, [&](const TableDecision& d) {
      std::vector<EventRow> rows;
      try {
        QuerySpec spec;
        spec.table = d.table;
        spec.entities = frontier.entities;
        spec.window_end = now;
        spec.window_start = now - static_cast<Instant>(d.lookback_hours) * 3600;
        spec.row_cap = config_.row_cap;
        rows = store_->query_events(spec).rows;
      } catch (const UnknownTableError&) {
        // skipped; the table disappeared between planning and expansion
      }
      return rows;
    });

    std::vector<EventRow> merged;
    for (auto& rows : per_table) {
      for (auto& r : rows) {
        if (seen.insert(r.row_id).second) merged.push_back(std::move(r));
      }
    }
    std::sort(merged.begin(), merged.end(), row_order_less);
    return merged;
  }

  // Contract-backed grouping schedule with a deterministic fallback, so the
  // result is total even under suppression.
  GroupingSchedule plan_grouping(const Json& incident_ctx, const std::string& table,
                                 const std::vector<EventRow>& rows,
                                 const std::vector<ColumnStats>& stats,
                                 std::vector<ContractOutcome>& outcomes) const {
    const TableSchema& schema = store_->schema(table);
    std::vector<std::string> candidates;
    for (const auto& c : schema.columns) {
      if (!c.entity_kind && c.type != ColumnType::Timestamp) candidates.push_back(c.name);
    }

    std::map<Entity, std::int64_t> pivot_counts;
    for (const auto& r : rows) {
      for (const auto& e : r.pivot_entities) ++pivot_counts[e];
    }
    Json pivots = Json::array();
    for (const auto& [e, n] : pivot_counts) {
      pivots.push_back(Json{{"entity", e.canonical()}, {"row_count", n}});
    }
    Json stat_json = Json::array();
    for (const auto& s : stats) stat_json.push_back(s.to_json());

    Json input{{"incident", incident_ctx},
               {"table", Json{{"name", schema.name}, {"description", schema.description}}},
               {"row_count", static_cast<std::int64_t>(rows.size())},
               {"row_budget", config_.row_budget},
               {"max_levels", config_.max_levels},
               {"candidate_columns", candidates},
               {"pivot_distribution", pivots},
               {"stats", stat_json}};
    ContractOutcome outcome = gateway_->execute("grouping_plan", input);

    GroupingSchedule schedule;
    schedule.row_budget = config_.row_budget;
    schedule.max_levels = config_.max_levels;
    if (outcome.valid()) {
      for (const auto& l : (*outcome.output)["levels"]) {
        GroupingLevel level;
        level.group_keys = l.at("group_keys").get<std::vector<std::string>>();
        level.support_threshold = l.at("support_threshold").get<int>();
        level.rationale = l.at("rationale").get<std::string>();
        schedule.levels.push_back(std::move(level));
      }
    } else {
      schedule.levels = fallback_levels(stats);
    }
    outcomes.push_back(std::move(outcome));
    return schedule;
  }

  // Default schedule when the contract is suppressed: one level over the
  // concentrated categorical columns, support threshold 10.
  std::vector<GroupingLevel> fallback_levels(const std::vector<ColumnStats>& stats) const {
    GroupingLevel level;
    level.support_threshold = 10;
    level.rationale = "fallback: concentrated categorical columns";
    for (const auto& s : stats) {
      if (s.largest_group_fraction >= 0.3 && s.null_rate < 1.0) {
        level.group_keys.push_back(s.column);
      }
    }
    if (level.group_keys.empty()) {
      const ColumnStats* best = nullptr;
      for (const auto& s : stats) {
        if (s.null_rate < 1.0 && (!best || s.largest_group_fraction > best->largest_group_fraction)) {
          best = &s;
        }
      }
      if (!best) return {};  // nothing groupable; caller passes rows through
      level.group_keys.push_back(best->column);
      level.rationale = "fallback: most concentrated column";
    }
    return {level};
  }

  // Candidate entities = surfaced in retrieved rows, minus incident entities,
  // minus the deny-list; contract picks at most max_frontier of them.
  EntityFrontier select_entities(const std::vector<EventRow>& timeline_rows,
                                 const Json& incident_ctx, int completed_round,
                                 const std::set<Entity>& incident_entities,
                                 std::vector<ContractOutcome>& outcomes) const {
    struct CandidateInfo {
      std::int64_t row_count = 0;
      std::set<std::string> tables;
      std::vector<std::string> row_ids;
    };
    std::map<Entity, CandidateInfo> candidates;
    for (const auto& r : timeline_rows) {
      if (r.is_alert_row) continue;
      for (const auto& e : r.all_entities()) {
        if (incident_entities.count(e) || denylist_->contains(e)) continue;
        auto& info = candidates[e];
        info.row_count += 1;
        info.tables.insert(r.table);
        info.row_ids.push_back(r.row_id);
      }
    }

    EntityFrontier frontier;
    frontier.round = completed_round + 1;
    if (candidates.empty()) return frontier;

    Json cand_json = Json::array();
    std::vector<std::string> cand_strings;
    for (const auto& [e, info] : candidates) {
      cand_json.push_back(Json{{"entity", e.canonical()},
                               {"row_count", info.row_count},
                               {"tables", std::vector<std::string>(info.tables.begin(),
                                                                   info.tables.end())}});
      cand_strings.push_back(e.canonical());
    }
    Json input{{"incident", incident_ctx},
               {"round", completed_round},
               {"candidates", cand_json},
               {"candidate_entities", cand_strings},
               {"max_frontier", config_.max_frontier}};
    ContractOutcome outcome = gateway_->execute("entity_selection", input);
    if (outcome.valid()) {
      for (const auto& s : (*outcome.output)["selected"]) {
        Entity e = Entity::parse_canonical(s.at("entity").get<std::string>());
        frontier.entities.insert(e);
        frontier.provenance[e] = candidates.at(e).row_ids;
      }
    }
    // Suppression leaves the frontier empty and the next round degenerates.
    outcomes.push_back(std::move(outcome));
    return frontier;
  }

  // UEBA joins on (entity, window overlap with that entity's activity span);
  // TI joins on entity identity. Unmatched records are dropped; rows are
  // never modified.
  static ActivityTimeline enrich(ActivityTimeline timeline, const std::vector<FeedRecord>& ueba,
                                 const std::vector<FeedRecord>& ti) {
    std::map<Entity, std::pair<Instant, Instant>> spans;
    for (const auto& r : timeline.rows) {
      for (const auto& e : r.all_entities()) {
        auto it = spans.find(e);
        if (it == spans.end()) {
          spans[e] = {r.timestamp, r.timestamp};
        } else {
          it->second.first = std::min(it->second.first, r.timestamp);
          it->second.second = std::max(it->second.second, r.timestamp);
        }
      }
    }
    for (const auto& rec : ueba) {
      auto it = spans.find(rec.entity);
      if (it == spans.end()) continue;
      if (rec.window_end < it->second.first || rec.window_start > it->second.second) continue;
      Enrichment e;
      e.target_entity = rec.entity;
      e.source = Enrichment::Source::Ueba;
      e.label = rec.label;
      e.score = rec.score;
      timeline.enrichments.push_back(std::move(e));
    }
    for (const auto& rec : ti) {
      if (!spans.count(rec.entity)) continue;
      Enrichment e;
      e.target_entity = rec.entity;
      e.source = Enrichment::Source::ThreatIntel;
      e.label = rec.label;
      e.score = rec.score;
      timeline.enrichments.push_back(std::move(e));
    }
    return timeline;
  }

  // Algorithm: materialize alert rows, run exactly two rounds of
  // select_tables -> expand -> aggregate -> select_entities, then enrich.
  ActivityTimeline build(const Incident& incident, const std::vector<FeedRecord>& ueba,
                         const std::vector<FeedRecord>& ti,
                         std::vector<ContractOutcome>& outcomes) const {
    Json ctx = incident_context(incident);
    ActivityTimeline timeline;
    timeline.incident_id = incident.incident_id;

    for (const auto& a : incident.alerts) {
      EventRow r;
      r.row_id = "alert:" + a.alert_id;
      r.table = "IncidentAlerts";
      r.timestamp = a.timestamp;
      r.pivot_entities = a.entities;
      r.is_alert_row = true;
      std::string techniques;
      for (const auto& t : a.techniques) techniques += (techniques.empty() ? "" : ",") + t;
      r.attributes = Json{{"alert_id", a.alert_id},
                          {"detector_id", a.detector_id},
                          {"title", a.title},
                          {"severity", to_string(a.severity)},
                          {"techniques", techniques},
                          {"phase", to_string(a.phase)}};
      timeline.rows.push_back(std::move(r));
    }

    const std::set<Entity> incident_entities = incident.entities();
    EntityFrontier frontier;
    frontier.round = 1;
    frontier.entities = incident_entities;

    std::set<std::string> seen_row_ids;
    std::set<std::string> tables_used;
    const Instant now = incident.created_at;

    for (int round = 1; round <= 2; ++round) {
      ++timeline.build_stats.expansion_rounds;
      if (frontier.entities.empty()) continue;  // degenerate round: no queries, no calls

      RetrievalPlan plan = select_tables(ctx, frontier, outcomes);
      for (const auto& d : plan.selected()) tables_used.insert(d.table);

      std::vector<EventRow> fresh = expand(frontier, plan, now, seen_row_ids);
      timeline.build_stats.raw_row_count += static_cast<std::int64_t>(fresh.size());

      std::map<std::string, std::vector<EventRow>> by_table;
      for (auto& r : fresh) by_table[r.table].push_back(std::move(r));
      for (auto& [table, rows] : by_table) {
        if (static_cast<std::int64_t>(rows.size()) > config_.row_budget) {
          auto stats = store_->column_stats(table, rows);
          GroupingSchedule schedule = plan_grouping(ctx, table, rows, stats, outcomes);
          if (!schedule.empty()) {
            rows = aggregate_table(rows, schedule, "r" + std::to_string(round));
          }
        }
        for (auto& r : rows) timeline.rows.push_back(std::move(r));
      }

      std::vector<EventRow> non_alert;
      for (const auto& r : timeline.rows) {
        if (!r.is_alert_row) non_alert.push_back(r);
      }
      frontier = select_entities(non_alert, ctx, round, incident_entities, outcomes);
    }

    std::sort(timeline.rows.begin(), timeline.rows.end(), row_order_less);
    std::set<std::string> ids;
    for (const auto& r : timeline.rows) {
      if (!ids.insert(r.row_id).second) {
        throw Error("BadTimeline", "duplicate row_id in timeline: " + r.row_id);
      }
    }

    timeline = enrich(std::move(timeline), ueba, ti);

    std::int64_t post = 0;
    for (const auto& r : timeline.rows) {
      if (!r.is_alert_row) ++post;
    }
    timeline.build_stats.post_aggregation_row_count = post;
    timeline.build_stats.tables_selected = static_cast<int>(tables_used.size());
    timeline.build_stats.compression_ratio =
        timeline.build_stats.raw_row_count == 0
            ? 1.0
            : static_cast<double>(timeline.build_stats.raw_row_count) /
                  static_cast<double>(std::max<std::int64_t>(post, 1));
    return timeline;
  }

 private:
  const TelemetryStore* store_;
  const ContractGateway* gateway_;
  const Denylist* denylist_;
  TimelineConfig config_;
};

}  // namespace huntline
