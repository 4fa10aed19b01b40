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

#include <arpa/inet.h>

#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "huntline/util.hpp"

namespace huntline {

// ---------------------------------------------------------------------------
// entities

enum class EntityKind { User, Device, Ip, FileHash, Email, Url, Process, CloudResource };

inline const char* to_string(EntityKind k) {
  switch (k) {
    case EntityKind::User: return "User";
    case EntityKind::Device: return "Device";
    case EntityKind::Ip: return "Ip";
    case EntityKind::FileHash: return "FileHash";
    case EntityKind::Email: return "Email";
    case EntityKind::Url: return "Url";
    case EntityKind::Process: return "Process";
    case EntityKind::CloudResource: return "CloudResource";
  }
  return "?";
}

inline EntityKind entity_kind_from_string(const std::string& s) {
  static const std::map<std::string, EntityKind> table = {
      {"User", EntityKind::User},           {"Device", EntityKind::Device},
      {"Ip", EntityKind::Ip},               {"FileHash", EntityKind::FileHash},
      {"Email", EntityKind::Email},         {"Url", EntityKind::Url},
      {"Process", EntityKind::Process},     {"CloudResource", EntityKind::CloudResource}};
  auto it = table.find(s);
  if (it == table.end()) throw Error("BadEntityKind", "unknown entity kind: " + s);
  return it->second;
}

class EmptyValueError : public Error {
 public:
  EmptyValueError() : Error("EmptyValue", "entity value is empty after trimming") {}
};

class MalformedIpError : public Error {
 public:
  explicit MalformedIpError(const std::string& raw)
      : Error("MalformedIp", "cannot parse IP address: " + raw) {}
};

namespace detail {

// Dotted-quad parser with decimal semantics: "010.0.0.1" means 10.0.0.1, never octal.
inline std::optional<std::string> canonical_ipv4(const std::string& s) {
  auto parts = split(s, '.');
  if (parts.size() != 4) return std::nullopt;
  int octets[4];
  for (int i = 0; i < 4; ++i) {
    const std::string& p = parts[i];
    if (p.empty() || p.size() > 3) return std::nullopt;
    int v = 0;
    for (char c : p) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
      v = v * 10 + (c - '0');
    }
    if (v > 255) return std::nullopt;
    octets[i] = v;
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%d.%d.%d.%d", octets[0], octets[1], octets[2], octets[3]);
  return std::string(buf);
}

inline std::optional<std::string> canonical_ipv6(const std::string& s) {
  unsigned char bytes[16];
  if (inet_pton(AF_INET6, s.c_str(), bytes) != 1) return std::nullopt;
  char buf[INET6_ADDRSTRLEN];
  if (!inet_ntop(AF_INET6, bytes, buf, sizeof(buf))) return std::nullopt;
  return std::string(buf);
}

}  // namespace detail

struct Entity {
  EntityKind kind;
  std::string value;  // already normalized

  auto operator<=>(const Entity&) const = default;

  std::string canonical() const { return std::string(to_string(kind)) + ":" + value; }

  static Entity parse_canonical(const std::string& s) {
    auto pos = s.find(':');
    if (pos == std::string::npos) throw Error("BadEntity", "not a Kind:value string: " + s);
    return Entity{entity_kind_from_string(s.substr(0, pos)), s.substr(pos + 1)};
  }

  Json to_json() const { return Json{{"kind", to_string(kind)}, {"value", value}}; }

  static Entity from_json(const Json& j) {
    return Entity{entity_kind_from_string(j.at("kind").get<std::string>()),
                  j.at("value").get<std::string>()};
  }
};

inline Entity normalize_entity(EntityKind kind, const std::string& raw) {
  std::string v = to_lower(trim(raw));
  if (v.empty()) throw EmptyValueError();
  if (kind == EntityKind::Ip) {
    if (v.find(':') != std::string::npos) {
      auto c6 = detail::canonical_ipv6(v);
      if (!c6) throw MalformedIpError(raw);
      v = *c6;
    } else {
      auto c4 = detail::canonical_ipv4(v);
      if (!c4) throw MalformedIpError(raw);
      v = *c4;
    }
  }
  return Entity{kind, v};
}

inline std::vector<std::string> canonical_entities(const std::set<Entity>& entities) {
  std::vector<std::string> out;
  out.reserve(entities.size());
  for (const auto& e : entities) out.push_back(e.canonical());
  return out;
}

// ---------------------------------------------------------------------------
// severities and attack phases

enum class Severity { Informational, Low, Medium, High };

inline const char* to_string(Severity s) {
  switch (s) {
    case Severity::Informational: return "Informational";
    case Severity::Low: return "Low";
    case Severity::Medium: return "Medium";
    case Severity::High: return "High";
  }
  return "?";
}

inline Severity severity_from_string(const std::string& s) {
  static const std::map<std::string, Severity> table = {{"Informational", Severity::Informational},
                                                        {"Low", Severity::Low},
                                                        {"Medium", Severity::Medium},
                                                        {"High", Severity::High}};
  auto it = table.find(s);
  if (it == table.end()) throw Error("BadSeverity", "unknown severity: " + s);
  return it->second;
}

enum class Phase { InitialAccess, Execution, PostCompromise };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::InitialAccess: return "InitialAccess";
    case Phase::Execution: return "Execution";
    case Phase::PostCompromise: return "PostCompromise";
  }
  return "?";
}

inline Phase phase_from_string(const std::string& s) {
  static const std::map<std::string, Phase> table = {{"InitialAccess", Phase::InitialAccess},
                                                     {"Execution", Phase::Execution},
                                                     {"PostCompromise", Phase::PostCompromise}};
  auto it = table.find(s);
  if (it == table.end()) throw Error("BadPhase", "unknown phase: " + s);
  return it->second;
}

inline const std::vector<Phase>& all_phases() {
  static const std::vector<Phase> v = {Phase::InitialAccess, Phase::Execution,
                                       Phase::PostCompromise};
  return v;
}

// ---------------------------------------------------------------------------
// technique -> tactic -> phase mapping

class UnknownTechniqueError : public Error {
 public:
  explicit UnknownTechniqueError(const std::string& id)
      : Error("UnknownTechnique", "technique not in mapping: " + id) {}
};

inline bool is_technique_id(const std::string& id) {
  static const std::regex pattern(R"(T\d{4}(\.\d{3})?)");
  return std::regex_match(id, pattern);
}

// Static technique catalog shipped as a data file; each technique carries one
// canonical tactic used for phase bucketing.
class AttackMap {
 public:
  struct Technique {
    std::string name;
    std::string tactic;
  };

  static AttackMap from_json(const Json& j) {
    AttackMap m;
    for (const auto& t : j.at("techniques")) {
      std::string id = t.at("id").get<std::string>();
      if (!is_technique_id(id)) throw Error("BadTechniqueId", "malformed id in mapping: " + id);
      m.techniques_[id] = Technique{t.at("name").get<std::string>(),
                                    t.at("tactic").get<std::string>()};
    }
    return m;
  }

  static AttackMap load(const std::filesystem::path& path) {
    return from_json(read_json(path));
  }

  bool contains(const std::string& id) const { return techniques_.count(id) > 0; }

  const Technique& technique(const std::string& id) const {
    auto it = techniques_.find(id);
    if (it == techniques_.end()) throw UnknownTechniqueError(id);
    return it->second;
  }

  Phase phase_of(const std::string& id) const {
    if (!is_technique_id(id)) throw UnknownTechniqueError(id);
    return phase_of_tactic(technique(id).tactic);
  }

  static Phase phase_of_tactic(const std::string& tactic) {
    if (tactic == "initial-access") return Phase::InitialAccess;
    if (tactic == "execution") return Phase::Execution;
    return Phase::PostCompromise;
  }

  std::size_t size() const { return techniques_.size(); }

 private:
  std::map<std::string, Technique> techniques_;
};

// ---------------------------------------------------------------------------
// telemetry rows

struct AggregateMeta {
  std::vector<std::pair<std::string, Json>> group_keys;
  std::int64_t event_count = 0;
  std::int64_t entity_count = 0;
  std::map<std::string, std::vector<Json>> sample_values;  // column -> up to 3 values
  int bin_hours = 1;

  Json to_json() const {
    Json keys = Json::array();
    for (const auto& [col, val] : group_keys) keys.push_back(Json::array({col, val}));
    return Json{{"group_keys", keys},
                {"event_count", event_count},
                {"entity_count", entity_count},
                {"sample_values", sample_values},
                {"bin_hours", bin_hours}};
  }

  static AggregateMeta from_json(const Json& j) {
    AggregateMeta m;
    for (const auto& kv : j.at("group_keys")) m.group_keys.emplace_back(kv.at(0), kv.at(1));
    m.event_count = j.at("event_count").get<std::int64_t>();
    m.entity_count = j.at("entity_count").get<std::int64_t>();
    m.sample_values = j.at("sample_values").get<std::map<std::string, std::vector<Json>>>();
    m.bin_hours = j.at("bin_hours").get<int>();
    return m;
  }
};

struct EventRow {
  std::string row_id;
  std::string table;
  Instant timestamp = 0;  // bin start for aggregates
  std::set<Entity> pivot_entities;
  std::set<Entity> related_entities;
  Json attributes = Json::object();  // column -> scalar
  bool is_alert_row = false;
  bool is_aggregate = false;
  std::optional<AggregateMeta> aggregate_meta;

  std::set<Entity> all_entities() const {
    std::set<Entity> out = pivot_entities;
    out.insert(related_entities.begin(), related_entities.end());
    return out;
  }

  Json to_json() const {
    Json j{{"row_id", row_id},
           {"table", table},
           {"timestamp", to_rfc3339(timestamp)},
           {"pivot_entities", Json::array()},
           {"related_entities", Json::array()},
           {"attributes", attributes},
           {"is_alert_row", is_alert_row},
           {"is_aggregate", is_aggregate}};
    for (const auto& e : pivot_entities) j["pivot_entities"].push_back(e.to_json());
    for (const auto& e : related_entities) j["related_entities"].push_back(e.to_json());
    if (aggregate_meta) j["aggregate_meta"] = aggregate_meta->to_json();
    return j;
  }

  static EventRow from_json(const Json& j) {
    EventRow r;
    r.row_id = j.at("row_id").get<std::string>();
    r.table = j.at("table").get<std::string>();
    r.timestamp = from_rfc3339(j.at("timestamp").get<std::string>());
    for (const auto& e : j.at("pivot_entities")) r.pivot_entities.insert(Entity::from_json(e));
    for (const auto& e : j.at("related_entities")) r.related_entities.insert(Entity::from_json(e));
    r.attributes = j.at("attributes");
    r.is_alert_row = j.at("is_alert_row").get<bool>();
    r.is_aggregate = j.at("is_aggregate").get<bool>();
    if (j.contains("aggregate_meta")) r.aggregate_meta = AggregateMeta::from_json(j["aggregate_meta"]);
    if (r.is_aggregate != r.aggregate_meta.has_value()) {
      throw Error("BadEventRow", "is_aggregate flag and aggregate_meta disagree: " + r.row_id);
    }
    return r;
  }
};

inline bool row_order_less(const EventRow& a, const EventRow& b) {
  return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.row_id < b.row_id;
}

// ---------------------------------------------------------------------------
// alerts and incidents

struct Alert {
  std::string alert_id;
  std::string detector_id;
  std::string title;
  Severity severity = Severity::Low;
  std::vector<std::string> techniques;
  Phase phase = Phase::InitialAccess;
  std::set<Entity> entities;
  Instant timestamp = 0;

  Json to_json() const {
    Json j{{"alert_id", alert_id},
           {"detector_id", detector_id},
           {"title", title},
           {"severity", to_string(severity)},
           {"techniques", techniques},
           {"phase", to_string(phase)},
           {"entities", Json::array()},
           {"timestamp", to_rfc3339(timestamp)}};
    for (const auto& e : entities) j["entities"].push_back(e.to_json());
    return j;
  }

  static Alert from_json(const Json& j) {
    Alert a;
    a.alert_id = j.at("alert_id").get<std::string>();
    a.detector_id = j.at("detector_id").get<std::string>();
    a.title = j.at("title").get<std::string>();
    a.severity = severity_from_string(j.at("severity").get<std::string>());
    a.techniques = j.at("techniques").get<std::vector<std::string>>();
    a.phase = phase_from_string(j.at("phase").get<std::string>());
    for (const auto& e : j.at("entities")) a.entities.insert(Entity::from_json(e));
    a.timestamp = from_rfc3339(j.at("timestamp").get<std::string>());
    return a;
  }
};

struct Incident {
  std::string incident_id;
  std::vector<Alert> alerts;
  std::string threat_type;
  double priority_score = 0.0;
  Instant created_at = 0;

  std::set<Entity> entities() const {
    std::set<Entity> out;
    for (const auto& a : alerts) out.insert(a.entities.begin(), a.entities.end());
    return out;
  }

  std::set<std::string> technique_set() const {
    std::set<std::string> out;
    for (const auto& a : alerts) out.insert(a.techniques.begin(), a.techniques.end());
    return out;
  }

  Json to_json() const {
    Json j{{"incident_id", incident_id},
           {"alerts", Json::array()},
           {"threat_type", threat_type},
           {"priority_score", priority_score},
           {"created_at", to_rfc3339(created_at)}};
    for (const auto& a : alerts) j["alerts"].push_back(a.to_json());
    return j;
  }

  static Incident from_json(const Json& j) {
    Incident inc;
    inc.incident_id = j.at("incident_id").get<std::string>();
    for (const auto& a : j.at("alerts")) inc.alerts.push_back(Alert::from_json(a));
    inc.threat_type = j.at("threat_type").get<std::string>();
    inc.priority_score = j.at("priority_score").get<double>();
    inc.created_at = from_rfc3339(j.at("created_at").get<std::string>());
    return inc;
  }
};

// Loader-side consistency checks: non-empty alert set and entities, priority in
// range, technique ids well-formed and mapped, and the alert phase matching the
// mapped phase (any listed technique may carry it for multi-technique alerts).
inline void validate_incident(const Incident& inc, const AttackMap& attack) {
  if (inc.alerts.empty()) throw Error("BadIncident", inc.incident_id + ": no alerts");
  if (inc.priority_score < 0.0 || inc.priority_score > 1.0) {
    throw Error("BadIncident", inc.incident_id + ": priority_score out of [0,1]");
  }
  if (inc.entities().empty()) throw Error("BadIncident", inc.incident_id + ": no entities");
  std::set<std::string> seen_ids;
  for (const auto& a : inc.alerts) {
    if (!seen_ids.insert(a.alert_id).second) {
      throw Error("BadIncident", inc.incident_id + ": duplicate alert_id " + a.alert_id);
    }
    if (a.techniques.empty()) {
      throw Error("BadIncident", a.alert_id + ": alert lists no techniques");
    }
    bool phase_ok = false;
    for (const auto& t : a.techniques) {
      if (!is_technique_id(t)) throw Error("BadIncident", a.alert_id + ": malformed technique " + t);
      if (attack.phase_of(t) == a.phase) phase_ok = true;
    }
    if (!phase_ok) {
      throw Error("BadIncident",
                  a.alert_id + ": phase does not match any listed technique's tactic");
    }
  }
}

inline std::vector<Incident> load_incidents(const std::filesystem::path& path,
                                            const AttackMap& attack) {
  std::vector<Incident> out;
  std::set<std::string> ids;
  for_each_jsonl(path, [&](std::size_t lineno, const Json& j) {
    Incident inc = Incident::from_json(j);
    validate_incident(inc, attack);
    if (!ids.insert(inc.incident_id).second) {
      throw Error("BadIncident",
                  "line " + std::to_string(lineno) + ": duplicate incident_id " + inc.incident_id);
    }
    out.push_back(std::move(inc));
  });
  return out;
}

}  // namespace huntline
