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

#include "huntline/core.hpp"

namespace huntline {

enum class ColumnType { String, Int, Float, Timestamp, Bool };

inline const char* to_string(ColumnType t) {
  switch (t) {
    case ColumnType::String: return "string";
    case ColumnType::Int: return "int";
    case ColumnType::Float: return "float";
    case ColumnType::Timestamp: return "timestamp";
    case ColumnType::Bool: return "bool";
  }
  return "?";
}

inline ColumnType column_type_from_string(const std::string& s) {
  if (s == "string") return ColumnType::String;
  if (s == "int") return ColumnType::Int;
  if (s == "float") return ColumnType::Float;
  if (s == "timestamp") return ColumnType::Timestamp;
  if (s == "bool") return ColumnType::Bool;
  throw Error("BadColumnType", "unknown column type: " + s);
}

struct ColumnDef {
  std::string name;
  ColumnType type = ColumnType::String;
  std::optional<EntityKind> entity_kind;

  Json to_json() const {
    Json j{{"name", name}, {"type", to_string(type)}};
    if (entity_kind) j["entity_kind"] = to_string(*entity_kind);
    return j;
  }

  static ColumnDef from_json(const Json& j) {
    ColumnDef c;
    c.name = j.at("name").get<std::string>();
    c.type = column_type_from_string(j.at("type").get<std::string>());
    if (j.contains("entity_kind") && !j["entity_kind"].is_null()) {
      c.entity_kind = entity_kind_from_string(j["entity_kind"].get<std::string>());
    }
    return c;
  }
};

struct TableSchema {
  std::string name;
  std::string description;
  std::vector<ColumnDef> columns;

  std::vector<std::string> pivotable_columns() const {
    std::vector<std::string> out;
    for (const auto& c : columns) {
      if (c.entity_kind) out.push_back(c.name);
    }
    return out;
  }

  std::set<EntityKind> pivotable_kinds() const {
    std::set<EntityKind> out;
    for (const auto& c : columns) {
      if (c.entity_kind) out.insert(*c.entity_kind);
    }
    return out;
  }

  const ColumnDef* column(const std::string& name_) const {
    for (const auto& c : columns) {
      if (c.name == name_) return &c;
    }
    return nullptr;
  }

  Json to_json() const {
    Json cols = Json::array();
    for (const auto& c : columns) cols.push_back(c.to_json());
    return Json{{"name", name}, {"description", description}, {"columns", cols}};
  }

  static TableSchema from_json(const Json& j) {
    TableSchema s;
    s.name = j.at("name").get<std::string>();
    s.description = j.at("description").get<std::string>();
    for (const auto& c : j.at("columns")) s.columns.push_back(ColumnDef::from_json(c));
    return s;
  }

  void validate() const {
    if (name.empty()) throw Error("BadSchema", "table name empty");
    std::set<std::string> names;
    for (const auto& c : columns) {
      if (!names.insert(c.name).second) {
        throw Error("BadSchema", name + ": duplicate column " + c.name);
      }
      if (c.name == "row_id" || c.name == "timestamp") {
        throw Error("BadSchema", name + ": column name '" + c.name + "' is reserved");
      }
    }
    if (pivotable_columns().empty()) {
      throw Error("BadSchema", name + ": no entity-tagged (pivotable) columns");
    }
  }
};

struct ColumnStats {
  std::string column;
  double null_rate = 0.0;
  std::int64_t distinct_count = 0;
  double largest_group_fraction = 0.0;

  Json to_json() const {
    return Json{{"column", column},
                {"null_rate", null_rate},
                {"distinct_count", distinct_count},
                {"largest_group_fraction", largest_group_fraction}};
  }
};

struct QuerySpec {
  std::string table;
  std::set<Entity> entities;
  Instant window_start = 0;
  Instant window_end = 0;  // exclusive of nothing: rows with start <= ts <= end match
  std::int64_t row_cap = 20000;
};

struct QueryResult {
  std::vector<EventRow> rows;
  bool truncated = false;
};

class SchemaViolationError : public Error {
 public:
  SchemaViolationError(const std::string& table, std::size_t line, const std::string& column,
                       const std::string& message)
      : Error("SchemaViolation",
              table + " line " + std::to_string(line) + " column '" + column + "': " + message) {}
};

class UnknownTableError : public Error {
 public:
  explicit UnknownTableError(const std::string& table)
      : Error("UnknownTable", "table not registered: " + table) {}
};

// Read-only, file-backed event store. Registration parses and indexes a table
// eagerly; afterwards the store is immutable and safe for concurrent readers.
class TelemetryStore {
 public:
  explicit TelemetryStore(std::int64_t max_window_hours = 720)
      : max_window_seconds_(max_window_hours * 3600) {}

  void register_table(const TableSchema& schema, const std::filesystem::path& data_path) {
    schema.validate();
    if (tables_.count(schema.name)) {
      throw Error("DuplicateTable", "table already registered: " + schema.name);
    }
    Table t;
    t.schema = schema;
    for_each_jsonl(data_path, [&](std::size_t lineno, const Json& j) {
      t.rows.push_back(parse_row(schema, lineno, j));
    });
    std::sort(t.rows.begin(), t.rows.end(),
              [](const StoredRow& a, const StoredRow& b) {
                return a.timestamp != b.timestamp ? a.timestamp < b.timestamp
                                                  : a.row_id < b.row_id;
              });
    std::set<std::string> ids;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (!ids.insert(t.rows[i].row_id).second) {
        throw SchemaViolationError(schema.name, 0, "row_id",
                                   "duplicate row_id " + t.rows[i].row_id);
      }
      for (const auto& [col, ent] : t.rows[i].entities) t.entity_index[ent].push_back(i);
    }
    tables_.emplace(schema.name, std::move(t));
  }

  bool has_table(const std::string& name) const { return tables_.count(name) > 0; }

  std::vector<TableSchema> schemas() const {
    std::vector<TableSchema> out;
    for (const auto& [name, t] : tables_) out.push_back(t.schema);
    return out;
  }

  const TableSchema& schema(const std::string& name) const { return table(name).schema; }

  std::size_t row_count(const std::string& name) const { return table(name).rows.size(); }

  QueryResult query_events(const QuerySpec& spec) const {
    const Table& t = table(spec.table);
    if (spec.window_end <= spec.window_start) {
      throw Error("BadQuery", "window end must be after start");
    }
    if (spec.window_end - spec.window_start > max_window_seconds_) {
      throw Error("BadQuery", "window exceeds maximum lookback");
    }
    if (spec.entities.empty()) throw Error("BadQuery", "entity set empty");
    if (spec.row_cap <= 0) throw Error("BadQuery", "row_cap must be positive");

    // Union of per-entity postings; rows are stored time-sorted so indexes sort
    // into (timestamp, row_id) order.
    std::set<std::size_t> hit;
    for (const auto& e : spec.entities) {
      auto it = t.entity_index.find(e);
      if (it == t.entity_index.end()) continue;
      for (std::size_t i : it->second) {
        Instant ts = t.rows[i].timestamp;
        if (ts >= spec.window_start && ts <= spec.window_end) hit.insert(i);
      }
    }
    QueryResult result;
    for (std::size_t i : hit) {
      if (static_cast<std::int64_t>(result.rows.size()) >= spec.row_cap) {
        result.truncated = true;
        break;
      }
      result.rows.push_back(materialize(t, t.rows[i], spec.entities));
    }
    return result;
  }

  // Stats over non-entity, non-timestamp columns of already-retrieved rows.
  std::vector<ColumnStats> column_stats(const std::string& table_name,
                                        const std::vector<EventRow>& rows) const {
    const Table& t = table(table_name);
    if (rows.empty()) throw Error("EmptyRowSet", "column_stats over zero rows");
    for (const auto& r : rows) {
      if (r.is_aggregate) throw Error("EmptyRowSet", "column_stats over aggregate rows");
      if (r.table != table_name) {
        throw Error("EmptyRowSet", "row " + r.row_id + " is not from " + table_name);
      }
    }
    std::vector<ColumnStats> out;
    for (const auto& col : t.schema.columns) {
      if (col.entity_kind || col.type == ColumnType::Timestamp) continue;
      ColumnStats cs;
      cs.column = col.name;
      std::map<std::string, std::int64_t> groups;
      std::int64_t nulls = 0;
      for (const auto& r : rows) {
        auto it = r.attributes.find(col.name);
        if (it == r.attributes.end() || it->is_null()) {
          ++nulls;
        } else {
          ++groups[it->dump()];
        }
      }
      cs.null_rate = static_cast<double>(nulls) / static_cast<double>(rows.size());
      cs.distinct_count = static_cast<std::int64_t>(groups.size());
      std::int64_t largest = 0;
      for (const auto& [k, n] : groups) largest = std::max(largest, n);
      cs.largest_group_fraction = static_cast<double>(largest) / static_cast<double>(rows.size());
      out.push_back(cs);
    }
    return out;
  }

 private:
  struct StoredRow {
    std::string row_id;
    Instant timestamp = 0;
    Json attributes = Json::object();
    std::vector<std::pair<std::string, Entity>> entities;  // column -> entity
  };

  struct Table {
    TableSchema schema;
    std::vector<StoredRow> rows;  // sorted by (timestamp, row_id)
    std::map<Entity, std::vector<std::size_t>> entity_index;
  };

  const Table& table(const std::string& name) const {
    auto it = tables_.find(name);
    if (it == tables_.end()) throw UnknownTableError(name);
    return it->second;
  }

  static StoredRow parse_row(const TableSchema& schema, std::size_t lineno, const Json& j) {
    StoredRow r;
    if (!j.contains("row_id") || !j["row_id"].is_string()) {
      throw SchemaViolationError(schema.name, lineno, "row_id", "missing or not a string");
    }
    r.row_id = j["row_id"].get<std::string>();
    if (!j.contains("timestamp") || !j["timestamp"].is_string()) {
      throw SchemaViolationError(schema.name, lineno, "timestamp", "missing or not a string");
    }
    r.timestamp = from_rfc3339(j["timestamp"].get<std::string>());
    for (const auto& [key, value] : j.items()) {
      if (key == "row_id" || key == "timestamp") continue;
      const ColumnDef* col = schema.column(key);
      if (!col) throw SchemaViolationError(schema.name, lineno, key, "not in schema");
      if (!value.is_null()) check_type(schema.name, lineno, *col, value);
      r.attributes[key] = value;
    }
    for (const auto& col : schema.columns) {
      if (!r.attributes.contains(col.name)) r.attributes[col.name] = nullptr;
      if (col.entity_kind && !r.attributes[col.name].is_null()) {
        Entity e = normalize_entity(*col.entity_kind, r.attributes[col.name].get<std::string>());
        r.attributes[col.name] = e.value;
        r.entities.emplace_back(col.name, std::move(e));
      }
    }
    return r;
  }

  static void check_type(const std::string& table, std::size_t lineno, const ColumnDef& col,
                         const Json& value) {
    bool ok = false;
    switch (col.type) {
      case ColumnType::String: ok = value.is_string(); break;
      case ColumnType::Int: ok = value.is_number_integer(); break;
      case ColumnType::Float: ok = value.is_number(); break;
      case ColumnType::Timestamp: ok = value.is_string(); break;
      case ColumnType::Bool: ok = value.is_boolean(); break;
    }
    if (!ok) {
      throw SchemaViolationError(table, lineno, col.name,
                                 "value " + value.dump() + " does not match type " +
                                     to_string(col.type));
    }
    if (col.type == ColumnType::Timestamp) from_rfc3339(value.get<std::string>());
  }

  static EventRow materialize(const Table& t, const StoredRow& r,
                              const std::set<Entity>& query_entities) {
    EventRow row;
    row.row_id = r.row_id;
    row.table = t.schema.name;
    row.timestamp = r.timestamp;
    row.attributes = r.attributes;
    for (const auto& [col, ent] : r.entities) {
      if (query_entities.count(ent)) {
        row.pivot_entities.insert(ent);
      } else {
        row.related_entities.insert(ent);
      }
    }
    return row;
  }

  std::int64_t max_window_seconds_;
  std::map<std::string, Table> tables_;
};

// Manifest file: {"tables": [{"name", "description", "columns": [...], "path"}]}
// Paths are resolved relative to the manifest's directory.
inline TelemetryStore load_store(const std::filesystem::path& manifest_path,
                                 std::int64_t max_window_hours = 720) {
  Json manifest = read_json(manifest_path);
  TelemetryStore store(max_window_hours);
  for (const auto& entry : manifest.at("tables")) {
    TableSchema schema = TableSchema::from_json(entry);
    std::filesystem::path data = entry.at("path").get<std::string>();
    if (data.is_relative()) data = manifest_path.parent_path() / data;
    store.register_table(schema, data);
  }
  return store;
}

}  // namespace huntline
