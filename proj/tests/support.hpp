// Shared test helpers: data paths, temp dirs, and independent brute-force
// oracles kept deliberately separate from the library implementations.
#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "huntline/contracts.hpp"
#include "huntline/core.hpp"
#include "huntline/store.hpp"
#include "huntline/timeline.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return HUNTLINE_SOURCE_DIR; }

inline std::filesystem::path data_dir() { return source_dir() / "data"; }

inline const huntline::AttackMap& attack_map() {
  static huntline::AttackMap m = huntline::AttackMap::load(data_dir() / "attack_techniques.json");
  return m;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("huntline-test-" + tag + "-" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::filesystem::path path_;
};

inline const huntline::ContractRegistry& contracts_registry() {
  static huntline::ContractRegistry reg =
      huntline::ContractRegistry::load_dir(data_dir() / "contracts");
  return reg;
}

// Wraps a backend and counts completions per contract site.
class CountingBackend : public huntline::ModelBackend {
 public:
  explicit CountingBackend(const huntline::ModelBackend& inner) : inner_(&inner) {}
  std::string name() const override { return inner_->name(); }
  huntline::Completion complete(const huntline::RenderedPrompt& prompt,
                                const huntline::Json& output_schema) const override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++counts_[prompt.contract_id];
    }
    return inner_->complete(prompt, output_schema);
  }
  std::int64_t count(const std::string& contract_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = counts_.find(contract_id);
    return it == counts_.end() ? 0 : it->second;
  }
  std::int64_t total() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::int64_t n = 0;
    for (auto& [k, v] : counts_) n += v;
    return n;
  }

 private:
  const huntline::ModelBackend* inner_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::int64_t> counts_;
};

// Independent cascade group-by over (hour, key values); reports passthrough
// ids and aggregate groups as "hour|col=val|..|count=N" signatures. Used as
// the aggregation oracle by unit and acceptance suites.
struct AggOracle {
  std::set<std::string> passthrough_ids;
  std::multiset<std::string> groups;

  static AggOracle run(const std::vector<huntline::EventRow>& rows,
                       const huntline::GroupingSchedule& schedule) {
    AggOracle o;
    std::vector<const huntline::EventRow*> current;
    for (const auto& r : rows) current.push_back(&r);
    std::vector<std::pair<std::string, std::size_t>> aggs;
    for (const auto& level : schedule.levels) {
      std::map<std::string, std::vector<const huntline::EventRow*>> buckets;
      for (const huntline::EventRow* r : current) {
        std::string key = std::to_string(huntline::hour_bin(r->timestamp));
        for (const auto& col : level.group_keys) {
          key += "|" + col + "=" +
                 (r->attributes.contains(col) ? r->attributes.at(col).dump() : "null");
        }
        buckets[key].push_back(r);
      }
      std::vector<const huntline::EventRow*> next;
      for (auto& [key, members] : buckets) {
        if (static_cast<int>(members.size()) >= level.support_threshold) {
          aggs.emplace_back(key, members.size());
        } else {
          next.insert(next.end(), members.begin(), members.end());
        }
      }
      current = std::move(next);
      if (aggs.size() + current.size() <= static_cast<std::size_t>(schedule.row_budget)) break;
    }
    for (const huntline::EventRow* r : current) o.passthrough_ids.insert(r->row_id);
    for (auto& [key, count] : aggs) o.groups.insert(key + "|count=" + std::to_string(count));
    return o;
  }

  static std::string signature(const huntline::EventRow& agg) {
    std::string key = std::to_string(huntline::hour_bin(agg.timestamp));
    for (const auto& [col, v] : agg.aggregate_meta->group_keys) {
      key += "|" + col + "=" + v.dump();
    }
    return key + "|count=" + std::to_string(agg.aggregate_meta->event_count);
  }
};

// Linear scan over raw JSONL rows with the same predicate query_events
// implements; used as the query oracle.
struct ScanOracle {
  struct Row {
    std::string row_id;
    huntline::Instant timestamp;
    std::set<huntline::Entity> entities;
  };
  std::vector<Row> rows;

  static ScanOracle from_file(const huntline::TableSchema& schema,
                              const std::filesystem::path& path) {
    ScanOracle o;
    huntline::for_each_jsonl(path, [&](std::size_t, const huntline::Json& j) {
      Row r;
      r.row_id = j.at("row_id").get<std::string>();
      r.timestamp = huntline::from_rfc3339(j.at("timestamp").get<std::string>());
      for (const auto& col : schema.columns) {
        if (!col.entity_kind || !j.contains(col.name) || j[col.name].is_null()) continue;
        r.entities.insert(
            huntline::normalize_entity(*col.entity_kind, j[col.name].get<std::string>()));
      }
      o.rows.push_back(std::move(r));
    });
    return o;
  }

  std::vector<std::string> matching_ids(const std::set<huntline::Entity>& entities,
                                        huntline::Instant start, huntline::Instant end) const {
    std::vector<std::pair<std::pair<huntline::Instant, std::string>, std::string>> hits;
    for (const auto& r : rows) {
      if (r.timestamp < start || r.timestamp > end) continue;
      bool match = false;
      for (const auto& e : entities) {
        if (r.entities.count(e)) match = true;
      }
      if (match) hits.push_back({{r.timestamp, r.row_id}, r.row_id});
    }
    std::sort(hits.begin(), hits.end());
    std::vector<std::string> ids;
    for (auto& h : hits) ids.push_back(h.second);
    return ids;
  }
};

}  // namespace testsupport
