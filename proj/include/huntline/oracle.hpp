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

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "huntline/contracts.hpp"

namespace huntline {

// Deterministic scripted backend for hermetic runs. Each contract gets a
// playbook file <dir>/<contract_id>.json; a response is a pure function of
// (contract_id, input, attempt), so the oracle is stateless across calls.
//
// Playbook:
//   {"contract_id": "...",
//    "combine": "first_match" | "append",   // append concatenates arrays from
//    "append_key": "findings",              // every matching rule
//    "rules": [
//      {"name": "...",
//       "digest": "<hex>",                  // optional exact input digest
//       "match": [{"pointer": "/round", "op": "equals", "value": 1}, ...],
//       "invalid_attempts": 1,              // first N attempts get garbage
//       "invalid_payload": {...},           // optional custom garbage
//       "respond": <template>,              // or per-attempt "responses": [...]
//       "prune_empty_scope": true}]}        // drop /tasks items with empty scope
//
// Response templates may reference the input:
//   "$input:/pointer"                                 inserts the input value
//   {"$select": {"from": "/ptr", "any_of": [...],     subsequence of an input
//                "wrap": "field", "extra": {...}}}     collection
//   {"$keep_rows": {"ids_from": "/ptr",               per-id records filtered
//                   "keep": {"id": {...}}, ...}}       to ids present in input
class ScriptedBackend : public ModelBackend {
 public:
  static ScriptedBackend load_dir(const std::filesystem::path& dir) {
    ScriptedBackend b;
    b.dir_ = dir;
    if (!std::filesystem::is_directory(dir)) {
      throw ConfigError("oracle fixture directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Json playbook = read_json(f);
      const std::string id = playbook.at("contract_id").get<std::string>();
      b.playbooks_[id] = std::move(playbook);
    }
    return b;
  }

  void add_playbook(const Json& playbook) {
    playbooks_[playbook.at("contract_id").get<std::string>()] = playbook;
  }

  std::string name() const override { return "oracle:" + dir_.string(); }

  Completion complete(const RenderedPrompt& prompt, const Json&) const override {
    Completion c;
    c.transport_ok = true;
    Json response = respond(prompt);
    c.text = response.dump();
    c.prompt_tokens = estimate_tokens(prompt.text);
    c.completion_tokens = estimate_tokens(c.text);
    return c;
  }

  static std::int64_t estimate_tokens(const std::string& text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
  }

 private:
  Json respond(const RenderedPrompt& prompt) const {
    auto it = playbooks_.find(prompt.contract_id);
    // Unmatched calls answer with an empty object, which fails schema checks
    // downstream and degrades to suppression.
    if (it == playbooks_.end()) return Json::object();
    const Json& playbook = it->second;
    const Json& input = *prompt.input;

    if (playbook.value("combine", "first_match") == "append") {
      const std::string key = playbook.at("append_key").get<std::string>();
      Json items = Json::array();
      for (const auto& rule : playbook.value("rules", Json::array())) {
        if (!rule_matches(rule, prompt, input)) continue;
        Json part = resolve_template(rule.at("respond"), input);
        for (const auto& x : part) items.push_back(x);
      }
      return Json{{key, items}};
    }

    for (const auto& rule : playbook.value("rules", Json::array())) {
      if (!rule_matches(rule, prompt, input)) continue;
      int invalid_attempts = rule.value("invalid_attempts", 0);
      if (prompt.attempt <= invalid_attempts) {
        return rule.value("invalid_payload", Json{{"__invalid__", true}});
      }
      Json body;
      if (rule.contains("responses")) {
        const Json& rs = rule["responses"];
        std::size_t idx = static_cast<std::size_t>(prompt.attempt - invalid_attempts - 1);
        if (idx >= rs.size()) idx = rs.size() - 1;
        body = rs[idx];
      } else {
        body = rule.at("respond");
      }
      Json out = resolve_template(body, input);
      if (rule.value("prune_empty_scope", false)) prune_empty_scope(out);
      return out;
    }
    return Json::object();
  }

  static bool rule_matches(const Json& rule, const RenderedPrompt& prompt, const Json& input) {
    if (rule.contains("digest") && rule["digest"].get<std::string>() != prompt.input_digest) {
      return false;
    }
    for (const auto& cond : rule.value("match", Json::array())) {
      const std::string op = cond.at("op").get<std::string>();
      const Json* v = jsonpath::resolve(input, cond.at("pointer").get<std::string>());
      bool ok = false;
      if (op == "equals") {
        ok = v && *v == cond.at("value");
      } else if (op == "not_equals") {
        ok = !v || *v != cond.at("value");
      } else if (op == "contains") {
        ok = v && contains(*v, cond.at("value"));
      } else if (op == "not_contains") {
        ok = !v || !contains(*v, cond.at("value"));
      } else if (op == "exists") {
        ok = v != nullptr && !v->is_null();
      } else if (op == "not_exists") {
        ok = v == nullptr || v->is_null();
      } else if (op == "empty") {
        ok = !v || (v->is_array() && v->empty()) || (v->is_string() && v->empty());
      } else if (op == "non_empty") {
        ok = v && ((v->is_array() && !v->empty()) || (v->is_string() && !v->empty()));
      } else {
        throw ConfigError("unknown playbook match op: " + op);
      }
      if (!ok) return false;
    }
    return true;
  }

  static bool contains(const Json& haystack, const Json& needle) {
    if (haystack.is_array()) {
      for (const auto& x : haystack) {
        if (x == needle) return true;
      }
      return false;
    }
    if (haystack.is_string() && needle.is_string()) {
      return haystack.get<std::string>().find(needle.get<std::string>()) != std::string::npos;
    }
    return false;
  }

  static Json resolve_template(const Json& tpl, const Json& input) {
    if (tpl.is_string()) {
      const std::string s = tpl.get<std::string>();
      if (s.rfind("$input:", 0) == 0) {
        const Json* v = jsonpath::resolve(input, s.substr(7));
        return v ? *v : Json();
      }
      return tpl;
    }
    if (tpl.is_array()) {
      Json out = Json::array();
      for (const auto& x : tpl) out.push_back(resolve_template(x, input));
      return out;
    }
    if (tpl.is_object()) {
      if (tpl.contains("$select")) {
        const Json& spec = tpl["$select"];
        auto from = jsonpath::collect_scalars(input, spec.at("from").get<std::string>());
        const Json& wanted = spec.at("any_of");
        Json out = Json::array();
        std::set<std::string> seen;
        for (const auto& item : from) {
          if (!contains(wanted, item) || !seen.insert(item.dump()).second) continue;
          if (spec.contains("wrap")) {
            Json obj{{spec["wrap"].get<std::string>(), item}};
            const Json extra = spec.value("extra", Json::object());
            for (const auto& [k, v] : extra.items()) obj[k] = v;
            out.push_back(obj);
          } else {
            out.push_back(item);
          }
        }
        return out;
      }
      if (tpl.contains("$keep_rows")) {
        const Json& spec = tpl["$keep_rows"];
        auto ids = jsonpath::collect_scalars(input, spec.at("ids_from").get<std::string>());
        const Json& keep = spec.at("keep");
        const std::string id_field = spec.value("id_field", "row_id");
        Json out = Json::array();
        for (const auto& id : ids) {
          if (!id.is_string()) continue;
          const std::string key = id.get<std::string>();
          if (!keep.contains(key)) continue;
          Json obj = keep[key];
          obj[id_field] = key;
          out.push_back(obj);
        }
        return out;
      }
      Json out = Json::object();
      for (const auto& [k, v] : tpl.items()) out[k] = resolve_template(v, input);
      return out;
    }
    return tpl;
  }

  static void prune_empty_scope(Json& out) {
    if (!out.is_object() || !out.contains("tasks") || !out["tasks"].is_array()) return;
    Json kept = Json::array();
    for (auto& t : out["tasks"]) {
      if (t.is_object() && t.contains("entity_scope") && t["entity_scope"].is_array() &&
          t["entity_scope"].empty()) {
        continue;
      }
      kept.push_back(t);
    }
    out["tasks"] = kept;
  }

  std::filesystem::path dir_;
  std::map<std::string, Json> playbooks_;
};

// Test wrapper that forces selected contract sites to emit invalid output on
// every attempt, exercising fail-closed suppression end to end.
class FaultInjectingBackend : public ModelBackend {
 public:
  FaultInjectingBackend(const ModelBackend& inner, std::set<std::string> broken_sites)
      : inner_(&inner), broken_(std::move(broken_sites)) {}

  std::string name() const override { return "fault(" + inner_->name() + ")"; }

  Completion complete(const RenderedPrompt& prompt, const Json& output_schema) const override {
    if (broken_.count(prompt.contract_id)) {
      Completion c;
      c.transport_ok = true;
      c.text = R"({"__fault_injected__": true})";
      c.prompt_tokens = ScriptedBackend::estimate_tokens(prompt.text);
      c.completion_tokens = 8;
      return c;
    }
    return inner_->complete(prompt, output_schema);
  }

 private:
  const ModelBackend* inner_;
  std::set<std::string> broken_;
};

}  // namespace huntline
