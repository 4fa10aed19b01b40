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

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "huntline/util.hpp"

namespace huntline {

// ---------------------------------------------------------------------------
// token accounting

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double cost_usd = 0.0;

  void merge(const TokenUsage& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    cost_usd += other.cost_usd;
  }

  Json to_json() const {
    return Json{{"prompt_tokens", prompt_tokens},
                {"completion_tokens", completion_tokens},
                {"cost_usd", cost_usd}};
  }
};

struct PriceProfile {
  std::string name = "default";
  double input_per_1k = 0.01;
  double output_per_1k = 0.03;

  double cost(std::int64_t prompt_tokens, std::int64_t completion_tokens) const {
    return prompt_tokens / 1000.0 * input_per_1k + completion_tokens / 1000.0 * output_per_1k;
  }

  static PriceProfile load(const std::filesystem::path& path, const std::string& profile) {
    Json j = read_json(path);
    const Json& profiles = j.at("profiles");
    if (!profiles.contains(profile)) {
      throw ConfigError("unknown price profile: " + profile);
    }
    PriceProfile p;
    p.name = profile;
    p.input_per_1k = profiles[profile].at("input_per_1k").get<double>();
    p.output_per_1k = profiles[profile].at("output_per_1k").get<double>();
    return p;
  }
};

// ---------------------------------------------------------------------------
// validation issues

struct Issue {
  std::string path;
  std::string message;
};

struct Violation {
  int attempt = 0;
  std::string path;
  std::string message;

  Json to_json() const { return Json{{"attempt", attempt}, {"path", path}, {"message", message}}; }
};

// ---------------------------------------------------------------------------
// structured-object schemas
//
// A small declarative schema language, strict by construction: objects reject
// unknown fields, enumerations are closed, arrays carry size bounds.
//   {"type":"object","fields":{...},"required":[...]}
//   {"type":"array","items":{...},"min_items":N,"max_items":N}
//   {"type":"string","enum":[...],"pattern":"...","min_length":N}
//   {"type":"int"|"float","min":N,"max":N}
//   {"type":"bool"}

namespace schema {

inline void check(const Json& schema, const Json& value, const std::string& path,
                  std::vector<Issue>& issues) {
  const std::string type = schema.at("type").get<std::string>();
  if (type == "object") {
    if (!value.is_object()) {
      issues.push_back({path, "expected object"});
      return;
    }
    const Json& fields = schema.value("fields", Json::object());
    if (schema.contains("required")) {
      for (const auto& req : schema["required"]) {
        const std::string name = req.get<std::string>();
        if (!value.contains(name) || value[name].is_null()) {
          issues.push_back({path + "/" + name, "required field missing"});
        }
      }
    }
    for (const auto& [key, sub] : value.items()) {
      if (!fields.contains(key)) {
        issues.push_back({path + "/" + key, "unexpected field"});
        continue;
      }
      if (!sub.is_null()) check(fields[key], sub, path + "/" + key, issues);
    }
  } else if (type == "array") {
    if (!value.is_array()) {
      issues.push_back({path, "expected array"});
      return;
    }
    if (schema.contains("min_items") &&
        value.size() < schema["min_items"].get<std::size_t>()) {
      issues.push_back({path, "fewer than " + schema["min_items"].dump() + " items"});
    }
    if (schema.contains("max_items") &&
        value.size() > schema["max_items"].get<std::size_t>()) {
      issues.push_back({path, "more than " + schema["max_items"].dump() + " items"});
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        check(schema["items"], value[i], path + "/" + std::to_string(i), issues);
      }
    }
  } else if (type == "string") {
    if (!value.is_string()) {
      issues.push_back({path, "expected string"});
      return;
    }
    const std::string s = value.get<std::string>();
    if (schema.contains("enum")) {
      bool ok = false;
      for (const auto& e : schema["enum"]) {
        if (e.get<std::string>() == s) ok = true;
      }
      if (!ok) issues.push_back({path, "value '" + s + "' not in allowed set"});
    }
    if (schema.contains("pattern") &&
        !std::regex_match(s, std::regex(schema["pattern"].get<std::string>()))) {
      issues.push_back({path, "value '" + s + "' does not match pattern"});
    }
    if (schema.contains("min_length") && s.size() < schema["min_length"].get<std::size_t>()) {
      issues.push_back({path, "string shorter than minimum length"});
    }
  } else if (type == "int") {
    if (!value.is_number_integer()) {
      issues.push_back({path, "expected integer"});
      return;
    }
    if (schema.contains("min") && value.get<double>() < schema["min"].get<double>()) {
      issues.push_back({path, "below minimum " + schema["min"].dump()});
    }
    if (schema.contains("max") && value.get<double>() > schema["max"].get<double>()) {
      issues.push_back({path, "above maximum " + schema["max"].dump()});
    }
  } else if (type == "float") {
    if (!value.is_number()) {
      issues.push_back({path, "expected number"});
      return;
    }
    if (schema.contains("min") && value.get<double>() < schema["min"].get<double>()) {
      issues.push_back({path, "below minimum " + schema["min"].dump()});
    }
    if (schema.contains("max") && value.get<double>() > schema["max"].get<double>()) {
      issues.push_back({path, "above maximum " + schema["max"].dump()});
    }
  } else if (type == "bool") {
    if (!value.is_boolean()) issues.push_back({path, "expected boolean"});
  } else if (type == "any") {
    // unconstrained; used for opaque context blobs
  } else {
    issues.push_back({path, "unknown schema type '" + type + "'"});
  }
}

// Does a path like "/tasks/*/entity_scope/*" name a reachable node in the schema?
inline bool path_exists(const Json& schema_node, const std::vector<std::string>& segments,
                        std::size_t at) {
  if (at == segments.size()) return true;
  const std::string type = schema_node.at("type").get<std::string>();
  const std::string& seg = segments[at];
  if (seg == "*") {
    if (type != "array" || !schema_node.contains("items")) return false;
    return path_exists(schema_node["items"], segments, at + 1);
  }
  if (type != "object") return false;
  const Json& fields = schema_node.value("fields", Json::object());
  if (!fields.contains(seg)) return false;
  return path_exists(fields[seg], segments, at + 1);
}

}  // namespace schema

// ---------------------------------------------------------------------------
// path utilities shared by grounding rules and the scripted oracle

namespace jsonpath {

inline std::vector<std::string> segments(const std::string& pointer) {
  if (pointer.empty() || pointer == "/") return {};
  if (pointer[0] != '/') throw Error("BadPointer", "pointer must start with '/': " + pointer);
  auto parts = split(pointer.substr(1), '/');
  return parts;
}

inline const Json* resolve(const Json& root, const std::string& pointer) {
  const Json* cur = &root;
  for (const auto& seg : segments(pointer)) {
    if (cur->is_object() && cur->contains(seg)) {
      cur = &(*cur)[seg];
    } else if (cur->is_array() && !seg.empty() &&
               seg.find_first_not_of("0123456789") == std::string::npos &&
               std::stoul(seg) < cur->size()) {
      cur = &(*cur)[std::stoul(seg)];
    } else {
      return nullptr;
    }
  }
  return cur;
}

struct Match {
  std::string concrete_path;
  const Json* value = nullptr;
  const Json* first_wildcard_element = nullptr;
};

inline void collect(const Json& node, const std::vector<std::string>& segs, std::size_t at,
                    const std::string& prefix, const Json* first_element,
                    std::vector<Match>& out) {
  if (at == segs.size()) {
    out.push_back({prefix.empty() ? "/" : prefix, &node, first_element});
    return;
  }
  const std::string& seg = segs[at];
  if (seg == "*") {
    if (!node.is_array()) return;
    for (std::size_t i = 0; i < node.size(); ++i) {
      collect(node[i], segs, at + 1, prefix + "/" + std::to_string(i),
              first_element ? first_element : &node[i], out);
    }
  } else if (node.is_object() && node.contains(seg)) {
    collect(node[seg], segs, at + 1, prefix + "/" + seg, first_element, out);
  }
}

// All values matching a wildcard pointer; each match remembers the array
// element bound at the first wildcard so rule conditions can inspect siblings.
inline std::vector<Match> collect(const Json& root, const std::string& pointer) {
  std::vector<Match> out;
  collect(root, segments(pointer), 0, "", nullptr, out);
  return out;
}

// Flatten the values under a (possibly wildcarded) pointer into a scalar set.
inline std::vector<Json> collect_scalars(const Json& root, const std::string& pointer) {
  std::vector<Json> out;
  for (const auto& m : collect(root, pointer)) {
    if (m.value->is_array()) {
      for (const auto& v : *m.value) out.push_back(v);
    } else {
      out.push_back(*m.value);
    }
  }
  return out;
}

}  // namespace jsonpath

// ---------------------------------------------------------------------------
// grounding rules
//
// Declarative deterministic checks tying model output to the provided input:
//   member_of            every value at `output` is a member of the input
//                        collection at `collection`; `when_field`/`when_equals`
//                        restrict the rule to array elements (bound at the
//                        first wildcard) whose field matches.
//   max_count_from       array at `output` has at most input[`limit_from`] items
//   max_value_from       number at `output` is at most input[`limit_from`]
//   present_iff          `output` is present exactly when output[`when`] == `when_equals`
//   sizes_nonincreasing  element subarrays at `output`/[i]/`subfield` never grow

struct GroundingRule {
  std::string kind;
  std::string output;
  std::string collection;
  std::string limit_from;
  std::string when;  // present_iff: output-side pointer
  std::string when_field;
  Json when_equals;
  std::string subfield;

  static GroundingRule from_json(const Json& j) {
    GroundingRule r;
    r.kind = j.at("kind").get<std::string>();
    r.output = j.at("output").get<std::string>();
    r.collection = j.value("collection", "");
    r.limit_from = j.value("limit_from", "");
    r.when = j.value("when", "");
    r.when_field = j.value("when_field", "");
    if (j.contains("when_equals")) r.when_equals = j["when_equals"];
    r.subfield = j.value("subfield", "");
    return r;
  }

  Json to_json() const {
    Json j{{"kind", kind}, {"output", output}};
    if (!collection.empty()) j["collection"] = collection;
    if (!limit_from.empty()) j["limit_from"] = limit_from;
    if (!when.empty()) j["when"] = when;
    if (!when_field.empty()) j["when_field"] = when_field;
    if (!when_equals.is_null()) j["when_equals"] = when_equals;
    if (!subfield.empty()) j["subfield"] = subfield;
    return j;
  }
};

// ---------------------------------------------------------------------------
// contracts

class InputSchemaViolationError : public Error {
 public:
  explicit InputSchemaViolationError(const std::string& detail)
      : Error("InputSchemaViolation", detail) {}
};

struct PromptContract {
  std::string contract_id;
  std::string version;
  int max_retries = 3;
  Json input_schema;
  Json output_schema;
  std::vector<GroundingRule> grounding_rules;
  std::string template_text;

  static PromptContract from_json(const Json& j) {
    PromptContract c;
    c.contract_id = j.at("contract_id").get<std::string>();
    c.version = j.at("version").get<std::string>();
    c.max_retries = j.value("max_retries", 3);
    c.input_schema = j.at("input_schema");
    c.output_schema = j.at("output_schema");
    if (j.contains("grounding_rules")) {
      for (const auto& r : j["grounding_rules"]) {
        c.grounding_rules.push_back(GroundingRule::from_json(r));
      }
    }
    c.template_text = j.at("template").get<std::string>();
    c.validate();
    return c;
  }

  void validate() const {
    // Template placeholders must name input fields.
    const Json& fields = input_schema.value("fields", Json::object());
    std::regex placeholder(R"(\{([A-Za-z0-9_]+)\})");
    auto begin = std::sregex_iterator(template_text.begin(), template_text.end(), placeholder);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      const std::string name = (*it)[1].str();
      if (!fields.contains(name)) {
        throw ConfigError(contract_id + ": template placeholder {" + name +
                          "} not in input schema");
      }
    }
    for (const auto& r : grounding_rules) {
      if (!schema::path_exists(output_schema, jsonpath::segments(r.output), 0)) {
        throw ConfigError(contract_id + ": grounding rule output path " + r.output +
                          " not in output schema");
      }
      if (!r.collection.empty() &&
          !schema::path_exists(input_schema, jsonpath::segments(r.collection), 0)) {
        throw ConfigError(contract_id + ": grounding rule collection path " + r.collection +
                          " not in input schema");
      }
      if (!r.limit_from.empty() &&
          !schema::path_exists(input_schema, jsonpath::segments(r.limit_from), 0)) {
        throw ConfigError(contract_id + ": grounding rule limit path " + r.limit_from +
                          " not in input schema");
      }
    }
  }

  std::string render(const Json& input) const {
    std::string out = template_text;
    const Json& fields = input_schema.value("fields", Json::object());
    for (const auto& [name, sub] : fields.items()) {
      (void)sub;
      const std::string token = "{" + name + "}";
      std::size_t pos;
      while ((pos = out.find(token)) != std::string::npos) {
        std::string rep = input.contains(name) ? input[name].dump() : "null";
        out.replace(pos, token.size(), rep);
      }
    }
    return out;
  }
};

class ContractRegistry {
 public:
  void add(PromptContract c) { contracts_.emplace(c.contract_id, std::move(c)); }

  static ContractRegistry load_dir(const std::filesystem::path& dir) {
    ContractRegistry reg;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) reg.add(PromptContract::from_json(read_json(f)));
    return reg;
  }

  const PromptContract& get(const std::string& id) const {
    auto it = contracts_.find(id);
    if (it == contracts_.end()) throw ConfigError("unknown contract: " + id);
    return it->second;
  }

  std::size_t size() const { return contracts_.size(); }

 private:
  std::map<std::string, PromptContract> contracts_;
};

// ---------------------------------------------------------------------------
// backends

struct RenderedPrompt {
  std::string contract_id;
  std::string text;
  const Json* input = nullptr;
  std::string input_digest;
  int attempt = 1;
};

struct Completion {
  bool transport_ok = false;
  std::string error;
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual Completion complete(const RenderedPrompt& prompt, const Json& output_schema) const = 0;
  virtual std::string name() const = 0;
};

inline std::string canonical_digest(const Json& input) {
  // nlohmann objects are key-sorted, so dump() is a canonical serialization.
  return fnv1a64_hex(input.dump());
}

// ---------------------------------------------------------------------------
// outcome

enum class OutcomeStatus { Valid, SuppressedAfterRetries, BackendFailure };

inline const char* to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::Valid: return "Valid";
    case OutcomeStatus::SuppressedAfterRetries: return "SuppressedAfterRetries";
    case OutcomeStatus::BackendFailure: return "BackendFailure";
  }
  return "?";
}

struct ContractOutcome {
  std::string contract_id;
  OutcomeStatus status = OutcomeStatus::BackendFailure;
  std::optional<Json> output;  // present iff status == Valid
  int attempts = 0;
  std::vector<Violation> violations;
  TokenUsage usage;

  bool valid() const { return status == OutcomeStatus::Valid; }

  Json to_json() const {
    Json v = Json::array();
    for (const auto& x : violations) v.push_back(x.to_json());
    Json j{{"contract_id", contract_id},
           {"status", to_string(status)},
           {"attempts", attempts},
           {"violations", v},
           {"usage", usage.to_json()}};
    if (output) j["output"] = *output;
    return j;
  }
};

// ---------------------------------------------------------------------------
// deterministic output validation (schema first, grounding second)

inline std::vector<Issue> validate_output(const PromptContract& contract, const Json& input,
                                          const Json& candidate) {
  std::vector<Issue> issues;
  schema::check(contract.output_schema, candidate, "", issues);
  if (!issues.empty()) return issues;

  for (const auto& rule : contract.grounding_rules) {
    if (rule.kind == "member_of") {
      auto members = jsonpath::collect_scalars(input, rule.collection);
      for (const auto& m : jsonpath::collect(candidate, rule.output)) {
        if (!rule.when_field.empty()) {
          if (!m.first_wildcard_element) continue;
          const Json* f = jsonpath::resolve(*m.first_wildcard_element, "/" + rule.when_field);
          if (!f || *f != rule.when_equals) continue;
        }
        bool found = false;
        for (const auto& allowed : members) {
          if (allowed == *m.value) {
            found = true;
            break;
          }
        }
        if (!found) {
          issues.push_back({m.concrete_path,
                            "value " + m.value->dump() + " not grounded in input collection " +
                                rule.collection});
        }
      }
    } else if (rule.kind == "max_count_from") {
      const Json* limit = jsonpath::resolve(input, rule.limit_from);
      if (!limit || !limit->is_number()) continue;
      for (const auto& m : jsonpath::collect(candidate, rule.output)) {
        if (m.value->is_array() &&
            m.value->size() > static_cast<std::size_t>(limit->get<std::int64_t>())) {
          issues.push_back({m.concrete_path,
                            "array exceeds limit " + limit->dump() + " from " + rule.limit_from});
        }
      }
    } else if (rule.kind == "max_value_from") {
      const Json* limit = jsonpath::resolve(input, rule.limit_from);
      if (!limit || !limit->is_number()) continue;
      for (const auto& m : jsonpath::collect(candidate, rule.output)) {
        if (m.value->is_number() && m.value->get<double>() > limit->get<double>()) {
          issues.push_back({m.concrete_path,
                            "value " + m.value->dump() + " exceeds limit " + limit->dump() +
                                " from " + rule.limit_from});
        }
      }
    } else if (rule.kind == "present_iff") {
      const Json* cond = jsonpath::resolve(candidate, rule.when);
      bool want = cond && *cond == rule.when_equals;
      const Json* field = jsonpath::resolve(candidate, rule.output);
      bool present = field && !field->is_null();
      if (want && !present) {
        issues.push_back({rule.output, "required when " + rule.when + " is " +
                                           rule.when_equals.dump()});
      }
      if (!want && present) {
        issues.push_back({rule.output, "must be absent when " + rule.when + " is not " +
                                           rule.when_equals.dump()});
      }
    } else if (rule.kind == "sizes_nonincreasing") {
      const Json* arr = jsonpath::resolve(candidate, rule.output);
      if (!arr || !arr->is_array()) continue;
      std::size_t prev = std::numeric_limits<std::size_t>::max();
      for (std::size_t i = 0; i < arr->size(); ++i) {
        const Json* sub = jsonpath::resolve((*arr)[i], "/" + rule.subfield);
        if (!sub || !sub->is_array()) continue;
        if (sub->size() > prev) {
          issues.push_back({rule.output + "/" + std::to_string(i) + "/" + rule.subfield,
                            "coarser level must not add grouping keys"});
        }
        prev = sub->size();
      }
    } else {
      issues.push_back({rule.output, "unknown grounding rule kind '" + rule.kind + "'"});
    }
  }
  return issues;
}

// ---------------------------------------------------------------------------
// gateway

struct GatewayOptions {
  PriceProfile prices;
  bool retry_feedback = true;  // append a violation summary to retried prompts
  int transport_retries = 2;
};

class ContractGateway {
 public:
  ContractGateway(const ContractRegistry& registry, const ModelBackend& backend,
                  GatewayOptions options = {})
      : registry_(&registry), backend_(&backend), options_(std::move(options)) {}

  const ContractRegistry& registry() const { return *registry_; }
  const ModelBackend& backend() const { return *backend_; }

  ContractOutcome execute(const std::string& contract_id, const Json& input) const {
    const PromptContract& contract = registry_->get(contract_id);
    {
      std::vector<Issue> input_issues;
      schema::check(contract.input_schema, input, "", input_issues);
      if (!input_issues.empty()) {
        throw InputSchemaViolationError(contract_id + ": " + input_issues.front().path + " " +
                                        input_issues.front().message);
      }
    }

    ContractOutcome outcome;
    outcome.contract_id = contract_id;
    const std::string base_prompt = contract.render(input);
    const std::string digest = canonical_digest(input);

    std::vector<Issue> last_issues;
    for (int attempt = 1; attempt <= contract.max_retries + 1; ++attempt) {
      outcome.attempts = attempt;
      RenderedPrompt prompt;
      prompt.contract_id = contract_id;
      prompt.input = &input;
      prompt.input_digest = digest;
      prompt.attempt = attempt;
      prompt.text = base_prompt;
      if (attempt > 1 && options_.retry_feedback) {
        prompt.text += "\n\nYour previous response was rejected:\n";
        for (const auto& issue : last_issues) {
          prompt.text += "- " + issue.path + ": " + issue.message + "\n";
        }
        prompt.text += "Respond again with a corrected JSON object.";
      }

      Completion completion;
      for (int t = 0; t <= options_.transport_retries; ++t) {
        completion = backend_->complete(prompt, contract.output_schema);
        if (completion.transport_ok) break;
      }
      if (!completion.transport_ok) {
        outcome.status = OutcomeStatus::BackendFailure;
        outcome.violations.push_back({attempt, "", "backend failure: " + completion.error});
        return outcome;
      }
      outcome.usage.prompt_tokens += completion.prompt_tokens;
      outcome.usage.completion_tokens += completion.completion_tokens;
      outcome.usage.cost_usd +=
          options_.prices.cost(completion.prompt_tokens, completion.completion_tokens);

      Json candidate;
      try {
        candidate = Json::parse(strip_fences(completion.text));
      } catch (const std::exception& e) {
        last_issues = {{"", std::string("unparseable JSON: ") + e.what()}};
        for (const auto& issue : last_issues) {
          outcome.violations.push_back({attempt, issue.path, issue.message});
        }
        continue;
      }
      last_issues = validate_output(contract, input, candidate);
      if (last_issues.empty()) {
        outcome.status = OutcomeStatus::Valid;
        outcome.output = std::move(candidate);
        return outcome;
      }
      for (const auto& issue : last_issues) {
        outcome.violations.push_back({attempt, issue.path, issue.message});
      }
    }
    outcome.status = OutcomeStatus::SuppressedAfterRetries;
    return outcome;
  }

 private:
  static std::string strip_fences(const std::string& text) {
    std::string s = trim(text);
    if (s.rfind("```", 0) == 0) {
      auto first_newline = s.find('\n');
      auto last_fence = s.rfind("```");
      if (first_newline != std::string::npos && last_fence > first_newline) {
        s = trim(s.substr(first_newline + 1, last_fence - first_newline - 1));
      }
    }
    return s;
  }

  const ContractRegistry* registry_;
  const ModelBackend* backend_;
  GatewayOptions options_;
};

// ---------------------------------------------------------------------------
// usage aggregation

struct ContractUsage {
  std::int64_t calls = 0;
  std::int64_t attempts = 0;
  std::int64_t invalid_attempts = 0;
  std::int64_t suppressed = 0;
  TokenUsage usage;

  Json to_json() const {
    return Json{{"calls", calls},
                {"attempts", attempts},
                {"invalid_attempts", invalid_attempts},
                {"suppressed", suppressed},
                {"usage", usage.to_json()}};
  }
};

struct UsageReport {
  std::map<std::string, ContractUsage> per_contract;
  TokenUsage total;
  std::int64_t total_attempts = 0;
  std::int64_t invalid_attempts = 0;

  // share of LLM responses with at least one schema/grounding violation
  double invalid_response_rate() const {
    return total_attempts == 0
               ? 0.0
               : static_cast<double>(invalid_attempts) / static_cast<double>(total_attempts);
  }

  void add(const ContractOutcome& outcome) {
    ContractUsage& c = per_contract[outcome.contract_id];
    c.calls += 1;
    c.attempts += outcome.attempts;
    std::set<int> bad;
    for (const auto& v : outcome.violations) bad.insert(v.attempt);
    c.invalid_attempts += static_cast<std::int64_t>(bad.size());
    if (outcome.status == OutcomeStatus::SuppressedAfterRetries) c.suppressed += 1;
    c.usage.merge(outcome.usage);
    total.merge(outcome.usage);
    total_attempts += outcome.attempts;
    invalid_attempts += static_cast<std::int64_t>(bad.size());
  }

  void merge(const UsageReport& other) {
    for (const auto& [id, u] : other.per_contract) {
      ContractUsage& c = per_contract[id];
      c.calls += u.calls;
      c.attempts += u.attempts;
      c.invalid_attempts += u.invalid_attempts;
      c.suppressed += u.suppressed;
      c.usage.merge(u.usage);
    }
    total.merge(other.total);
    total_attempts += other.total_attempts;
    invalid_attempts += other.invalid_attempts;
  }

  Json to_json() const {
    Json per = Json::object();
    for (const auto& [id, u] : per_contract) per[id] = u.to_json();
    return Json{{"per_contract", per},
                {"total", total.to_json()},
                {"total_attempts", total_attempts},
                {"invalid_attempts", invalid_attempts},
                {"invalid_response_rate", invalid_response_rate()}};
  }
};

inline UsageReport usage_report(const std::vector<ContractOutcome>& outcomes) {
  UsageReport r;
  for (const auto& o : outcomes) r.add(o);
  return r;
}

}  // namespace huntline
