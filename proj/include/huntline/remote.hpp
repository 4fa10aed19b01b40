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

#include <atomic>
#include <cstdlib>
#include <semaphore>
#include <string>

#include <httplib.h>

#include "huntline/contracts.hpp"

namespace huntline {

struct RemoteBackendConfig {
  std::string endpoint = "http://localhost:8080";  // chat-completions-compatible base URL
  std::string model = "gpt-4.1";
  std::string api_key_env = "HUNTLINE_API_KEY";
  int max_in_flight = 4;
  int timeout_seconds = 120;
};

// Chat-completions-compatible client with structured-output request mode.
// Stateless across calls: everything the model sees is in the rendered prompt.
class HttpBackend : public ModelBackend {
 public:
  explicit HttpBackend(RemoteBackendConfig config)
      : config_(std::move(config)),
        in_flight_(std::max(1, config_.max_in_flight)) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    api_key_ = key ? key : "";
  }

  std::string name() const override { return "remote:" + config_.endpoint; }

  // Total POSTs issued by any HttpBackend; lets hermetic tests assert that
  // oracle-backed runs never touch the network.
  static std::atomic<std::int64_t>& request_count() {
    static std::atomic<std::int64_t> n{0};
    return n;
  }

  Completion complete(const RenderedPrompt& prompt, const Json& output_schema) const override {
    Completion c;
    Json body{
        {"model", config_.model},
        {"temperature", 0},
        {"response_format", Json{{"type", "json_object"}}},
        {"messages",
         Json::array(
             {Json{{"role", "system"},
                   {"content",
                    "You are a security analysis component. Respond with a single JSON object "
                    "conforming to this schema: " +
                        output_schema.dump()}},
              Json{{"role", "user"}, {"content", prompt.text}}})}};

    const_cast<std::counting_semaphore<256>&>(in_flight_).acquire();
    request_count().fetch_add(1);
    httplib::Client client(config_.endpoint);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    const_cast<std::counting_semaphore<256>&>(in_flight_).release();

    if (!res) {
      c.error = "transport error: " + httplib::to_string(res.error());
      return c;
    }
    if (res->status != 200) {
      c.error = "http status " + std::to_string(res->status);
      return c;
    }
    try {
      Json reply = Json::parse(res->body);
      c.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      if (reply.contains("usage")) {
        c.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
        c.completion_tokens = reply["usage"].value("completion_tokens", 0);
      } else {
        c.prompt_tokens = static_cast<std::int64_t>((prompt.text.size() + 3) / 4);
        c.completion_tokens = static_cast<std::int64_t>((c.text.size() + 3) / 4);
      }
      c.transport_ok = true;
    } catch (const std::exception& e) {
      c.error = std::string("malformed completion payload: ") + e.what();
    }
    return c;
  }

 private:
  RemoteBackendConfig config_;
  std::string api_key_;
  std::counting_semaphore<256> in_flight_;
};

}  // namespace huntline
