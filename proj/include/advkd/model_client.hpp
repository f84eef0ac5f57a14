// Copyright 2026 The advkd Authors.
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

// Client for OpenAI-compatible HTTP endpoints. Two calls matter to the
// pipeline: chat completions (every generation step) and echo scoring on
// the completions route (per-token log-probs for rewards).

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advkd/errors.hpp"

namespace advkd::client {

enum class Role { Teacher, StudentPolicy, StudentReference };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name;
  Role role = Role::Teacher;
  double temperature = 1.0;
  int max_tokens = 2048;
  std::chrono::milliseconds timeout{120000};
  int max_retries = 3;
  /// Name of the environment variable holding the bearer token. Empty or
  /// unset means no Authorization header.
  std::string api_key_env;
  std::chrono::milliseconds initial_backoff{500};
  int max_concurrency = 4;
  std::string chat_path = "/v1/chat/completions";
  std::string scoring_path = "/v1/completions";

  /// Role defaults: teacher samples at 1.0 with 2048 tokens, students at
  /// 0.6 with 512.
  static EndpointConfig defaults_for(Role role);

  friend bool operator==(const EndpointConfig&, const EndpointConfig&) = default;
};

struct ScoredCompletion {
  std::string text;
  /// One entry per completion token; prompt tokens are excluded.
  std::vector<double> token_logprobs;
  double total_logprob = 0.0;
  int token_count = 0;
  std::string model_name;
};

struct RequestLogEntry {
  std::string request_id;
  std::string model_name;
  std::string path;
  int attempt = 0;
  /// HTTP status, or 0 when the transport failed before a response.
  int status = 0;
  std::string response_excerpt;
};

/// Thread-safe. One instance is shared by every stage of a run.
class ModelClient {
 public:
  using LogSink = std::function<void(const RequestLogEntry&)>;

  ModelClient() = default;
  explicit ModelClient(LogSink sink) : sink_(std::move(sink)) {}

  ModelClient(const ModelClient&) = delete;
  ModelClient& operator=(const ModelClient&) = delete;

  std::string chat_complete(const EndpointConfig& endpoint,
                            const std::optional<std::string>& system,
                            const std::string& user,
                            std::optional<int> max_tokens = std::nullopt);

  ScoredCompletion score_completion(const EndpointConfig& endpoint,
                                    const std::string& prompt,
                                    const std::string& completion);

  /// GET {base_url}/v1/models; throws TransportError or EndpointError.
  void check_health(const EndpointConfig& endpoint);

  std::vector<RequestLogEntry> request_log() const;
  /// Total retries issued so far (attempts beyond the first).
  int retry_count() const;

 private:
  struct Response {
    int status = 0;
    std::string body;
  };

  Response post_with_retries(const EndpointConfig& endpoint,
                             const std::string& path, const std::string& body);
  void record(RequestLogEntry entry);

  LogSink sink_;
  mutable std::mutex mu_;
  std::vector<RequestLogEntry> log_;
  int retries_ = 0;
};

/// Unicode code points in a UTF-8 string; servers report text offsets in
/// characters, not bytes.
std::size_t utf8_length(std::string_view text);

}  // namespace advkd::client
