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

#include "advkd/model_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "advkd/hash.hpp"

namespace advkd::client {

using json = nlohmann::ordered_json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::Teacher: return "teacher";
    case Role::StudentPolicy: return "student_policy";
    case Role::StudentReference: return "student_reference";
  }
  return "teacher";
}

Role role_from_name(std::string_view name) {
  if (name == "teacher") return Role::Teacher;
  if (name == "student_policy") return Role::StudentPolicy;
  if (name == "student_reference") return Role::StudentReference;
  throw ParameterError("role", "unknown endpoint role '" + std::string(name) + "'");
}

EndpointConfig EndpointConfig::defaults_for(Role role) {
  EndpointConfig e;
  e.role = role;
  switch (role) {
    case Role::Teacher:
      e.model_name = "teacher";
      e.temperature = 1.0;
      e.max_tokens = 2048;
      break;
    case Role::StudentPolicy:
      e.model_name = "student";
      e.temperature = 0.6;
      e.max_tokens = 512;
      break;
    case Role::StudentReference:
      e.model_name = "student-reference";
      e.temperature = 0.6;
      e.max_tokens = 512;
      break;
  }
  return e;
}

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

namespace {

struct Target {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path under the origin, no trailing slash
};

Target split_base_url(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) {
    throw ParameterError("base_url", "base_url needs a scheme: '" + base_url + "'");
  }
  const auto slash = base_url.find('/', scheme + 3);
  Target t;
  if (slash == std::string::npos) {
    t.origin = base_url;
  } else {
    t.origin = base_url.substr(0, slash);
    t.prefix = base_url.substr(slash);
    while (!t.prefix.empty() && t.prefix.back() == '/') t.prefix.pop_back();
  }
  return t;
}

httplib::Headers auth_headers(const EndpointConfig& endpoint) {
  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  return headers;
}

std::unique_ptr<httplib::Client> make_client(const EndpointConfig& endpoint,
                                             const Target& target) {
  auto cli = std::make_unique<httplib::Client>(target.origin);
  if (!cli->is_valid()) {
    throw ParameterError("base_url", "cannot use base_url '" + endpoint.base_url + "'");
  }
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      endpoint.timeout - secs);
  cli->set_connection_timeout(secs.count(), usecs.count());
  cli->set_read_timeout(secs.count(), usecs.count());
  cli->set_write_timeout(secs.count(), usecs.count());
  return cli;
}

std::string excerpt(std::string_view body, std::size_t limit = 200) {
  return body.size() <= limit ? std::string(body)
                              : std::string(body.substr(0, limit)) + "...";
}

bool retryable(int status) { return status == 429 || status >= 500; }

json parse_body(int status, const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
    throw EndpointError(status, "malformed JSON body: " + excerpt(body));
  }
}

}  // namespace

void ModelClient::record(RequestLogEntry entry) {
  {
    std::lock_guard lock(mu_);
    if (entry.attempt > 0) ++retries_;
    log_.push_back(entry);
  }
  if (sink_) sink_(entry);
}

std::vector<RequestLogEntry> ModelClient::request_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

int ModelClient::retry_count() const {
  std::lock_guard lock(mu_);
  return retries_;
}

ModelClient::Response ModelClient::post_with_retries(const EndpointConfig& endpoint,
                                                     const std::string& path,
                                                     const std::string& body) {
  const Target target = split_base_url(endpoint.base_url);
  const std::string full_path = target.prefix + path;
  const std::string request_id =
      "req-" + hex64(fnv1a64(endpoint.model_name + "\n" + full_path + "\n" + body));
  auto cli = make_client(endpoint, target);
  const httplib::Headers headers = auth_headers(endpoint);

  auto backoff = endpoint.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    auto res = cli->Post(full_path, headers, body, "application/json");
    RequestLogEntry entry{request_id, endpoint.model_name, full_path, attempt, 0, {}};
    const bool last = attempt >= endpoint.max_retries;
    if (!res) {
      entry.response_excerpt = httplib::to_string(res.error());
      record(entry);
      if (last) {
        throw TransportError("request " + request_id + " to " + endpoint.base_url +
                             full_path + " failed after " + std::to_string(attempt + 1) +
                             " attempts: " + entry.response_excerpt);
      }
    } else {
      entry.status = res->status;
      entry.response_excerpt = excerpt(res->body);
      record(entry);
      if (res->status >= 200 && res->status < 300) {
        return {res->status, res->body};
      }
      if (!retryable(res->status) || last) {
        throw EndpointError(res->status, excerpt(res->body));
      }
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

std::string ModelClient::chat_complete(const EndpointConfig& endpoint,
                                       const std::optional<std::string>& system,
                                       const std::string& user,
                                       std::optional<int> max_tokens) {
  if (user.empty()) {
    throw ParameterError("user", "chat request needs a non-empty user message");
  }
  json messages = json::array();
  if (system) messages.push_back({{"role", "system"}, {"content", *system}});
  messages.push_back({{"role", "user"}, {"content", user}});
  json request = {
      {"model", endpoint.model_name},
      {"messages", messages},
      {"temperature", endpoint.temperature},
      {"max_tokens", max_tokens.value_or(endpoint.max_tokens)},
  };

  const Response res = post_with_retries(endpoint, endpoint.chat_path, request.dump());
  const json body = parse_body(res.status, res.body);
  try {
    const auto& content = body.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception&) {
    throw EndpointError(res.status, "chat response lacks choices[0].message.content: " +
                                        excerpt(res.body));
  }
}

ScoredCompletion ModelClient::score_completion(const EndpointConfig& endpoint,
                                               const std::string& prompt,
                                               const std::string& completion) {
  if (completion.empty()) {
    throw ParameterError("completion", "cannot score an empty completion");
  }
  json request = {
      {"model", endpoint.model_name},
      {"prompt", prompt + completion},
      {"max_tokens", 0},
      {"echo", true},
      {"logprobs", 1},
      {"temperature", 0.0},
  };

  Response res;
  try {
    res = post_with_retries(endpoint, endpoint.scoring_path, request.dump());
  } catch (const EndpointError& e) {
    const std::string& b = e.body_excerpt();
    const bool unsupported = e.status() == 501 ||
                             ((e.status() == 400 || e.status() == 422) &&
                              (b.find("logprob") != std::string::npos ||
                               b.find("echo") != std::string::npos));
    if (unsupported) {
      throw CapabilityError(endpoint.model_name + " cannot echo log-probs: " + b);
    }
    throw;
  }

  const json body = parse_body(res.status, res.body);
  const json* logprobs = nullptr;
  try {
    logprobs = &body.at("choices").at(0).at("logprobs");
  } catch (const json::exception&) {
  }
  if (logprobs == nullptr || !logprobs->is_object() ||
      !logprobs->contains("token_logprobs") || !logprobs->contains("text_offset")) {
    throw CapabilityError(endpoint.model_name +
                          " returned no per-token log-probs on " + endpoint.scoring_path);
  }
  const json& lps = logprobs->at("token_logprobs");
  const json& offsets = logprobs->at("text_offset");
  if (!lps.is_array() || !offsets.is_array() || lps.size() != offsets.size()) {
    throw CapabilityError(endpoint.model_name + " returned malformed log-prob arrays");
  }

  // The first completion token must start exactly where the completion's
  // first non-whitespace character sits in the echoed text.
  std::size_t lead = 0;
  while (lead < completion.size() &&
         (completion[lead] == ' ' || completion[lead] == '\t' ||
          completion[lead] == '\n' || completion[lead] == '\r')) {
    ++lead;
  }
  const std::size_t boundary = utf8_length(prompt) + lead;
  std::size_t first = lps.size();
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const auto off = offsets[i].get<std::int64_t>();
    if (off == static_cast<std::int64_t>(boundary)) {
      first = i;
      break;
    }
    if (off > static_cast<std::int64_t>(boundary)) break;
  }
  if (first == lps.size()) {
    throw AlignmentError("no token of " + endpoint.model_name +
                         " starts at the completion boundary (offset " +
                         std::to_string(boundary) + ")");
  }

  ScoredCompletion scored;
  scored.text = completion;
  scored.model_name = endpoint.model_name;
  for (std::size_t i = first; i < lps.size(); ++i) {
    if (!lps[i].is_number()) {
      throw CapabilityError(endpoint.model_name + " returned a null log-prob for a completion token");
    }
    scored.token_logprobs.push_back(lps[i].get<double>());
  }
  for (double lp : scored.token_logprobs) scored.total_logprob += lp;
  scored.token_count = static_cast<int>(scored.token_logprobs.size());
  return scored;
}

void ModelClient::check_health(const EndpointConfig& endpoint) {
  const Target target = split_base_url(endpoint.base_url);
  auto cli = make_client(endpoint, target);
  auto res = cli->Get(target.prefix + "/v1/models", auth_headers(endpoint));
  if (!res) {
    throw TransportError("endpoint " + endpoint.base_url + " unreachable: " +
                         httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw EndpointError(res->status, excerpt(res->body));
  }
}

}  // namespace advkd::client
