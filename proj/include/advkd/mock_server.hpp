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

// Deterministic stand-in for an OpenAI-compatible inference server.
//
// Scoring rule: the echoed text is split on whitespace; every token gets the
// same log-prob, chosen by the first topic key (in sorted order) that occurs
// in the text, else the profile default. The first echoed token carries a
// null log-prob, as real servers report. A completion of n whitespace tokens
// therefore scores exactly per_token * n.
//
// Generation: scripted responses are served first (FIFO per entry, last one
// repeating); otherwise a response is synthesized as a pure function of the
// model name and the request message.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace advkd::mock {

struct ScriptEntry {
  /// subtopics, initial_code_completion, initial_natural_language,
  /// adv_incremental, adv_opposite, adv_deceptive, or solve.
  std::string kind;
  /// Empty matches any request; otherwise must occur in the user message.
  std::string topic;
  std::vector<std::string> responses;
};

struct SkillProfile {
  std::string model_name;
  double default_logprob = -0.5;
  std::map<std::string, double> topic_logprobs;
  std::vector<ScriptEntry> script;
  /// Statuses returned, in order, before the model answers normally.
  std::vector<int> faults;
  bool supports_logprobs = true;
  /// Added to every reported text offset; non-zero values break alignment.
  std::int64_t offset_skew = 0;
  /// Synthesized solutions have between min and max whitespace tokens.
  int solution_min_tokens = 3;
  int solution_max_tokens = 12;
};

struct RequestRecord {
  std::string path;
  std::string model_name;
  std::string kind;
  int status = 0;
  std::string body_hash;
};

std::vector<SkillProfile> load_profiles(const std::filesystem::path& path);
std::vector<SkillProfile> parse_profiles(const std::string& json_text);

/// Classifies a chat user message by the template it was rendered from.
std::string request_kind(const std::string& user_message);

/// Whitespace tokens with their character offsets.
struct MockToken {
  std::string text;
  std::size_t offset = 0;
};
std::vector<MockToken> whitespace_tokens(const std::string& text);

class MockServer {
 public:
  explicit MockServer(std::vector<SkillProfile> profiles);
  ~MockServer();

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds 127.0.0.1 (port 0 picks a free port) and serves on a background
  /// thread. Returns the bound port.
  int start(int port = 0, const std::string& host = "127.0.0.1");
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen_blocking(int port, const std::string& host = "0.0.0.0");
  void stop();
  /// Rewinds scripts and fault schedules and clears the request log.
  void reset();

  int port() const { return port_; }
  std::string base_url() const;
  std::vector<RequestRecord> requests() const;
  /// Requests seen for one model on one path.
  std::size_t request_count(const std::string& model, const std::string& path) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace advkd::mock
