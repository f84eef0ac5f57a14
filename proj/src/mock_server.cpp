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

#include "advkd/mock_server.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include "advkd/errors.hpp"
#include "advkd/hash.hpp"
#include "advkd/prompts.hpp"

namespace advkd::mock {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kPlaceholders[] = {"{n}", "{topic}", "{profession}",
                                              "{reference}"};

struct TemplatePattern {
  std::string kind;
  std::vector<std::string> literals;    // text between placeholders
  std::vector<std::string> names;       // placeholder names, in order
};

std::vector<TemplatePattern> build_patterns() {
  std::vector<TemplatePattern> out;
  for (prompts::TemplateId id : prompts::kAllTemplates) {
    TemplatePattern p;
    std::string kind(prompts::template_name(id));
    std::transform(kind.begin(), kind.end(), kind.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    p.kind = kind;
    const std::string_view body = prompts::template_text(id);
    std::string current;
    std::size_t i = 0;
    while (i < body.size()) {
      bool matched = false;
      for (std::string_view ph : kPlaceholders) {
        if (body.substr(i, ph.size()) == ph) {
          p.literals.push_back(current);
          current.clear();
          p.names.emplace_back(ph.substr(1, ph.size() - 2));
          i += ph.size();
          matched = true;
          break;
        }
      }
      if (!matched) current += body[i++];
    }
    p.literals.push_back(current);
    out.push_back(std::move(p));
  }
  return out;
}

const std::vector<TemplatePattern>& patterns() {
  static const std::vector<TemplatePattern> cached = build_patterns();
  return cached;
}

// Recovers placeholder values from a rendered template, or nullopt when the
// message was not rendered from this pattern.
std::optional<std::map<std::string, std::string>> match(const TemplatePattern& p,
                                                        const std::string& msg) {
  if (!msg.starts_with(p.literals.front())) return std::nullopt;
  std::map<std::string, std::string> values;
  std::size_t pos = p.literals.front().size();
  for (std::size_t k = 0; k < p.names.size(); ++k) {
    const std::string& next = p.literals[k + 1];
    std::size_t end;
    if (k + 1 == p.names.size()) {
      if (!msg.ends_with(next) || msg.size() < pos + next.size()) return std::nullopt;
      end = msg.size() - next.size();
    } else {
      end = msg.find(next, pos);
      if (end == std::string::npos) return std::nullopt;
    }
    const std::string value = msg.substr(pos, end - pos);
    auto [it, inserted] = values.emplace(p.names[k], value);
    if (!inserted && it->second != value) return std::nullopt;
    pos = end + next.size();
  }
  return values;
}

std::string slug(const std::string& s, std::size_t limit = 24) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      out += static_cast<char>(std::tolower(c));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  if (out.size() > limit) out.resize(limit);
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "x" : out;
}

std::string py_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'' || c == '\\') out += '\\';
    out += c;
  }
  return out + "'";
}

int param_n(const std::map<std::string, std::string>& v) {
  try {
    return std::max(1, std::stoi(v.at("n")));
  } catch (...) {
    return 1;
  }
}

std::string synth_subtopics(const std::map<std::string, std::string>& v) {
  const std::string& topic = v.at("topic");
  std::string list = "[";
  for (int i = 1; i <= param_n(v); ++i) {
    if (i > 1) list += ", ";
    list += py_quote(topic + " Subtopic " + std::to_string(i));
  }
  list += "]";
  return "Here are the subtopics:\n```python\n" + list + "\n```\n";
}

std::string synth_code_completion(const std::map<std::string, std::string>& v) {
  const std::string& topic = v.at("topic");
  const std::string& profession = v.at("profession");
  std::ostringstream out;
  out << "```python\n";
  for (int i = 1; i <= param_n(v); ++i) {
    out << "def " << slug(topic) << "_" << slug(profession) << "_task_" << i
        << "(records):\n"
        << "    \"\"\"\n"
        << "    As a " << profession << ", process the records for task " << i
        << " on " << topic << ".\n"
        << "    \"\"\"\n"
        << "    # Solution code starts here (in Python)\n"
        << "    total = 0\n"
        << "    for item in records:\n"
        << "        total += len(str(item))\n"
        << "    return total\n\n";
  }
  out << "```\n";
  return out.str();
}

std::string synth_problems(const std::map<std::string, std::string>& v) {
  const std::string& topic = v.at("topic");
  const std::string& profession = v.at("profession");
  std::ostringstream out;
  for (int i = 1; i <= param_n(v); ++i) {
    out << "[PROBLEM]\n"
        << "Problem: As a " << profession << ", solve scenario " << i << " about "
        << topic << ".\n\n"
        << "Input: a list of integers\n\n"
        << "Output: an integer\n\n"
        << "Examples:\n[1, 2] -> 3\n\n"
        << "Constraints:\nAt most 100 values\n"
        << "[PROBLEM]\n\n";
  }
  return out.str();
}

std::string synth_adversarial(const std::string& kind,
                              const std::map<std::string, std::string>& v) {
  const std::string strategy = kind.substr(kind.find('_') + 1);
  const std::string tag = hex64(fnv1a64(v.at("reference"))).substr(0, 10);
  std::ostringstream out;
  out << "```python\n";
  for (int i = 1; i <= param_n(v); ++i) {
    out << "def " << strategy << "_" << tag << "_" << i << "(values):\n"
        << "    \"\"\"Variant " << i << " (" << strategy << ") of exercise " << tag
        << ": handle empty input, duplicates and negative numbers.\"\"\"\n"
        << "    if not values:\n"
        << "        return 0\n"
        << "    return sum(sorted(set(values)))\n\n";
  }
  out << "```\n";
  return out.str();
}

std::string synth_solution(const SkillProfile& profile, const std::string& message,
                           int max_tokens) {
  const std::uint64_t h = fnv1a64(profile.model_name + "\n" + message);
  const int lo = std::max(1, profile.solution_min_tokens);
  const int hi = std::max(lo, profile.solution_max_tokens);
  int count = lo + static_cast<int>(h % static_cast<std::uint64_t>(hi - lo + 1));
  if (max_tokens > 0) count = std::min(count, max_tokens);
  const std::string stem = slug(profile.model_name, 12) + "_" + hex64(h).substr(0, 4);
  std::string out = "return";
  for (int j = 1; j < count; ++j) out += " " + stem + "_" + std::to_string(j);
  return out;
}

std::string truncate_tokens(const std::string& text, int max_tokens) {
  if (max_tokens <= 0) return text;
  int seen = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(text[i])) != 0;
    if (space && in_token && seen == max_tokens) return text.substr(0, i);
    if (!space && !in_token) ++seen;
    in_token = !space;
  }
  return text;
}

json error_body(const std::string& message, const std::string& type, int code) {
  return {{"error", {{"message", message}, {"type", type}, {"code", code}}}};
}

}  // namespace

std::vector<MockToken> whitespace_tokens(const std::string& text) {
  std::vector<MockToken> tokens;
  std::size_t chars = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    const bool continuation = (c & 0xC0) == 0x80;
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' ||
                       c == '\f' || c == '\v';
    if (space) {
      in_token = false;
    } else if (!in_token) {
      tokens.push_back({std::string(1, static_cast<char>(c)), chars});
      in_token = true;
    } else {
      tokens.back().text += static_cast<char>(c);
    }
    if (!continuation) ++chars;
  }
  return tokens;
}

std::string request_kind(const std::string& user_message) {
  for (const auto& p : patterns()) {
    if (match(p, user_message)) return p.kind;
  }
  return "solve";
}

std::vector<SkillProfile> parse_profiles(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("mock profiles are not valid JSON: ") + e.what());
  }
  std::vector<SkillProfile> profiles;
  try {
    for (const auto& p : doc.at("profiles")) {
      SkillProfile s;
      s.model_name = p.at("model_name").get<std::string>();
      s.default_logprob = p.value("default_logprob", s.default_logprob);
      if (p.contains("topic_logprobs")) {
        for (const auto& [k, val] : p.at("topic_logprobs").items()) {
          s.topic_logprobs[k] = val.get<double>();
        }
      }
      s.supports_logprobs = p.value("supports_logprobs", true);
      s.offset_skew = p.value("offset_skew", std::int64_t{0});
      if (p.contains("solution_tokens")) {
        s.solution_min_tokens = p.at("solution_tokens").at("min").get<int>();
        s.solution_max_tokens = p.at("solution_tokens").at("max").get<int>();
      }
      if (p.contains("faults")) s.faults = p.at("faults").get<std::vector<int>>();
      if (p.contains("script")) {
        for (const auto& e : p.at("script")) {
          ScriptEntry entry;
          entry.kind = e.at("kind").get<std::string>();
          entry.topic = e.value("topic", "");
          entry.responses = e.at("responses").get<std::vector<std::string>>();
          if (entry.responses.empty()) {
            throw SchemaError("script entry for " + s.model_name + " has no responses");
          }
          s.script.push_back(std::move(entry));
        }
      }
      auto bad_lp = [](double v) { return !(v <= 0.0); };
      if (bad_lp(s.default_logprob) ||
          std::any_of(s.topic_logprobs.begin(), s.topic_logprobs.end(),
                      [&](const auto& kv) { return bad_lp(kv.second); })) {
        throw SchemaError("per-token log-probs for " + s.model_name + " must be <= 0");
      }
      profiles.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("mock profiles do not match the schema: ") + e.what());
  }
  return profiles;
}

std::vector<SkillProfile> load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read mock profiles " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_profiles(buf.str());
}

struct MockServer::Impl {
  struct ModelState {
    SkillProfile profile;
    std::deque<int> faults;
    std::vector<std::size_t> cursors;  // one per script entry
  };

  std::map<std::string, ModelState> models;
  mutable std::mutex mu;
  std::vector<RequestRecord> log;
  httplib::Server server;

  // Pops the next scripted fault for a model, 0 when none is pending.
  int next_fault(ModelState& m) {
    if (m.faults.empty()) return 0;
    const int status = m.faults.front();
    m.faults.pop_front();
    return status == 200 ? 0 : status;
  }

  void remember(const std::string& path, const std::string& model,
                const std::string& kind, int status, const std::string& body) {
    log.push_back({path, model, kind, status, hex64(fnv1a64(body))});
  }

  void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      std::lock_guard lock(mu);
      remember(req.path, "", "", 400, req.body);
      return reply(res, 400, error_body("body is not JSON", "invalid_request_error", 400));
    }
    const std::string model = body.value("model", "");
    std::string user;
    if (body.contains("messages")) {
      for (const auto& m : body.at("messages")) {
        if (m.value("role", "") == "user") user = m.value("content", "");
      }
    }
    const int max_tokens = body.value("max_tokens", 0);

    std::lock_guard lock(mu);
    auto it = models.find(model);
    if (it == models.end()) {
      remember(req.path, model, "", 404, req.body);
      return reply(res, 404, error_body("model '" + model + "' not found",
                                        "invalid_request_error", 404));
    }
    ModelState& state = it->second;
    const std::string kind = request_kind(user);
    if (const int fault = next_fault(state)) {
      remember(req.path, model, kind, fault, req.body);
      return reply(res, fault, error_body("scripted fault", "mock_fault", fault));
    }

    std::optional<std::string> content;
    for (std::size_t e = 0; e < state.profile.script.size(); ++e) {
      const ScriptEntry& entry = state.profile.script[e];
      if (entry.kind != kind) continue;
      if (!entry.topic.empty() && user.find(entry.topic) == std::string::npos) continue;
      std::size_t& cursor = state.cursors[e];
      content = entry.responses[std::min(cursor, entry.responses.size() - 1)];
      ++cursor;
      break;
    }
    if (!content) {
      if (kind == "solve") {
        content = synth_solution(state.profile, user, max_tokens);
      } else {
        const auto& p = *std::find_if(patterns().begin(), patterns().end(),
                                      [&](const auto& pat) { return pat.kind == kind; });
        const auto values = *match(p, user);
        if (kind == "subtopics") {
          content = synth_subtopics(values);
        } else if (kind == "initial_code_completion") {
          content = synth_code_completion(values);
        } else if (kind == "initial_natural_language") {
          content = synth_problems(values);
        } else {
          content = synth_adversarial(kind, values);
        }
      }
    } else if (kind == "solve") {
      content = truncate_tokens(*content, max_tokens);
    }

    const std::size_t prompt_tokens = whitespace_tokens(user).size();
    const std::size_t completion_tokens = whitespace_tokens(*content).size();
    json out = {
        {"id", "chatcmpl-" + hex64(fnv1a64(req.body))},
        {"object", "chat.completion"},
        {"created", 0},
        {"model", model},
        {"choices",
         json::array({{{"index", 0},
                       {"message", {{"role", "assistant"}, {"content", *content}}},
                       {"finish_reason", "stop"}}})},
        {"usage",
         {{"prompt_tokens", prompt_tokens},
          {"completion_tokens", completion_tokens},
          {"total_tokens", prompt_tokens + completion_tokens}}},
    };
    remember(req.path, model, kind, 200, req.body);
    reply(res, 200, out);
  }

  void handle_completions(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      std::lock_guard lock(mu);
      remember(req.path, "", "", 400, req.body);
      return reply(res, 400, error_body("body is not JSON", "invalid_request_error", 400));
    }
    const std::string model = body.value("model", "");
    std::string prompt;
    if (body.contains("prompt")) {
      const auto& p = body.at("prompt");
      prompt = p.is_array() && !p.empty() ? p.at(0).get<std::string>()
                                          : p.get<std::string>();
    }

    std::lock_guard lock(mu);
    auto it = models.find(model);
    if (it == models.end()) {
      remember(req.path, model, "score", 404, req.body);
      return reply(res, 404, error_body("model '" + model + "' not found",
                                        "invalid_request_error", 404));
    }
    ModelState& state = it->second;
    if (const int fault = next_fault(state)) {
      remember(req.path, model, "score", fault, req.body);
      return reply(res, fault, error_body("scripted fault", "mock_fault", fault));
    }
    if (!body.value("echo", false)) {
      remember(req.path, model, "score", 400, req.body);
      return reply(res, 400, error_body("mock supports echo scoring only",
                                        "invalid_request_error", 400));
    }

    json logprobs = nullptr;
    if (state.profile.supports_logprobs) {
      double per_token = state.profile.default_logprob;
      for (const auto& [topic, lp] : state.profile.topic_logprobs) {
        if (prompt.find(topic) != std::string::npos) {
          per_token = lp;
          break;
        }
      }
      json tokens = json::array(), lps = json::array(), offsets = json::array();
      const auto toks = whitespace_tokens(prompt);
      for (std::size_t i = 0; i < toks.size(); ++i) {
        tokens.push_back(toks[i].text);
        lps.push_back(i == 0 ? json(nullptr) : json(per_token));
        offsets.push_back(static_cast<std::int64_t>(toks[i].offset) +
                          state.profile.offset_skew);
      }
      logprobs = {{"tokens", tokens},
                  {"token_logprobs", lps},
                  {"top_logprobs", nullptr},
                  {"text_offset", offsets}};
    }
    json out = {
        {"id", "cmpl-" + hex64(fnv1a64(req.body))},
        {"object", "text_completion"},
        {"created", 0},
        {"model", model},
        {"choices", json::array({{{"index", 0},
                                  {"text", prompt},
                                  {"logprobs", logprobs},
                                  {"finish_reason", "length"}}})},
    };
    remember(req.path, model, "score", 200, req.body);
    reply(res, 200, out);
  }
};

MockServer::MockServer(std::vector<SkillProfile> profiles) : impl_(std::make_unique<Impl>()) {
  for (auto& p : profiles) {
    Impl::ModelState state;
    state.faults.assign(p.faults.begin(), p.faults.end());
    state.cursors.assign(p.script.size(), 0);
    const std::string name = p.model_name;
    state.profile = std::move(p);
    if (!impl_->models.emplace(name, std::move(state)).second) {
      throw SchemaError("duplicate mock profile for model '" + name + "'");
    }
  }

  auto& svr = impl_->server;
  Impl* impl = impl_.get();
  svr.Post("/v1/chat/completions", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->handle_chat(req, res);
  });
  svr.Post("/v1/completions", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->handle_completions(req, res);
  });
  svr.Get("/v1/models", [impl](const httplib::Request&, httplib::Response& res) {
    json data = json::array();
    std::lock_guard lock(impl->mu);
    for (const auto& [name, _] : impl->models) {
      data.push_back({{"id", name}, {"object", "model"}, {"owned_by", "mock"}});
    }
    impl->reply(res, 200, json{{"object", "list"}, {"data", data}});
  });
  svr.Get("/mock/requests", [impl](const httplib::Request&, httplib::Response& res) {
    json data = json::array();
    std::lock_guard lock(impl->mu);
    for (const auto& r : impl->log) {
      data.push_back({{"path", r.path}, {"model", r.model_name}, {"kind", r.kind},
                      {"status", r.status}, {"body_hash", r.body_hash}});
    }
    impl->reply(res, 200, data);
  });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(int port, const std::string& host) {
  auto& svr = impl_->server;
  if (port == 0) {
    port_ = svr.bind_to_any_port(host);
    if (port_ < 0) throw IoError("mock server could not bind " + host);
  } else {
    if (!svr.bind_to_port(host, port)) {
      throw IoError("mock server could not bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return port_;
}

void MockServer::listen_blocking(int port, const std::string& host) {
  port_ = port;
  if (!impl_->server.listen(host, port)) {
    throw IoError("mock server could not listen on " + host + ":" + std::to_string(port));
  }
}

void MockServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

void MockServer::reset() {
  std::lock_guard lock(impl_->mu);
  for (auto& [_, state] : impl_->models) {
    state.faults.assign(state.profile.faults.begin(), state.profile.faults.end());
    state.cursors.assign(state.profile.script.size(), 0);
  }
  impl_->log.clear();
}

std::string MockServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

std::vector<RequestRecord> MockServer::requests() const {
  std::lock_guard lock(impl_->mu);
  return impl_->log;
}

std::size_t MockServer::request_count(const std::string& model,
                                      const std::string& path) const {
  std::lock_guard lock(impl_->mu);
  return static_cast<std::size_t>(std::count_if(
      impl_->log.begin(), impl_->log.end(),
      [&](const RequestRecord& r) { return r.model_name == model && r.path == path; }));
}

}  // namespace advkd::mock
