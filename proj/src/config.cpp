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

#include "advkd/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "advkd/errors.hpp"

namespace advkd {

using json = nlohmann::ordered_json;

void validate(const AdversarialPlan& plan) {
  if (!(plan.seed_fraction > 0.0 && plan.seed_fraction <= 1.0)) {
    throw ParameterError("seed_fraction", "seed_fraction must lie in (0, 1]");
  }
  double total = 0.0;
  for (double w : plan.strategy_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ParameterError("strategy_mix", "strategy weights must be non-negative");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ParameterError("strategy_mix", "strategy weights must sum to 1");
  }
  if (plan.children_per_seed < 1) {
    throw ParameterError("children_per_seed", "children_per_seed must be at least 1");
  }
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                    const std::string& where) {
  if (!obj.is_object()) throw ParameterError(where, where + " must be an object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ParameterError(where + "." + key, "unknown config key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(where + "." + key, "config key '" + where + "." + key +
                                                "' has the wrong type");
  }
}

json endpoint_to_json(const client::EndpointConfig& e) {
  return {
      {"base_url", e.base_url},
      {"model_name", e.model_name},
      {"temperature", e.temperature},
      {"max_tokens", e.max_tokens},
      {"timeout_ms", e.timeout.count()},
      {"max_retries", e.max_retries},
      {"api_key_env", e.api_key_env},
      {"initial_backoff_ms", e.initial_backoff.count()},
      {"max_concurrency", e.max_concurrency},
      {"chat_path", e.chat_path},
      {"scoring_path", e.scoring_path},
  };
}

void endpoint_from_json(const json& j, client::EndpointConfig& e, const std::string& where) {
  reject_unknown(j,
                 {"base_url", "model_name", "temperature", "max_tokens", "timeout_ms",
                  "max_retries", "api_key_env", "initial_backoff_ms", "max_concurrency",
                  "chat_path", "scoring_path"},
                 where);
  read(j, "base_url", e.base_url, where);
  read(j, "model_name", e.model_name, where);
  read(j, "temperature", e.temperature, where);
  read(j, "max_tokens", e.max_tokens, where);
  std::int64_t ms = e.timeout.count();
  read(j, "timeout_ms", ms, where);
  e.timeout = std::chrono::milliseconds(ms);
  read(j, "max_retries", e.max_retries, where);
  read(j, "api_key_env", e.api_key_env, where);
  ms = e.initial_backoff.count();
  read(j, "initial_backoff_ms", ms, where);
  e.initial_backoff = std::chrono::milliseconds(ms);
  read(j, "max_concurrency", e.max_concurrency, where);
  read(j, "chat_path", e.chat_path, where);
  read(j, "scoring_path", e.scoring_path, where);
  if (e.temperature < 0.0) throw ParameterError(where + ".temperature", "temperature must be >= 0");
  if (e.max_tokens < 1) throw ParameterError(where + ".max_tokens", "max_tokens must be positive");
  if (e.max_retries < 0) throw ParameterError(where + ".max_retries", "max_retries must be >= 0");
  if (e.max_concurrency < 1) {
    throw ParameterError(where + ".max_concurrency", "max_concurrency must be positive");
  }
  if (e.model_name.empty()) throw ParameterError(where + ".model_name", "model_name is required");
}

json to_json(const PipelineConfig& c) {
  const auto& g = c.generation;
  const auto& t = c.training;
  return {
      {"run_id", c.run_id},
      {"rng_seed", c.rng_seed},
      {"repetitions", c.repetitions},
      {"generation",
       {{"topics", g.topics},
        {"professions", g.professions},
        {"subtopics_per_topic", g.subtopics_per_topic},
        {"exercises_per_subtopic", g.exercises_per_subtopic},
        {"natural_language_fraction", g.natural_language_fraction}}},
      {"endpoints",
       {{"teacher", endpoint_to_json(c.teacher)},
        {"student_policy", endpoint_to_json(c.student_policy)},
        {"student_reference", endpoint_to_json(c.student_reference)}}},
      {"dpo",
       {{"beta", c.dpo.beta},
        {"logprob_aggregation",
         c.dpo.aggregation == dpo::LogprobAggregation::Sum ? "sum" : "mean"}}},
      {"adversarial",
       {{"seed_fraction", c.adversarial.seed_fraction},
        {"strategy_mix",
         {{"incremental", c.adversarial.strategy_mix[0]},
          {"opposite", c.adversarial.strategy_mix[1]},
          {"deceptive", c.adversarial.strategy_mix[2]}}},
        {"children_per_seed", c.adversarial.children_per_seed}}},
      {"training",
       {{"steps", t.steps},
        {"per_device_train_batch_size", t.per_device_train_batch_size},
        {"learning_rate", t.learning_rate},
        {"gradient_accumulation_steps", t.gradient_accumulation_steps},
        {"lr_scheduler_type", t.lr_scheduler_type},
        {"optimizer", t.optimizer},
        {"precision", t.precision},
        {"gradient_checkpointing", t.gradient_checkpointing},
        {"lora",
         {{"r", t.lora.r},
          {"alpha", t.lora.alpha},
          {"dropout", t.lora.dropout},
          {"bias", t.lora.bias},
          {"target_modules", t.lora.target_modules}}}}},
      {"parse_retries", c.parse_retries},
      {"no_train", c.no_train},
      {"train_timeout_seconds", c.train_timeout.count()},
      {"solve_system_prompt",
       c.solve_system_prompt ? json(*c.solve_system_prompt) : json(nullptr)},
      {"preflight", c.preflight},
  };
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParameterError("config", std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  reject_unknown(doc,
                 {"run_id", "rng_seed", "repetitions", "generation", "endpoints", "dpo",
                  "adversarial", "training", "parse_retries", "no_train",
                  "train_timeout_seconds", "solve_system_prompt", "preflight"},
                 "config");
  read(doc, "run_id", c.run_id, "config");
  read(doc, "rng_seed", c.rng_seed, "config");
  read(doc, "repetitions", c.repetitions, "config");
  read(doc, "parse_retries", c.parse_retries, "config");
  read(doc, "no_train", c.no_train, "config");
  read(doc, "preflight", c.preflight, "config");
  std::int64_t timeout = c.train_timeout.count();
  read(doc, "train_timeout_seconds", timeout, "config");
  c.train_timeout = std::chrono::seconds(timeout);
  if (doc.contains("solve_system_prompt")) {
    const auto& v = doc.at("solve_system_prompt");
    if (v.is_null()) {
      c.solve_system_prompt.reset();
    } else {
      std::string s;
      read(doc, "solve_system_prompt", s, "config");
      c.solve_system_prompt = s;
    }
  }

  if (doc.contains("generation")) {
    const json& g = doc.at("generation");
    reject_unknown(g,
                   {"topics", "professions", "subtopics_per_topic", "exercises_per_subtopic",
                    "natural_language_fraction"},
                   "generation");
    read(g, "topics", c.generation.topics, "generation");
    read(g, "professions", c.generation.professions, "generation");
    read(g, "subtopics_per_topic", c.generation.subtopics_per_topic, "generation");
    read(g, "exercises_per_subtopic", c.generation.exercises_per_subtopic, "generation");
    read(g, "natural_language_fraction", c.generation.natural_language_fraction, "generation");
  }
  if (doc.contains("endpoints")) {
    const json& e = doc.at("endpoints");
    reject_unknown(e, {"teacher", "student_policy", "student_reference"}, "endpoints");
    if (e.contains("teacher")) endpoint_from_json(e.at("teacher"), c.teacher, "endpoints.teacher");
    if (e.contains("student_policy")) {
      endpoint_from_json(e.at("student_policy"), c.student_policy, "endpoints.student_policy");
    }
    if (e.contains("student_reference")) {
      endpoint_from_json(e.at("student_reference"), c.student_reference,
                         "endpoints.student_reference");
    }
  }
  if (doc.contains("dpo")) {
    const json& d = doc.at("dpo");
    reject_unknown(d, {"beta", "logprob_aggregation"}, "dpo");
    read(d, "beta", c.dpo.beta, "dpo");
    std::string agg = "sum";
    read(d, "logprob_aggregation", agg, "dpo");
    if (agg == "sum") {
      c.dpo.aggregation = dpo::LogprobAggregation::Sum;
    } else if (agg == "mean") {
      c.dpo.aggregation = dpo::LogprobAggregation::Mean;
    } else {
      throw ParameterError("dpo.logprob_aggregation", "logprob_aggregation must be sum or mean");
    }
  }
  if (doc.contains("adversarial")) {
    const json& a = doc.at("adversarial");
    reject_unknown(a, {"seed_fraction", "strategy_mix", "children_per_seed"}, "adversarial");
    read(a, "seed_fraction", c.adversarial.seed_fraction, "adversarial");
    read(a, "children_per_seed", c.adversarial.children_per_seed, "adversarial");
    if (a.contains("strategy_mix")) {
      const json& m = a.at("strategy_mix");
      reject_unknown(m, {"incremental", "opposite", "deceptive"}, "adversarial.strategy_mix");
      c.adversarial.strategy_mix = {0.0, 0.0, 0.0};
      read(m, "incremental", c.adversarial.strategy_mix[0], "adversarial.strategy_mix");
      read(m, "opposite", c.adversarial.strategy_mix[1], "adversarial.strategy_mix");
      read(m, "deceptive", c.adversarial.strategy_mix[2], "adversarial.strategy_mix");
    }
  }
  if (doc.contains("training")) {
    const json& t = doc.at("training");
    reject_unknown(t,
                   {"steps", "per_device_train_batch_size", "learning_rate",
                    "gradient_accumulation_steps", "lr_scheduler_type", "optimizer",
                    "precision", "gradient_checkpointing", "lora"},
                   "training");
    auto& tc = c.training;
    read(t, "steps", tc.steps, "training");
    read(t, "per_device_train_batch_size", tc.per_device_train_batch_size, "training");
    read(t, "learning_rate", tc.learning_rate, "training");
    read(t, "gradient_accumulation_steps", tc.gradient_accumulation_steps, "training");
    read(t, "lr_scheduler_type", tc.lr_scheduler_type, "training");
    read(t, "optimizer", tc.optimizer, "training");
    read(t, "precision", tc.precision, "training");
    read(t, "gradient_checkpointing", tc.gradient_checkpointing, "training");
    if (t.contains("lora")) {
      const json& l = t.at("lora");
      reject_unknown(l, {"r", "alpha", "dropout", "bias", "target_modules"}, "training.lora");
      read(l, "r", tc.lora.r, "training.lora");
      read(l, "alpha", tc.lora.alpha, "training.lora");
      read(l, "dropout", tc.lora.dropout, "training.lora");
      read(l, "bias", tc.lora.bias, "training.lora");
      read(l, "target_modules", tc.lora.target_modules, "training.lora");
    }
  }
  // One beta drives both scoring and the trainer.
  c.training.beta = c.dpo.beta;

  dpo::validate(c.dpo);
  validate(c.adversarial);
  if (c.repetitions < 1) throw ParameterError("repetitions", "repetitions must be positive");
  if (c.parse_retries < 0) throw ParameterError("parse_retries", "parse_retries must be >= 0");
  const auto& g = c.generation;
  if (g.subtopics_per_topic < 1 || g.exercises_per_subtopic < 1) {
    throw ParameterError("generation", "subtopic and exercise counts must be positive");
  }
  if (!(g.natural_language_fraction >= 0.0 && g.natural_language_fraction <= 1.0)) {
    throw ParameterError("generation.natural_language_fraction",
                         "natural_language_fraction must lie in [0, 1]");
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("config file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const PipelineConfig& config) {
  return to_json(config).dump(2) + "\n";
}

std::string default_config_text() {
  static const std::map<std::string, std::string> notes = {
      {"\"subtopics_per_topic\"", "standard setting"},
      {"\"exercises_per_subtopic\"", "standard setting"},
      {"\"natural_language_fraction\"", "local default; share of subtopics in problem format"},
      {"\"repetitions\"", "standard setting"},
      {"\"temperature\"", "standard setting (teacher 1.0, students 0.6)"},
      {"\"max_tokens\"", "standard setting (teacher 2048, students 512)"},
      {"\"beta\"", "standard setting; also written to the training manifest"},
      {"\"logprob_aggregation\"", "local default; sum of completion-token log-probs"},
      {"\"seed_fraction\"", "local default"},
      {"\"children_per_seed\"", "local default"},
      {"\"steps\"", "standard setting"},
      {"\"per_device_train_batch_size\"", "standard setting"},
      {"\"learning_rate\"", "standard setting"},
      {"\"gradient_accumulation_steps\"", "standard setting"},
      {"\"lr_scheduler_type\"", "standard setting"},
      {"\"optimizer\"", "standard setting"},
      {"\"precision\"", "standard setting"},
      {"\"r\"", "standard LoRA setting"},
      {"\"alpha\"", "standard LoRA setting"},
      {"\"dropout\"", "standard LoRA setting"},
      {"\"bias\"", "standard LoRA setting"},
      {"\"target_modules\"", "standard LoRA setting"},
      {"\"api_key_env\"", "name of an environment variable holding the API key"},
      {"\"no_train\"", "true: score right after export; false: wait for iter_<t>/TRAINED"},
  };
  std::istringstream lines(config_to_json(PipelineConfig{}));
  std::ostringstream out;
  out << "// advkd run configuration. Comments are allowed; flags override values here.\n";
  std::string line;
  while (std::getline(lines, line)) {
    std::string comment;
    const auto first = line.find_first_not_of(' ');
    if (first != std::string::npos) {
      const auto colon = line.find("\": ", first);
      if (colon != std::string::npos) {
        const auto it = notes.find(line.substr(first, colon + 1 - first));
        if (it != notes.end()) comment = it->second;
      }
    }
    if (!comment.empty()) {
      out << std::string(first, ' ') << "// " << comment << "\n";
    }
    out << line << "\n";
  }
  return out.str();
}

}  // namespace advkd
