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

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advkd/dpo_math.hpp"
#include "advkd/model_client.hpp"
#include "advkd/prompts.hpp"

namespace advkd {

struct LoraConfig {
  int r = 16;
  int alpha = 32;
  double dropout = 0.05;
  std::string bias = "none";
  std::vector<std::string> target_modules = {"q_proj", "k_proj",    "v_proj", "o_proj",
                                             "gate_proj", "up_proj", "down_proj"};
  friend bool operator==(const LoraConfig&, const LoraConfig&) = default;
};

/// Hyperparameters handed to the external trainer through the manifest.
struct TrainingConfig {
  int steps = 150;
  int per_device_train_batch_size = 4;
  double learning_rate = 5e-6;
  double beta = 0.01;
  int gradient_accumulation_steps = 4;
  std::string lr_scheduler_type = "cosine";
  std::string optimizer = "paged-adamw";
  std::string precision = "bf16";
  bool gradient_checkpointing = true;
  LoraConfig lora;
  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct AdversarialPlan {
  double seed_fraction = 0.25;
  /// Weights for incremental, opposite, deceptive.
  std::array<double, 3> strategy_mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  int children_per_seed = 3;
  friend bool operator==(const AdversarialPlan&, const AdversarialPlan&) = default;
};

void validate(const AdversarialPlan& plan);

struct PipelineConfig {
  std::string run_id = "akd-run";
  std::uint64_t rng_seed = 0;
  int repetitions = 5;
  prompts::GenerationSpec generation = prompts::default_generation_spec();
  client::EndpointConfig teacher = client::EndpointConfig::defaults_for(client::Role::Teacher);
  client::EndpointConfig student_policy =
      client::EndpointConfig::defaults_for(client::Role::StudentPolicy);
  client::EndpointConfig student_reference =
      client::EndpointConfig::defaults_for(client::Role::StudentReference);
  dpo::DpoConfig dpo;
  AdversarialPlan adversarial;
  TrainingConfig training;
  /// Regeneration attempts after a generation fails to parse.
  int parse_retries = 3;
  /// Skip the marker-file handshake and score immediately.
  bool no_train = true;
  std::chrono::seconds train_timeout{24 * 3600};
  std::optional<std::string> solve_system_prompt =
      "Solve the following Python exercise. Reply with the solution code only.";
  bool preflight = true;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Reads a config file. `//` and `/* */` comments are allowed.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text);
std::string config_to_json(const PipelineConfig& config);
/// Commented default config written by `init`.
std::string default_config_text();

}  // namespace advkd
