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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advkd/errors.hpp"
#include "advkd/template_text.hpp"

namespace advkd::prompts {

enum class TemplateId {
  Subtopics,
  InitialCodeCompletion,
  InitialNaturalLanguage,
  AdvIncremental,
  AdvOpposite,
  AdvDeceptive,
};

inline constexpr std::array<TemplateId, 6> kAllTemplates = {
    TemplateId::Subtopics,      TemplateId::InitialCodeCompletion,
    TemplateId::InitialNaturalLanguage, TemplateId::AdvIncremental,
    TemplateId::AdvOpposite,    TemplateId::AdvDeceptive,
};

/// Lineage tag carried by every exercise. Seed marks the initial dataset.
enum class Strategy { Seed, Incremental, Opposite, Deceptive };

inline constexpr std::array<Strategy, 3> kAdversarialStrategies = {
    Strategy::Incremental, Strategy::Opposite, Strategy::Deceptive};

struct PromptParams {
  std::optional<int> n = std::nullopt;
  std::optional<std::string> topic = std::nullopt;
  std::optional<std::string> profession = std::nullopt;
  std::optional<std::string> reference = std::nullopt;
};

struct GenerationSpec {
  std::vector<std::string> topics;
  std::vector<std::string> professions;
  int subtopics_per_topic = 10;
  int exercises_per_subtopic = 10;
  double natural_language_fraction = 0.1;
  friend bool operator==(const GenerationSpec&, const GenerationSpec&) = default;
};

inline std::string_view template_text(TemplateId id) {
  switch (id) {
    case TemplateId::Subtopics: return text::kSubtopics;
    case TemplateId::InitialCodeCompletion: return text::kInitialCodeCompletion;
    case TemplateId::InitialNaturalLanguage: return text::kInitialNaturalLanguage;
    case TemplateId::AdvIncremental: return text::kAdvIncremental;
    case TemplateId::AdvOpposite: return text::kAdvOpposite;
    case TemplateId::AdvDeceptive: return text::kAdvDeceptive;
  }
  throw DomainError("unknown template id");
}

inline std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::Subtopics: return "SUBTOPICS";
    case TemplateId::InitialCodeCompletion: return "INITIAL_CODE_COMPLETION";
    case TemplateId::InitialNaturalLanguage: return "INITIAL_NATURAL_LANGUAGE";
    case TemplateId::AdvIncremental: return "ADV_INCREMENTAL";
    case TemplateId::AdvOpposite: return "ADV_OPPOSITE";
    case TemplateId::AdvDeceptive: return "ADV_DECEPTIVE";
  }
  throw DomainError("unknown template id");
}

inline TemplateId template_from_name(std::string_view name) {
  for (TemplateId id : kAllTemplates) {
    if (template_name(id) == name) return id;
  }
  throw DomainError("unknown template '" + std::string(name) + "'");
}

inline std::optional<Strategy> strategy_for(TemplateId id) {
  switch (id) {
    case TemplateId::AdvIncremental: return Strategy::Incremental;
    case TemplateId::AdvOpposite: return Strategy::Opposite;
    case TemplateId::AdvDeceptive: return Strategy::Deceptive;
    default: return std::nullopt;
  }
}

inline TemplateId template_for(Strategy strategy) {
  switch (strategy) {
    case Strategy::Incremental: return TemplateId::AdvIncremental;
    case Strategy::Opposite: return TemplateId::AdvOpposite;
    case Strategy::Deceptive: return TemplateId::AdvDeceptive;
    case Strategy::Seed: break;
  }
  throw DomainError("seed exercises have no adversarial template");
}

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Seed: return "seed";
    case Strategy::Incremental: return "incremental";
    case Strategy::Opposite: return "opposite";
    case Strategy::Deceptive: return "deceptive";
  }
  return "seed";
}

inline Strategy strategy_from_name(std::string_view name) {
  for (Strategy s : {Strategy::Seed, Strategy::Incremental, Strategy::Opposite,
                     Strategy::Deceptive}) {
    if (strategy_name(s) == name) return s;
  }
  throw DomainError("unknown strategy '" + std::string(name) + "'");
}

/// What each adversarial strategy aims for. Descriptive only: the quantity
/// is expressed through the template wording and is never measured.
inline std::string_view strategy_target(Strategy s) {
  switch (s) {
    case Strategy::Incremental:
      return "difficulty of the hardest seed plus a small increment";
    case Strategy::Opposite:
      return "similarity to the seed kept under a threshold";
    case Strategy::Deceptive:
      return "complexity hidden behind an apparently simple task";
    case Strategy::Seed: break;
  }
  return "";
}

namespace detail {

struct Placeholder {
  std::string_view token;
  const std::optional<std::string>* text;
};

}  // namespace detail

/// Substitutes {n}, {topic}, {profession} and {reference} in one left-to-right
/// pass; substituted text is never rescanned.
inline std::string render(TemplateId id, const PromptParams& params) {
  const std::string_view body = template_text(id);

  auto need = [&](bool present, const char* field) {
    if (!present) {
      throw ParameterError(field, std::string("template ") +
                                      std::string(template_name(id)) +
                                      " requires parameter '" + field + "'");
    }
  };
  need(params.n.has_value(), "n");
  if (params.n && *params.n <= 0) {
    throw ParameterError("n", "parameter 'n' must be positive");
  }
  switch (id) {
    case TemplateId::Subtopics:
      need(params.topic.has_value(), "topic");
      break;
    case TemplateId::InitialCodeCompletion:
    case TemplateId::InitialNaturalLanguage:
      need(params.topic.has_value(), "topic");
      need(params.profession.has_value(), "profession");
      break;
    default:
      need(params.reference.has_value(), "reference");
      break;
  }

  const std::optional<std::string> n_text = std::to_string(*params.n);
  const detail::Placeholder slots[] = {
      {"{n}", &n_text},
      {"{topic}", &params.topic},
      {"{profession}", &params.profession},
      {"{reference}", &params.reference},
  };

  std::string out;
  out.reserve(body.size() + 256);
  std::size_t i = 0;
  while (i < body.size()) {
    bool replaced = false;
    if (body[i] == '{') {
      for (const auto& slot : slots) {
        if (slot.text->has_value() && body.substr(i, slot.token.size()) == slot.token) {
          out += **slot.text;
          i += slot.token.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += body[i++];
  }
  return out;
}

/// Seed lists shipped with `init`; the operator is expected to edit them.
inline std::vector<std::string> default_topics() {
  return {"Strings",          "Lists",           "Dictionaries",
          "Sets",             "Tuples",          "Recursion",
          "Sorting",          "Searching",       "Loops",
          "Conditionals",     "Functions",       "Error Handling",
          "File I/O",         "Regular Expressions", "Iterators and Generators",
          "Comprehensions",   "Higher-Order Functions", "Dynamic Programming",
          "Graphs",           "Date and Time"};
}

inline std::vector<std::string> default_professions() {
  return {"Accountant", "Architect",  "Biologist",   "Carpenter", "Chef",
          "Civil Engineer", "Data Analyst", "Economist", "Electrician",
          "Farmer",     "Firefighter", "Geologist",  "Journalist", "Lawyer",
          "Librarian",  "Musician",   "Nurse",       "Pharmacist", "Photographer",
          "Teacher"};
}

inline GenerationSpec default_generation_spec() {
  GenerationSpec spec;
  spec.topics = default_topics();
  spec.professions = default_professions();
  return spec;
}

}  // namespace advkd::prompts
