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

// On-disk run store. One directory per run:
//
//   exercises.jsonl  pairs.jsonl  margins.jsonl   append-only records
//   state.json                                    CurriculumState, atomic rewrite
//   iter_<t>/                                     exports, manifest, report
//
// All JSON is written with a fixed key order so identical contents produce
// identical bytes.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "advkd/config.hpp"
#include "advkd/parser.hpp"
#include "advkd/prompts.hpp"

namespace advkd::store {

inline constexpr int kStateSchemaVersion = 1;

struct Exercise {
  std::string exercise_id;
  std::string prompt;
  std::optional<std::string> solution;
  parser::ExerciseFormat format = parser::ExerciseFormat::CodeCompletion;
  std::string topic;
  std::string subtopic;
  std::string profession;
  prompts::Strategy strategy = prompts::Strategy::Seed;
  std::optional<std::string> parent_pair_id;
  std::optional<std::string> parent_exercise_id;
  int iteration = 0;
  std::string dedupe_key;
  std::string created_at;

  friend bool operator==(const Exercise&, const Exercise&) = default;
};

struct PreferencePair {
  std::string pair_id;
  std::string exercise_id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  int iteration = 0;
  std::string teacher_model;
  std::string student_model;
  prompts::Strategy strategy = prompts::Strategy::Seed;
  std::string created_at;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

struct MarginRecord {
  std::string pair_id;
  double r_chosen = 0.0;
  double r_rejected = 0.0;
  double loss = 0.0;
  double margin = 0.0;
  double policy_logprob_chosen = 0.0;
  double policy_logprob_rejected = 0.0;
  double reference_logprob_chosen = 0.0;
  double reference_logprob_rejected = 0.0;
  int iteration = 0;

  friend bool operator==(const MarginRecord&, const MarginRecord&) = default;
};

struct PutResult {
  std::string id;
  bool duplicate = false;
};

/// Record counts at a stage boundary; used to cut off partial writes.
struct RecordCounts {
  std::size_t exercises = 0;
  std::size_t pairs = 0;
  std::size_t margins = 0;
  friend bool operator==(const RecordCounts&, const RecordCounts&) = default;
};

struct IterationCounters {
  int parse_failures = 0;
  int duplicate_exercises = 0;
  int duplicate_pairs = 0;
  int pair_failures = 0;
  int scoring_failures = 0;
  int skipped_subtopics = 0;
  int skipped_topics = 0;
  friend bool operator==(const IterationCounters&, const IterationCounters&) = default;
};

struct SeedRecord {
  std::string pair_id;
  double margin = 0.0;
  prompts::Strategy strategy = prompts::Strategy::Incremental;
  friend bool operator==(const SeedRecord&, const SeedRecord&) = default;
};

enum class Stage { New, Dataset, Pairs, Exported, Trained, Scored, Complete };

std::string_view stage_name(Stage s);
Stage stage_from_name(std::string_view name);

struct CurriculumState {
  int schema_version = kStateSchemaVersion;
  std::string run_id;
  /// Current iteration, in [0, repetitions]; only ever increases.
  int iteration = 0;
  int repetitions = 5;
  std::uint64_t rng_seed = 0;
  /// Serialized std::mt19937_64; every adversarial seed is drawn from it.
  std::string rng_state;
  Stage stage = Stage::New;
  RecordCounts counts;
  std::map<int, IterationCounters> counters;
  std::map<int, std::vector<SeedRecord>> seeds;
  PipelineConfig config;

  friend bool operator==(const CurriculumState&, const CurriculumState&) = default;
};

CurriculumState make_initial_state(const PipelineConfig& config);

void save_state(const CurriculumState& state, const std::filesystem::path& path);
CurriculumState load_state(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place. Either the old
/// or the new content is visible; never a prefix.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Timestamps for created_at. Honors SOURCE_DATE_EPOCH for reproducible runs.
std::string timestamp_now();

std::string exercise_to_jsonl(const Exercise& e);
std::string pair_to_jsonl(const PreferencePair& p);
std::string margin_to_jsonl(const MarginRecord& m);

struct PreferenceTriple {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  friend bool operator==(const PreferenceTriple&, const PreferenceTriple&) = default;
};

/// Parses an exported preference file.
std::vector<PreferenceTriple> read_preferences_jsonl(const std::filesystem::path& path);

class RunStore {
 public:
  using Clock = std::function<std::string()>;

  /// Opens (creating if needed) a run directory. With `keep`, records past
  /// those counts are discarded from disk before loading; this is how a
  /// resumed run drops writes made after its last stage boundary.
  static RunStore open(const std::filesystem::path& dir,
                       std::optional<RecordCounts> keep = std::nullopt,
                       Clock clock = timestamp_now);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path iteration_dir(int iteration) const;
  std::filesystem::path state_path() const { return dir_ / "state.json"; }

  /// Duplicate prompts (by dedupe key across all iterations) are skipped.
  PutResult put_exercise(Exercise exercise);
  /// Rejects chosen == rejected; flags a second pair for the same prompt in
  /// the same iteration as a duplicate.
  PutResult put_pair(PreferencePair pair);
  /// Requires margin == r_chosen - r_rejected and loss == softplus(-margin).
  PutResult put_margin(MarginRecord record);

  bool has_prompt(const std::string& prompt_text) const;

  const std::vector<Exercise>& exercises() const { return exercises_; }
  const std::vector<PreferencePair>& pairs() const { return pairs_; }
  const std::vector<MarginRecord>& margins() const { return margins_; }
  RecordCounts counts() const;

  std::vector<Exercise> exercises_for(int iteration) const;
  std::vector<PreferencePair> pairs_for(int iteration) const;
  std::vector<MarginRecord> margins_for(int iteration) const;
  const Exercise* find_exercise(const std::string& id) const;
  const PreferencePair* find_pair(const std::string& id) const;
  const MarginRecord* find_margin(const std::string& pair_id) const;

  /// Writes {"prompt","chosen","rejected"} lines in curriculum order
  /// (iteration, then insertion). Returns the record count.
  std::size_t export_preferences_jsonl(std::optional<int> iteration,
                                       const std::filesystem::path& path) const;

  /// Canonical export location for an iteration.
  std::filesystem::path export_path(int iteration) const;
  std::filesystem::path manifest_path(int iteration) const;

  /// Writes the trainer manifest for an exported iteration and returns its
  /// JSON text.
  std::string write_training_manifest(int iteration, const std::filesystem::path& path,
                                      const PipelineConfig& config) const;

 private:
  explicit RunStore(std::filesystem::path dir, Clock clock)
      : dir_(std::move(dir)), clock_(std::move(clock)) {}

  void load(std::optional<RecordCounts> keep);
  void append(const char* file, const std::string& line);

  std::filesystem::path dir_;
  Clock clock_;
  std::vector<Exercise> exercises_;
  std::vector<PreferencePair> pairs_;
  std::vector<MarginRecord> margins_;
  std::map<std::string, std::size_t> exercise_index_;
  std::map<std::string, std::size_t> pair_index_;
  std::map<std::string, std::size_t> margin_index_;
  std::set<std::string> prompt_keys_;
  std::set<std::pair<std::string, int>> pair_keys_;
};

}  // namespace advkd::store
