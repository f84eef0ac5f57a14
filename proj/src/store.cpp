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

#include "advkd/store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "advkd/dpo_math.hpp"
#include "advkd/errors.hpp"

namespace advkd::store {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kExercisesFile = "exercises.jsonl";
constexpr const char* kPairsFile = "pairs.jsonl";
constexpr const char* kMarginsFile = "margins.jsonl";

std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

json optional_string(const std::optional<std::string>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> read_optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

std::string format_id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, n);
  return buf;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path, std::ios::binary);
  if (!in) return lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

Exercise exercise_from_json(const json& j) {
  Exercise e;
  e.exercise_id = j.at("exercise_id").get<std::string>();
  e.iteration = j.at("iteration").get<int>();
  e.strategy = prompts::strategy_from_name(j.at("strategy").get<std::string>());
  e.format = parser::format_from_name(j.at("format").get<std::string>());
  e.topic = j.at("topic").get<std::string>();
  e.subtopic = j.at("subtopic").get<std::string>();
  e.profession = j.at("profession").get<std::string>();
  e.parent_pair_id = read_optional_string(j, "parent_pair_id");
  e.parent_exercise_id = read_optional_string(j, "parent_exercise_id");
  e.prompt = j.at("prompt").get<std::string>();
  e.solution = read_optional_string(j, "solution");
  e.dedupe_key = j.at("dedupe_key").get<std::string>();
  e.created_at = j.at("created_at").get<std::string>();
  return e;
}

PreferencePair pair_from_json(const json& j) {
  PreferencePair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.exercise_id = j.at("exercise_id").get<std::string>();
  p.iteration = j.at("iteration").get<int>();
  p.strategy = prompts::strategy_from_name(j.at("strategy").get<std::string>());
  p.teacher_model = j.at("teacher_model").get<std::string>();
  p.student_model = j.at("student_model").get<std::string>();
  p.prompt = j.at("prompt").get<std::string>();
  p.chosen = j.at("chosen").get<std::string>();
  p.rejected = j.at("rejected").get<std::string>();
  p.created_at = j.at("created_at").get<std::string>();
  return p;
}

MarginRecord margin_from_json(const json& j) {
  MarginRecord m;
  m.pair_id = j.at("pair_id").get<std::string>();
  m.iteration = j.at("iteration").get<int>();
  m.r_chosen = j.at("r_chosen").get<double>();
  m.r_rejected = j.at("r_rejected").get<double>();
  m.margin = j.at("margin").get<double>();
  m.loss = j.at("loss").get<double>();
  m.policy_logprob_chosen = j.at("policy_logprob_chosen").get<double>();
  m.policy_logprob_rejected = j.at("policy_logprob_rejected").get<double>();
  m.reference_logprob_chosen = j.at("reference_logprob_chosen").get<double>();
  m.reference_logprob_rejected = j.at("reference_logprob_rejected").get<double>();
  return m;
}

void check_margin(const MarginRecord& m) {
  for (double v : {m.r_chosen, m.r_rejected, m.margin, m.loss, m.policy_logprob_chosen,
                   m.policy_logprob_rejected, m.reference_logprob_chosen,
                   m.reference_logprob_rejected}) {
    if (!std::isfinite(v)) throw ValidationError("margin", "margin record has a non-finite value");
  }
  if (std::abs(m.margin - (m.r_chosen - m.r_rejected)) > 1e-12) {
    throw ValidationError("margin", "margin must equal r_chosen - r_rejected");
  }
  if (std::abs(m.loss - dpo::softplus(-m.margin)) > 1e-9) {
    throw ValidationError("loss", "loss must equal softplus(-margin)");
  }
}

json counters_to_json(const IterationCounters& c) {
  return {{"parse_failures", c.parse_failures},
          {"duplicate_exercises", c.duplicate_exercises},
          {"duplicate_pairs", c.duplicate_pairs},
          {"pair_failures", c.pair_failures},
          {"scoring_failures", c.scoring_failures},
          {"skipped_subtopics", c.skipped_subtopics},
          {"skipped_topics", c.skipped_topics}};
}

IterationCounters counters_from_json(const json& j) {
  IterationCounters c;
  c.parse_failures = j.at("parse_failures").get<int>();
  c.duplicate_exercises = j.at("duplicate_exercises").get<int>();
  c.duplicate_pairs = j.at("duplicate_pairs").get<int>();
  c.pair_failures = j.at("pair_failures").get<int>();
  c.scoring_failures = j.at("scoring_failures").get<int>();
  c.skipped_subtopics = j.at("skipped_subtopics").get<int>();
  c.skipped_topics = j.at("skipped_topics").get<int>();
  return c;
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::New: return "new";
    case Stage::Dataset: return "dataset";
    case Stage::Pairs: return "pairs";
    case Stage::Exported: return "exported";
    case Stage::Trained: return "trained";
    case Stage::Scored: return "scored";
    case Stage::Complete: return "complete";
  }
  return "new";
}

Stage stage_from_name(std::string_view name) {
  for (Stage s : {Stage::New, Stage::Dataset, Stage::Pairs, Stage::Exported, Stage::Trained,
                  Stage::Scored, Stage::Complete}) {
    if (stage_name(s) == name) return s;
  }
  throw SchemaError("unknown stage '" + std::string(name) + "'");
}

std::string timestamp_now() {
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::time(nullptr);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot write " + path.string());
  std::size_t written = 0;
  while (written < content.size()) {
    const ssize_t n = ::write(fd, content.data() + written, content.size() - written);
    if (n <= 0) {
      ::close(fd);
      fs::remove(tmp);
      throw IoError("short write to " + tmp.string());
    }
    written += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  std::error_code ec;
  if (synced) fs::rename(tmp, path, ec);
  if (!synced || ec) {
    fs::remove(tmp);
    throw IoError("cannot replace " + path.string() + (ec ? ": " + ec.message() : ""));
  }
}

std::string exercise_to_jsonl(const Exercise& e) {
  return dump_line({{"exercise_id", e.exercise_id},
                    {"iteration", e.iteration},
                    {"strategy", prompts::strategy_name(e.strategy)},
                    {"format", parser::format_name(e.format)},
                    {"topic", e.topic},
                    {"subtopic", e.subtopic},
                    {"profession", e.profession},
                    {"parent_pair_id", optional_string(e.parent_pair_id)},
                    {"parent_exercise_id", optional_string(e.parent_exercise_id)},
                    {"prompt", e.prompt},
                    {"solution", optional_string(e.solution)},
                    {"dedupe_key", e.dedupe_key},
                    {"created_at", e.created_at}});
}

std::string pair_to_jsonl(const PreferencePair& p) {
  return dump_line({{"pair_id", p.pair_id},
                    {"exercise_id", p.exercise_id},
                    {"iteration", p.iteration},
                    {"strategy", prompts::strategy_name(p.strategy)},
                    {"teacher_model", p.teacher_model},
                    {"student_model", p.student_model},
                    {"prompt", p.prompt},
                    {"chosen", p.chosen},
                    {"rejected", p.rejected},
                    {"created_at", p.created_at}});
}

std::string margin_to_jsonl(const MarginRecord& m) {
  return dump_line({{"pair_id", m.pair_id},
                    {"iteration", m.iteration},
                    {"r_chosen", m.r_chosen},
                    {"r_rejected", m.r_rejected},
                    {"margin", m.margin},
                    {"loss", m.loss},
                    {"policy_logprob_chosen", m.policy_logprob_chosen},
                    {"policy_logprob_rejected", m.policy_logprob_rejected},
                    {"reference_logprob_chosen", m.reference_logprob_chosen},
                    {"reference_logprob_rejected", m.reference_logprob_rejected}});
}

CurriculumState make_initial_state(const PipelineConfig& config) {
  CurriculumState s;
  s.run_id = config.run_id;
  s.repetitions = config.repetitions;
  s.rng_seed = config.rng_seed;
  std::mt19937_64 engine(config.rng_seed);
  std::ostringstream rng;
  rng << engine;
  s.rng_state = rng.str();
  s.config = config;
  return s;
}

void save_state(const CurriculumState& s, const fs::path& path) {
  json counters = json::object();
  for (const auto& [t, c] : s.counters) counters[std::to_string(t)] = counters_to_json(c);
  json seeds = json::object();
  for (const auto& [t, list] : s.seeds) {
    json arr = json::array();
    for (const auto& seed : list) {
      arr.push_back({{"pair_id", seed.pair_id},
                     {"margin", seed.margin},
                     {"strategy", prompts::strategy_name(seed.strategy)}});
    }
    seeds[std::to_string(t)] = arr;
  }
  json doc = {
      {"schema_version", s.schema_version},
      {"run_id", s.run_id},
      {"iteration", s.iteration},
      {"repetitions", s.repetitions},
      {"rng_seed", s.rng_seed},
      {"stage", stage_name(s.stage)},
      {"counts",
       {{"exercises", s.counts.exercises}, {"pairs", s.counts.pairs}, {"margins", s.counts.margins}}},
      {"counters", counters},
      {"seeds", seeds},
      {"config", json::parse(config_to_json(s.config))},
      {"rng_state", s.rng_state},
  };
  write_file_atomic(path, doc.dump(2) + "\n");
}

CurriculumState load_state(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("no state file at " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw SchemaError("state file " + path.string() + " is corrupt: " + e.what());
  }
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kStateSchemaVersion) throw MigrationError(version, kStateSchemaVersion);
    CurriculumState s;
    s.schema_version = version;
    s.run_id = doc.at("run_id").get<std::string>();
    s.iteration = doc.at("iteration").get<int>();
    s.repetitions = doc.at("repetitions").get<int>();
    s.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    s.stage = stage_from_name(doc.at("stage").get<std::string>());
    const json& counts = doc.at("counts");
    s.counts = {counts.at("exercises").get<std::size_t>(), counts.at("pairs").get<std::size_t>(),
                counts.at("margins").get<std::size_t>()};
    for (const auto& [t, c] : doc.at("counters").items()) {
      s.counters[std::stoi(t)] = counters_from_json(c);
    }
    for (const auto& [t, arr] : doc.at("seeds").items()) {
      auto& list = s.seeds[std::stoi(t)];
      for (const auto& seed : arr) {
        list.push_back({seed.at("pair_id").get<std::string>(), seed.at("margin").get<double>(),
                        prompts::strategy_from_name(seed.at("strategy").get<std::string>())});
      }
    }
    s.config = parse_config(doc.at("config").dump());
    s.rng_state = doc.at("rng_state").get<std::string>();
    if (s.iteration < 0 || s.iteration > s.repetitions) {
      throw SchemaError("state iteration out of range");
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError("state file " + path.string() + " does not match the schema: " + e.what());
  } catch (const ParameterError& e) {
    throw SchemaError("state file " + path.string() + " has an invalid config: " + e.what());
  }
}

std::vector<PreferenceTriple> read_preferences_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::vector<PreferenceTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.size() != 3) throw SchemaError("expected exactly prompt, chosen, rejected");
      out.push_back({j.at("prompt").get<std::string>(), j.at("chosen").get<std::string>(),
                     j.at("rejected").get<std::string>()});
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

RunStore RunStore::open(const fs::path& dir, std::optional<RecordCounts> keep, Clock clock) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  RunStore store(dir, std::move(clock));
  store.load(keep);
  return store;
}

void RunStore::load(std::optional<RecordCounts> keep) {
  auto lines_of = [&](const char* file, std::optional<std::size_t> limit) {
    const fs::path path = dir_ / file;
    std::vector<std::string> lines = read_lines(path);
    if (limit) {
      if (lines.size() < *limit) {
        throw SchemaError(std::string(file) + " holds " + std::to_string(lines.size()) +
                          " records but the state expects " + std::to_string(*limit));
      }
      if (lines.size() > *limit) {
        lines.resize(*limit);
        std::string content;
        for (const auto& l : lines) content += l + "\n";
        write_file_atomic(path, content);
      }
    }
    return lines;
  };
  const auto ex_lines = lines_of(kExercisesFile, keep ? std::optional(keep->exercises) : std::nullopt);
  const auto pair_lines = lines_of(kPairsFile, keep ? std::optional(keep->pairs) : std::nullopt);
  const auto margin_lines = lines_of(kMarginsFile, keep ? std::optional(keep->margins) : std::nullopt);

  auto parse = [](const std::string& line, const char* file, std::size_t n) {
    try {
      return json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string(file) + " record " + std::to_string(n + 1) +
                        " is corrupt: " + e.what());
    }
  };
  try {
    for (std::size_t i = 0; i < ex_lines.size(); ++i) {
      Exercise e = exercise_from_json(parse(ex_lines[i], kExercisesFile, i));
      exercise_index_[e.exercise_id] = exercises_.size();
      prompt_keys_.insert(e.dedupe_key);
      exercises_.push_back(std::move(e));
    }
    for (std::size_t i = 0; i < pair_lines.size(); ++i) {
      PreferencePair p = pair_from_json(parse(pair_lines[i], kPairsFile, i));
      if (!exercise_index_.count(p.exercise_id)) {
        throw SchemaError("pair " + p.pair_id + " references missing exercise " + p.exercise_id);
      }
      pair_index_[p.pair_id] = pairs_.size();
      pair_keys_.emplace(parser::dedupe_key(p.prompt), p.iteration);
      pairs_.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < margin_lines.size(); ++i) {
      MarginRecord m = margin_from_json(parse(margin_lines[i], kMarginsFile, i));
      if (!pair_index_.count(m.pair_id)) {
        throw SchemaError("margin record references missing pair " + m.pair_id);
      }
      check_margin(m);
      margin_index_[m.pair_id] = margins_.size();
      margins_.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw SchemaError("run store " + dir_.string() + " does not match the schema: " + e.what());
  } catch (const ValidationError& e) {
    throw SchemaError("run store " + dir_.string() + " holds an invalid record: " + e.what());
  }
  for (const auto& e : exercises_) {
    if (e.parent_pair_id && !pair_index_.count(*e.parent_pair_id)) {
      throw SchemaError("exercise " + e.exercise_id + " references missing pair " +
                        *e.parent_pair_id);
    }
  }
}

void RunStore::append(const char* file, const std::string& line) {
  std::ofstream out(dir_ / file, std::ios::binary | std::ios::app);
  out << line << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to " + (dir_ / file).string());
}

fs::path RunStore::iteration_dir(int iteration) const {
  return dir_ / ("iter_" + std::to_string(iteration));
}

fs::path RunStore::export_path(int iteration) const {
  return iteration_dir(iteration) / "preferences.jsonl";
}

fs::path RunStore::manifest_path(int iteration) const {
  return iteration_dir(iteration) / "manifest.json";
}

RecordCounts RunStore::counts() const {
  return {exercises_.size(), pairs_.size(), margins_.size()};
}

bool RunStore::has_prompt(const std::string& prompt_text) const {
  return prompt_keys_.count(parser::dedupe_key(prompt_text)) > 0;
}

PutResult RunStore::put_exercise(Exercise e) {
  if (e.prompt.empty()) throw ValidationError("prompt", "exercise prompt is empty");
  if (e.iteration < 0) throw ValidationError("iteration", "iteration must be >= 0");
  if (e.strategy != prompts::Strategy::Seed) {
    if (!e.parent_pair_id) {
      throw ValidationError("parent_pair_id", "adversarial exercises need a parent pair");
    }
  }
  if (e.parent_pair_id && !pair_index_.count(*e.parent_pair_id)) {
    throw ValidationError("parent_pair_id", "parent pair " + *e.parent_pair_id + " does not exist");
  }
  if (e.parent_exercise_id && !exercise_index_.count(*e.parent_exercise_id)) {
    throw ValidationError("parent_exercise_id",
                          "parent exercise " + *e.parent_exercise_id + " does not exist");
  }
  e.dedupe_key = parser::dedupe_key(e.prompt);
  if (prompt_keys_.count(e.dedupe_key)) return {"", true};
  if (e.exercise_id.empty()) e.exercise_id = format_id("ex", exercises_.size() + 1);
  if (exercise_index_.count(e.exercise_id)) {
    throw ValidationError("exercise_id", "exercise id " + e.exercise_id + " already exists");
  }
  if (e.created_at.empty()) e.created_at = clock_();

  append(kExercisesFile, exercise_to_jsonl(e));
  exercise_index_[e.exercise_id] = exercises_.size();
  prompt_keys_.insert(e.dedupe_key);
  exercises_.push_back(e);
  return {e.exercise_id, false};
}

PutResult RunStore::put_pair(PreferencePair p) {
  if (!exercise_index_.count(p.exercise_id)) {
    throw ValidationError("exercise_id", "exercise " + p.exercise_id + " does not exist");
  }
  if (p.prompt.empty()) throw ValidationError("prompt", "pair prompt is empty");
  if (p.chosen.empty()) throw ValidationError("chosen", "chosen solution is empty");
  if (p.rejected.empty()) throw ValidationError("rejected", "rejected solution is empty");
  if (p.chosen == p.rejected) {
    throw ValidationError("chosen", "chosen and rejected solutions are identical");
  }
  if (p.iteration < 0) throw ValidationError("iteration", "iteration must be >= 0");
  auto key = std::make_pair(parser::dedupe_key(p.prompt), p.iteration);
  if (pair_keys_.count(key)) return {"", true};
  if (p.pair_id.empty()) p.pair_id = format_id("pair", pairs_.size() + 1);
  if (pair_index_.count(p.pair_id)) {
    throw ValidationError("pair_id", "pair id " + p.pair_id + " already exists");
  }
  if (p.created_at.empty()) p.created_at = clock_();

  append(kPairsFile, pair_to_jsonl(p));
  pair_index_[p.pair_id] = pairs_.size();
  pair_keys_.insert(std::move(key));
  pairs_.push_back(p);
  return {p.pair_id, false};
}

PutResult RunStore::put_margin(MarginRecord m) {
  const auto it = pair_index_.find(m.pair_id);
  if (it == pair_index_.end()) {
    throw ValidationError("pair_id", "pair " + m.pair_id + " does not exist");
  }
  if (margin_index_.count(m.pair_id)) {
    throw ValidationError("pair_id", "pair " + m.pair_id + " is already scored");
  }
  if (pairs_[it->second].iteration != m.iteration) {
    throw ValidationError("iteration", "margin iteration differs from its pair's iteration");
  }
  check_margin(m);
  append(kMarginsFile, margin_to_jsonl(m));
  margin_index_[m.pair_id] = margins_.size();
  margins_.push_back(m);
  return {m.pair_id, false};
}

std::vector<Exercise> RunStore::exercises_for(int iteration) const {
  std::vector<Exercise> out;
  for (const auto& e : exercises_) {
    if (e.iteration == iteration) out.push_back(e);
  }
  return out;
}

std::vector<PreferencePair> RunStore::pairs_for(int iteration) const {
  std::vector<PreferencePair> out;
  for (const auto& p : pairs_) {
    if (p.iteration == iteration) out.push_back(p);
  }
  return out;
}

std::vector<MarginRecord> RunStore::margins_for(int iteration) const {
  std::vector<MarginRecord> out;
  for (const auto& m : margins_) {
    if (m.iteration == iteration) out.push_back(m);
  }
  return out;
}

const Exercise* RunStore::find_exercise(const std::string& id) const {
  const auto it = exercise_index_.find(id);
  return it == exercise_index_.end() ? nullptr : &exercises_[it->second];
}

const PreferencePair* RunStore::find_pair(const std::string& id) const {
  const auto it = pair_index_.find(id);
  return it == pair_index_.end() ? nullptr : &pairs_[it->second];
}

const MarginRecord* RunStore::find_margin(const std::string& pair_id) const {
  const auto it = margin_index_.find(pair_id);
  return it == margin_index_.end() ? nullptr : &margins_[it->second];
}

std::size_t RunStore::export_preferences_jsonl(std::optional<int> iteration,
                                               const fs::path& path) const {
  std::vector<const PreferencePair*> selected;
  for (const auto& p : pairs_) {
    if (!iteration || p.iteration == *iteration) selected.push_back(&p);
  }
  if (selected.empty()) {
    throw ExportError(iteration ? "no preference pairs for iteration " + std::to_string(*iteration)
                                : std::string("no preference pairs to export"));
  }
  std::stable_sort(selected.begin(), selected.end(),
                   [](const PreferencePair* a, const PreferencePair* b) {
                     return a->iteration < b->iteration;
                   });
  std::string content;
  for (const PreferencePair* p : selected) {
    content += dump_line({{"prompt", p->prompt}, {"chosen", p->chosen}, {"rejected", p->rejected}});
    content += '\n';
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  write_file_atomic(path, content);
  return selected.size();
}

std::string RunStore::write_training_manifest(int iteration, const fs::path& path,
                                              const PipelineConfig& config) const {
  const fs::path dataset = export_path(iteration);
  if (!fs::exists(dataset)) {
    throw ExportError("iteration " + std::to_string(iteration) +
                      " has not been exported; run export first");
  }
  std::size_t records = 0;
  for (const auto& line : read_lines(dataset)) records += line.empty() ? 0 : 1;

  // Paths are written relative to the manifest's directory.
  const fs::path base = fs::absolute(path).parent_path();
  auto rel = [&](const fs::path& p) {
    return fs::absolute(p).lexically_normal().lexically_relative(base.lexically_normal()).generic_string();
  };
  const TrainingConfig defaults;
  const TrainingConfig& t = config.training;
  auto origin = [](bool same) { return same ? "default" : "override"; };

  json manifest = {
      {"schema_version", 1},
      {"run_id", config.run_id},
      {"iteration", iteration},
      {"dataset_path", rel(dataset)},
      {"dataset_records", records},
      {"policy_model", config.student_policy.model_name},
      {"reference_model", config.student_reference.model_name},
      {"output_dir", rel(iteration_dir(iteration) / "adapter")},
      {"marker_path", rel(iteration_dir(iteration) / "TRAINED")},
      {"resume_from", iteration > 0 ? json(rel(iteration_dir(iteration - 1) / "adapter"))
                                    : json(nullptr)},
      {"training",
       {{"steps", t.steps},
        {"per_device_train_batch_size", t.per_device_train_batch_size},
        {"learning_rate", t.learning_rate},
        {"beta", t.beta},
        {"gradient_accumulation_steps", t.gradient_accumulation_steps},
        {"lr_scheduler_type", t.lr_scheduler_type},
        {"optimizer", t.optimizer},
        {"precision", t.precision},
        {"gradient_checkpointing", t.gradient_checkpointing}}},
      {"lora",
       {{"r", t.lora.r},
        {"alpha", t.lora.alpha},
        {"dropout", t.lora.dropout},
        {"bias", t.lora.bias},
        {"target_modules", t.lora.target_modules}}},
      {"provenance",
       {{"steps", origin(t.steps == defaults.steps)},
        {"per_device_train_batch_size",
         origin(t.per_device_train_batch_size == defaults.per_device_train_batch_size)},
        {"learning_rate", origin(t.learning_rate == defaults.learning_rate)},
        {"beta", origin(t.beta == defaults.beta)},
        {"gradient_accumulation_steps",
         origin(t.gradient_accumulation_steps == defaults.gradient_accumulation_steps)},
        {"lr_scheduler_type", origin(t.lr_scheduler_type == defaults.lr_scheduler_type)},
        {"optimizer", origin(t.optimizer == defaults.optimizer)},
        {"precision", origin(t.precision == defaults.precision)},
        {"gradient_checkpointing",
         origin(t.gradient_checkpointing == defaults.gradient_checkpointing)},
        {"lora", origin(t.lora == defaults.lora)}}},
  };
  const std::string text = manifest.dump(2) + "\n";
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  write_file_atomic(path, text);
  return text;
}

}  // namespace advkd::store
