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

#include "advkd/curriculum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "advkd/dpo_math.hpp"
#include "advkd/errors.hpp"
#include "advkd/parser.hpp"
#include "advkd/prompts.hpp"

namespace advkd::curriculum {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using store::Stage;

namespace {

constexpr std::uint64_t kStrategySalt = 0x9e3779b97f4a7c15ULL;

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string rtrim(std::string s) {
  while (!s.empty() && is_ws(s.back())) s.pop_back();
  return s;
}

// Takes the body of the first fenced block when the answer has one.
std::string clean_solution(const std::string& raw) {
  const std::size_t open = raw.find("```");
  if (open != std::string::npos) {
    const std::size_t body = raw.find('\n', open);
    if (body != std::string::npos) {
      const std::size_t close = raw.find("```", body + 1);
      if (close != std::string::npos) return rtrim(raw.substr(body + 1, close - body - 1));
    }
  }
  return rtrim(raw);
}

std::string scoring_prompt(const std::string& prompt) {
  if (!prompt.empty() && is_ws(prompt.back())) return prompt;
  return prompt + "\n";
}

int min_concurrency(const client::EndpointConfig& a, const client::EndpointConfig& b) {
  return std::min(a.max_concurrency, b.max_concurrency);
}

json summary_to_json(const MarginSummary& s) {
  return {{"count", s.count}, {"min", s.min}, {"median", s.median}, {"mean", s.mean},
          {"max", s.max}};
}

// Fields that shape the stored data; a resumed run must keep them.
void check_resume_compatible(const PipelineConfig& saved, const PipelineConfig& next) {
  auto same = [](bool eq, const char* field) {
    if (!eq) {
      throw ValidationError(field, std::string("'") + field +
                                       "' differs from the saved run; resume with the "
                                       "original setting");
    }
  };
  same(saved.run_id == next.run_id, "run_id");
  same(saved.rng_seed == next.rng_seed, "rng_seed");
  same(saved.generation == next.generation, "generation");
  same(saved.dpo == next.dpo, "dpo");
  same(saved.adversarial == next.adversarial, "adversarial");
  same(saved.training == next.training, "training");
  same(saved.parse_retries == next.parse_retries, "parse_retries");
  same(saved.solve_system_prompt == next.solve_system_prompt, "solve_system_prompt");
}

store::CurriculumState open_state(const fs::path& dir, const PipelineConfig& config,
                                  bool resume) {
  const fs::path state_path = dir / "state.json";
  if (resume) {
    store::CurriculumState state = store::load_state(state_path);
    check_resume_compatible(state.config, config);
    if (config.repetitions < state.iteration + 1) {
      throw ParameterError("repetitions", "repetitions is below the saved run's iteration");
    }
    state.config = config;
    state.repetitions = config.repetitions;
    if (state.stage == Stage::Complete && state.iteration + 1 < state.repetitions) {
      state.stage = Stage::Scored;
    }
    return state;
  }
  for (const char* f : {"state.json", "exercises.jsonl", "pairs.jsonl", "margins.jsonl"}) {
    if (fs::exists(dir / f)) {
      throw ValidationError("dir", dir.string() + " already holds a run; pass --resume to continue it");
    }
  }
  validate(config.adversarial);
  dpo::validate(config.dpo);
  return store::make_initial_state(config);
}

}  // namespace

MarginSummary summarize(const std::vector<store::MarginRecord>& records) {
  MarginSummary s;
  s.count = records.size();
  if (records.empty()) return s;
  std::vector<double> m;
  m.reserve(records.size());
  for (const auto& r : records) m.push_back(r.margin);
  std::sort(m.begin(), m.end());
  s.min = m.front();
  s.max = m.back();
  const std::size_t mid = m.size() / 2;
  s.median = m.size() % 2 ? m[mid] : 0.5 * (m[mid - 1] + m[mid]);
  s.mean = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
  return s;
}

IterationReport build_report(const store::RunStore& store, const store::CurriculumState& state,
                             int iteration) {
  IterationReport r;
  r.iteration = iteration;
  r.exercises_generated = store.exercises_for(iteration).size();
  r.pairs_built = store.pairs_for(iteration).size();
  const auto margins = store.margins_for(iteration);
  r.margins_scored = margins.size();
  r.margins = summarize(margins);
  if (const auto it = state.seeds.find(iteration); it != state.seeds.end()) {
    r.seeds_sampled = it->second;
  }
  if (const auto it = state.counters.find(iteration); it != state.counters.end()) {
    r.counters = it->second;
  }
  r.parse_failure_count = r.counters.parse_failures;
  r.duplicate_count = r.counters.duplicate_exercises + r.counters.duplicate_pairs;
  return r;
}

std::string report_to_json(const IterationReport& r) {
  json seeds = json::array();
  for (const auto& s : r.seeds_sampled) {
    seeds.push_back({{"pair_id", s.pair_id},
                     {"margin", s.margin},
                     {"strategy", prompts::strategy_name(s.strategy)}});
  }
  const auto& c = r.counters;
  json doc = {
      {"iteration", r.iteration},
      {"exercises_generated", r.exercises_generated},
      {"pairs_built", r.pairs_built},
      {"margins_scored", r.margins_scored},
      {"margin_summary", summary_to_json(r.margins)},
      {"seeds_sampled", seeds},
      {"parse_failure_count", r.parse_failure_count},
      {"duplicate_count", r.duplicate_count},
      {"counters",
       {{"parse_failures", c.parse_failures},
        {"duplicate_exercises", c.duplicate_exercises},
        {"duplicate_pairs", c.duplicate_pairs},
        {"pair_failures", c.pair_failures},
        {"scoring_failures", c.scoring_failures},
        {"skipped_subtopics", c.skipped_subtopics},
        {"skipped_topics", c.skipped_topics}}},
  };
  return doc.dump(2) + "\n";
}

IterationReport report_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    IterationReport r;
    r.iteration = doc.at("iteration").get<int>();
    r.exercises_generated = doc.at("exercises_generated").get<std::size_t>();
    r.pairs_built = doc.at("pairs_built").get<std::size_t>();
    r.margins_scored = doc.at("margins_scored").get<std::size_t>();
    const json& m = doc.at("margin_summary");
    r.margins = {m.at("count").get<std::size_t>(), m.at("min").get<double>(),
                 m.at("median").get<double>(), m.at("mean").get<double>(),
                 m.at("max").get<double>()};
    for (const auto& s : doc.at("seeds_sampled")) {
      r.seeds_sampled.push_back(
          {s.at("pair_id").get<std::string>(), s.at("margin").get<double>(),
           prompts::strategy_from_name(s.at("strategy").get<std::string>())});
    }
    r.parse_failure_count = doc.at("parse_failure_count").get<int>();
    r.duplicate_count = doc.at("duplicate_count").get<int>();
    const json& c = doc.at("counters");
    r.counters.parse_failures = c.at("parse_failures").get<int>();
    r.counters.duplicate_exercises = c.at("duplicate_exercises").get<int>();
    r.counters.duplicate_pairs = c.at("duplicate_pairs").get<int>();
    r.counters.pair_failures = c.at("pair_failures").get<int>();
    r.counters.scoring_failures = c.at("scoring_failures").get<int>();
    r.counters.skipped_subtopics = c.at("skipped_subtopics").get<int>();
    r.counters.skipped_topics = c.at("skipped_topics").get<int>();
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report does not match the schema: ") + e.what());
  }
}

std::string report_table(const IterationReport& r) {
  std::ostringstream out;
  char buf[160];
  auto row = [&](const char* label, const std::string& value) {
    std::snprintf(buf, sizeof buf, "  %-24s %s\n", label, value.c_str());
    out << buf;
  };
  out << "iteration " << r.iteration << "\n";
  row("exercises generated", std::to_string(r.exercises_generated));
  row("pairs built", std::to_string(r.pairs_built));
  row("margins scored", std::to_string(r.margins_scored));
  if (r.margins.count > 0) {
    std::snprintf(buf, sizeof buf, "%.6f / %.6f / %.6f / %.6f", r.margins.min, r.margins.median,
                  r.margins.mean, r.margins.max);
    row("margin min/med/mean/max", buf);
  }
  row("parse failures", std::to_string(r.parse_failure_count));
  row("duplicates", std::to_string(r.duplicate_count));
  row("pair failures", std::to_string(r.counters.pair_failures));
  row("scoring failures", std::to_string(r.counters.scoring_failures));
  row("skipped subtopics", std::to_string(r.counters.skipped_subtopics));
  row("seeds sampled", std::to_string(r.seeds_sampled.size()));
  for (const auto& s : r.seeds_sampled) {
    std::snprintf(buf, sizeof buf, "    %-14s %+.6f  %s\n", s.pair_id.c_str(), s.margin,
                  std::string(prompts::strategy_name(s.strategy)).c_str());
    out << buf;
  }
  return out.str();
}

std::size_t seed_count(double seed_fraction, std::size_t pool_size) {
  if (pool_size == 0) throw DomainError("margin pool is empty");
  const auto k = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(seed_fraction * static_cast<double>(pool_size))));
  return std::min(k, pool_size);
}

std::vector<prompts::Strategy> assign_strategies(std::size_t k,
                                                 const std::array<double, 3>& mix,
                                                 std::uint64_t rng_seed) {
  const double total = mix[0] + mix[1] + mix[2];
  if (!(total > 0.0)) throw ParameterError("strategy_mix", "strategy weights sum to zero");

  std::array<std::size_t, 3> quota{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = mix[i] / total * static_cast<double>(k);
    quota[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(quota[i]);
    assigned += quota[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < k; i = (i + 1) % 3) {
    if (mix[order[i]] <= 0.0) continue;
    ++quota[order[i]];
    ++assigned;
  }

  std::vector<prompts::Strategy> out;
  out.reserve(k);
  for (std::size_t i = 0; i < 3; ++i) {
    out.insert(out.end(), quota[i], prompts::kAdversarialStrategies[i]);
  }
  std::mt19937_64 engine(rng_seed);
  for (std::size_t i = out.size(); i > 1; --i) {
    std::swap(out[i - 1], out[engine() % i]);
  }
  return out;
}

std::vector<store::SeedRecord> plan_adversarial_seeds(
    const std::vector<store::MarginRecord>& pool, const AdversarialPlan& plan,
    std::uint64_t rng_seed) {
  validate(plan);
  dpo::MarginVector margins;
  for (const auto& r : pool) {
    margins.margins.push_back(r.margin);
    margins.pool_ids.push_back(r.pair_id);
  }
  dpo::SamplingPlan sampling = dpo::sampling_weights(margins);
  sampling.k = seed_count(plan.seed_fraction, pool.size());
  sampling.with_replacement = false;
  const std::vector<std::string> ids = dpo::sample_seeds(sampling, rng_seed);
  const auto strategies = assign_strategies(ids.size(), plan.strategy_mix, rng_seed ^ kStrategySalt);

  std::vector<store::SeedRecord> seeds;
  seeds.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = std::find(margins.pool_ids.begin(), margins.pool_ids.end(), ids[i]);
    const double m = margins.margins[static_cast<std::size_t>(it - margins.pool_ids.begin())];
    seeds.push_back({ids[i], m, strategies[i]});
  }
  return seeds;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(fs::path run_dir, PipelineConfig config, client::ModelClient& client,
                   bool resume, store::RunStore::Clock clock)
    : dir_(std::move(run_dir)),
      client_(client),
      state_(open_state(dir_, config, resume)),
      store_(store::RunStore::open(dir_, state_.counts, std::move(clock))) {
  if (!resume) store::save_state(state_, store_.state_path());
}

void Pipeline::note(const std::string& line) {
  if (log_) *log_ << line << '\n' << std::flush;
}

void Pipeline::advance(Stage stage, int iteration) {
  state_.stage = stage;
  state_.iteration = iteration;
  state_.counts = store_.counts();
  store::save_state(state_, store_.state_path());
  note("iteration " + std::to_string(iteration) + ": " + std::string(store::stage_name(stage)));
}

std::uint64_t Pipeline::draw_seed() {
  std::mt19937_64 engine;
  std::istringstream in(state_.rng_state);
  in >> engine;
  if (!in) throw SchemaError("saved rng state is unreadable");
  const std::uint64_t seed = engine();
  std::ostringstream out;
  out << engine;
  state_.rng_state = out.str();
  return seed;
}

void Pipeline::preflight() {
  const auto& c = state_.config;
  for (const auto* e : {&c.teacher, &c.student_policy, &c.student_reference}) {
    client_.check_health(*e);
  }
}

std::optional<std::string> Pipeline::generate(
    const std::string& prompt, int attempts,
    const std::function<bool(const std::string&)>& accept, int& failures) {
  for (int a = 0; a < attempts; ++a) {
    try {
      const std::string text = client_.chat_complete(state_.config.teacher, std::nullopt, prompt);
      if (accept(text)) return text;
    } catch (const ParseError&) {
    } catch (const TransportError&) {
    } catch (const EndpointError&) {
    }
    ++failures;
  }
  return std::nullopt;
}

std::vector<store::Exercise> Pipeline::build_initial_dataset() {
  const PipelineConfig& cfg = state_.config;
  const prompts::GenerationSpec& spec = cfg.generation;
  if (spec.topics.empty()) throw ParameterError("topics", "at least one topic is required");
  if (spec.professions.empty()) {
    throw ParameterError("professions", "at least one profession is required");
  }
  if (spec.subtopics_per_topic < 1) {
    throw ParameterError("subtopics_per_topic", "subtopics_per_topic must be positive");
  }
  if (spec.exercises_per_subtopic < 1) {
    throw ParameterError("exercises_per_subtopic", "exercises_per_subtopic must be positive");
  }
  if (!(spec.natural_language_fraction >= 0.0 && spec.natural_language_fraction <= 1.0)) {
    throw ParameterError("natural_language_fraction",
                         "natural_language_fraction must lie in [0, 1]");
  }
  const int attempts = 1 + cfg.parse_retries;
  store::IterationCounters& ctr = counters(0);

  // Subtopics, one request per topic.
  std::vector<std::optional<std::vector<std::string>>> subtopics(spec.topics.size());
  std::vector<int> topic_failures(spec.topics.size(), 0);
  parallel_for(spec.topics.size(), cfg.teacher.max_concurrency, [&](std::size_t i) {
    const std::string prompt = prompts::render(
        prompts::TemplateId::Subtopics, {.n = spec.subtopics_per_topic, .topic = spec.topics[i]});
    std::vector<std::string> list;
    generate(prompt, attempts, [&](const std::string& text) {
      list = parser::parse_string_list(text);
      return true;
    }, topic_failures[i]);
    if (!list.empty()) {
      if (list.size() > static_cast<std::size_t>(spec.subtopics_per_topic)) {
        list.resize(static_cast<std::size_t>(spec.subtopics_per_topic));
      }
      subtopics[i] = std::move(list);
    }
  });

  struct Job {
    std::string topic;
    std::string subtopic;
    std::string profession;
    parser::ExerciseFormat format;
    std::vector<parser::ExerciseDraft> drafts;
    int failures = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < spec.topics.size(); ++i) {
    ctr.parse_failures += topic_failures[i];
    if (!subtopics[i]) {
      ++ctr.skipped_topics;
      note("topic '" + spec.topics[i] + "' skipped: no parseable subtopic list");
      continue;
    }
    for (const auto& sub : *subtopics[i]) {
      const std::size_t j = jobs.size();
      const double f = spec.natural_language_fraction;
      const bool nl = std::floor(static_cast<double>(j + 1) * f) > std::floor(static_cast<double>(j) * f);
      jobs.push_back({spec.topics[i], sub, spec.professions[j % spec.professions.size()],
                      nl ? parser::ExerciseFormat::NaturalLanguage
                         : parser::ExerciseFormat::CodeCompletion,
                      {}, 0});
    }
  }

  parallel_for(jobs.size(), cfg.teacher.max_concurrency, [&](std::size_t i) {
    Job& job = jobs[i];
    const bool nl = job.format == parser::ExerciseFormat::NaturalLanguage;
    const std::string prompt =
        prompts::render(nl ? prompts::TemplateId::InitialNaturalLanguage
                           : prompts::TemplateId::InitialCodeCompletion,
                        {.n = spec.exercises_per_subtopic,
                         .topic = job.subtopic,
                         .profession = job.profession});
    generate(prompt, attempts, [&](const std::string& text) {
      job.drafts = nl ? parser::parse_problem_blocks(text) : parser::parse_code_completion(text);
      return true;
    }, job.failures);
    if (job.drafts.size() > static_cast<std::size_t>(spec.exercises_per_subtopic)) {
      job.drafts.resize(static_cast<std::size_t>(spec.exercises_per_subtopic));
    }
  });

  std::vector<store::Exercise> stored;
  for (const Job& job : jobs) {
    ctr.parse_failures += job.failures;
    if (job.drafts.empty()) {
      ++ctr.skipped_subtopics;
      note("subtopic '" + job.subtopic + "' skipped after " + std::to_string(attempts) +
           " attempts");
      continue;
    }
    for (const auto& d : job.drafts) {
      store::Exercise e;
      e.prompt = d.prompt_text;
      e.solution = d.solution_text;
      e.format = d.format;
      e.topic = job.topic;
      e.subtopic = job.subtopic;
      e.profession = job.profession;
      e.strategy = prompts::Strategy::Seed;
      e.iteration = 0;
      const store::PutResult put = store_.put_exercise(std::move(e));
      if (put.duplicate) {
        ++ctr.duplicate_exercises;
      } else {
        stored.push_back(*store_.find_exercise(put.id));
      }
    }
  }
  if (stored.empty()) {
    throw PipelineError("initial dataset is empty: every topic and subtopic failed to generate");
  }
  return stored;
}

std::optional<store::PreferencePair> Pipeline::collect_pair(const store::Exercise& exercise,
                                                            store::IterationCounters& ctr) {
  const PipelineConfig& cfg = state_.config;
  std::string chosen;
  std::string rejected;
  try {
    chosen = clean_solution(
        client_.chat_complete(cfg.teacher, cfg.solve_system_prompt, exercise.prompt));
    rejected = clean_solution(
        client_.chat_complete(cfg.student_policy, cfg.solve_system_prompt, exercise.prompt));
  } catch (const TransportError&) {
    ++ctr.pair_failures;
    return std::nullopt;
  } catch (const EndpointError&) {
    ++ctr.pair_failures;
    return std::nullopt;
  }
  if (chosen.empty() || rejected.empty()) {
    ++ctr.pair_failures;
    return std::nullopt;
  }
  if (chosen == rejected) {
    ++ctr.duplicate_pairs;
    return std::nullopt;
  }
  store::PreferencePair p;
  p.exercise_id = exercise.exercise_id;
  p.prompt = exercise.prompt;
  p.chosen = std::move(chosen);
  p.rejected = std::move(rejected);
  p.iteration = exercise.iteration;
  p.teacher_model = cfg.teacher.model_name;
  p.student_model = cfg.student_policy.model_name;
  p.strategy = exercise.strategy;
  return p;
}

std::vector<store::PreferencePair> Pipeline::collect_pairs(int iteration) {
  const PipelineConfig& cfg = state_.config;
  const std::vector<store::Exercise> exercises = store_.exercises_for(iteration);
  std::vector<std::optional<store::PreferencePair>> results(exercises.size());
  std::vector<store::IterationCounters> local(exercises.size());
  parallel_for(exercises.size(), min_concurrency(cfg.teacher, cfg.student_policy),
               [&](std::size_t i) { results[i] = collect_pair(exercises[i], local[i]); });

  store::IterationCounters& ctr = counters(iteration);
  std::vector<store::PreferencePair> stored;
  for (std::size_t i = 0; i < results.size(); ++i) {
    ctr.pair_failures += local[i].pair_failures;
    ctr.duplicate_pairs += local[i].duplicate_pairs;
    if (!results[i]) continue;
    const store::PutResult put = store_.put_pair(std::move(*results[i]));
    if (put.duplicate) {
      ++ctr.duplicate_pairs;
    } else {
      stored.push_back(*store_.find_pair(put.id));
    }
  }
  return stored;
}

std::vector<store::MarginRecord> Pipeline::score_iteration(int iteration) {
  const PipelineConfig& cfg = state_.config;
  std::vector<store::PreferencePair> pairs;
  for (auto& p : store_.pairs_for(iteration)) {
    if (!store_.find_margin(p.pair_id)) pairs.push_back(std::move(p));
  }
  if (pairs.empty() && store_.pairs_for(iteration).empty()) {
    throw PipelineError("iteration " + std::to_string(iteration) +
                        " has no preference pairs to score");
  }

  std::vector<std::optional<store::MarginRecord>> results(pairs.size());
  std::vector<int> failures(pairs.size(), 0);
  parallel_for(pairs.size(), min_concurrency(cfg.student_policy, cfg.student_reference),
               [&](std::size_t i) {
    const store::PreferencePair& p = pairs[i];
    const std::string prompt = scoring_prompt(p.prompt);
    auto logprob = [&](const client::EndpointConfig& e, const std::string& completion) {
      const client::ScoredCompletion s = client_.score_completion(e, prompt, completion);
      return dpo::sequence_logprob(s.token_logprobs, cfg.dpo.aggregation);
    };
    try {
      store::MarginRecord m;
      m.pair_id = p.pair_id;
      m.iteration = p.iteration;
      m.policy_logprob_chosen = logprob(cfg.student_policy, p.chosen);
      m.policy_logprob_rejected = logprob(cfg.student_policy, p.rejected);
      m.reference_logprob_chosen = logprob(cfg.student_reference, p.chosen);
      m.reference_logprob_rejected = logprob(cfg.student_reference, p.rejected);
      const dpo::RewardPair rewards{
          dpo::sequence_reward(m.policy_logprob_chosen, m.reference_logprob_chosen, cfg.dpo),
          dpo::sequence_reward(m.policy_logprob_rejected, m.reference_logprob_rejected, cfg.dpo)};
      m.r_chosen = rewards.r_chosen;
      m.r_rejected = rewards.r_rejected;
      m.margin = dpo::margin(rewards);
      m.loss = dpo::dpo_loss(rewards);
      results[i] = std::move(m);
    } catch (const TransportError&) {
      ++failures[i];
    } catch (const EndpointError&) {
      ++failures[i];
    } catch (const AlignmentError&) {
      ++failures[i];
    }
  });

  store::IterationCounters& ctr = counters(iteration);
  std::vector<store::MarginRecord> stored;
  for (std::size_t i = 0; i < results.size(); ++i) {
    ctr.scoring_failures += failures[i];
    if (!results[i]) continue;
    store_.put_margin(*results[i]);
    stored.push_back(*results[i]);
  }
  return stored;
}

std::vector<store::Exercise> Pipeline::adversarial_step(int iteration, const AdversarialPlan& plan,
                                                        std::uint64_t rng_seed) {
  const PipelineConfig& cfg = state_.config;
  const std::vector<store::MarginRecord> pool = store_.margins_for(iteration);
  if (pool.empty()) {
    throw PipelineError("iteration " + std::to_string(iteration) +
                        " has no scored pairs to sample from");
  }
  const std::vector<store::SeedRecord> seeds = plan_adversarial_seeds(pool, plan, rng_seed);
  state_.seeds[iteration] = seeds;

  const int attempts = 1 + cfg.parse_retries;
  std::vector<std::vector<parser::ExerciseDraft>> drafts(seeds.size());
  std::vector<int> failures(seeds.size(), 0);
  parallel_for(seeds.size(), cfg.teacher.max_concurrency, [&](std::size_t i) {
    const store::PreferencePair* pair = store_.find_pair(seeds[i].pair_id);
    const std::string prompt = prompts::render(
        prompts::template_for(seeds[i].strategy),
        {.n = plan.children_per_seed, .reference = pair->prompt});
    generate(prompt, attempts, [&](const std::string& text) {
      drafts[i] = parser::parse_code_completion(text);
      return true;
    }, failures[i]);
    if (drafts[i].size() > static_cast<std::size_t>(plan.children_per_seed)) {
      drafts[i].resize(static_cast<std::size_t>(plan.children_per_seed));
    }
  });

  store::IterationCounters& ctr = counters(iteration + 1);
  std::vector<store::Exercise> stored;
  std::size_t generated = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    ctr.parse_failures += failures[i];
    // Copies: put_exercise may reallocate the store's record vectors.
    const store::PreferencePair pair = *store_.find_pair(seeds[i].pair_id);
    const store::Exercise parent = *store_.find_exercise(pair.exercise_id);
    for (const auto& d : drafts[i]) {
      ++generated;
      store::Exercise e;
      e.prompt = d.prompt_text;
      e.solution = d.solution_text;
      e.format = d.format;
      e.topic = parent.topic;
      e.subtopic = parent.subtopic;
      e.profession = parent.profession;
      e.strategy = seeds[i].strategy;
      e.parent_pair_id = pair.pair_id;
      e.parent_exercise_id = parent.exercise_id;
      e.iteration = iteration + 1;
      const store::PutResult put = store_.put_exercise(std::move(e));
      if (put.duplicate) {
        ++ctr.duplicate_exercises;
      } else {
        stored.push_back(*store_.find_exercise(put.id));
      }
    }
  }
  if (stored.empty()) {
    throw PipelineError("adversarial step for iteration " + std::to_string(iteration) +
                        " produced no new exercises: " + std::to_string(generated) +
                        " generated, " + std::to_string(ctr.duplicate_exercises) +
                        " duplicates of existing prompts, " + std::to_string(ctr.parse_failures) +
                        " failed generations");
  }
  return stored;
}

IterationReport Pipeline::report(int iteration) const {
  return build_report(store_, state_, iteration);
}

void Pipeline::write_report(int iteration) {
  const IterationReport r = report(iteration);
  const std::string text = report_to_json(r);
  fs::create_directories(store_.iteration_dir(iteration));
  store::write_file_atomic(store_.iteration_dir(iteration) / "report.json", text);
  if (out_) *out_ << text << report_table(r) << std::flush;
}

void Pipeline::export_iteration(int iteration) {
  const std::size_t n = store_.export_preferences_jsonl(iteration, store_.export_path(iteration));
  store_.write_training_manifest(iteration, store_.manifest_path(iteration), state_.config);
  note("iteration " + std::to_string(iteration) + ": exported " + std::to_string(n) + " pairs");
}

void Pipeline::wait_for_training(int iteration) {
  if (state_.config.no_train) return;
  const fs::path marker = store_.iteration_dir(iteration) / "TRAINED";
  note("waiting for " + marker.string());
  const auto deadline = std::chrono::steady_clock::now() + state_.config.train_timeout;
  while (!fs::exists(marker)) {
    if (std::chrono::steady_clock::now() >= deadline) {
      throw PipelineError("timed out waiting for training marker " + marker.string());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
}

void Pipeline::record_standalone_scoring(int iteration) {
  if (state_.iteration == iteration &&
      (state_.stage == Stage::Exported || state_.stage == Stage::Trained)) {
    write_report(iteration);
    advance(Stage::Scored, iteration);
  }
}

const store::CurriculumState& Pipeline::run(const RunOptions& options) {
  if (state_.stage == Stage::Complete) return state_;
  if (state_.config.preflight) preflight();

  auto halt = [&] {
    return options.halt_after && options.halt_after->first == state_.stage &&
           options.halt_after->second == state_.iteration;
  };
  if (halt()) return state_;

  while (state_.stage != Stage::Complete) {
    const int t = state_.iteration;
    switch (state_.stage) {
      case Stage::New:
        build_initial_dataset();
        advance(Stage::Dataset, 0);
        break;
      case Stage::Dataset:
        collect_pairs(t);
        if (store_.pairs_for(t).empty()) {
          throw PipelineError("iteration " + std::to_string(t) + " produced no preference pairs");
        }
        advance(Stage::Pairs, t);
        break;
      case Stage::Pairs:
        export_iteration(t);
        advance(Stage::Exported, t);
        break;
      case Stage::Exported:
        wait_for_training(t);
        advance(Stage::Trained, t);
        break;
      case Stage::Trained:
        score_iteration(t);
        if (store_.margins_for(t).empty()) {
          throw PipelineError("iteration " + std::to_string(t) + " has no scored pairs");
        }
        advance(Stage::Scored, t);
        break;
      case Stage::Scored:
        if (t + 1 < state_.repetitions) {
          adversarial_step(t, state_.config.adversarial, draw_seed());
          write_report(t);
          advance(Stage::Dataset, t + 1);
        } else {
          write_report(t);
          advance(Stage::Complete, t);
        }
        break;
      case Stage::Complete:
        break;
    }
    if (halt()) break;
  }
  return state_;
}

}  // namespace advkd::curriculum
