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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advkd/cli.hpp"
#include "advkd/config.hpp"
#include "advkd/curriculum.hpp"
#include "advkd/dpo_math.hpp"
#include "advkd/mock_server.hpp"
#include "advkd/parser.hpp"
#include "advkd/prompts.hpp"
#include "advkd/store.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace advkd;
using nlohmann::json;
using testing::read_file;
using testing::snapshot;
using testing::TempDir;
using Clock = std::chrono::steady_clock;

struct Failure {
  std::string what;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// log(1 + e^x) in long double, written directly.
long double softplus_ref(long double x) { return ::log1pl(::expl(x)); }

void dpo_math_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20260101);
  std::uniform_real_distribution<double> reward(-50.0, 50.0);
  for (int i = 0; i < 10000; ++i) {
    const dpo::RewardPair p{reward(rng), reward(rng)};
    const double got = dpo::dpo_loss(p);
    const auto want = static_cast<double>(
        softplus_ref(static_cast<long double>(p.r_rejected) - static_cast<long double>(p.r_chosen)));
    require(std::fabs(got - want) <= 1e-12, "loss mismatch at pair " + std::to_string(i));
    require(dpo::margin(p) == p.r_chosen - p.r_rejected, "margin mismatch");
  }
  const double ln2 = static_cast<double>(::logl(2.0L));
  for (int i = 0; i < 100; ++i) {
    const double r = reward(rng);
    require(std::fabs(dpo::dpo_loss({r, r}) - ln2) <= 1e-12, "loss(R, R) != ln 2");
  }
  const double t = seconds_since(start);
  require(t < 1.0, "took " + std::to_string(t) + " s");
}

void softmax_properties() {
  const auto start = Clock::now();
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> length(1, 256);
  std::uniform_real_distribution<double> value(-50.0, 50.0);
  std::uniform_real_distribution<double> shift(-1e4, 1e4);
  auto pool = [](std::vector<double> m) {
    dpo::MarginVector v;
    for (std::size_t i = 0; i < m.size(); ++i) v.pool_ids.push_back(std::to_string(i));
    v.margins = std::move(m);
    return v;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> base(static_cast<std::size_t>(length(rng)));
    for (double& x : base) x = value(rng);
    const double c = shift(rng);
    std::vector<double> moved = base;
    for (double& x : moved) x += c;
    const auto a = dpo::sampling_weights(pool(base)).probabilities;
    const auto b = dpo::sampling_weights(pool(moved)).probabilities;
    const double sum = std::accumulate(a.begin(), a.end(), 0.0);
    require(std::fabs(sum - 1.0) <= 1e-9, "probabilities sum to " + std::to_string(sum));
    require(std::fabs(std::accumulate(b.begin(), b.end(), 0.0) - 1.0) <= 1e-9,
            "shifted probabilities do not sum to 1");
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return base[x] < base[y]; });
    for (std::size_t i = 0; i < base.size(); ++i) {
      require(std::fabs(a[i] - b[i]) <= 1e-9, "shift changed a probability");
    }
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (base[order[i - 1]] < base[order[i]]) {
        require(a[order[i - 1]] > a[order[i]], "lower margin did not get higher probability");
      }
    }
  }
  const double t = seconds_since(start);
  require(t < 5.0, "took " + std::to_string(t) + " s");
}

void sampling_oracle() {
  const auto start = Clock::now();
  dpo::MarginVector v;
  v.margins = {0.0, std::log(2.0)};
  v.pool_ids = {"a", "b"};
  dpo::SamplingPlan plan = dpo::sampling_weights(v);
  plan.k = 1;
  const int n = 100000;
  int hits = 0;
  for (int s = 0; s < n; ++s) hits += dpo::sample_seeds(plan, static_cast<std::uint64_t>(s))[0] == "a";
  const double freq = static_cast<double>(hits) / n;
  require(std::fabs(freq - 2.0 / 3.0) <= 0.005, "frequency " + std::to_string(freq));
  const double t = seconds_since(start);
  require(t < 5.0, "took " + std::to_string(t) + " s");
}

std::vector<mock::SkillProfile> closed_form_profiles() {
  return mock::load_profiles(testing::data_dir() / "profiles" / "closed_form.json");
}

PipelineConfig mock_config(const mock::MockServer& server) {
  PipelineConfig c;
  c.generation.topics = {"Strings", "Sorting", "Recursion"};
  c.generation.professions = {"Chef", "Nurse", "Farmer"};
  c.generation.subtopics_per_topic = 3;
  c.generation.exercises_per_subtopic = 4;
  c.generation.natural_language_fraction = 0.2;
  for (auto* e : {&c.teacher, &c.student_policy, &c.student_reference}) {
    e->base_url = server.base_url();
    e->max_retries = 0;
  }
  return c;
}

std::size_t whitespace_count(const std::string& s) { return mock::whitespace_tokens(s).size(); }

void margin_closed_form() {
  mock::MockServer server(closed_form_profiles());
  server.start();
  TempDir dir("advkd-accept");
  PipelineConfig cfg = mock_config(server);
  cfg.repetitions = 2;
  client::ModelClient client;
  curriculum::Pipeline pipeline(dir.path(), cfg, client, false);
  pipeline.run();

  const double policy_pt = -0.25, reference_pt = -0.5, beta = cfg.dpo.beta;
  const auto& rs = pipeline.run_store();
  require(!rs.margins().empty(), "no margin records");
  require(rs.margins().size() == rs.pairs().size(), "not every pair was scored");
  for (const auto& m : rs.margins()) {
    const auto* pair = rs.find_pair(m.pair_id);
    require(pair != nullptr, "margin without pair");
    const double nc = static_cast<double>(whitespace_count(pair->chosen));
    const double nr = static_cast<double>(whitespace_count(pair->rejected));
    const double expected =
        beta * ((policy_pt * nc - reference_pt * nc) - (policy_pt * nr - reference_pt * nr));
    require(std::fabs(m.margin - expected) <= 1e-9,
            m.pair_id + ": margin " + std::to_string(m.margin) + " != " + std::to_string(expected));
  }
}

std::string lower_name(prompts::TemplateId id) {
  std::string name(prompts::template_name(id));
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return name;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

void template_fidelity() {
  const int n = 918273645;
  const prompts::PromptParams params{n, "\x01TOPIC\x01", "\x01PROFESSION\x01", "\x01REFERENCE\x01"};
  for (prompts::TemplateId id : prompts::kAllTemplates) {
    const std::string golden = read_file(testing::data_dir() / "templates" / (lower_name(id) + ".txt"));
    require(!golden.empty(), "missing golden text for " + lower_name(id));
    require(std::string(prompts::template_text(id)) == golden, lower_name(id) + " text differs");
    std::string out = prompts::render(id, params);
    replace_all(out, std::to_string(n), "{n}");
    replace_all(out, "\x01TOPIC\x01", "{topic}");
    replace_all(out, "\x01PROFESSION\x01", "{profession}");
    replace_all(out, "\x01REFERENCE\x01", "{reference}");
    require(out == golden, lower_name(id) + " render does not round-trip");
  }
}

void parser_corpus() {
  std::vector<fs::path> fixtures;
  for (const auto& e : fs::directory_iterator(testing::data_dir() / "parser")) {
    if (e.path().extension() == ".txt") fixtures.push_back(e.path());
  }
  std::sort(fixtures.begin(), fixtures.end());
  require(fixtures.size() >= 20, "only " + std::to_string(fixtures.size()) + " fixtures");
  std::set<std::string> categories;
  for (const auto& path : fixtures) {
    const std::string name = path.stem().string();
    const std::string raw = read_file(path);
    fs::path label_path = path;
    label_path.replace_extension(".json");
    const json label = json::parse(read_file(label_path));
    categories.insert(label.at("category").get<std::string>());
    const std::string kind = label.at("parser").get<std::string>();
    const bool expect_error = label.at("expect_error").get<bool>();

    if (kind == "string_list") {
      try {
        const auto items = parser::parse_string_list(raw);
        require(!expect_error, name + ": expected a parse error");
        require(items == label.at("items").get<std::vector<std::string>>(), name + ": items differ");
      } catch (const ParseError&) {
        require(expect_error, name + ": unexpected parse error");
      }
      continue;
    }
    std::vector<parser::ExerciseDraft> drafts;
    try {
      drafts = kind == "problem_blocks" ? parser::parse_problem_blocks(raw)
                                        : parser::parse_code_completion(raw);
      require(!expect_error, name + ": expected a parse error");
    } catch (const ParseError&) {
      require(expect_error, name + ": unexpected parse error");
      continue;
    }
    const json& expected = label.at("drafts");
    require(drafts.size() == expected.size(), name + ": draft count differs");
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      const auto& d = drafts[i];
      const std::string where = name + " draft " + std::to_string(i);
      require(d.prompt_text == expected[i].at("prompt").get<std::string>(), where + ": prompt differs");
      if (expected[i].at("solution").is_null()) {
        require(!d.solution_text && !d.solution_span, where + ": unexpected solution");
      } else {
        require(d.solution_text && *d.solution_text == expected[i].at("solution").get<std::string>(),
                where + ": solution differs");
      }
      require(d.source_span.slice(raw) == d.prompt_text, where + ": source span does not re-slice");
      if (d.solution_span) {
        require(d.solution_span->slice(raw) == *d.solution_text, where + ": solution span does not re-slice");
      }
    }
  }
  for (const char* c : {"clean", "fenced", "prose", "malformed", "duplicate", "class-containing"}) {
    require(categories.count(c) > 0, std::string("no fixture in category ") + c);
  }
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "advkd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

void write_config(const fs::path& dir, const mock::MockServer& server) {
  fs::create_directories(dir);
  testing::write_file(dir / "config.json", config_to_json(mock_config(server)));
}

using Snapshot = std::map<std::string, std::string>;

void check_lineage(const fs::path& dir) {
  const auto state = store::load_state(dir / "state.json");
  const auto rs = store::RunStore::open(dir);
  for (int t = 1; t < 3; ++t) {
    const auto& seeds = state.seeds.at(t - 1);
    const auto children = rs.exercises_for(t);
    require(!children.empty(), "iteration " + std::to_string(t) + " has no exercises");
    for (const auto& e : children) {
      require(e.strategy != prompts::Strategy::Seed, e.exercise_id + ": seed strategy");
      require(e.parent_pair_id.has_value(), e.exercise_id + ": no parent pair");
      const auto* pair = rs.find_pair(*e.parent_pair_id);
      require(pair != nullptr, e.exercise_id + ": parent pair missing");
      require(pair->iteration == t - 1, e.exercise_id + ": parent from wrong iteration");
      require(e.parent_exercise_id == pair->exercise_id, e.exercise_id + ": parent exercise mismatch");
      require(rs.find_margin(pair->pair_id) != nullptr, e.exercise_id + ": parent was not scored");
      const auto seed = std::find_if(seeds.begin(), seeds.end(),
                                     [&](const auto& s) { return s.pair_id == pair->pair_id; });
      require(seed != seeds.end(), e.exercise_id + ": parent was not a sampled seed");
      require(seed->strategy == e.strategy, e.exercise_id + ": strategy differs from seed");
    }
  }
}

void end_to_end_determinism() {
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  mock::MockServer server(closed_form_profiles());
  server.start();
  TempDir root("advkd-accept");
  const std::vector<std::string> args = {"run", "--repetitions", "3", "--no-train", "--seed", "7"};
  auto run_in = [&](const fs::path& dir, std::vector<std::string> extra = {}) {
    std::vector<std::string> a = {"--dir", dir.string()};
    a.insert(a.end(), args.begin(), args.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return cli(a);
  };

  const fs::path first = root / "first";
  write_config(first, server);
  const auto start = Clock::now();
  require(run_in(first) == 0, "first run failed");
  const double t = seconds_since(start);
  require(t < 60.0, "run took " + std::to_string(t) + " s");

  std::size_t cumulative = 0;
  for (int i = 0; i < 3; ++i) {
    const fs::path exp = first / ("iter_" + std::to_string(i)) / "preferences.jsonl";
    require(fs::exists(exp), "missing export " + exp.string());
    const std::size_t next = cumulative + store::read_preferences_jsonl(exp).size();
    require(next > cumulative, "cumulative dataset did not grow at iteration " + std::to_string(i));
    cumulative = next;
  }
  require(!fs::exists(first / "iter_3"), "unexpected fourth iteration");
  check_lineage(first);
  const Snapshot reference = snapshot(first);

  server.reset();
  const fs::path second = root / "second";
  write_config(second, server);
  require(run_in(second) == 0, "repeat run failed");
  require(snapshot(second) == reference, "repeat run differs");

  std::vector<std::string> boundaries;
  for (int i = 0; i < 3; ++i) {
    for (const char* s : {"dataset", "pairs", "exported", "trained", "scored"}) {
      boundaries.push_back(std::string(s) + ":" + std::to_string(i));
    }
  }
  for (const auto& b : boundaries) {
    server.reset();
    const fs::path dir = root / ("crash_" + b.substr(0, b.find(':')) + "_" + b.substr(b.find(':') + 1));
    write_config(dir, server);
    require(run_in(dir, {"--halt-after", b}) == 0, "halted run " + b + " failed");
    // A write cut short by the crash.
    for (const char* f : {"exercises.jsonl", "pairs.jsonl", "margins.jsonl"}) {
      std::ofstream(dir / f, std::ios::app) << "{\"partial\": tru";
    }
    require(run_in(dir, {"--resume"}) == 0, "resume after " + b + " failed");
    require(snapshot(dir) == reference, "resume after " + b + " differs");
  }
}

void export_round_trip() {
  mock::MockServer server(closed_form_profiles());
  server.start();
  TempDir dir("advkd-accept");
  write_config(dir.path(), server);
  require(cli({"--dir", dir.path().string(), "run", "--repetitions", "2", "--no-train"}) == 0,
          "run failed");
  const auto rs = store::RunStore::open(dir.path());
  std::vector<store::PreferenceTriple> all;
  for (int t = 0; t < 2; ++t) {
    const auto back = store::read_preferences_jsonl(rs.export_path(t));
    std::vector<store::PreferenceTriple> expected;
    for (const auto& p : rs.pairs_for(t)) expected.push_back({p.prompt, p.chosen, p.rejected});
    require(back == expected, "iteration " + std::to_string(t) + " export differs from the store");
    all.insert(all.end(), expected.begin(), expected.end());

    const json m = json::parse(read_file(rs.manifest_path(t)));
    const json& tr = m.at("training");
    const json& lora = m.at("lora");
    require(tr.at("steps") == 150, "steps");
    require(tr.at("per_device_train_batch_size") == 4, "batch size");
    require(tr.at("learning_rate").get<double>() == 5e-6, "learning rate");
    require(tr.at("beta").get<double>() == 0.01, "beta");
    require(lora.at("r") == 16, "lora r");
    require(lora.at("alpha") == 32, "lora alpha");
    require(lora.at("dropout").get<double>() == 0.05, "lora dropout");
    require(m.at("dataset_records") == expected.size(), "dataset_records");
    const fs::path base = rs.manifest_path(t).parent_path();
    require(fs::exists(base / m.at("dataset_path").get<std::string>()), "dataset_path does not resolve");
  }
  const fs::path out = dir / "all.jsonl";
  require(cli({"--dir", dir.path().string(), "export", "--all", "--out", out.string()}) == 0,
          "export --all failed");
  require(store::read_preferences_jsonl(out) == all, "export --all differs from the store");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void()>>> checks = {
      {"dpo-math-oracle", dpo_math_oracle},
      {"softmax-properties", softmax_properties},
      {"sampling-oracle", sampling_oracle},
      {"margin-closed-form", margin_closed_form},
      {"template-fidelity", template_fidelity},
      {"parser-corpus", parser_corpus},
      {"end-to-end-determinism", end_to_end_determinism},
      {"export-round-trip", export_round_trip},
  };
  int failed = 0;
  for (const auto& [name, check] : checks) {
    try {
      check();
      std::printf("PASS %s\n", name.c_str());
    } catch (const Failure& f) {
      std::printf("FAIL %s: %s\n", name.c_str(), f.what.c_str());
      ++failed;
    } catch (const std::exception& e) {
      std::printf("FAIL %s: %s\n", name.c_str(), e.what());
      ++failed;
    }
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
