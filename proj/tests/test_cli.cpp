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

#include "advkd/cli.hpp"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "advkd/dpo_math.hpp"
#include "advkd/mock_server.hpp"
#include "advkd/store.hpp"
#include "test_support.hpp"

namespace advkd::cli {
namespace {

using testing::TempDir;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "advkd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_mock_config(const std::filesystem::path& dir, const mock::MockServer& server) {
  PipelineConfig c;
  c.generation.topics = {"Strings", "Sorting"};
  c.generation.professions = {"Chef"};
  c.generation.subtopics_per_topic = 2;
  c.generation.exercises_per_subtopic = 3;
  for (auto* e : {&c.teacher, &c.student_policy, &c.student_reference}) {
    e->base_url = server.base_url();
    e->max_retries = 0;
  }
  std::filesystem::create_directories(dir);
  testing::write_file(dir / "config.json", config_to_json(c));
}

TEST(Cli, InitWritesLoadableConfig) {
  TempDir dir;
  const auto target = (dir / "run").string();
  const auto r = run({"init", target});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const PipelineConfig c = load_config(dir / "run" / "config.json");
  EXPECT_EQ(c.repetitions, 5);
  EXPECT_EQ(c.training.steps, 150);
  EXPECT_EQ(run({"init", target}).code, kExitValidation);
  EXPECT_EQ(run({"init", target, "--force"}).code, kExitOk);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kExitValidation);
  EXPECT_EQ(run({"run", "--bogus"}).code, kExitValidation);
  EXPECT_EQ(run({"run", "--train", "--no-train"}).code, kExitValidation);
  EXPECT_EQ(run({"export", "--out", "x.jsonl"}).code, kExitValidation);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, ExportBeforeGenerationFails) {
  TempDir dir;
  const auto r = run({"--dir", dir.path().string(), "export", "--iteration", "0", "--out",
                      (dir / "out.jsonl").string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("no run"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "out.jsonl"));
}

TEST(Cli, SamplePrintsSoftmaxProbabilities) {
  TempDir dir;
  store::save_state(store::make_initial_state(PipelineConfig{}), dir / "state.json");
  {
    auto s = store::RunStore::open(dir.path());
    for (int i = 0; i < 2; ++i) {
      store::Exercise e;
      e.prompt = "def f" + std::to_string(i) + "():\n    \"\"\"Doc.\"\"\"\n";
      const auto id = s.put_exercise(e).id;
      store::PreferencePair p;
      p.exercise_id = id;
      p.prompt = e.prompt;
      p.chosen = "return 1";
      p.rejected = "return 2";
      const auto pid = s.put_pair(p).id;
      store::MarginRecord m;
      m.pair_id = pid;
      m.r_chosen = i == 0 ? 0.0 : std::log(2.0);
      m.margin = dpo::margin({m.r_chosen, 0.0});
      m.loss = dpo::dpo_loss({m.r_chosen, 0.0});
      s.put_margin(m);
    }
  }
  const auto r = run({"--dir", dir.path().string(), "sample", "--iteration", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("pair-000001"), std::string::npos);
  EXPECT_NE(r.out.find("0.6667"), std::string::npos);
  EXPECT_NE(r.out.find("0.3333"), std::string::npos);
  EXPECT_LT(r.out.find("0.6667"), r.out.find("0.3333"));

  const auto j = run({"--dir", dir.path().string(), "sample", "--iteration", "0", "--k", "2",
                      "--seed", "5", "--json"});
  ASSERT_EQ(j.code, kExitOk) << j.err;
  const auto doc = nlohmann::json::parse(j.out);
  EXPECT_NEAR(doc.at("pool").at(0).at("probability").get<double>(), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(doc.at("sampled").size(), 2u);
  EXPECT_EQ(run({"--dir", dir.path().string(), "sample", "--iteration", "0", "--k", "3"}).code,
            kExitValidation);
}

TEST(Cli, RunOneRepetitionThenExportAndReport) {
  mock::MockServer server(mock::load_profiles(testing::data_dir() / "profiles" / "closed_form.json"));
  server.start();
  TempDir dir;
  write_mock_config(dir.path(), server);
  const std::string d = dir.path().string();

  const auto r = run({"--dir", d, "run", "--repetitions", "1", "--no-train", "--seed", "7"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "iter_0" / "preferences.jsonl"));
  EXPECT_FALSE(std::filesystem::exists(dir / "iter_1"));
  EXPECT_TRUE(std::filesystem::exists(dir / "effective_config.json"));
  EXPECT_NE(r.out.find("\"margins_scored\""), std::string::npos);

  const auto again = run({"--dir", d, "run", "--repetitions", "1"});
  EXPECT_EQ(again.code, kExitValidation);

  const auto out = (dir / "all.jsonl").string();
  const auto e = run({"--dir", d, "export", "--all", "--out", out});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  EXPECT_EQ(testing::read_file(out), testing::read_file(dir / "iter_0" / "preferences.jsonl"));
  EXPECT_EQ(run({"--dir", d, "export", "--iteration", "4", "--out", out}).code, kExitValidation);

  const auto rep = run({"--dir", d, "report", "--iteration", "0", "--json"});
  ASSERT_EQ(rep.code, kExitOk) << rep.err;
  EXPECT_EQ(nlohmann::json::parse(rep.out).at("iteration"), 0);
  EXPECT_EQ(run({"--dir", d, "report", "--iteration", "3"}).code, kExitValidation);

  const auto more = run({"--dir", d, "run", "--resume", "--repetitions", "2"});
  ASSERT_EQ(more.code, kExitOk) << more.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "iter_1" / "preferences.jsonl"));
}

TEST(Cli, StandaloneScoreAfterExport) {
  mock::MockServer server(mock::load_profiles(testing::data_dir() / "profiles" / "closed_form.json"));
  server.start();
  TempDir dir;
  write_mock_config(dir.path(), server);
  const std::string d = dir.path().string();
  ASSERT_EQ(run({"--dir", d, "run", "--repetitions", "1", "--halt-after", "exported:0"}).code,
            kExitOk);
  const auto s = run({"--dir", d, "score", "--iteration", "0"});
  ASSERT_EQ(s.code, kExitOk) << s.err;
  EXPECT_NE(s.out.find("scored 12 pairs"), std::string::npos);
  EXPECT_EQ(store::load_state(dir / "state.json").stage, store::Stage::Scored);
  ASSERT_EQ(run({"--dir", d, "run", "--resume"}).code, kExitOk);
  EXPECT_EQ(store::load_state(dir / "state.json").stage, store::Stage::Complete);
}

TEST(Cli, UnreachableEndpointExitsThree) {
  mock::MockServer server(mock::load_profiles(testing::data_dir() / "profiles" / "closed_form.json"));
  server.start();
  TempDir dir;
  write_mock_config(dir.path(), server);
  server.stop();
  const auto r = run({"--dir", dir.path().string(), "run", "--repetitions", "1"});
  EXPECT_EQ(r.code, kExitPipeline);
  EXPECT_NE(r.err.find("pipeline error"), std::string::npos);
}

}  // namespace
}  // namespace advkd::cli
