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

#include "advkd/parser.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_support.hpp"

namespace advkd::parser {
namespace {

namespace fs = std::filesystem;
using advkd::testing::data_dir;
using advkd::testing::read_file;

std::vector<fs::path> fixtures() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(data_dir() / "parser")) {
    if (e.path().extension() == ".txt") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TEST(ParserCorpus, HasEnoughLabeledFixturesInEveryCategory) {
  std::set<std::string> categories;
  for (const auto& f : fixtures()) {
    fs::path label = f;
    label.replace_extension(".json");
    ASSERT_TRUE(fs::exists(label)) << label;
    categories.insert(nlohmann::json::parse(read_file(label)).at("category").get<std::string>());
  }
  EXPECT_GE(fixtures().size(), 20u);
  for (const char* c : {"clean", "fenced", "prose", "malformed", "duplicate", "class-containing"}) {
    EXPECT_TRUE(categories.count(c)) << c;
  }
}

class CorpusTest : public ::testing::TestWithParam<fs::path> {};

TEST_P(CorpusTest, MatchesLabel) {
  const fs::path path = GetParam();
  const std::string raw = read_file(path);
  fs::path label_path = path;
  label_path.replace_extension(".json");
  const auto label = nlohmann::json::parse(read_file(label_path));
  const std::string kind = label.at("parser").get<std::string>();
  const bool expect_error = label.at("expect_error").get<bool>();

  if (kind == "string_list") {
    if (expect_error) {
      EXPECT_THROW(parse_string_list(raw), ParseError);
      return;
    }
    EXPECT_EQ(parse_string_list(raw), label.at("items").get<std::vector<std::string>>());
    return;
  }

  auto run = [&] {
    return kind == "problem_blocks" ? parse_problem_blocks(raw) : parse_code_completion(raw);
  };
  if (expect_error) {
    EXPECT_THROW(run(), ParseError);
    return;
  }
  const auto drafts = run();
  const auto& expected = label.at("drafts");
  ASSERT_EQ(drafts.size(), expected.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const auto& d = drafts[i];
    EXPECT_EQ(d.prompt_text, expected[i].at("prompt").get<std::string>()) << "draft " << i;
    if (expected[i].at("solution").is_null()) {
      EXPECT_FALSE(d.solution_text.has_value()) << "draft " << i;
      EXPECT_FALSE(d.solution_span.has_value());
    } else {
      ASSERT_TRUE(d.solution_text.has_value()) << "draft " << i;
      EXPECT_EQ(*d.solution_text, expected[i].at("solution").get<std::string>()) << "draft " << i;
    }
    // Re-slicing the raw text reproduces the extracted fields.
    EXPECT_EQ(d.source_span.slice(raw), d.prompt_text);
    if (d.solution_span) EXPECT_EQ(d.solution_span->slice(raw), *d.solution_text);
    EXPECT_EQ(d.format, kind == "problem_blocks" ? ExerciseFormat::NaturalLanguage
                                                 : ExerciseFormat::CodeCompletion);
  }
}

INSTANTIATE_TEST_SUITE_P(Fixtures, CorpusTest, ::testing::ValuesIn(fixtures()),
                         [](const auto& info) { return info.param.stem().string(); });

TEST(ParseError, CarriesExcerpt) {
  const std::string raw(500, 'x');
  try {
    parse_code_completion(raw);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_LE(e.excerpt().size(), 123u);
    EXPECT_EQ(e.excerpt().substr(0, 5), "xxxxx");
  }
}

TEST(DedupeKey, IgnoresCaseAndWhitespaceRuns) {
  EXPECT_EQ(dedupe_key("def F(x):\n    \"\"\"Doc.\"\"\""), dedupe_key("def f(x): \"\"\"doc.\"\"\"  "));
  EXPECT_NE(dedupe_key("def f(x):"), dedupe_key("def g(x):"));
  EXPECT_EQ(dedupe_key("abc").size(), 16u);
}

TEST(Formats, NamesRoundTrip) {
  for (auto f : {ExerciseFormat::CodeCompletion, ExerciseFormat::NaturalLanguage}) {
    EXPECT_EQ(format_from_name(format_name(f)), f);
  }
}

}  // namespace
}  // namespace advkd::parser
