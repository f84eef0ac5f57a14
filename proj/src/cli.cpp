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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "advkd/config.hpp"
#include "advkd/curriculum.hpp"
#include "advkd/dpo_math.hpp"
#include "advkd/errors.hpp"
#include "advkd/mock_server.hpp"
#include "advkd/model_client.hpp"
#include "advkd/store.hpp"

namespace advkd::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::string dir = ".";
  std::string config_path;
};

struct RunFlags {
  std::optional<int> repetitions;
  bool no_train = false;
  bool train = false;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::string halt_after;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

store::CurriculumState require_state(const fs::path& dir) {
  const fs::path path = dir / "state.json";
  if (!fs::exists(path)) {
    throw NotFoundError(dir.string() + " holds no run; start one with `advkd run`");
  }
  return store::load_state(path);
}

// Precedence: flags, then the config file, then built-in defaults. A resumed
// run starts from its saved config unless --config names a file.
PipelineConfig effective_config(const Globals& g, const RunFlags& flags, bool from_state) {
  const fs::path dir = g.dir;
  PipelineConfig config;
  if (!g.config_path.empty()) {
    config = load_config(g.config_path);
  } else if (from_state) {
    config = require_state(dir).config;
  } else if (fs::exists(dir / "config.json")) {
    config = load_config(dir / "config.json");
  }
  if (flags.repetitions) config.repetitions = *flags.repetitions;
  if (flags.seed) config.rng_seed = *flags.seed;
  if (flags.no_train) config.no_train = true;
  if (flags.train) config.no_train = false;
  if (config.repetitions < 1) throw ParameterError("repetitions", "repetitions must be at least 1");
  return config;
}

std::optional<std::pair<store::Stage, int>> parse_halt(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const std::size_t colon = text.find(':');
  const store::Stage stage = store::stage_from_name(text.substr(0, colon));
  int iteration = 0;
  if (colon != std::string::npos) {
    try {
      iteration = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ParameterError("halt-after", "expected <stage>[:<iteration>]");
    }
  }
  return std::make_pair(stage, iteration);
}

void echo_config(const fs::path& dir, const PipelineConfig& config) {
  store::write_file_atomic(dir / "effective_config.json", config_to_json(config));
}

int cmd_init(const std::string& dir, bool force, std::ostream& out) {
  const fs::path path = fs::path(dir) / "config.json";
  if (fs::exists(path) && !force) {
    throw ValidationError("dir", path.string() + " exists; pass --force to overwrite");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  store::write_file_atomic(path, default_config_text());
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

int cmd_run(const Globals& g, const RunFlags& flags, bool generate_only, std::ostream& out,
            std::ostream& err) {
  const PipelineConfig config = effective_config(g, flags, flags.resume);
  fs::create_directories(g.dir);
  client::ModelClient client;
  curriculum::Pipeline pipeline(g.dir, config, client, flags.resume);
  pipeline.set_output(&out, &err);
  echo_config(g.dir, config);
  curriculum::RunOptions options;
  options.halt_after = generate_only ? std::make_optional(std::make_pair(store::Stage::Dataset, 0))
                                     : parse_halt(flags.halt_after);
  const store::CurriculumState& state = pipeline.run(options);
  const store::RecordCounts counts = pipeline.run_store().counts();
  err << "run " << state.run_id << ": stage " << store::stage_name(state.stage) << ", iteration "
      << state.iteration << ", " << counts.exercises << " exercises, " << counts.pairs
      << " pairs, " << counts.margins << " margins\n";
  return kExitOk;
}

int cmd_score(const Globals& g, int iteration, std::ostream& out, std::ostream& err) {
  const PipelineConfig config = effective_config(g, {}, true);
  client::ModelClient client;
  curriculum::Pipeline pipeline(g.dir, config, client, true);
  pipeline.set_output(nullptr, &err);
  const auto scored = pipeline.score_iteration(iteration);
  pipeline.record_standalone_scoring(iteration);
  const curriculum::IterationReport report = pipeline.report(iteration);
  out << "scored " << scored.size() << " pairs\n" << curriculum::report_table(report);
  return kExitOk;
}

int cmd_sample(const Globals& g, int iteration, std::optional<std::size_t> k,
               std::optional<std::uint64_t> seed, bool as_json, std::ostream& out) {
  const store::CurriculumState state = require_state(g.dir);
  const store::RunStore rs = store::RunStore::open(g.dir);
  const auto records = rs.margins_for(iteration);
  if (records.empty()) {
    throw DomainError("iteration " + std::to_string(iteration) + " has no margin records");
  }
  dpo::MarginVector margins;
  for (const auto& r : records) {
    margins.margins.push_back(r.margin);
    margins.pool_ids.push_back(r.pair_id);
  }
  dpo::SamplingPlan plan = dpo::sampling_weights(margins);
  std::vector<std::string> drawn;
  if (k) {
    plan.k = *k;
    drawn = dpo::sample_seeds(plan, seed.value_or(state.rng_seed));
  }
  if (as_json) {
    json pool = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
      pool.push_back({{"pair_id", records[i].pair_id},
                      {"margin", records[i].margin},
                      {"probability", plan.probabilities[i]}});
    }
    json doc = {{"iteration", iteration}, {"pool", pool}, {"sampled", drawn}};
    out << doc.dump(2) << "\n";
    return kExitOk;
  }
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %14s %12s\n", "pair_id", "margin", "probability");
  out << line;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::snprintf(line, sizeof line, "%-16s %14.6f %12.4f\n", records[i].pair_id.c_str(),
                  records[i].margin, plan.probabilities[i]);
    out << line;
  }
  if (k) {
    out << "sampled:";
    for (const auto& id : drawn) out << ' ' << id;
    out << "\n";
  }
  return kExitOk;
}

int cmd_export(const Globals& g, std::optional<int> iteration, const std::string& path,
               std::ostream& out) {
  require_state(g.dir);
  const store::RunStore rs = store::RunStore::open(g.dir);
  const std::size_t n = rs.export_preferences_jsonl(iteration, path);
  out << "exported " << n << " pairs to " << path << "\n";
  return kExitOk;
}

int cmd_report(const Globals& g, int iteration, bool as_json, std::ostream& out) {
  const store::CurriculumState state = require_state(g.dir);
  const store::RunStore rs = store::RunStore::open(g.dir);
  const fs::path saved = rs.iteration_dir(iteration) / "report.json";
  curriculum::IterationReport report;
  if (fs::exists(saved)) {
    report = curriculum::report_from_json(read_text(saved));
  } else {
    if (iteration < 0 || iteration > state.iteration) {
      throw NotFoundError("iteration " + std::to_string(iteration) + " has not run");
    }
    report = curriculum::build_report(rs, state, iteration);
  }
  out << (as_json ? curriculum::report_to_json(report) : curriculum::report_table(report));
  return kExitOk;
}

int cmd_mock_serve(const std::string& profiles, int port, const std::string& host,
                   std::ostream& err) {
  mock::MockServer server(mock::load_profiles(profiles));
  err << "mock server listening on " << host << ":" << port << "\n" << std::flush;
  server.listen_blocking(port, host);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial distillation pipeline for code models", "advkd"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Globals g;
  app.add_option("--dir", g.dir, "Run directory")->capture_default_str();
  app.add_option("--config", g.config_path, "Config file (default: <dir>/config.json)");

  std::string init_dir;
  bool force = false;
  auto* init = app.add_subcommand("init", "Write a default config into a new run directory");
  init->add_option("dir", init_dir, "Directory to initialize")->required();
  init->add_flag("--force", force, "Overwrite an existing config");

  RunFlags flags;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--seed", flags.seed, "RNG seed");
    sub->add_flag("--resume", flags.resume, "Continue the saved run in --dir");
  };
  auto* generate = app.add_subcommand("generate", "Build the initial dataset only");
  add_run_flags(generate);

  auto* run = app.add_subcommand("run", "Run the full distillation loop");
  add_run_flags(run);
  run->add_option("--repetitions", flags.repetitions, "Number of iterations");
  auto* no_train = run->add_flag("--no-train", flags.no_train, "Do not wait for the trainer");
  run->add_flag("--train", flags.train, "Wait for the trainer's marker file")->excludes(no_train);
  run->add_option("--halt-after", flags.halt_after,
                  "Stop after <stage>[:<iteration>] is saved")
      ->group("");

  int iteration = 0;
  auto* score = app.add_subcommand("score", "Run the margin scoring pass for one iteration");
  score->add_option("--iteration", iteration, "Iteration")->required();

  std::optional<std::size_t> k;
  std::optional<std::uint64_t> sample_seed;
  bool as_json = false;
  auto* sample = app.add_subcommand("sample", "Show seed sampling probabilities");
  sample->add_option("--iteration", iteration, "Iteration")->required();
  sample->add_option("--k", k, "Draw k seeds without replacement");
  sample->add_option("--seed", sample_seed, "RNG seed for the draw");
  sample->add_flag("--json", as_json, "Machine-readable output");

  std::optional<int> export_iteration;
  bool export_all = false;
  std::string export_out;
  auto* exp = app.add_subcommand("export", "Write preference pairs as JSONL");
  auto* exp_iter = exp->add_option("--iteration", export_iteration, "Iteration to export");
  auto* exp_all = exp->add_flag("--all", export_all, "Export every iteration in order");
  exp_iter->excludes(exp_all);
  exp->add_option("--out", export_out, "Output path")->required();

  auto* report = app.add_subcommand("report", "Print an iteration report");
  report->add_option("--iteration", iteration, "Iteration")->required();
  report->add_flag("--json", as_json, "Machine-readable output");

  std::string profiles;
  int port = 8000;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("mock-serve", "Serve deterministic mock models");
  serve->add_option("--profiles", profiles, "Profile file")->required();
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (init->parsed()) return cmd_init(init_dir, force, out);
    if (generate->parsed()) return cmd_run(g, flags, true, out, err);
    if (run->parsed()) return cmd_run(g, flags, false, out, err);
    if (score->parsed()) return cmd_score(g, iteration, out, err);
    if (sample->parsed()) return cmd_sample(g, iteration, k, sample_seed, as_json, out);
    if (exp->parsed()) {
      if (!export_all && !export_iteration) {
        throw ParameterError("iteration", "export needs --iteration or --all");
      }
      return cmd_export(g, export_all ? std::nullopt : export_iteration, export_out, out);
    }
    if (report->parsed()) return cmd_report(g, iteration, as_json, out);
    if (serve->parsed()) return cmd_mock_serve(profiles, port, host, err);
  } catch (const ValidationFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const PipelineFailure& e) {
    err << "pipeline error: " << e.what() << "\n";
    return kExitPipeline;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitValidation;
}

}  // namespace advkd::cli
