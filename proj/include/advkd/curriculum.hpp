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

// The distillation loop. Stages run in a fixed order per iteration and the
// run state is saved after each one:
//
//   dataset -> pairs -> exported -> trained -> scored -> (adversarial step)
//
// Generation and scoring fan out over a bounded worker pool. Results are
// collected by index and written by the driver, so store contents do not
// depend on completion order.

#include <array>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "advkd/config.hpp"
#include "advkd/model_client.hpp"
#include "advkd/store.hpp"

namespace advkd::curriculum {

struct MarginSummary {
  std::size_t count = 0;
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

MarginSummary summarize(const std::vector<store::MarginRecord>& records);

struct IterationReport {
  int iteration = 0;
  std::size_t exercises_generated = 0;
  std::size_t pairs_built = 0;
  std::size_t margins_scored = 0;
  MarginSummary margins;
  std::vector<store::SeedRecord> seeds_sampled;
  int parse_failure_count = 0;
  int duplicate_count = 0;
  store::IterationCounters counters;
};

IterationReport build_report(const store::RunStore& store, const store::CurriculumState& state,
                             int iteration);
std::string report_to_json(const IterationReport& report);
IterationReport report_from_json(const std::string& text);
std::string report_table(const IterationReport& report);

/// max(1, round(fraction * pool)), capped at the pool size.
std::size_t seed_count(double seed_fraction, std::size_t pool_size);

/// Largest-remainder split of k over the mix, then a seeded shuffle.
std::vector<prompts::Strategy> assign_strategies(std::size_t k,
                                                 const std::array<double, 3>& mix,
                                                 std::uint64_t rng_seed);

/// Softmax over negative margins of the whole pool, k draws without
/// replacement, one strategy per seed. Pure.
std::vector<store::SeedRecord> plan_adversarial_seeds(
    const std::vector<store::MarginRecord>& pool, const AdversarialPlan& plan,
    std::uint64_t rng_seed);

/// Runs fn(0..n-1) on at most `concurrency` threads. If any call throws, the
/// exception from the lowest index is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, int concurrency, Fn&& fn) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, concurrency)));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct RunOptions {
  /// Stop cleanly once this stage of this iteration has been saved.
  std::optional<std::pair<store::Stage, int>> halt_after;
};

class Pipeline {
 public:
  /// Opens a run directory. A fresh open refuses a directory that already
  /// holds a run; a resume requires one, and rejects a config whose
  /// dataset-shaping fields differ from the saved run.
  Pipeline(std::filesystem::path run_dir, PipelineConfig config, client::ModelClient& client,
           bool resume, store::RunStore::Clock clock = store::timestamp_now);

  /// Progress lines go to `log`, iteration reports to `out`. Either may be null.
  void set_output(std::ostream* out, std::ostream* log) {
    out_ = out;
    log_ = log;
  }

  const store::CurriculumState& state() const { return state_; }
  const store::RunStore& run_store() const { return store_; }
  const PipelineConfig& config() const { return state_.config; }

  void preflight();

  std::vector<store::Exercise> build_initial_dataset();
  std::optional<store::PreferencePair> collect_pair(const store::Exercise& exercise,
                                                    store::IterationCounters& counters);
  std::vector<store::PreferencePair> collect_pairs(int iteration);
  /// Scores every pair of the iteration that has no margin record yet.
  std::vector<store::MarginRecord> score_iteration(int iteration);
  std::vector<store::Exercise> adversarial_step(int iteration, const AdversarialPlan& plan,
                                                std::uint64_t rng_seed);
  IterationReport report(int iteration) const;

  /// Drives the stage machine to completion (or to options.halt_after).
  const store::CurriculumState& run(const RunOptions& options = {});

  /// Marks a standalone scoring pass in the saved state when the run is
  /// waiting to score that iteration.
  void record_standalone_scoring(int iteration);

 private:
  store::IterationCounters& counters(int iteration) { return state_.counters[iteration]; }
  void advance(store::Stage stage, int iteration);
  std::uint64_t draw_seed();
  void export_iteration(int iteration);
  void wait_for_training(int iteration);
  void write_report(int iteration);
  void note(const std::string& line);

  std::optional<std::string> generate(const std::string& prompt, int attempts,
                                      const std::function<bool(const std::string&)>& accept,
                                      int& failures);

  std::filesystem::path dir_;
  client::ModelClient& client_;
  store::CurriculumState state_;
  store::RunStore store_;
  std::ostream* out_ = nullptr;
  std::ostream* log_ = nullptr;
};

}  // namespace advkd::curriculum
