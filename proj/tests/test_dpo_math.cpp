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

#include "advkd/dpo_math.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "advkd/errors.hpp"

namespace advkd::dpo {
namespace {

// Independent reference: log(1 + e^x) in long double, direct form.
long double softplus_ref(long double x) { return ::log1pl(::expl(x)); }

DpoConfig beta(double b) {
  DpoConfig c;
  c.beta = b;
  return c;
}

MarginVector pool(std::vector<double> m) {
  MarginVector v;
  v.margins = std::move(m);
  for (std::size_t i = 0; i < v.margins.size(); ++i) v.pool_ids.push_back("p" + std::to_string(i));
  return v;
}

TEST(SequenceReward, ScalesLogprobDifferenceByBeta) {
  EXPECT_NEAR(sequence_reward(-10.0, -12.0, beta(0.01)), 0.02, 1e-15);
  EXPECT_EQ(sequence_reward(-5.0, -5.0, beta(0.01)), 0.0);
  EXPECT_NEAR(sequence_reward(-12.0, -10.0, beta(0.01)), -0.02, 1e-15);
}

TEST(SequenceReward, DefaultBetaIsOneHundredth) { EXPECT_EQ(DpoConfig{}.beta, 0.01); }

TEST(SequenceReward, RejectsNonFiniteInputAndBadBeta) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sequence_reward(inf, 0.0, beta(0.01)), DomainError);
  EXPECT_THROW(sequence_reward(0.0, std::nan(""), beta(0.01)), DomainError);
  EXPECT_THROW(sequence_reward(0.0, 0.0, beta(0.0)), DomainError);
  EXPECT_THROW(sequence_reward(0.0, 0.0, beta(-1.0)), DomainError);
}

TEST(SequenceReward, LinearInBeta) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lp(-100.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    const double p = lp(rng), r = lp(rng);
    EXPECT_NEAR(sequence_reward(p, r, beta(0.02)), 2.0 * sequence_reward(p, r, beta(0.01)), 1e-12);
  }
}

TEST(SequenceLogprob, SumAndMean) {
  const std::vector<double> lps = {-0.5, -0.25, -1.25};
  EXPECT_DOUBLE_EQ(sequence_logprob(lps, LogprobAggregation::Sum), -2.0);
  EXPECT_DOUBLE_EQ(sequence_logprob(lps, LogprobAggregation::Mean), -2.0 / 3.0);
  EXPECT_THROW(sequence_logprob(std::vector<double>{}, LogprobAggregation::Sum), DomainError);
}

TEST(DpoLoss, Examples) {
  EXPECT_NEAR(dpo_loss({0.0, 0.0}), std::log(2.0), 1e-15);
  EXPECT_NEAR(dpo_loss({1.0, 0.0}), 0.313261687518222834, 1e-15);
  EXPECT_NEAR(dpo_loss({1.0, 0.0}), static_cast<double>(softplus_ref(-1.0L)), 1e-15);
  const double big = dpo_loss({0.0, 50.0});
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 50.0, 1e-12);
  EXPECT_NEAR(dpo_loss({0.0, 1000.0}), 1000.0, 1e-9);
  EXPECT_GE(dpo_loss({1000.0, 0.0}), 0.0);
  EXPECT_LT(dpo_loss({1000.0, 0.0}), 1e-300);
}

TEST(DpoLoss, MatchesDirectFormula) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> r(-20.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const long double c = r(rng), rj = r(rng);
    const long double direct = -::logl(::expl(c) / (::expl(c) + ::expl(rj)));
    EXPECT_NEAR(dpo_loss({static_cast<double>(c), static_cast<double>(rj)}),
                static_cast<double>(direct), 1e-12);
  }
}

TEST(Margin, Examples) {
  EXPECT_NEAR(margin({0.02, -0.01}), 0.03, 1e-15);
  EXPECT_EQ(margin({0.7, 0.7}), 0.0);
  EXPECT_EQ(margin({-1.0, 2.0}), -3.0);
}

TEST(Margin, SignMatchesLossAgainstLnTwo) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> r(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const RewardPair p{r(rng), r(rng)};
    EXPECT_EQ(margin(p) > 0.0, dpo_loss(p) < std::log(2.0));
  }
}

TEST(SamplingWeights, Examples) {
  const auto uniform = sampling_weights(pool({0.0, 0.0, 0.0}));
  for (double p : uniform.probabilities) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);

  const auto two = sampling_weights(pool({0.0, std::log(2.0)}));
  EXPECT_NEAR(two.probabilities[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(two.probabilities[1], 1.0 / 3.0, 1e-15);

  const auto large = sampling_weights(pool({1000.0, 1001.0}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(large.probabilities[0], e / (1.0 + e), 1e-12);
  EXPECT_NEAR(large.probabilities[1], 1.0 / (1.0 + e), 1e-12);
  EXPECT_NEAR(large.probabilities[0], 0.731059, 1e-6);
  EXPECT_EQ(large.pool_ids, (std::vector<std::string>{"p0", "p1"}));
}

TEST(SamplingWeights, RejectsEmptyAndMismatchedPools) {
  EXPECT_THROW(sampling_weights(MarginVector{}), DomainError);
  MarginVector bad = pool({0.0, 1.0});
  bad.pool_ids.pop_back();
  EXPECT_THROW(sampling_weights(bad), DomainError);
  EXPECT_THROW(sampling_weights(pool({0.0, std::nan("")})), DomainError);
}

TEST(SamplingWeights, ShiftInvariantAndMonotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> m(-50.0, 50.0);
  std::uniform_real_distribution<double> shift(-1e4, 1e4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> base(1 + trial % 40);
    for (double& v : base) v = m(rng);
    const double c = shift(rng);
    std::vector<double> moved = base;
    for (double& v : moved) v += c;
    const auto a = sampling_weights(pool(base));
    const auto b = sampling_weights(pool(moved));
    EXPECT_NEAR(std::accumulate(a.probabilities.begin(), a.probabilities.end(), 0.0), 1.0, 1e-9);
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_NEAR(a.probabilities[i], b.probabilities[i], 1e-9);
      EXPECT_GT(a.probabilities[i], 0.0);
      for (std::size_t j = 0; j < base.size(); ++j) {
        if (base[i] < base[j]) EXPECT_GT(a.probabilities[i], a.probabilities[j]);
      }
    }
  }
}

TEST(SamplingWeights, DoublingBetaKeepsRanking) {
  std::vector<double> m1 = {0.03, -0.01, 0.0, 0.2};
  std::vector<double> m2;
  for (double v : m1) m2.push_back(2 * v);
  const auto a = sampling_weights(pool(m1));
  const auto b = sampling_weights(pool(m2));
  auto order = [](const std::vector<double>& p) {
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return p[x] > p[y]; });
    return idx;
  };
  EXPECT_EQ(order(a.probabilities), order(b.probabilities));
}

SamplingPlan plan(std::vector<double> probs, std::size_t k, bool replace = false) {
  SamplingPlan p;
  p.probabilities = std::move(probs);
  for (std::size_t i = 0; i < p.probabilities.size(); ++i) p.pool_ids.push_back("p" + std::to_string(i));
  p.k = k;
  p.with_replacement = replace;
  return p;
}

TEST(SampleSeeds, ForcedOutcomes) {
  for (std::uint64_t s : {0ULL, 1ULL, 42ULL, ~0ULL}) {
    EXPECT_EQ(sample_seeds(plan({1.0}, 1), s), (std::vector<std::string>{"p0"}));
    auto both = sample_seeds(plan({0.5, 0.5}, 2), s);
    std::sort(both.begin(), both.end());
    EXPECT_EQ(both, (std::vector<std::string>{"p0", "p1"}));
  }
}

TEST(SampleSeeds, ValidatesK) {
  EXPECT_THROW(sample_seeds(plan({0.5, 0.5}, 3), 1), DomainError);
  EXPECT_THROW(sample_seeds(plan({0.5, 0.5}, 0), 1), DomainError);
  EXPECT_THROW(sample_seeds(plan({}, 1), 1), DomainError);
  EXPECT_EQ(sample_seeds(plan({0.5, 0.5}, 5, true), 1).size(), 5u);
}

TEST(SampleSeeds, DeterministicPerSeed) {
  const auto p = plan({0.1, 0.2, 0.3, 0.4}, 3);
  EXPECT_EQ(sample_seeds(p, 77), sample_seeds(p, 77));
  bool differs = false;
  for (std::uint64_t s = 0; s < 50 && !differs; ++s) differs = sample_seeds(p, s) != sample_seeds(p, 77);
  EXPECT_TRUE(differs);
}

TEST(SampleSeeds, UnderflowedWeightsStillDrawn) {
  auto drawn = sample_seeds(plan({1.0, 0.0}, 2), 4);
  EXPECT_EQ(drawn, (std::vector<std::string>{"p0", "p1"}));
}

TEST(SampleSeeds, FrequencyMatchesProbability) {
  const auto p = plan({2.0 / 3.0, 1.0 / 3.0}, 1);
  int hits = 0;
  const int n = 100000;
  for (int s = 0; s < n; ++s) hits += sample_seeds(p, static_cast<std::uint64_t>(s))[0] == "p0";
  const double freq = static_cast<double>(hits) / n;
  EXPECT_GE(freq, 0.662);
  EXPECT_LE(freq, 0.671);
}

TEST(SampleSeeds, SecondDrawRenormalizes) {
  // P(first = p1, second = p0) for weights (0.5, 0.3, 0.2) is 0.3 * 0.5 / 0.7.
  const auto p = plan({0.5, 0.3, 0.2}, 2);
  int hits = 0;
  const int n = 60000;
  for (int s = 0; s < n; ++s) {
    const auto d = sample_seeds(p, static_cast<std::uint64_t>(s));
    hits += d[0] == "p1" && d[1] == "p0";
  }
  const double expected = 0.3 * 0.5 / 0.7;
  EXPECT_NEAR(static_cast<double>(hits) / n, expected, 4 * std::sqrt(expected * (1 - expected) / n));
}

TEST(Uniform01, StaysInUnitInterval) {
  std::mt19937_64 e(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = detail::uniform01(e);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

}  // namespace
}  // namespace advkd::dpo
