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

// DPO implicit rewards, the pairwise preference loss, margin rewards, and the
// softmax-over-negative-margins distribution used to pick adversarial seeds.
//
// Everything here is a pure function of its arguments. The only randomness
// lives in sample_seeds, which owns a locally seeded engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advkd/errors.hpp"

namespace advkd::dpo {

enum class LogprobAggregation { Sum, Mean };

struct DpoConfig {
  double beta = 0.01;
  /// How per-token log-probs collapse into a sequence log-prob.
  LogprobAggregation aggregation = LogprobAggregation::Sum;
  friend bool operator==(const DpoConfig&, const DpoConfig&) = default;
};

struct RewardPair {
  double r_chosen = 0.0;
  double r_rejected = 0.0;
};

struct MarginVector {
  std::vector<double> margins;
  std::vector<std::string> pool_ids;
};

struct SamplingPlan {
  std::vector<double> probabilities;
  std::vector<std::string> pool_ids;
  std::size_t k = 0;
  bool with_replacement = false;
};

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw DomainError(std::string(what) + " must be finite");
  }
}

// Top 53 bits of a 64-bit draw; portable where uniform_real_distribution
// is not.
inline double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// log(1 + exp(x)) without overflow for large |x|.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline void validate(const DpoConfig& config) {
  if (!(config.beta > 0.0) || !std::isfinite(config.beta)) {
    throw DomainError("beta must be a positive finite number");
  }
}

/// Collapses completion-token log-probs into one sequence log-prob.
inline double sequence_logprob(std::span<const double> token_logprobs,
                               LogprobAggregation aggregation) {
  if (token_logprobs.empty()) {
    throw DomainError("sequence log-prob needs at least one token");
  }
  double total = 0.0;
  for (double lp : token_logprobs) {
    detail::require_finite(lp, "token log-prob");
    total += lp;
  }
  if (aggregation == LogprobAggregation::Mean) {
    total /= static_cast<double>(token_logprobs.size());
  }
  return total;
}

/// beta * (log pi(y|x) - log pi_ref(y|x)).
inline double sequence_reward(double policy_logprob, double reference_logprob,
                              const DpoConfig& config) {
  detail::require_finite(policy_logprob, "policy log-prob");
  detail::require_finite(reference_logprob, "reference log-prob");
  validate(config);
  return config.beta * (policy_logprob - reference_logprob);
}

inline double margin(const RewardPair& rewards) {
  detail::require_finite(rewards.r_chosen, "chosen reward");
  detail::require_finite(rewards.r_rejected, "rejected reward");
  return rewards.r_chosen - rewards.r_rejected;
}

/// -log sigmoid(R(c) - R(r)), evaluated as softplus(R(r) - R(c)).
inline double dpo_loss(const RewardPair& rewards) {
  detail::require_finite(rewards.r_chosen, "chosen reward");
  detail::require_finite(rewards.r_rejected, "rejected reward");
  return softplus(rewards.r_rejected - rewards.r_chosen);
}

/// P(i) = exp(-M(i)) / sum_j exp(-M(j)), shifted by the smallest margin so
/// the largest exponent is exactly zero.
inline SamplingPlan sampling_weights(const MarginVector& margins) {
  if (margins.margins.empty()) {
    throw DomainError("margin pool is empty");
  }
  if (margins.margins.size() != margins.pool_ids.size()) {
    throw DomainError("margins and pool ids differ in length");
  }
  double min_margin = margins.margins.front();
  for (double m : margins.margins) {
    detail::require_finite(m, "margin");
    min_margin = std::min(min_margin, m);
  }

  SamplingPlan plan;
  plan.pool_ids = margins.pool_ids;
  plan.probabilities.reserve(margins.margins.size());
  double total = 0.0;
  for (double m : margins.margins) {
    const double w = std::exp(-(m - min_margin));
    plan.probabilities.push_back(w);
    total += w;
  }
  for (double& p : plan.probabilities) p /= total;
  return plan;
}

/// Draws plan.k pool ids. Without replacement each draw removes the chosen
/// entry and renormalizes over what is left.
inline std::vector<std::string> sample_seeds(const SamplingPlan& plan,
                                             std::uint64_t rng_seed) {
  const std::size_t n = plan.probabilities.size();
  if (n == 0 || plan.pool_ids.size() != n) {
    throw DomainError("sampling plan has no pool or mismatched ids");
  }
  if (plan.k == 0) {
    throw DomainError("k must be at least 1");
  }
  if (!plan.with_replacement && plan.k > n) {
    throw DomainError("k=" + std::to_string(plan.k) +
                      " exceeds pool size " + std::to_string(n) +
                      " without replacement");
  }

  std::mt19937_64 engine(rng_seed);
  std::vector<double> weights = plan.probabilities;
  std::vector<bool> taken(n, false);
  std::vector<std::string> drawn;
  drawn.reserve(plan.k);

  for (std::size_t draw = 0; draw < plan.k; ++draw) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) total += weights[i];
    }
    const double target = detail::uniform01(engine) * total;

    std::size_t pick = n;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i] || weights[i] <= 0.0) continue;
      cumulative += weights[i];
      pick = i;
      if (target < cumulative) break;
    }
    if (pick == n) {
      // Every remaining weight underflowed to zero.
      pick = static_cast<std::size_t>(
          std::find(taken.begin(), taken.end(), false) - taken.begin());
    }
    drawn.push_back(plan.pool_ids[pick]);
    if (!plan.with_replacement) taken[pick] = true;
  }
  return drawn;
}

}  // namespace advkd::dpo
