#pragma once

// RL-style MRT on top of a minimal group-normalized policy gradient.
//
// Each group truncates a reference rollout at a random episode j, samples G
// continuations from the current policy and G meta-prover terminations from
// the same prefix. The terminations estimate J at the prefix; in MRT mode a
// continuation is rewarded with outcome + alpha * (J after its first episode -
// J at the prefix). Group-normalized rewards act as advantages for a plain
// advantage-weighted log-likelihood ascent step.

#include <cstdint>
#include <string>
#include <vector>

#include "mrt/envs.hpp"
#include "mrt/policy.hpp"
#include "mrt/rewards.hpp"

namespace mrt {

enum class RewardMode { Outcome, MRT, LengthPenalty };

std::string to_string(RewardMode mode);
RewardMode parse_reward_mode(const std::string& text);

enum class PrefixEstimator { Terminations, Exact };

struct CurriculumStage {
  int start_step = 0;
  int budget = 0;
  bool operator==(const CurriculumStage&) const = default;
};

struct TrainerConfig {
  double alpha = 1.0;
  int group_size = 8;
  int steps_per_iteration = 10;
  int iterations = 5;
  double step_size = 0.5;
  RewardMode reward_mode = RewardMode::MRT;
  double lambda = 1.0;  // LengthPenalty only
  int budget = 200;
  std::vector<CurriculumStage> curriculum;  // overrides `budget` from each start_step on
  int batch_size = 16;
  std::uint64_t master_seed = 0;
  PrefixEstimator prefix_estimator = PrefixEstimator::Terminations;
  EstimatorSpec after_estimator;  // J after the continuation's first episode
  int eval_budget = 0;            // 0: evaluate at the current training budget

  void validate() const;
  int budget_at(int step) const;
};

struct RolloutGroup {
  std::string problem_id;
  Problem problem;
  int prefix_len = 0;
  Trace reference;
  std::vector<Trace> continuations;
  std::vector<Trace> terminations;
  double prefix_value = 0.0;             // estimated J at the prefix
  std::vector<double> progress;          // per continuation, J after first episode - prefix_value
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct GroupSettings {
  int group_size = 8;
  int budget = 200;
  RewardMode reward_mode = RewardMode::MRT;
  double alpha = 1.0;
  double lambda = 1.0;
  PrefixEstimator prefix_estimator = PrefixEstimator::Terminations;
  EstimatorSpec after_estimator;
};

GroupSettings group_settings(const TrainerConfig& config, int step);

RolloutGroup sample_group(const Policy& ref_policy, const Policy& policy, const Problem& problem,
                          const GroupSettings& settings, std::uint64_t seed);

// Population-std normalization; groups whose std is below 1e-8 get all zeros.
std::vector<double> group_advantages(const std::vector<double>& rewards);

// Mean over groups of sum_i A_i * sum over the policy-sampled continuation
// episodes of log pi(action | state).
double grpo_surrogate(const Policy& policy, const std::vector<RolloutGroup>& groups);
ParamGradient grpo_gradient(const Policy& policy, const std::vector<RolloutGroup>& groups);
Policy grpo_step(const Policy& policy, const std::vector<RolloutGroup>& groups, double step_size);

struct RlStepLog {
  int step = 0;
  int iteration = 0;
  int budget = 0;
  double mean_reward = 0.0;
  double mean_tokens = 0.0;
  double eval_accuracy = 0.0;
};

struct RlRunResult {
  Policy policy;
  std::vector<RlStepLog> logs;
};

RlRunResult train_rl(const TrainerConfig& config, const Policy& initial,
                     const std::vector<Problem>& problems, const std::vector<Problem>& eval_set);

std::string rl_log_line(const RlStepLog& log);

}  // namespace mrt
