#pragma once

// STaR-style MRT: one rollout per problem, keep the prefix with maximal
// cumulative progress, complete it with a meta-prover commit, keep the pair
// only if the completion is correct, then maximize the log-likelihood of the
// kept actions.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrt/envs.hpp"
#include "mrt/policy.hpp"
#include "mrt/rewards.hpp"

namespace mrt {

struct StarDatasetEntry {
  std::string problem_id;
  Problem problem;
  int retained_prefix = 0;  // index into cumulative_progress; prefix holds retained_prefix + 1 episodes
  std::vector<Action> prefix_actions;
  std::vector<Action> completion_actions;
  double weight = 1.0;
  std::vector<double> cumulative_progress;  // over the rollout's deliberation episodes
  Trace example;      // retained prefix followed by the completion
  Trace source;       // the full rollout the prefix came from
  int completion_outcome = 0;
  bool outcome_only = false;
  std::uint64_t progress_seed = 0;  // estimator stream used for the profile
};

struct StarConfig {
  EnvConfig env;
  int budget = 200;
  int iterations = 3;
  int train_problems = 500;
  int eval_problems = 200;
  EstimatorSpec estimator;
  double step_size = 1.0;
  int epochs = 5;
  bool outcome_only = false;
  bool weight_by_progress = false;
  double temperature = 1.0;
  std::uint64_t master_seed = 0;

  void validate() const;
};

// Smallest index of the maximal cumulative sum, or nullopt when no cumulative
// value is positive.
std::optional<int> select_star_prefix(const std::vector<double>& cumulative_progress);

std::vector<double> cumulative_sums(const std::vector<double>& values);

struct CollectOptions {
  EstimatorSpec estimator;
  int budget = 200;
  bool outcome_only = false;
  bool weight_by_progress = false;
};

std::vector<StarDatasetEntry> collect_star_dataset(const Policy& policy,
                                                   const std::vector<Problem>& problems,
                                                   const CollectOptions& options,
                                                   std::uint64_t seed);

// Re-derives both filters from the stored source trace and returns one message
// per violation.
std::vector<std::string> audit_star_dataset(const std::vector<StarDatasetEntry>& dataset,
                                            const EstimatorSpec& estimator);

double dataset_log_likelihood(const Policy& policy, const std::vector<StarDatasetEntry>& dataset);

struct StarUpdateResult {
  Policy policy;
  std::vector<double> epoch_log_likelihood;
};

StarUpdateResult star_update(const Policy& policy, const std::vector<StarDatasetEntry>& dataset,
                             double step_size, int epochs);

struct StarIterationLog {
  int iteration = 0;
  std::size_t retained = 0;
  std::size_t dataset_size = 0;
  double mean_progress = 0.0;
  double eval_accuracy = 0.0;
  std::vector<double> epoch_log_likelihood;
};

struct StarRunResult {
  Policy initial;
  Policy policy;
  std::vector<StarIterationLog> logs;
  std::vector<StarDatasetEntry> dataset;
  double base_accuracy = 0.0;
};

// Starts from uniform logits unless `initial` is given.
StarRunResult train_star(const StarConfig& config, const Policy* initial = nullptr);

std::string star_log_line(const StarIterationLog& log);

void save_star_dataset(const std::vector<StarDatasetEntry>& dataset,
                       const std::filesystem::path& path);
std::vector<StarDatasetEntry> load_star_dataset(const std::filesystem::path& path,
                                                const std::vector<Problem>& problems);

}  // namespace mrt
