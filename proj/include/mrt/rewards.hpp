#pragma once

// Meta-prover success estimates, progress, and the MRT reward.
//
// progress(before, after) is the change in the meta-prover's success
// probability caused by one more episode. Summed over a trace it telescopes to
// J(full prefix) - J(empty prefix). The MRT reward adds alpha times that
// progress to the 0/1 outcome, either once for the whole trace or spread over
// the episodes that earned it.
//
// The meta-prover itself (meta_prover_guess / exact_success_prob) lives with
// the environments in envs.hpp.

#include <cstdint>
#include <vector>

#include "mrt/envs.hpp"

namespace mrt {

enum class EstimateMethod { Exact, MonteCarlo };

struct EstimatorSpec {
  EstimateMethod method = EstimateMethod::Exact;
  int n_samples = 20;
};

struct PrefixEstimate {
  int prefix_len = 0;
  double value = 0.0;
  EstimateMethod method = EstimateMethod::Exact;
  int n_samples = 0;
};

enum class BonusMode { PerEpisode, TraceLevel };

struct ProgressRecord {
  std::vector<double> per_episode;
  double alpha = 1.0;
  BonusMode mode = BonusMode::TraceLevel;
  std::vector<PrefixEstimate> prefix_values;  // J for prefixes of length 0..k

  double total() const;
};

// Monte Carlo estimates draw `n_samples` meta-prover guesses from a stream
// seeded by `seed` alone, so prefixes estimated with the same seed share their
// random numbers.
PrefixEstimate estimate_success(const Problem& problem, const EnvState& prefix_state,
                                int prefix_len, const EstimatorSpec& spec, std::uint64_t seed);

double progress(const PrefixEstimate& before, const PrefixEstimate& after);

ProgressRecord trace_progress_profile(const Problem& problem, const Trace& trace,
                                      const EstimatorSpec& spec, std::uint64_t seed,
                                      double alpha = 1.0, BonusMode mode = BonusMode::TraceLevel);

// TraceLevel: one value, outcome + alpha * sum(progress).
// PerEpisode: one value per episode, alpha * progress_j, plus the outcome on
// the final episode.
std::vector<double> mrt_reward(int outcome, const ProgressRecord& record);

double length_penalized_reward(int outcome, int total_tokens, double lambda, int budget);

}  // namespace mrt
