#pragma once

// Budget-capped policy rollouts.
//
// A rollout samples episodes from the policy until the policy commits or the
// sampled episode would leave no room for the episodes needed to finish
// (completion_reserve). In the latter case the sampled episode is dropped and
// the environment appends a forced Commit carrying the meta-prover's guess, so
// total_tokens never exceeds the budget.

#include <cstdint>
#include <string>

#include "mrt/envs.hpp"
#include "mrt/policy.hpp"
#include "mrt/random.hpp"

namespace mrt {

enum class StopReason { PolicyCommit, BudgetCap };

// Samples non-terminal episodes onto `trace`/`state` while they fit under
// `token_cap`. Returns when the policy picks Commit (not appended) or when the
// cap is reached. `marker`, if non-empty, is attached to the first appended
// episode.
StopReason sample_until_commit(const Policy& policy, const Problem& problem, Trace& trace,
                               EnvState& state, int token_cap, Rng& rng,
                               const std::string& marker = {});

// Appends a Commit (forced or policy-chosen) and fills in the outcome.
void commit_trace(const Problem& problem, Trace& trace, EnvState& state, Rng& rng, bool forced);

// Smallest budget for which rollout() is defined on this problem.
int minimum_budget(const Problem& problem);

Trace rollout(const Policy& policy, const Problem& problem, int budget, std::uint64_t seed);

// Continues `prefix` (which must not be committed) under `policy` up to the
// same absolute token budget.
Trace continue_rollout(const Policy& policy, const Problem& problem, const Trace& prefix,
                       int budget, std::uint64_t seed);

// Commits immediately after `prefix` with a meta-prover guess.
Trace terminate_rollout(const Problem& problem, const Trace& prefix, std::uint64_t seed);

// The first `num_episodes` episodes of `trace`, uncommitted.
Trace truncate_trace(const Trace& trace, std::size_t num_episodes);

}  // namespace mrt
