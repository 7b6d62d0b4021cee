#include "mrt/rollout.hpp"

#include <stdexcept>

namespace mrt {

StopReason sample_until_commit(const Policy& policy, const Problem& problem, Trace& trace,
                               EnvState& state, int token_cap, Rng& rng,
                               const std::string& marker) {
  bool first = true;
  while (true) {
    const auto dist = action_distribution(policy, problem, state);
    const Action a = dist.actions[rng.categorical(dist.probs)];
    if (a.kind == EpisodeKind::Commit) return StopReason::PolicyCommit;
    const int cost = problem.costs.cost(a.kind);
    if (state.tokens_spent + cost + completion_reserve(problem, a) > token_cap)
      return StopReason::BudgetCap;
    Episode e = make_episode(problem, state, a, rng);
    if (first && !marker.empty()) e.marker = marker;
    first = false;
    state = apply_episode(problem, state, e);
    trace.total_tokens += e.token_cost;
    trace.episodes.push_back(std::move(e));
  }
}

void commit_trace(const Problem& problem, Trace& trace, EnvState& state, Rng& rng, bool forced) {
  Episode e = make_episode(problem, state, {EpisodeKind::Commit, 0}, rng);
  e.forced = forced;
  state = apply_episode(problem, state, e);
  trace.total_tokens += e.token_cost;
  trace.final_answer = e.answer;
  trace.outcome = (e.answer == problem.hidden_answer) ? 1 : 0;
  trace.episodes.push_back(std::move(e));
}

int minimum_budget(const Problem& problem) {
  if (problem.kind == EnvKind::BacktrackingSearch) return problem.costs.attempt + problem.costs.commit;
  return problem.costs.commit;
}

namespace {

void check_budget(const Problem& problem, int budget) {
  if (budget < minimum_budget(problem))
    throw std::invalid_argument("budget " + std::to_string(budget) + " below the minimum " +
                                std::to_string(minimum_budget(problem)) + " for " + problem.id);
}

}  // namespace

Trace rollout(const Policy& policy, const Problem& problem, int budget, std::uint64_t seed) {
  check_budget(problem, budget);
  Trace trace;
  trace.problem_id = problem.id;
  return continue_rollout(policy, problem, trace, budget, seed);
}

Trace continue_rollout(const Policy& policy, const Problem& problem, const Trace& prefix,
                       int budget, std::uint64_t seed) {
  check_budget(problem, budget);
  if (prefix.committed()) throw TerminalViolation("cannot continue a committed trace");
  if (prefix.total_tokens + problem.costs.commit > budget)
    throw std::invalid_argument("prefix leaves no room for Commit");
  Rng rng(seed);
  Trace trace = prefix;
  auto states = replay(problem, prefix);
  EnvState state = states.back();
  const auto reason = sample_until_commit(policy, problem, trace, state, budget, rng);
  commit_trace(problem, trace, state, rng, reason == StopReason::BudgetCap);
  return trace;
}

Trace terminate_rollout(const Problem& problem, const Trace& prefix, std::uint64_t seed) {
  if (prefix.committed()) throw TerminalViolation("cannot terminate a committed trace");
  Rng rng(seed);
  Trace trace = prefix;
  EnvState state = replay(problem, prefix).back();
  commit_trace(problem, trace, state, rng, true);
  return trace;
}

Trace truncate_trace(const Trace& trace, std::size_t num_episodes) {
  Trace t;
  t.problem_id = trace.problem_id;
  for (std::size_t i = 0; i < num_episodes && i < trace.episodes.size(); ++i) {
    if (trace.episodes[i].kind() == EpisodeKind::Commit) break;
    t.episodes.push_back(trace.episodes[i]);
    t.total_tokens += trace.episodes[i].token_cost;
  }
  return t;
}

}  // namespace mrt
