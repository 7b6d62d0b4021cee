#include "mrt/envs.hpp"

#include <algorithm>
#include <numeric>

namespace mrt {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::DeterministicBandit: return "deterministic_bandit";
    case EnvKind::CandidateElimination: return "candidate_elimination";
    case EnvKind::BacktrackingSearch: return "backtracking_search";
  }
  return "unknown";
}

std::string to_string(EpisodeKind kind) {
  switch (kind) {
    case EpisodeKind::Probe: return "Probe";
    case EpisodeKind::PullArm: return "PullArm";
    case EpisodeKind::Verify: return "Verify";
    case EpisodeKind::Attempt: return "Attempt";
    case EpisodeKind::Backtrack: return "Backtrack";
    case EpisodeKind::Commit: return "Commit";
  }
  return "Unknown";
}

EnvKind parse_env_kind(const std::string& text) {
  if (text == "deterministic_bandit") return EnvKind::DeterministicBandit;
  if (text == "candidate_elimination") return EnvKind::CandidateElimination;
  if (text == "backtracking_search") return EnvKind::BacktrackingSearch;
  throw std::invalid_argument("unknown env kind '" + text + "'");
}

int CostTable::cost(EpisodeKind kind) const {
  switch (kind) {
    case EpisodeKind::Probe: return probe;
    case EpisodeKind::PullArm: return pull_arm;
    case EpisodeKind::Verify: return verify;
    case EpisodeKind::Attempt: return attempt;
    case EpisodeKind::Backtrack: return backtrack;
    case EpisodeKind::Commit: return commit;
  }
  return 0;
}

void CostTable::validate() const {
  for (int c : {probe, pull_arm, verify, attempt, backtrack, commit})
    if (c <= 0) throw std::invalid_argument("token costs must be strictly positive");
}

double AnswerDistribution::prob_of(Answer a) const {
  for (std::size_t i = 0; i < answers.size(); ++i)
    if (answers[i] == a) return probs[i];
  return 0.0;
}

Problem sample_problem(const EnvConfig& config, std::uint64_t seed) {
  if (config.size < 2)
    throw std::invalid_argument("environment needs at least 2 candidates, got " +
                                std::to_string(config.size));
  config.costs.validate();
  Rng rng(seed);
  Problem p;
  p.kind = config.kind;
  p.num_candidates = config.size;
  p.costs = config.costs;
  p.id = to_string(config.kind) + "-" + std::to_string(config.size) + "-" + std::to_string(seed);

  switch (config.kind) {
    case EnvKind::CandidateElimination:
      p.hidden_answer = static_cast<Answer>(rng.index(config.size));
      break;
    case EnvKind::DeterministicBandit: {
      // Distinct payoffs: a shuffled grid with per-arm jitter below the spacing.
      std::vector<int> rank(config.size);
      std::iota(rank.begin(), rank.end(), 0);
      for (std::size_t i = rank.size(); i > 1; --i) std::swap(rank[i - 1], rank[rng.index(i)]);
      p.payoffs.resize(config.size);
      for (int a = 0; a < config.size; ++a)
        p.payoffs[a] = (rank[a] + 0.5 * rng.uniform()) / config.size;
      p.hidden_answer = static_cast<Answer>(
          std::max_element(p.payoffs.begin(), p.payoffs.end()) - p.payoffs.begin());
      break;
    }
    case EnvKind::BacktrackingSearch: {
      if (config.num_blocks < 2 || config.num_blocks > config.size)
        throw std::invalid_argument("backtracking search needs 2 <= num_blocks <= size");
      std::vector<Answer> order(config.size);
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      p.attempt_blocks.resize(config.num_blocks);
      for (int i = 0; i < config.size; ++i)
        p.attempt_blocks[i % config.num_blocks].push_back(order[i]);
      for (auto& block : p.attempt_blocks) std::sort(block.begin(), block.end());
      p.hidden_answer = static_cast<Answer>(rng.index(config.size));
      break;
    }
  }
  return p;
}

std::vector<Problem> sample_problem_set(const EnvConfig& config, int count, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("problem count must be nonnegative");
  std::vector<Problem> problems;
  problems.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    problems.push_back(sample_problem(config, derive_seed(seed, "problem", static_cast<std::uint64_t>(i))));
  return problems;
}

EnvState initial_state(const Problem& problem) {
  EnvState s;
  if (problem.kind != EnvKind::DeterministicBandit) {
    s.surviving.resize(problem.num_candidates);
    std::iota(s.surviving.begin(), s.surviving.end(), 0);
  }
  return s;
}

namespace {

bool contains(const std::vector<Answer>& sorted, Answer a) {
  return std::binary_search(sorted.begin(), sorted.end(), a);
}

std::vector<Answer> greedy_arms(const EnvState& state) {
  std::vector<Answer> best;
  double top = -1.0;
  for (const auto& [arm, payoff] : state.observed) {
    if (payoff > top) {
      top = payoff;
      best.assign(1, arm);
    } else if (payoff == top) {
      best.push_back(arm);
    }
  }
  return best;
}

}  // namespace

EnvState apply_episode(const Problem& problem, const EnvState& state, const Episode& episode) {
  if (state.terminal())
    throw TerminalViolation("episode " + to_string(episode.kind()) +
                            " applied after Commit on problem " + problem.id);
  EnvState next = state;
  switch (episode.kind()) {
    case EpisodeKind::Probe: {
      std::vector<Answer> probed = episode.subset;
      std::sort(probed.begin(), probed.end());
      std::vector<Answer> kept;
      if (contains(probed, problem.hidden_answer)) {
        std::set_intersection(state.surviving.begin(), state.surviving.end(), probed.begin(),
                              probed.end(), std::back_inserter(kept));
      } else {
        std::set_difference(state.surviving.begin(), state.surviving.end(), probed.begin(),
                            probed.end(), std::back_inserter(kept));
      }
      next.surviving = std::move(kept);
      break;
    }
    case EpisodeKind::PullArm: {
      if (episode.target < 0 || episode.target >= problem.num_candidates)
        throw std::invalid_argument("PullArm target out of range");
      next.observed[episode.target] = problem.payoffs.at(episode.target);
      break;
    }
    case EpisodeKind::Verify:
      // Re-checks the current view; carries no new information.
      break;
    case EpisodeKind::Attempt: {
      next.view_stack.push_back(state.surviving);
      next.surviving = episode.subset;
      std::sort(next.surviving.begin(), next.surviving.end());
      next.attempts_made += 1;
      break;
    }
    case EpisodeKind::Backtrack: {
      if (state.view_stack.empty()) throw std::logic_error("Backtrack without a preceding Attempt");
      next.surviving = state.view_stack.back();
      next.view_stack.pop_back();
      next.backtrack_depth += 1;
      break;
    }
    case EpisodeKind::Commit:
      next.committed = episode.answer;
      break;
  }
  next.episodes_taken += 1;
  next.tokens_spent += episode.token_cost;
  return next;
}

double exact_success_prob(const Problem& problem, const EnvState& state) {
  if (state.committed) return *state.committed == problem.hidden_answer ? 1.0 : 0.0;
  switch (problem.kind) {
    case EnvKind::CandidateElimination:
      return 1.0 / static_cast<double>(state.surviving.size());
    case EnvKind::BacktrackingSearch:
      if (state.surviving.empty() || !contains(state.surviving, problem.hidden_answer)) return 0.0;
      return 1.0 / static_cast<double>(state.surviving.size());
    case EnvKind::DeterministicBandit: {
      if (state.observed.empty()) return 1.0 / problem.num_candidates;
      const auto best = greedy_arms(state);
      const auto hits = std::count(best.begin(), best.end(), problem.hidden_answer);
      return static_cast<double>(hits) / static_cast<double>(best.size());
    }
  }
  return 0.0;
}

AnswerDistribution answer_distribution(const Problem& problem, const EnvState& state) {
  AnswerDistribution d;
  if (state.committed) {
    d.answers = {*state.committed};
    d.probs = {1.0};
    return d;
  }
  if (problem.kind == EnvKind::DeterministicBandit) {
    if (state.observed.empty()) {
      d.answers.resize(problem.num_candidates);
      std::iota(d.answers.begin(), d.answers.end(), 0);
    } else {
      d.answers = greedy_arms(state);
    }
  } else {
    d.answers = state.surviving;
  }
  d.probs.assign(d.answers.size(), 1.0 / static_cast<double>(d.answers.size()));
  return d;
}

Answer meta_prover_guess(const Problem& problem, const EnvState& state, Rng& rng) {
  if (state.committed) return *state.committed;
  if (problem.kind == EnvKind::DeterministicBandit) {
    if (state.observed.empty()) return static_cast<Answer>(rng.index(problem.num_candidates));
    const auto best = greedy_arms(state);
    return best[rng.index(best.size())];
  }
  return state.surviving[rng.index(state.surviving.size())];
}

std::vector<Action> legal_actions(const Problem& problem, const EnvState& state) {
  if (state.terminal()) throw std::logic_error("no legal actions in a committed state");
  std::vector<Action> out;
  switch (problem.kind) {
    case EnvKind::CandidateElimination:
      if (state.surviving.size() >= 2)
        for (int v = 0; v < kProbeMenuSize; ++v) out.push_back({EpisodeKind::Probe, v});
      out.push_back({EpisodeKind::Verify, 0});
      out.push_back({EpisodeKind::Commit, 0});
      break;
    case EnvKind::DeterministicBandit:
      for (int a = 0; a < problem.num_candidates; ++a) out.push_back({EpisodeKind::PullArm, a});
      out.push_back({EpisodeKind::Commit, 0});
      break;
    case EnvKind::BacktrackingSearch:
      if (state.view_stack.empty()) {
        out.push_back({EpisodeKind::Attempt, 0});
      } else {
        out.push_back({EpisodeKind::Backtrack, 0});
        out.push_back({EpisodeKind::Commit, 0});
      }
      break;
  }
  return out;
}

Episode make_episode(const Problem& problem, const EnvState& state, Action action, Rng& rng) {
  Episode e;
  e.action = action;
  e.token_cost = problem.costs.cost(action.kind);
  switch (action.kind) {
    case EpisodeKind::Probe: {
      const auto& s = state.surviving;
      const std::size_t half = s.size() / 2;
      if (action.arg == kProbeHalves) {
        e.subset.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(half));
      } else {
        for (std::size_t i = 0; i < s.size(); i += 2) e.subset.push_back(s[i]);
      }
      break;
    }
    case EpisodeKind::PullArm:
      e.target = action.arg;
      break;
    case EpisodeKind::Attempt: {
      const auto& blocks = problem.attempt_blocks;
      e.subset = blocks[static_cast<std::size_t>(state.attempts_made) % blocks.size()];
      break;
    }
    case EpisodeKind::Backtrack:
      e.target = static_cast<int>(state.view_stack.size()) - 1;
      break;
    case EpisodeKind::Commit:
      e.answer = meta_prover_guess(problem, state, rng);
      break;
    case EpisodeKind::Verify:
      break;
  }
  return e;
}

Episode forced_commit(const Problem& problem, const EnvState& state, Rng& rng) {
  Episode e = make_episode(problem, state, {EpisodeKind::Commit, 0}, rng);
  e.forced = true;
  return e;
}

int completion_reserve(const Problem& problem, Action action) {
  switch (action.kind) {
    case EpisodeKind::Commit: return 0;
    case EpisodeKind::Backtrack: return problem.costs.attempt + problem.costs.commit;
    default: return problem.costs.commit;
  }
}

std::vector<EnvState> replay(const Problem& problem, const Trace& trace) {
  std::vector<EnvState> states;
  states.reserve(trace.episodes.size() + 1);
  states.push_back(initial_state(problem));
  for (const auto& e : trace.episodes) states.push_back(apply_episode(problem, states.back(), e));
  return states;
}

std::string validate_trace(const Problem& problem, const Trace& trace) {
  if (trace.problem_id != problem.id) return "problem id mismatch";
  int tokens = 0;
  for (std::size_t i = 0; i < trace.episodes.size(); ++i) {
    const auto& e = trace.episodes[i];
    if (e.token_cost <= 0) return "non-positive episode cost";
    tokens += e.token_cost;
    if (e.kind() == EpisodeKind::Commit && i + 1 != trace.episodes.size())
      return "episode follows Commit";
  }
  if (tokens != trace.total_tokens) return "total_tokens does not match episode costs";
  if (trace.final_answer) {
    if (trace.episodes.empty() || trace.episodes.back().kind() != EpisodeKind::Commit)
      return "final answer without Commit";
    if (trace.episodes.back().answer != *trace.final_answer) return "final answer mismatch";
    if (trace.outcome != (*trace.final_answer == problem.hidden_answer ? 1 : 0))
      return "outcome does not match final answer";
  } else if (trace.outcome != 0) {
    return "outcome 1 without final answer";
  }
  try {
    replay(problem, trace);
  } catch (const std::exception& ex) {
    return ex.what();
  }
  return {};
}

bool satisfies_backtracking_grammar(const Trace& trace) {
  const auto& eps = trace.episodes;
  if (eps.size() < 2 || eps.back().kind() != EpisodeKind::Commit) return false;
  const std::size_t body = eps.size() - 1;
  if (body % 2 == 0) return false;
  for (std::size_t i = 0; i < body; ++i) {
    const EpisodeKind want = (i % 2 == 0) ? EpisodeKind::Attempt : EpisodeKind::Backtrack;
    if (eps[i].kind() != want) return false;
  }
  return true;
}

}  // namespace mrt
