#pragma once

// Synthetic episodic environments with a closed-form meta-prover success
// probability.
//
// Three environment kinds share one state/episode vocabulary:
//   * CandidateElimination: a hidden answer among M candidates. Probe episodes
//     bisect the surviving set; the meta-prover guesses uniformly among the
//     survivors, so its success probability is 1/|surviving|.
//   * DeterministicBandit: K arms with noiseless payoffs and a unique best arm.
//     PullArm reveals a payoff; the meta-prover names the greedy arm.
//   * BacktrackingSearch: Attempt narrows the view to one block of candidates
//     (which may miss the answer); Backtrack restores the pre-attempt view.
//
// Transitions are pure functions of (problem, state, episode).

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrt/random.hpp"

namespace mrt {

using Answer = int;

enum class EnvKind { DeterministicBandit, CandidateElimination, BacktrackingSearch };
enum class EpisodeKind { Probe, PullArm, Verify, Attempt, Backtrack, Commit };

std::string to_string(EnvKind kind);
std::string to_string(EpisodeKind kind);
EnvKind parse_env_kind(const std::string& text);

// Raised when an episode is applied to an already committed state.
class TerminalViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct CostTable {
  int probe = 10;
  int pull_arm = 10;
  int verify = 10;
  int attempt = 40;
  int backtrack = 15;
  int commit = 5;

  int cost(EpisodeKind kind) const;
  void validate() const;
  bool operator==(const CostTable&) const = default;
};

struct EnvConfig {
  EnvKind kind = EnvKind::CandidateElimination;
  int size = 16;       // M candidates or K arms
  int num_blocks = 4;  // BacktrackingSearch only
  CostTable costs;
};

struct Problem {
  std::string id;
  EnvKind kind = EnvKind::CandidateElimination;
  Answer hidden_answer = 0;
  int num_candidates = 0;
  std::vector<double> payoffs;                     // DeterministicBandit
  std::vector<std::vector<Answer>> attempt_blocks;  // BacktrackingSearch
  CostTable costs;

  bool operator==(const Problem&) const = default;
};

// A policy-level choice. `arg` selects the bisection from the probe menu, the
// arm to pull, and is zero otherwise.
struct Action {
  EpisodeKind kind = EpisodeKind::Commit;
  int arg = 0;

  int id() const { return static_cast<int>(kind) * 1024 + arg; }
  static Action from_id(int id) { return {static_cast<EpisodeKind>(id / 1024), id % 1024}; }
  auto operator<=>(const Action&) const = default;
};

inline constexpr int kProbeHalves = 0;
inline constexpr int kProbeInterleaved = 1;
inline constexpr int kProbeMenuSize = 2;

struct Episode {
  Action action;
  std::vector<Answer> subset;  // Probe: probed part; Attempt: block examined
  Answer answer = -1;          // Commit: the named answer
  int target = -1;             // PullArm: arm; Backtrack: restored depth
  int token_cost = 0;
  bool forced = false;         // appended by the environment, not sampled
  std::string marker;          // continuation phrase that opened this episode

  EpisodeKind kind() const { return action.kind; }
  bool operator==(const Episode&) const = default;
};

struct EnvState {
  std::vector<Answer> surviving;  // surviving set (CE) or current view (BT)
  std::map<int, double> observed;  // pulled arm -> payoff (bandit)
  std::vector<std::vector<Answer>> view_stack;  // pre-attempt views (BT)
  int attempts_made = 0;
  std::optional<Answer> committed;
  int episodes_taken = 0;
  int tokens_spent = 0;
  int backtrack_depth = 0;

  bool terminal() const { return committed.has_value(); }
  bool operator==(const EnvState&) const = default;
};

struct Trace {
  std::string problem_id;
  std::vector<Episode> episodes;
  std::optional<Answer> final_answer;
  int outcome = 0;
  int total_tokens = 0;
  std::vector<std::string> markers;  // continuation phrases from budget forcing

  bool committed() const { return final_answer.has_value(); }
  bool operator==(const Trace&) const = default;
};

// Answer distribution of the meta-prover at a state; probabilities over
// answers in ascending answer order.
struct AnswerDistribution {
  std::vector<Answer> answers;
  std::vector<double> probs;

  double prob_of(Answer a) const;
};

Problem sample_problem(const EnvConfig& config, std::uint64_t seed);
// Problem i is drawn with derive_seed(seed, "problem", i).
std::vector<Problem> sample_problem_set(const EnvConfig& config, int count, std::uint64_t seed);
EnvState initial_state(const Problem& problem);

EnvState apply_episode(const Problem& problem, const EnvState& state, const Episode& episode);

// J_r of the terminate-and-guess meta-prover at `state`. A committed state
// scores its committed answer.
double exact_success_prob(const Problem& problem, const EnvState& state);
AnswerDistribution answer_distribution(const Problem& problem, const EnvState& state);
Answer meta_prover_guess(const Problem& problem, const EnvState& state, Rng& rng);

std::vector<Action> legal_actions(const Problem& problem, const EnvState& state);

// Builds the concrete episode for `action`; Commit draws the answer from the
// meta-prover.
Episode make_episode(const Problem& problem, const EnvState& state, Action action, Rng& rng);
Episode forced_commit(const Problem& problem, const EnvState& state, Rng& rng);

// Tokens that must remain after `action` so the trace can still end legally.
int completion_reserve(const Problem& problem, Action action);

// States s_0..s_k visited by the trace (s_0 initial, s_k after the last
// episode).
std::vector<EnvState> replay(const Problem& problem, const Trace& trace);

// Checks Trace invariants against the problem; empty string when valid.
std::string validate_trace(const Problem& problem, const Trace& trace);

// True when the episode kinds read Attempt (Backtrack Attempt)* Commit.
bool satisfies_backtracking_grammar(const Trace& trace);

}  // namespace mrt
