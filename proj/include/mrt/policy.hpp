#pragma once

// Tabular softmax policy over (state abstraction, action) pairs.
//
// The state abstraction buckets episodes taken at {0,1,2,3,4,5+} and crosses
// it with an environment-specific information level:
//   CandidateElimination  ceil(log2 |surviving|)
//   DeterministicBandit   number of distinct arms observed (capped at 7)
//   BacktrackingSearch    0 at the root view, 1 inside an attempt that holds
//                         the answer, 2 inside an attempt that misses it
// Logits missing from the table are zero.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mrt/envs.hpp"

namespace mrt {

struct StateKey {
  int episode_bucket = 0;
  int info_level = 0;
  auto operator<=>(const StateKey&) const = default;
};

struct ParamKey {
  StateKey state;
  int action_id = 0;
  auto operator<=>(const ParamKey&) const = default;
};

using ParamTable = std::map<ParamKey, double>;

struct ParamGradient {
  ParamTable entries;

  void add(const ParamGradient& other, double scale = 1.0);
  void scale(double factor);
  bool finite() const;
  double value(const ParamKey& key) const;
};

class Policy {
 public:
  explicit Policy(EnvKind kind, double temperature = 1.0);

  EnvKind env_kind() const { return kind_; }
  double temperature() const { return temperature_; }
  bool commit_only() const { return commit_only_; }
  const ParamTable& params() const { return logits_; }

  double logit(const ParamKey& key) const;
  void set_logit(const ParamKey& key, double value);

  bool operator==(const Policy&) const = default;

 private:
  friend Policy direct_policy(EnvKind kind);
  friend Policy parse_policy(std::string_view text);

  EnvKind kind_;
  double temperature_;
  bool commit_only_ = false;
  ParamTable logits_;
};

struct ActionDistribution {
  StateKey key;
  std::vector<Action> actions;
  std::vector<double> probs;

  double prob_of(Action a) const;
};

StateKey state_key(const Problem& problem, const EnvState& state);

// Actions the policy may choose at `state` (all legal actions, or only Commit
// for the direct policy).
std::vector<Action> policy_actions(const Policy& policy, const Problem& problem,
                                   const EnvState& state);

ActionDistribution action_distribution(const Policy& policy, const Problem& problem,
                                       const EnvState& state);
double log_prob(const Policy& policy, const Problem& problem, const EnvState& state, Action action);

// d log pi(action | state) / d logits = (indicator(action) - pi) / temperature,
// supported on the state's key only.
ParamGradient log_prob_gradient(const Policy& policy, const Problem& problem,
                                const EnvState& state, Action action);

Policy apply_update(const Policy& policy, const ParamGradient& gradient, double step_size);

// The direct baseline: commits to the meta-prover's guess immediately.
Policy direct_policy(EnvKind kind);

// Line-oriented checkpoint; logits use shortest round-trip formatting so
// parse_policy(serialize_policy(p)) == p bit for bit.
std::string serialize_policy(const Policy& policy);
Policy parse_policy(std::string_view text);
void save_policy(const Policy& policy, const std::filesystem::path& path);
Policy load_policy(const std::filesystem::path& path);

std::string format_double(double value);

}  // namespace mrt
