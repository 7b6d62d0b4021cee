#include "mrt/trainer_rl.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mrt/eval.hpp"
#include "mrt/random.hpp"
#include "mrt/rollout.hpp"

namespace mrt {

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::Outcome: return "outcome";
    case RewardMode::MRT: return "mrt";
    case RewardMode::LengthPenalty: return "length_penalty";
  }
  return "unknown";
}

RewardMode parse_reward_mode(const std::string& text) {
  if (text == "outcome") return RewardMode::Outcome;
  if (text == "mrt") return RewardMode::MRT;
  if (text == "length_penalty") return RewardMode::LengthPenalty;
  throw std::invalid_argument("unknown reward_mode '" + text +
                              "' (expected outcome, mrt or length_penalty)");
}

void TrainerConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("alpha must be a finite nonnegative number");
  if (group_size < 2) throw std::invalid_argument("group_size must be at least 2");
  if (steps_per_iteration < 0) throw std::invalid_argument("steps_per_iteration must be nonnegative");
  if (iterations < 0) throw std::invalid_argument("iterations must be nonnegative");
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("step_size must be a finite nonnegative number");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("lambda must be a finite nonnegative number");
  if (budget < 1) throw std::invalid_argument("budget must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (eval_budget < 0) throw std::invalid_argument("eval_budget must be nonnegative");
  if (after_estimator.n_samples < 1) throw std::invalid_argument("estimator n_samples must be positive");
  for (std::size_t i = 0; i < curriculum.size(); ++i) {
    if (curriculum[i].budget < 1) throw std::invalid_argument("curriculum budgets must be positive");
    if (curriculum[i].start_step < 0) throw std::invalid_argument("curriculum steps must be nonnegative");
    if (i > 0 && (curriculum[i].budget <= curriculum[i - 1].budget ||
                  curriculum[i].start_step <= curriculum[i - 1].start_step))
      throw std::invalid_argument("curriculum budgets and steps must be increasing");
  }
}

int TrainerConfig::budget_at(int step) const {
  int b = budget;
  for (const auto& stage : curriculum)
    if (step >= stage.start_step) b = stage.budget;
  return b;
}

GroupSettings group_settings(const TrainerConfig& config, int step) {
  GroupSettings s;
  s.group_size = config.group_size;
  s.budget = config.budget_at(step);
  s.reward_mode = config.reward_mode;
  s.alpha = config.alpha;
  s.lambda = config.lambda;
  s.prefix_estimator = config.prefix_estimator;
  s.after_estimator = config.after_estimator;
  return s;
}

std::vector<double> group_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("group advantages need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd < 1e-8) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

RolloutGroup sample_group(const Policy& ref_policy, const Policy& policy, const Problem& problem,
                          const GroupSettings& settings, std::uint64_t seed) {
  if (settings.group_size < 2) throw std::invalid_argument("group_size must be at least 2");
  RolloutGroup g;
  g.problem_id = problem.id;
  g.problem = problem;
  g.reference = rollout(ref_policy, problem, settings.budget, derive_seed(seed, "reference", 0));
  Rng pick(derive_seed(seed, "truncation", 0));
  g.prefix_len = static_cast<int>(pick.index(g.reference.episodes.size()));
  const Trace prefix = truncate_trace(g.reference, static_cast<std::size_t>(g.prefix_len));
  const EnvState prefix_state = replay(problem, prefix).back();

  const auto G = static_cast<std::size_t>(settings.group_size);
  double term_sum = 0.0;
  for (std::size_t i = 0; i < G; ++i) {
    g.continuations.push_back(
        continue_rollout(policy, problem, prefix, settings.budget, derive_seed(seed, "continuation", i)));
    g.terminations.push_back(terminate_rollout(problem, prefix, derive_seed(seed, "termination", i)));
    term_sum += g.terminations.back().outcome;
  }
  g.prefix_value = settings.prefix_estimator == PrefixEstimator::Exact
                       ? exact_success_prob(problem, prefix_state)
                       : term_sum / static_cast<double>(G);

  for (std::size_t i = 0; i < G; ++i) {
    const Trace& c = g.continuations[i];
    const Episode& first = c.episodes[static_cast<std::size_t>(g.prefix_len)];
    const EnvState after = apply_episode(problem, prefix_state, first);
    const double j_after =
        estimate_success(problem, after, g.prefix_len + 1, settings.after_estimator,
                         derive_seed(seed, "after-estimate", i))
            .value;
    g.progress.push_back(j_after - g.prefix_value);
    double r = c.outcome;
    switch (settings.reward_mode) {
      case RewardMode::Outcome:
        break;
      case RewardMode::MRT:
        r = c.outcome + settings.alpha * g.progress.back();
        break;
      case RewardMode::LengthPenalty:
        r = length_penalized_reward(c.outcome, c.total_tokens, settings.lambda, settings.budget);
        break;
    }
    g.rewards.push_back(r);
  }
  g.advantages = group_advantages(g.rewards);
  return g;
}

namespace {

template <class F>
void for_each_sampled(const RolloutGroup& g, F&& f) {
  for (std::size_t i = 0; i < g.continuations.size(); ++i) {
    const Trace& c = g.continuations[i];
    const auto states = replay(g.problem, c);
    for (std::size_t t = static_cast<std::size_t>(g.prefix_len); t < c.episodes.size(); ++t) {
      if (c.episodes[t].forced) continue;
      f(i, states[t], c.episodes[t].action);
    }
  }
}

}  // namespace

double grpo_surrogate(const Policy& policy, const std::vector<RolloutGroup>& groups) {
  if (groups.empty()) throw std::invalid_argument("GRPO needs at least one group");
  double total = 0.0;
  for (const auto& g : groups)
    for_each_sampled(g, [&](std::size_t i, const EnvState& s, Action a) {
      total += g.advantages[i] * log_prob(policy, g.problem, s, a);
    });
  return total / static_cast<double>(groups.size());
}

ParamGradient grpo_gradient(const Policy& policy, const std::vector<RolloutGroup>& groups) {
  if (groups.empty()) throw std::invalid_argument("GRPO needs at least one group");
  ParamGradient grad;
  for (const auto& g : groups)
    for_each_sampled(g, [&](std::size_t i, const EnvState& s, Action a) {
      if (g.advantages[i] == 0.0) return;
      grad.add(log_prob_gradient(policy, g.problem, s, a), g.advantages[i]);
    });
  grad.scale(1.0 / static_cast<double>(groups.size()));
  return grad;
}

Policy grpo_step(const Policy& policy, const std::vector<RolloutGroup>& groups, double step_size) {
  const auto grad = grpo_gradient(policy, groups);
  if (!grad.finite()) throw std::runtime_error("non-finite GRPO gradient");
  return apply_update(policy, grad, step_size);
}

RlRunResult train_rl(const TrainerConfig& config, const Policy& initial,
                     const std::vector<Problem>& problems, const std::vector<Problem>& eval_set) {
  config.validate();
  if (problems.empty()) throw std::invalid_argument("train_rl needs training problems");
  if (eval_set.empty()) throw std::invalid_argument("train_rl needs evaluation problems");
  RlRunResult run{initial, {}};
  const std::uint64_t eval_seed = derive_seed(config.master_seed, "eval", 0);
  int step = 0;
  for (int it = 0; it < config.iterations; ++it) {
    const Policy reference = run.policy;
    for (int s = 0; s < config.steps_per_iteration; ++s, ++step) {
      const auto settings = group_settings(config, step);
      Rng batch_rng(derive_seed(config.master_seed, "batch", static_cast<std::uint64_t>(step)));
      std::vector<RolloutGroup> groups;
      double reward_sum = 0.0, token_sum = 0.0;
      std::size_t count = 0;
      for (int b = 0; b < config.batch_size; ++b) {
        const Problem& problem = problems[batch_rng.index(problems.size())];
        const auto seed = derive_seed(config.master_seed, "group",
                                      static_cast<std::uint64_t>(step) * config.batch_size + b);
        groups.push_back(sample_group(reference, run.policy, problem, settings, seed));
        for (std::size_t i = 0; i < groups.back().rewards.size(); ++i) {
          reward_sum += groups.back().rewards[i];
          token_sum += groups.back().continuations[i].total_tokens;
          ++count;
        }
      }
      run.policy = grpo_step(run.policy, groups, config.step_size);
      RlStepLog log;
      log.step = step;
      log.iteration = it;
      log.budget = settings.budget;
      log.mean_reward = reward_sum / static_cast<double>(count);
      log.mean_tokens = token_sum / static_cast<double>(count);
      const int eval_budget = config.eval_budget > 0 ? config.eval_budget : settings.budget;
      log.eval_accuracy = evaluate_accuracy(run.policy, eval_set, eval_budget, eval_seed);
      run.logs.push_back(log);
    }
  }
  return run;
}

std::string rl_log_line(const RlStepLog& log) {
  std::ostringstream out;
  out << "{\"step\":" << log.step << ",\"iteration\":" << log.iteration << ",\"budget\":" << log.budget
      << ",\"mean_reward\":" << format_double(log.mean_reward)
      << ",\"mean_tokens\":" << format_double(log.mean_tokens)
      << ",\"eval_accuracy\":" << format_double(log.eval_accuracy) << "}";
  return out.str();
}

}  // namespace mrt
