#include "mrt/rewards.hpp"

#include <numeric>
#include <stdexcept>

#include "mrt/random.hpp"

namespace mrt {

double ProgressRecord::total() const {
  return std::accumulate(per_episode.begin(), per_episode.end(), 0.0);
}

PrefixEstimate estimate_success(const Problem& problem, const EnvState& prefix_state,
                                int prefix_len, const EstimatorSpec& spec, std::uint64_t seed) {
  PrefixEstimate est;
  est.prefix_len = prefix_len;
  est.method = spec.method;
  if (spec.method == EstimateMethod::Exact) {
    est.value = exact_success_prob(problem, prefix_state);
    return est;
  }
  if (spec.n_samples <= 0) throw std::invalid_argument("Monte Carlo estimate needs n_samples > 0");
  est.n_samples = spec.n_samples;
  Rng rng(seed);
  int hits = 0;
  for (int i = 0; i < spec.n_samples; ++i)
    hits += meta_prover_guess(problem, prefix_state, rng) == problem.hidden_answer ? 1 : 0;
  est.value = static_cast<double>(hits) / spec.n_samples;
  return est;
}

double progress(const PrefixEstimate& before, const PrefixEstimate& after) {
  if (before.prefix_len + 1 != after.prefix_len)
    throw std::invalid_argument("progress needs consecutive prefixes, got " +
                                std::to_string(before.prefix_len) + " and " +
                                std::to_string(after.prefix_len));
  return after.value - before.value;
}

ProgressRecord trace_progress_profile(const Problem& problem, const Trace& trace,
                                      const EstimatorSpec& spec, std::uint64_t seed, double alpha,
                                      BonusMode mode) {
  if (alpha < 0.0) throw std::invalid_argument("alpha must be nonnegative");
  ProgressRecord rec;
  rec.alpha = alpha;
  rec.mode = mode;
  const auto states = replay(problem, trace);
  rec.prefix_values.reserve(states.size());
  for (std::size_t j = 0; j < states.size(); ++j)
    rec.prefix_values.push_back(estimate_success(problem, states[j], static_cast<int>(j), spec, seed));
  for (std::size_t j = 0; j + 1 < rec.prefix_values.size(); ++j)
    rec.per_episode.push_back(progress(rec.prefix_values[j], rec.prefix_values[j + 1]));
  return rec;
}

std::vector<double> mrt_reward(int outcome, const ProgressRecord& record) {
  if (record.mode == BonusMode::TraceLevel)
    return {static_cast<double>(outcome) + record.alpha * record.total()};
  std::vector<double> out(record.per_episode.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = record.alpha * record.per_episode[j];
  if (out.empty()) return {static_cast<double>(outcome)};
  out.back() += outcome;
  return out;
}

double length_penalized_reward(int outcome, int total_tokens, double lambda, int budget) {
  if (budget <= 0) throw std::invalid_argument("budget must be positive");
  if (lambda < 0.0) throw std::invalid_argument("length penalty must be nonnegative");
  if (total_tokens < 0 || total_tokens > budget)
    throw std::invalid_argument("total_tokens must lie in [0, budget]");
  return outcome - lambda * (static_cast<double>(total_tokens) / budget);
}

}  // namespace mrt
