#include "mrt/trainer_star.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mrt/eval.hpp"
#include "mrt/random.hpp"
#include "mrt/rollout.hpp"
#include "mrt/segmentation.hpp"

namespace mrt {

void StarConfig::validate() const {
  env.costs.validate();
  if (budget < 1) throw std::invalid_argument("star budget must be positive");
  if (iterations < 0) throw std::invalid_argument("iterations must be nonnegative");
  if (train_problems < 1) throw std::invalid_argument("train_problems must be positive");
  if (eval_problems < 1) throw std::invalid_argument("eval_problems must be positive");
  if (estimator.n_samples < 1) throw std::invalid_argument("estimator n_samples must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("step_size must be a finite nonnegative number");
}

std::vector<double> cumulative_sums(const std::vector<double>& values) {
  std::vector<double> out;
  double running = 0.0;
  for (double v : values) {
    running += v;
    out.push_back(running);
  }
  return out;
}

std::optional<int> select_star_prefix(const std::vector<double>& cumulative_progress) {
  std::optional<int> best;
  bool any_positive = false;
  for (std::size_t j = 0; j < cumulative_progress.size(); ++j) {
    const double v = cumulative_progress[j];
    any_positive = any_positive || v > 0.0;
    if (!best || v > cumulative_progress[static_cast<std::size_t>(*best)]) best = static_cast<int>(j);
  }
  if (!any_positive) return std::nullopt;
  return best;
}

namespace {

std::vector<Action> actions_of(const Trace& t, std::size_t from, std::size_t to) {
  std::vector<Action> out;
  for (std::size_t i = from; i < to; ++i) out.push_back(t.episodes[i].action);
  return out;
}

std::vector<double> deliberation_progress(const Problem& problem, const Trace& source,
                                          const EstimatorSpec& estimator, std::uint64_t seed) {
  const Trace deliberation = truncate_trace(source, source.episodes.size());
  if (deliberation.episodes.empty()) return {};
  return trace_progress_profile(problem, deliberation, estimator, seed, 1.0, BonusMode::PerEpisode)
      .per_episode;
}

}  // namespace

std::vector<StarDatasetEntry> collect_star_dataset(const Policy& policy,
                                                   const std::vector<Problem>& problems,
                                                   const CollectOptions& options,
                                                   std::uint64_t seed) {
  std::vector<StarDatasetEntry> out;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const Problem& problem = problems[i];
    const Trace source = rollout(policy, problem, options.budget, derive_seed(seed, "star-rollout", i));
    const std::uint64_t progress_seed = derive_seed(seed, "star-progress", i);
    const auto cumulative =
        cumulative_sums(deliberation_progress(problem, source, options.estimator, progress_seed));
    const std::size_t deliberation = truncate_trace(source, source.episodes.size()).episodes.size();

    int j_star = 0;
    if (options.outcome_only) {
      j_star = static_cast<int>(deliberation) - 1;
    } else {
      const auto chosen = select_star_prefix(cumulative);
      if (!chosen) continue;
      j_star = *chosen;
    }
    const Trace prefix = truncate_trace(source, static_cast<std::size_t>(j_star + 1));
    const Trace example = terminate_rollout(problem, prefix, derive_seed(seed, "star-completion", i));
    if (example.outcome != 1) continue;

    StarDatasetEntry e;
    e.problem_id = problem.id;
    e.problem = problem;
    e.retained_prefix = j_star;
    e.prefix_actions = actions_of(example, 0, prefix.episodes.size());
    e.completion_actions = actions_of(example, prefix.episodes.size(), example.episodes.size());
    e.cumulative_progress = cumulative;
    e.weight = 1.0;
    if (options.weight_by_progress && j_star >= 0)
      e.weight = std::max(cumulative[static_cast<std::size_t>(j_star)], 1e-6);
    e.example = example;
    e.source = source;
    e.completion_outcome = example.outcome;
    e.outcome_only = options.outcome_only;
    e.progress_seed = progress_seed;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> audit_star_dataset(const std::vector<StarDatasetEntry>& dataset,
                                            const EstimatorSpec& estimator) {
  std::vector<std::string> violations;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const auto& e = dataset[k];
    const std::string tag = "entry " + std::to_string(k) + " (" + e.problem_id + "): ";
    const auto states = replay(e.problem, e.example);
    if (!states.back().terminal() || e.example.outcome != 1 ||
        *states.back().committed != e.problem.hidden_answer)
      violations.push_back(tag + "completion is not a correct commit");
    const std::size_t n_prefix = e.prefix_actions.size();
    if (n_prefix + e.completion_actions.size() != e.example.episodes.size())
      violations.push_back(tag + "action lists do not cover the example");
    for (std::size_t i = 0; i < n_prefix && i < e.source.episodes.size(); ++i)
      if (!(e.example.episodes[i] == e.source.episodes[i])) {
        violations.push_back(tag + "prefix is not a prefix of the source rollout");
        break;
      }
    if (e.outcome_only) continue;
    const auto cumulative =
        cumulative_sums(deliberation_progress(e.problem, e.source, estimator, e.progress_seed));
    const auto chosen = select_star_prefix(cumulative);
    if (!chosen) {
      violations.push_back(tag + "no positive cumulative progress");
      continue;
    }
    if (*chosen != e.retained_prefix || static_cast<std::size_t>(e.retained_prefix + 1) != n_prefix)
      violations.push_back(tag + "retained prefix " + std::to_string(e.retained_prefix) +
                           " is not the argmax " + std::to_string(*chosen));
    if (cumulative != e.cumulative_progress)
      violations.push_back(tag + "stored cumulative progress does not match a recomputation");
  }
  return violations;
}

namespace {

template <class F>
void for_each_action(const StarDatasetEntry& e, F&& f) {
  const auto states = replay(e.problem, e.example);
  for (std::size_t i = 0; i < e.example.episodes.size(); ++i) f(states[i], e.example.episodes[i].action);
}

}  // namespace

double dataset_log_likelihood(const Policy& policy, const std::vector<StarDatasetEntry>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("empty STaR dataset");
  double total = 0.0;
  for (const auto& e : dataset) {
    double ll = 0.0;
    for_each_action(e, [&](const EnvState& s, Action a) { ll += log_prob(policy, e.problem, s, a); });
    total += e.weight * ll;
  }
  return total / static_cast<double>(dataset.size());
}

StarUpdateResult star_update(const Policy& policy, const std::vector<StarDatasetEntry>& dataset,
                             double step_size, int epochs) {
  if (dataset.empty()) throw std::invalid_argument("star_update needs a non-empty dataset");
  if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  StarUpdateResult result{policy, {}};
  for (int epoch = 0; epoch < epochs; ++epoch) {
    ParamGradient grad;
    for (const auto& e : dataset)
      for_each_action(e, [&](const EnvState& s, Action a) {
        grad.add(log_prob_gradient(result.policy, e.problem, s, a), e.weight);
      });
    grad.scale(1.0 / static_cast<double>(dataset.size()));
    result.policy = apply_update(result.policy, grad, step_size);
    result.epoch_log_likelihood.push_back(dataset_log_likelihood(result.policy, dataset));
  }
  return result;
}

StarRunResult train_star(const StarConfig& config, const Policy* initial) {
  config.validate();
  const auto train = sample_problem_set(config.env, config.train_problems,
                                        derive_seed(config.master_seed, "train-problems", 0));
  const auto eval = sample_problem_set(config.env, config.eval_problems,
                                       derive_seed(config.master_seed, "eval-problems", 0));
  const std::uint64_t eval_seed = derive_seed(config.master_seed, "eval", 0);

  const Policy start = initial ? *initial : Policy(config.env.kind, config.temperature);
  if (start.env_kind() != config.env.kind)
    throw std::invalid_argument("initial policy does not match the environment kind");
  StarRunResult run{start, start, {}, {}, 0.0};
  run.base_accuracy = evaluate_accuracy(run.initial, eval, config.budget, eval_seed);

  CollectOptions options;
  options.estimator = config.estimator;
  options.budget = config.budget;
  options.outcome_only = config.outcome_only;
  options.weight_by_progress = config.weight_by_progress;

  for (int it = 0; it < config.iterations; ++it) {
    const auto fresh = collect_star_dataset(run.policy, train, options,
                                            derive_seed(config.master_seed, "star-iteration", it));
    StarIterationLog log;
    log.iteration = it;
    log.retained = fresh.size();
    double progress_sum = 0.0;
    for (const auto& e : fresh)
      if (e.retained_prefix >= 0)
        progress_sum += e.cumulative_progress[static_cast<std::size_t>(e.retained_prefix)];
    log.mean_progress = fresh.empty() ? 0.0 : progress_sum / static_cast<double>(fresh.size());
    run.dataset.insert(run.dataset.end(), fresh.begin(), fresh.end());
    log.dataset_size = run.dataset.size();
    if (!run.dataset.empty()) {
      auto upd = star_update(run.policy, run.dataset, config.step_size, config.epochs);
      run.policy = std::move(upd.policy);
      log.epoch_log_likelihood = std::move(upd.epoch_log_likelihood);
    }
    log.eval_accuracy = evaluate_accuracy(run.policy, eval, config.budget, eval_seed);
    run.logs.push_back(std::move(log));
  }
  return run;
}

std::string star_log_line(const StarIterationLog& log) {
  std::ostringstream out;
  out << "{\"iteration\":" << log.iteration << ",\"retained\":" << log.retained
      << ",\"dataset_size\":" << log.dataset_size
      << ",\"mean_progress\":" << format_double(log.mean_progress)
      << ",\"eval_accuracy\":" << format_double(log.eval_accuracy) << ",\"log_likelihood\":[";
  for (std::size_t i = 0; i < log.epoch_log_likelihood.size(); ++i)
    out << (i ? "," : "") << format_double(log.epoch_log_likelihood[i]);
  out << "]}";
  return out.str();
}

namespace {

using nlohmann::json;

std::string describe(const Episode& e) {
  std::string s = to_string(e.kind());
  switch (e.kind()) {
    case EpisodeKind::Probe:
    case EpisodeKind::Attempt: {
      s += " {";
      for (std::size_t i = 0; i < e.subset.size(); ++i) s += (i ? "," : "") + std::to_string(e.subset[i]);
      s += "}";
      break;
    }
    case EpisodeKind::PullArm:
    case EpisodeKind::Backtrack:
      s += " " + std::to_string(e.target);
      break;
    case EpisodeKind::Commit:
      s += " " + std::to_string(e.answer);
      break;
    case EpisodeKind::Verify:
      break;
  }
  return s;
}

json encode_actions(const Trace& t) {
  json arr = json::array();
  for (const auto& e : t.episodes) {
    json item = {{"id", e.action.id()}};
    if (e.kind() == EpisodeKind::Commit) item["answer"] = e.answer;
    if (e.forced) item["forced"] = true;
    arr.push_back(item);
  }
  return arr;
}

Trace decode_actions(const Problem& problem, const json& arr) {
  Trace t;
  t.problem_id = problem.id;
  EnvState state = initial_state(problem);
  Rng unused(0);
  for (const auto& item : arr) {
    const Action a = Action::from_id(item.at("id").get<int>());
    Episode e;
    if (a.kind == EpisodeKind::Commit) {
      e.action = a;
      e.token_cost = problem.costs.cost(a.kind);
      e.answer = item.at("answer").get<int>();
    } else {
      e = make_episode(problem, state, a, unused);
    }
    e.forced = item.value("forced", false);
    state = apply_episode(problem, state, e);
    t.total_tokens += e.token_cost;
    if (a.kind == EpisodeKind::Commit) {
      t.final_answer = e.answer;
      t.outcome = e.answer == problem.hidden_answer ? 1 : 0;
    }
    t.episodes.push_back(std::move(e));
  }
  return t;
}

std::vector<int> action_ids(const std::vector<Action>& actions) {
  std::vector<int> ids;
  for (const auto& a : actions) ids.push_back(a.id());
  return ids;
}

}  // namespace

void save_star_dataset(const std::vector<StarDatasetEntry>& dataset,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  for (const auto& e : dataset) {
    RawTrace raw;
    raw.problem_id = e.problem_id;
    std::vector<int> tokens;
    for (const auto& ep : e.example.episodes) {
      raw.steps.push_back(describe(ep));
      tokens.push_back(ep.token_cost);
    }
    raw.per_step_tokens = tokens;
    raw.final_answer = std::to_string(e.example.final_answer.value_or(-1));
    raw.correct = e.completion_outcome;
    json obj = json::parse(emit_trace_record(raw));
    obj["retained_prefix"] = e.retained_prefix;
    obj["weight"] = e.weight;
    obj["prefix_actions"] = action_ids(e.prefix_actions);
    obj["completion_actions"] = action_ids(e.completion_actions);
    obj["example"] = encode_actions(e.example);
    obj["source"] = encode_actions(e.source);
    obj["outcome_only"] = e.outcome_only;
    obj["progress_seed"] = e.progress_seed;
    json cum = json::array();
    for (double v : e.cumulative_progress) cum.push_back(format_double(v));
    obj["cumulative_progress"] = cum;
    out << obj.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing dataset file " + path.string());
}

std::vector<StarDatasetEntry> load_star_dataset(const std::filesystem::path& path,
                                                const std::vector<Problem>& problems) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;
  std::vector<StarDatasetEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      const RawTrace raw = parse_trace_record(line);
      const json obj = json::parse(line);
      const auto it = by_id.find(raw.problem_id);
      if (it == by_id.end()) throw std::invalid_argument("unknown problem " + raw.problem_id);
      StarDatasetEntry e;
      e.problem_id = raw.problem_id;
      e.problem = *it->second;
      e.retained_prefix = obj.at("retained_prefix").get<int>();
      e.weight = obj.at("weight").get<double>();
      for (int id : obj.at("prefix_actions")) e.prefix_actions.push_back(Action::from_id(id));
      for (int id : obj.at("completion_actions")) e.completion_actions.push_back(Action::from_id(id));
      e.example = decode_actions(e.problem, obj.at("example"));
      e.source = decode_actions(e.problem, obj.at("source"));
      e.outcome_only = obj.at("outcome_only").get<bool>();
      e.progress_seed = obj.at("progress_seed").get<std::uint64_t>();
      for (const auto& v : obj.at("cumulative_progress")) {
        const auto s = v.get<std::string>();
        e.cumulative_progress.push_back(std::stod(s));
      }
      e.completion_outcome = raw.correct;
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::invalid_argument(where + ex.what());
    }
  }
  return out;
}

}  // namespace mrt
