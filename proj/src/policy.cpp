#include "mrt/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace mrt {

void ParamGradient::add(const ParamGradient& other, double scale) {
  for (const auto& [k, v] : other.entries) entries[k] += scale * v;
}

void ParamGradient::scale(double factor) {
  for (auto& [k, v] : entries) v *= factor;
}

bool ParamGradient::finite() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const auto& kv) { return std::isfinite(kv.second); });
}

double ParamGradient::value(const ParamKey& key) const {
  auto it = entries.find(key);
  return it == entries.end() ? 0.0 : it->second;
}

Policy::Policy(EnvKind kind, double temperature) : kind_(kind), temperature_(temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("policy temperature must be positive and finite");
}

double Policy::logit(const ParamKey& key) const {
  auto it = logits_.find(key);
  return it == logits_.end() ? 0.0 : it->second;
}

void Policy::set_logit(const ParamKey& key, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("policy logits must be finite");
  logits_[key] = value;
}

double ActionDistribution::prob_of(Action a) const {
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i] == a) return probs[i];
  return 0.0;
}

namespace {

int ceil_log2(std::size_t n) {
  int level = 0;
  while ((std::size_t{1} << level) < n) ++level;
  return level;
}

}  // namespace

StateKey state_key(const Problem& problem, const EnvState& state) {
  StateKey key;
  key.episode_bucket = std::min(state.episodes_taken, 5);
  switch (problem.kind) {
    case EnvKind::CandidateElimination:
      key.info_level = ceil_log2(state.surviving.size());
      break;
    case EnvKind::DeterministicBandit:
      key.info_level = std::min(static_cast<int>(state.observed.size()), 7);
      break;
    case EnvKind::BacktrackingSearch:
      if (state.view_stack.empty()) {
        key.info_level = 0;
      } else {
        const bool hit = std::binary_search(state.surviving.begin(), state.surviving.end(),
                                            problem.hidden_answer);
        key.info_level = hit ? 1 : 2;
      }
      break;
  }
  return key;
}

std::vector<Action> policy_actions(const Policy& policy, const Problem& problem,
                                   const EnvState& state) {
  if (policy.env_kind() != problem.kind)
    throw std::invalid_argument("policy built for " + to_string(policy.env_kind()) +
                                " used on " + to_string(problem.kind));
  if (state.terminal()) throw std::invalid_argument("action distribution requested at a terminal state");
  if (policy.commit_only()) return {Action{EpisodeKind::Commit, 0}};
  return legal_actions(problem, state);
}

ActionDistribution action_distribution(const Policy& policy, const Problem& problem,
                                       const EnvState& state) {
  ActionDistribution d;
  d.key = state_key(problem, state);
  d.actions = policy_actions(policy, problem, state);
  d.probs.resize(d.actions.size());
  double top = -INFINITY;
  for (std::size_t i = 0; i < d.actions.size(); ++i) {
    d.probs[i] = policy.logit({d.key, d.actions[i].id()}) / policy.temperature();
    top = std::max(top, d.probs[i]);
  }
  double total = 0.0;
  for (double& p : d.probs) {
    p = std::exp(p - top);
    total += p;
  }
  for (double& p : d.probs) p /= total;
  return d;
}

double log_prob(const Policy& policy, const Problem& problem, const EnvState& state, Action action) {
  const auto d = action_distribution(policy, problem, state);
  const double p = d.prob_of(action);
  if (p <= 0.0) throw std::invalid_argument("action " + to_string(action.kind) + " is not legal here");
  return std::log(p);
}

ParamGradient log_prob_gradient(const Policy& policy, const Problem& problem,
                                const EnvState& state, Action action) {
  const auto d = action_distribution(policy, problem, state);
  const auto chosen = std::find(d.actions.begin(), d.actions.end(), action);
  if (chosen == d.actions.end())
    throw std::invalid_argument("action " + to_string(action.kind) + " is not legal here");
  ParamGradient g;
  const double inv_t = 1.0 / policy.temperature();
  for (std::size_t i = 0; i < d.actions.size(); ++i) {
    const double indicator = (d.actions[i] == action) ? 1.0 : 0.0;
    g.entries[{d.key, d.actions[i].id()}] = (indicator - d.probs[i]) * inv_t;
  }
  return g;
}

Policy apply_update(const Policy& policy, const ParamGradient& gradient, double step_size) {
  if (!gradient.finite()) throw std::invalid_argument("non-finite gradient");
  if (!std::isfinite(step_size)) throw std::invalid_argument("non-finite step size");
  Policy next = policy;
  if (step_size == 0.0) return next;
  for (const auto& [key, g] : gradient.entries) {
    if (g == 0.0) continue;
    next.set_logit(key, policy.logit(key) + step_size * g);
  }
  return next;
}

Policy direct_policy(EnvKind kind) {
  Policy p(kind);
  p.commit_only_ = true;
  return p;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view token) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw std::invalid_argument("bad number '" + std::string(token) + "'");
  return v;
}

EpisodeKind parse_episode_kind(const std::string& name) {
  for (auto k : {EpisodeKind::Probe, EpisodeKind::PullArm, EpisodeKind::Verify,
                 EpisodeKind::Attempt, EpisodeKind::Backtrack, EpisodeKind::Commit})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown action kind '" + name + "'");
}

}  // namespace

std::string serialize_policy(const Policy& policy) {
  std::ostringstream out;
  out << "mrt-policy 1\n";
  out << "env " << to_string(policy.env_kind()) << "\n";
  out << "temperature " << format_double(policy.temperature()) << "\n";
  out << "commit_only " << (policy.commit_only() ? 1 : 0) << "\n";
  for (const auto& [key, logit] : policy.params()) {
    const Action a = Action::from_id(key.action_id);
    out << "param " << key.state.episode_bucket << ' ' << key.state.info_level << ' '
        << to_string(a.kind) << ' ' << a.arg << ' ' << format_double(logit) << "\n";
  }
  return out.str();
}

Policy parse_policy(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("policy checkpoint line " + std::to_string(line_no) + ": " + msg);
  };
  std::optional<EnvKind> kind;
  double temperature = 1.0;
  bool commit_only = false;
  ParamTable table;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tag;
    fields >> tag;
    if (!header) {
      int version = 0;
      if (tag != "mrt-policy" || !(fields >> version) || version != 1) fail("missing header");
      header = true;
      continue;
    }
    if (tag == "env") {
      std::string name;
      fields >> name;
      kind = parse_env_kind(name);
    } else if (tag == "temperature") {
      std::string v;
      fields >> v;
      temperature = parse_double(v);
    } else if (tag == "commit_only") {
      int v = 0;
      fields >> v;
      commit_only = v != 0;
    } else if (tag == "param") {
      ParamKey key;
      std::string kind_name, logit;
      int arg = 0;
      if (!(fields >> key.state.episode_bucket >> key.state.info_level >> kind_name >> arg >> logit))
        fail("malformed param line");
      key.action_id = Action{parse_episode_kind(kind_name), arg}.id();
      table[key] = parse_double(logit);
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  if (!header || !kind) throw std::invalid_argument("policy checkpoint missing header or env");
  Policy p(*kind, temperature);
  p.commit_only_ = commit_only;
  for (const auto& [k, v] : table) p.set_logit(k, v);
  return p;
}

void save_policy(const Policy& policy, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write policy checkpoint " + path.string());
  out << serialize_policy(policy);
}

Policy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read policy checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_policy(buf.str());
}

}  // namespace mrt
