#include "mrt/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrt/eval.hpp"
#include "mrt/random.hpp"
#include "mrt/regret.hpp"
#include "mrt/rollout.hpp"
#include "mrt/segmentation.hpp"

namespace mrt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_integer(const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("expected an integer, got '" + text + "'");
  return v;
}

double parse_real(const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("expected a number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& s : split_list(text)) out.push_back(parse_integer<int>(s));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string method_text(EstimateMethod m) { return m == EstimateMethod::Exact ? "exact" : "monte_carlo"; }

EstimateMethod parse_method(const std::string& s) {
  if (s == "exact") return EstimateMethod::Exact;
  if (s == "monte_carlo") return EstimateMethod::MonteCarlo;
  throw std::invalid_argument("expected exact or monte_carlo, got '" + s + "'");
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MRT_INT_FIELD(sec, name, member)                                                   \
  Field {                                                                                  \
    sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_integer<int>(v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                        \
  }
#define MRT_REAL_FIELD(sec, name, member)                                          \
  Field {                                                                          \
    sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_real(v); }, \
        [](const RunConfig& c) { return format_double(c.member); }                 \
  }
#define MRT_BOOL_FIELD(sec, name, member)                                          \
  Field {                                                                          \
    sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v); }, \
        [](const RunConfig& c) { return bool_text(c.member); }                     \
  }
#define MRT_LIST_FIELD(sec, name, member)                                              \
  Field {                                                                              \
    sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_int_list(v); }, \
        [](const RunConfig& c) { return join_ints(c.member); }                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"run", "seed",
       [](RunConfig& c, const std::string& v) { c.seed = parse_integer<std::uint64_t>(v); },
       [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string("unset"); }},
      {"run", "output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir; }},

      {"env", "kind", [](RunConfig& c, const std::string& v) { c.env.kind = parse_env_kind(v); },
       [](const RunConfig& c) { return to_string(c.env.kind); }},
      MRT_INT_FIELD("env", "size", env.size),
      MRT_INT_FIELD("env", "num_blocks", env.num_blocks),
      MRT_INT_FIELD("env", "cost_probe", env.costs.probe),
      MRT_INT_FIELD("env", "cost_pull_arm", env.costs.pull_arm),
      MRT_INT_FIELD("env", "cost_verify", env.costs.verify),
      MRT_INT_FIELD("env", "cost_attempt", env.costs.attempt),
      MRT_INT_FIELD("env", "cost_backtrack", env.costs.backtrack),
      MRT_INT_FIELD("env", "cost_commit", env.costs.commit),

      MRT_REAL_FIELD("policy", "temperature", policy.temperature),
      {"policy", "checkpoint", [](RunConfig& c, const std::string& v) { c.policy.checkpoint = v; },
       [](const RunConfig& c) { return c.policy.checkpoint; }},

      {"trainer", "reward_mode",
       [](RunConfig& c, const std::string& v) { c.rl.reward_mode = parse_reward_mode(v); },
       [](const RunConfig& c) { return to_string(c.rl.reward_mode); }},
      MRT_REAL_FIELD("trainer", "alpha", rl.alpha),
      MRT_INT_FIELD("trainer", "group_size", rl.group_size),
      MRT_INT_FIELD("trainer", "steps_per_iteration", rl.steps_per_iteration),
      MRT_INT_FIELD("trainer", "iterations", rl.iterations),
      MRT_REAL_FIELD("trainer", "step_size", rl.step_size),
      MRT_REAL_FIELD("trainer", "lambda", rl.lambda),
      MRT_INT_FIELD("trainer", "budget", rl.budget),
      {"trainer", "curriculum",
       [](RunConfig& c, const std::string& v) {
         c.rl.curriculum.clear();
         for (const auto& item : split_list(v)) {
           const auto colon = item.find(':');
           if (colon == std::string::npos)
             throw std::invalid_argument("curriculum entries are step:budget, got '" + item + "'");
           c.rl.curriculum.push_back({parse_integer<int>(trim(item.substr(0, colon))),
                                      parse_integer<int>(trim(item.substr(colon + 1)))});
         }
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.rl.curriculum.size(); ++i)
           s += (i ? "," : "") + std::to_string(c.rl.curriculum[i].start_step) + ":" +
                std::to_string(c.rl.curriculum[i].budget);
         return s;
       }},
      MRT_INT_FIELD("trainer", "batch_size", rl.batch_size),
      {"trainer", "prefix_estimator",
       [](RunConfig& c, const std::string& v) {
         if (v == "terminations") c.rl.prefix_estimator = PrefixEstimator::Terminations;
         else if (v == "exact") c.rl.prefix_estimator = PrefixEstimator::Exact;
         else throw std::invalid_argument("expected terminations or exact, got '" + v + "'");
       },
       [](const RunConfig& c) {
         return std::string(c.rl.prefix_estimator == PrefixEstimator::Exact ? "exact" : "terminations");
       }},
      {"trainer", "estimator",
       [](RunConfig& c, const std::string& v) { c.rl.after_estimator.method = parse_method(v); },
       [](const RunConfig& c) { return method_text(c.rl.after_estimator.method); }},
      MRT_INT_FIELD("trainer", "n_samples", rl.after_estimator.n_samples),
      MRT_INT_FIELD("trainer", "eval_budget", rl.eval_budget),
      MRT_INT_FIELD("trainer", "epochs", star.epochs),
      MRT_BOOL_FIELD("trainer", "outcome_only", star.outcome_only),
      MRT_BOOL_FIELD("trainer", "weight_by_progress", star.weight_by_progress),
      MRT_INT_FIELD("trainer", "train_problems", train_problems),

      MRT_LIST_FIELD("eval", "budgets", eval.budgets),
      MRT_LIST_FIELD("eval", "vote_counts", eval.vote_counts),
      MRT_LIST_FIELD("eval", "extensions", eval.extensions),
      MRT_INT_FIELD("eval", "max_ext_tokens", eval.max_ext_tokens),
      MRT_INT_FIELD("eval", "forcing_base", eval.forcing_base),
      MRT_INT_FIELD("eval", "votes", eval.votes),
      MRT_INT_FIELD("eval", "eval_problems", eval.eval_problems),
      MRT_REAL_FIELD("eval", "bin_width", eval.bin_width),
      {"eval", "format", [](RunConfig& c, const std::string& v) { c.eval.format = v; },
       [](const RunConfig& c) { return c.eval.format; }},
  };
  return table;
}

#undef MRT_INT_FIELD
#undef MRT_REAL_FIELD
#undef MRT_BOOL_FIELD
#undef MRT_LIST_FIELD

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field + ": " + message);
}

}  // namespace

std::uint64_t RunConfig::master_seed() const {
  if (!seed) throw ConfigError("run.seed: required (set it in the config or pass --seed)");
  return *seed;
}

int RunConfig::resolved_forcing_base() const {
  if (eval.forcing_base >= 0) return eval.forcing_base;
  return eval.budgets.empty() ? 0 : eval.budgets.back();
}

TrainerConfig RunConfig::trainer_config() const {
  TrainerConfig t = rl;
  t.master_seed = master_seed();
  return t;
}

StarConfig RunConfig::star_config() const {
  StarConfig s = star;
  s.env = env;
  s.budget = rl.budget;
  s.iterations = rl.iterations;
  s.train_problems = train_problems;
  s.eval_problems = eval.eval_problems;
  s.estimator = rl.after_estimator;
  s.step_size = rl.step_size;
  s.temperature = policy.temperature;
  s.master_seed = master_seed();
  return s;
}

void RunConfig::validate() const {
  master_seed();
  require(env.size >= 2, "env.size", "must be at least 2, got " + std::to_string(env.size));
  require(env.num_blocks >= 1, "env.num_blocks", "must be positive");
  try {
    env.costs.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("env: ") + e.what());
  }
  require(policy.temperature > 0.0 && std::isfinite(policy.temperature), "policy.temperature",
          "must be a positive finite number");
  require(rl.alpha >= 0.0 && std::isfinite(rl.alpha), "trainer.alpha",
          "must be nonnegative, got " + format_double(rl.alpha));
  require(rl.group_size >= 2, "trainer.group_size", "must be at least 2");
  require(rl.steps_per_iteration >= 0, "trainer.steps_per_iteration", "must be nonnegative");
  require(rl.iterations >= 0, "trainer.iterations", "must be nonnegative");
  require(rl.step_size >= 0.0 && std::isfinite(rl.step_size), "trainer.step_size",
          "must be nonnegative");
  require(rl.lambda >= 0.0 && std::isfinite(rl.lambda), "trainer.lambda", "must be nonnegative");
  require(rl.batch_size >= 1, "trainer.batch_size", "must be positive");
  require(rl.after_estimator.n_samples >= 1, "trainer.n_samples", "must be positive");
  require(star.epochs >= 1, "trainer.epochs", "must be positive");
  require(train_problems >= 1, "trainer.train_problems", "must be positive");
  const EnvConfig probe_env = env;
  const int min_budget = minimum_budget(sample_problem(probe_env, 0));
  require(rl.budget >= min_budget, "trainer.budget",
          "must be at least " + std::to_string(min_budget));
  try {
    rl.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("trainer: ") + e.what());
  }
  for (const auto& stage : rl.curriculum)
    require(stage.budget >= min_budget, "trainer.curriculum",
            "budgets must be at least " + std::to_string(min_budget));

  require(!eval.budgets.empty(), "eval.budgets", "must be non-empty");
  for (std::size_t i = 0; i < eval.budgets.size(); ++i) {
    require(eval.budgets[i] >= min_budget, "eval.budgets",
            "must be at least " + std::to_string(min_budget));
    require(i == 0 || eval.budgets[i] > eval.budgets[i - 1], "eval.budgets",
            "must be strictly increasing");
  }
  require(!eval.vote_counts.empty(), "eval.vote_counts", "must be non-empty");
  for (int p : eval.vote_counts) require(p >= 1 && p <= 20, "eval.vote_counts", "must lie in 1..20");
  for (int n : eval.extensions) {
    const auto& grid = extension_grid();
    require(std::find(grid.begin(), grid.end(), n) != grid.end(), "eval.extensions",
            "values must be one of 0, 2, 4, 6, 8");
  }
  require(eval.max_ext_tokens >= 1, "eval.max_ext_tokens", "must be positive");
  require(eval.forcing_base >= -1, "eval.forcing_base", "must be -1, 0 or a budget");
  require(eval.votes >= 1, "eval.votes", "must be positive");
  require(eval.eval_problems >= 1, "eval.eval_problems", "must be positive");
  require(eval.bin_width > 0.0, "eval.bin_width", "must be positive");
  require(eval.format == "csv" || eval.format == "json", "eval.format", "must be csv or json");
  const int base = resolved_forcing_base();
  if (base > 0 && !eval.extensions.empty()) {
    require(base >= min_budget, "eval.forcing_base", "must be at least " + std::to_string(min_budget));
    const int lowest = base + *std::min_element(eval.extensions.begin(), eval.extensions.end()) *
                                  eval.max_ext_tokens;
    require(lowest > eval.budgets.back(), "eval.extensions",
            "forced budgets must exceed the last scheduled budget");
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& source,
                            std::optional<std::uint64_t> seed_override) {
  static const std::set<std::string> sections = {"run", "env", "policy", "trainer", "eval"};
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.section + "." + f.key] = &f;

  RunConfig config;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any section");
    const std::string full = section + "." + key;
    const auto it = index.find(full);
    if (it == index.end())
      throw ConfigError(where + ": unknown key '" + key + "' in section [" + section + "]");
    if (!seen.insert(full).second) throw ConfigError(where + ": duplicate key '" + full + "'");
    try {
      it->second->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + full + ": " + e.what());
    }
  }
  if (seed_override) config.seed = *seed_override;
  config.validate();
  return config;
}

RunConfig parse_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("config file not found: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.string(), seed_override);
}

std::string resolved_config(const RunConfig& config) {
  std::vector<std::string> lines;
  for (const auto& f : fields()) lines.push_back(f.section + "." + f.key + " = " + f.get(config));
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string config_hash(const RunConfig& config) {
  std::string canonical;
  for (const auto& f : fields()) {
    if (f.section == "run" && f.key == "output_dir") continue;
    canonical += f.section + "." + f.key + "=" + f.get(config) + "\n";
  }
  // fields() has a fixed order, so sort to make the hash depend on content only.
  std::vector<std::string> lines;
  std::istringstream in(canonical);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) joined += l + "\n";
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(joined);
  return hex.str();
}

std::string render_manifest(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["artifact"] = "mrt";
  j["artifact_version"] = m.artifact_version;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["files"] = m.files;
  j["resolved_config"] = m.resolved_config;
  return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << render_manifest(manifest);
}

std::vector<Problem> training_problems(const RunConfig& config) {
  return sample_problem_set(config.env, config.train_problems,
                            derive_seed(config.master_seed(), "train-problems", 0));
}

std::vector<Problem> evaluation_problems(const RunConfig& config) {
  return sample_problem_set(config.env, config.eval.eval_problems,
                            derive_seed(config.master_seed(), "eval-problems", 0));
}

namespace {

namespace fs = std::filesystem;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output;
};

fs::path resolve_output(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv("MRT_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "mrt_out";
}

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

Policy initial_policy(const RunConfig& config) {
  if (config.policy.checkpoint.empty()) return Policy(config.env.kind, config.policy.temperature);
  if (!fs::exists(config.policy.checkpoint))
    throw InputError("policy checkpoint not found: " + config.policy.checkpoint);
  Policy p = load_policy(config.policy.checkpoint);
  if (p.env_kind() != config.env.kind)
    throw ConfigError("policy.checkpoint: checkpoint is for " + to_string(p.env_kind()) +
                      " but env.kind is " + to_string(config.env.kind));
  return p;
}

std::vector<Table> curve_tables(const RunConfig& config, const Policy& policy,
                                const std::vector<Problem>& eval) {
  ScalingOptions options;
  options.votes = config.eval.votes;
  options.forcing_base = config.resolved_forcing_base();
  options.extensions = config.eval.extensions;
  options.max_ext_tokens = config.eval.max_ext_tokens;
  const auto curve = scaling_curve(policy, eval, config.eval.budgets, options,
                                   derive_seed(config.master_seed(), "final-eval", 0));
  std::vector<double> c0s, values;
  for (const auto& p : curve.points) {
    c0s.push_back(p.budget);
    values.push_back(normalized_regret(curve, p.budget));
  }
  return {to_table(curve, "scaling_curve"), regret_table(c0s, values, "regret")};
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> names(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.filename().string());
  return out;
}

int finish(RunManifest manifest, const fs::path& dir, std::vector<std::string> files, std::ostream& out) {
  manifest.finished_at = utc_now();
  manifest.files = std::move(files);
  write_manifest(manifest, dir);
  out << "wrote " << manifest.files.size() << " files to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train_rl(const CommonOptions& o, std::ostream& out) {
  const auto started = utc_now();
  const RunConfig config = parse_config(o.config_path, o.seed);
  const fs::path dir = prepare_dir(resolve_output(o.output, config.output_dir));
  const auto train = training_problems(config);
  const auto eval = evaluation_problems(config);
  const auto run = train_rl(config.trainer_config(), initial_policy(config), train, eval);

  std::vector<std::string> files = {"policy.ckpt", "train_log.jsonl"};
  save_policy(run.policy, dir / "policy.ckpt");
  std::vector<std::string> log;
  for (const auto& l : run.logs) log.push_back(rl_log_line(l));
  write_lines(dir / "train_log.jsonl", log);
  const auto written =
      export_curves(curve_tables(config, run.policy, eval), dir, parse_export_format(config.eval.format));
  for (const auto& n : names(written)) files.push_back(n);
  RunManifest m{"train-rl", config_hash(config), kArtifactVersion, started, {}, {}, resolved_config(config)};
  return finish(m, dir, files, out);
}

int cmd_train_star(const CommonOptions& o, std::ostream& out) {
  const auto started = utc_now();
  const RunConfig config = parse_config(o.config_path, o.seed);
  const fs::path dir = prepare_dir(resolve_output(o.output, config.output_dir));
  const Policy initial = initial_policy(config);
  const auto run = train_star(config.star_config(), &initial);

  std::vector<std::string> files = {"policy.ckpt", "star_log.jsonl", "star_dataset.jsonl"};
  save_policy(run.policy, dir / "policy.ckpt");
  std::vector<std::string> log;
  for (const auto& l : run.logs) log.push_back(star_log_line(l));
  write_lines(dir / "star_log.jsonl", log);
  save_star_dataset(run.dataset, dir / "star_dataset.jsonl");
  const auto written = export_curves(curve_tables(config, run.policy, evaluation_problems(config)), dir,
                                     parse_export_format(config.eval.format));
  for (const auto& n : names(written)) files.push_back(n);
  RunManifest m{"train-star", config_hash(config), kArtifactVersion, started, {}, {}, resolved_config(config)};
  return finish(m, dir, files, out);
}

int cmd_evaluate(const CommonOptions& o, const std::string& policy_path, std::ostream& out) {
  const auto started = utc_now();
  const RunConfig config = parse_config(o.config_path, o.seed);
  if (!fs::exists(policy_path)) throw InputError("policy checkpoint not found: " + policy_path);
  const Policy policy = load_policy(policy_path);
  if (policy.env_kind() != config.env.kind)
    throw ConfigError("checkpoint is for " + to_string(policy.env_kind()) + " but env.kind is " +
                      to_string(config.env.kind));
  const fs::path dir = prepare_dir(resolve_output(o.output, config.output_dir));
  const auto eval = evaluation_problems(config);
  auto tables = curve_tables(config, policy, eval);

  const int budget = config.eval.budgets.back();
  std::vector<Trace> traces;
  std::vector<ProgressRecord> records;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    traces.push_back(rollout(policy, eval[i], budget, derive_seed(config.master_seed(), "trace-eval", i)));
    records.push_back(trace_progress_profile(eval[i], traces.back(), {}, 0, 1.0, BonusMode::PerEpisode));
  }
  tables.push_back(to_table(maj_table_from_traces(eval, traces, config.eval.vote_counts), "maj_table"));
  tables.push_back(to_table(progress_histogram(records, config.eval.bin_width), "histogram"));
  const auto written = export_curves(tables, dir, parse_export_format(config.eval.format));
  RunManifest m{"evaluate", config_hash(config), kArtifactVersion, started, {}, {}, resolved_config(config)};
  return finish(m, dir, names(written), out);
}

int cmd_regret(const std::string& curve_path, double c0, double oracle, std::ostream& out) {
  if (!fs::exists(curve_path)) throw InputError("curve file not found: " + curve_path);
  ScalingCurve curve = curve_from_table(read_table(curve_path));
  curve.oracle_level = oracle;
  out << format_double(normalized_regret(curve, c0)) << "\n";
  return kExitOk;
}

struct AnalyzeOptions {
  std::string input;
  std::size_t group_size = 5;
  std::size_t min_steps = 3;
  std::string output;
  std::string format = "csv";
  double bin_width = 0.1;
  std::vector<int> vote_counts = {1, 2, 4, 8};
};

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out, std::ostream& err) {
  const auto started = utc_now();
  if (!fs::exists(o.input)) throw InputError("trace file not found: " + o.input);
  if (o.group_size < 1) throw ConfigError("--group-size must be at least 1");
  if (o.min_steps < 1) throw ConfigError("--min-steps must be at least 1");
  if (std::find(o.vote_counts.begin(), o.vote_counts.end(), 1) == o.vote_counts.end())
    throw ConfigError("--votes must include 1");
  const auto format = parse_export_format(o.format);
  const auto ingested = ingest_trace_file(o.input);
  for (const auto& d : ingested.diagnostics)
    err << "warning: " << o.input << ":" << d.line << ": " << d.message << "\n";

  // sums[j][p], counts[j][p] over grouped prefixes j.
  std::map<int, std::map<int, double>> sums;
  std::map<int, std::map<int, int>> counts;
  std::vector<ProgressRecord> records;
  for (const auto& t : ingested.traces) {
    const auto episodes = segment_episodes(t.steps, default_markers(), o.min_steps);
    const auto groups = group_episodes(episodes, o.group_size);
    if (!t.prefix_answer_samples) continue;
    std::map<int, const PrefixAnswerSamples*> by_prefix;
    for (const auto& s : *t.prefix_answer_samples) by_prefix[s.prefix_episodes] = &s;
    ProgressRecord rec;
    std::optional<double> previous;
    for (std::size_t j = 0; j <= groups.size(); ++j) {
      const int raw = static_cast<int>(std::min(j * o.group_size, episodes.size()));
      const auto it = by_prefix.find(raw);
      if (it == by_prefix.end() || it->second->answers.empty()) {
        previous.reset();
        continue;
      }
      const auto& answers = it->second->answers;
      for (int p : o.vote_counts) {
        if (static_cast<std::size_t>(p) > answers.size()) continue;
        sums[static_cast<int>(j)][p] += maj_at_p_replay(answers, p);
        counts[static_cast<int>(j)][p] += 1;
      }
      const double j1 = maj_at_p_replay(answers, 1);
      if (previous) rec.per_episode.push_back(j1 - *previous);
      previous = j1;
    }
    if (!rec.per_episode.empty()) records.push_back(std::move(rec));
  }
  if (counts.empty()) throw InputError("no prefix_answer_samples matching grouped prefixes in " + o.input);

  MajTable table;
  for (int p : o.vote_counts) {
    bool everywhere = true;
    for (const auto& [j, per_p] : counts) everywhere = everywhere && per_p.count(p) > 0;
    if (everywhere) table.ps.push_back(p);
    else err << "warning: dropping p=" << p << " (fewer than " << p << " samples at some prefix)\n";
  }
  for (const auto& [j, per_p] : counts) {
    table.js.push_back(j);
    std::vector<double> row;
    std::vector<int> n;
    for (int p : table.ps) {
      row.push_back(sums[j][p] / per_p.at(p));
      n.push_back(per_p.at(p));
    }
    table.accuracy.push_back(row);
    table.sample_counts.push_back(n);
  }

  std::vector<Table> tables = {to_table(table, "maj_table")};
  const auto regret = episode_budget_regret(table);
  std::vector<double> c0s(regret.budgets.begin(), regret.budgets.end());
  tables.push_back(regret_table(c0s, regret.normalized, "regret"));
  if (!records.empty()) tables.push_back(to_table(progress_histogram(records, o.bin_width), "histogram"));
  else err << "warning: no consecutive prefixes with samples; histogram skipped\n";

  const fs::path dir = prepare_dir(resolve_output(o.output, ""));
  const auto written = export_curves(tables, dir, format);
  out << "episode_budget_regret " << format_double(regret.total) << "\n";
  std::ostringstream args;
  args << "input=" << o.input << "\ngroup_size=" << o.group_size << "\nmin_steps=" << o.min_steps
       << "\nbin_width=" << format_double(o.bin_width) << "\nvotes=" << join_ints(o.vote_counts) << "\n";
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(args.str());
  RunManifest m{"analyze-traces", hex.str(), kArtifactVersion, started, {}, {}, args.str()};
  return finish(m, dir, names(written), out);
}

int cmd_export(const std::string& input, const std::string& output, const std::string& format_text,
               std::ostream& out) {
  const auto format = parse_export_format(format_text);
  if (!fs::is_directory(input)) throw InputError("input directory not found: " + input);
  std::vector<fs::path> sources;
  for (const auto& entry : fs::directory_iterator(input)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".csv" || (ext == ".json" && entry.path().filename() != "manifest.json")))
      sources.push_back(entry.path());
  }
  std::sort(sources.begin(), sources.end());
  if (sources.empty()) throw InputError("no curve tables in " + input);
  std::vector<Table> tables;
  for (const auto& s : sources) tables.push_back(read_table(s));
  const fs::path dir = prepare_dir(resolve_output(output, ""));
  const auto written = export_curves(tables, dir, format);
  for (const auto& w : written) out << w.string() << "\n";
  return kExitOk;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"train-star", "train-rl", "evaluate",
                                                 "regret",     "analyze-traces", "export"};
  return names;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto& known = subcommands();
  std::string known_list;
  for (std::size_t i = 0; i < known.size(); ++i) known_list += (i ? ", " : "") + known[i];
  if (args.empty()) {
    err << "error: missing subcommand (expected one of " << known_list << ")\n";
    return kExitUsage;
  }
  const bool help = args[0] == "-h" || args[0] == "--help";
  if (!help && std::find(known.begin(), known.end(), args[0]) == known.end()) {
    err << "error: unknown subcommand '" << args[0] << "' (expected one of " << known_list << ")\n";
    return kExitUsage;
  }

  CLI::App app{"Meta reinforcement fine-tuning lab"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "run configuration file")->required();
    sub->add_option("--seed", common.seed, "override run.seed");
    sub->add_option("--output", common.output, "output directory");
  };
  auto* train_star_cmd = app.add_subcommand("train-star", "STaR-style training");
  add_common(train_star_cmd);
  auto* train_rl_cmd = app.add_subcommand("train-rl", "RL training (outcome, mrt, length_penalty)");
  add_common(train_rl_cmd);
  auto* evaluate_cmd = app.add_subcommand("evaluate", "scaling curves for a checkpoint");
  add_common(evaluate_cmd);
  std::string policy_path;
  evaluate_cmd->add_option("--policy", policy_path, "policy checkpoint")->required();

  auto* regret_cmd = app.add_subcommand("regret", "normalized regret of a curve file");
  std::string curve_path;
  double c0 = 0.0, oracle = 1.0;
  regret_cmd->add_option("--curve", curve_path, "curve CSV or JSON")->required();
  regret_cmd->add_option("--c0", c0, "integration limit")->required();
  regret_cmd->add_option("--oracle", oracle, "oracle accuracy level");

  auto* analyze_cmd = app.add_subcommand("analyze-traces", "replay analysis of segmented traces");
  AnalyzeOptions analyze;
  analyze_cmd->add_option("--input", analyze.input, "trace records (JSONL)")->required();
  analyze_cmd->add_option("--group-size", analyze.group_size, "episodes per group");
  analyze_cmd->add_option("--min-steps", analyze.min_steps, "minimum steps before a marker splits");
  analyze_cmd->add_option("--output", analyze.output, "output directory");
  analyze_cmd->add_option("--format", analyze.format, "csv or json");
  analyze_cmd->add_option("--bin-width", analyze.bin_width, "progress histogram bin width");
  analyze_cmd->add_option("--votes", analyze.vote_counts, "vote counts p")->delimiter(',');

  auto* export_cmd = app.add_subcommand("export", "re-export curve tables");
  std::string export_input, export_output, export_format = "csv";
  export_cmd->add_option("--input", export_input, "directory with curve tables")->required();
  export_cmd->add_option("--output", export_output, "destination directory");
  export_cmd->add_option("--format", export_format, "csv or json");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (train_rl_cmd->parsed()) return cmd_train_rl(common, out);
    if (train_star_cmd->parsed()) return cmd_train_star(common, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(common, policy_path, out);
    if (regret_cmd->parsed()) return cmd_regret(curve_path, c0, oracle, out);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze, out, err);
    if (export_cmd->parsed()) return cmd_export(export_input, export_output, export_format, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "error: no subcommand selected\n";
  return kExitUsage;
}

}  // namespace mrt
