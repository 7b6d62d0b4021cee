#include "mrt/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "mrt/rollout.hpp"

namespace mrt {

double maj_at_p(const AnswerDistribution& dist, Answer correct, int p) {
  const auto it = std::find(dist.answers.begin(), dist.answers.end(), correct);
  if (it == dist.answers.end()) {
    if (p < 1) throw std::invalid_argument("vote count p must be at least 1");
    return 0.0;
  }
  return maj_at_p_closed_form<double>(dist.probs, static_cast<std::size_t>(it - dist.answers.begin()), p);
}

namespace {

struct AnswerGroups {
  std::vector<int> multiplicity;
  std::vector<int> correct;
};

AnswerGroups group_answers(const std::vector<AnswerSample>& samples) {
  AnswerGroups g;
  std::map<std::string, std::size_t> index;
  for (const auto& s : samples) {
    auto [it, fresh] = index.emplace(s.text, g.multiplicity.size());
    if (fresh) {
      g.multiplicity.push_back(0);
      g.correct.push_back(s.correct);
    }
    g.multiplicity[it->second] += 1;
  }
  return g;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Credit of a single vote with the given per-answer counts.
double vote_credit(const std::vector<int>& counts, const std::vector<int>& correct) {
  const int top = *std::max_element(counts.begin(), counts.end());
  int modal = 0, modal_correct = 0;
  for (std::size_t a = 0; a < counts.size(); ++a)
    if (counts[a] == top) {
      ++modal;
      modal_correct += correct[a];
    }
  return static_cast<double>(modal_correct) / modal;
}

}  // namespace

double maj_at_p_replay(const std::vector<AnswerSample>& samples, int p) {
  if (p < 1) throw std::invalid_argument("vote count p must be at least 1");
  if (static_cast<int>(samples.size()) < p)
    throw std::invalid_argument("maj@" + std::to_string(p) + " needs at least " + std::to_string(p) +
                                " recorded samples, got " + std::to_string(samples.size()));
  const auto groups = group_answers(samples);
  const std::size_t m = groups.multiplicity.size();
  std::vector<int> counts(m, 0);
  double weighted = 0.0;
  // Enumerates per-answer counts k_a <= m_a with sum p; each such vector covers
  // prod C(m_a, k_a) subsets.
  auto recurse = [&](auto&& self, std::size_t a, int left, double ways) -> void {
    if (a + 1 == m) {
      if (left > groups.multiplicity[a]) return;
      counts[a] = left;
      weighted += ways * binomial(groups.multiplicity[a], left) * vote_credit(counts, groups.correct);
      return;
    }
    for (int k = 0; k <= std::min(left, groups.multiplicity[a]); ++k) {
      counts[a] = k;
      self(self, a + 1, left - k, ways * binomial(groups.multiplicity[a], k));
    }
  };
  recurse(recurse, 0, p, 1.0);
  return weighted / binomial(static_cast<int>(samples.size()), p);
}

double maj_at_p_sample(const std::vector<AnswerSample>& samples, int p, Rng& rng) {
  if (p < 1) throw std::invalid_argument("vote count p must be at least 1");
  if (static_cast<int>(samples.size()) < p)
    throw std::invalid_argument("maj@" + std::to_string(p) + " needs at least " + std::to_string(p) +
                                " recorded samples, got " + std::to_string(samples.size()));
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int i = 0; i < p; ++i) std::swap(order[i], order[i + rng.index(order.size() - i)]);
  std::vector<AnswerSample> drawn;
  for (int i = 0; i < p; ++i) drawn.push_back(samples[order[i]]);
  const auto g = group_answers(drawn);
  const int top = *std::max_element(g.multiplicity.begin(), g.multiplicity.end());
  std::vector<std::size_t> modal;
  for (std::size_t a = 0; a < g.multiplicity.size(); ++a)
    if (g.multiplicity[a] == top) modal.push_back(a);
  return g.correct[modal[rng.index(modal.size())]];
}

double pass_at_k(int n, int c, int k) {
  if (k < 1 || k > n) throw std::invalid_argument("pass@k needs 1 <= k <= n");
  if (c < 0 || c > n) throw std::invalid_argument("pass@k success count out of range");
  if (n - c < k) return 1.0;
  double fail = 1.0;  // C(n-c, k) / C(n, k)
  for (int i = 0; i < k; ++i) fail *= static_cast<double>(n - c - i) / (n - i);
  return 1.0 - fail;
}

double pass_at_k(const std::vector<int>& success_flags, int k) {
  int c = 0;
  for (int f : success_flags) c += f != 0 ? 1 : 0;
  return pass_at_k(static_cast<int>(success_flags.size()), c, k);
}

double direct_pass_at_k(double p, int k) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  return 1.0 - std::pow(1.0 - p, k);
}

MajTable maj_table_from_traces(const std::vector<Problem>& problems,
                               const std::vector<Trace>& traces, const std::vector<int>& ps) {
  if (ps.empty()) throw std::invalid_argument("no vote counts requested");
  std::unordered_map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;
  std::vector<std::vector<double>> sums;
  std::vector<int> counts;
  for (const auto& t : traces) {
    const auto it = by_id.find(t.problem_id);
    if (it == by_id.end()) throw std::invalid_argument("trace for unknown problem " + t.problem_id);
    const Problem& problem = *it->second;
    const auto states = replay(problem, t);
    std::size_t deliberation = t.episodes.size();
    if (deliberation > 0 && t.episodes.back().kind() == EpisodeKind::Commit) --deliberation;
    if (sums.size() < deliberation + 1) {
      sums.resize(deliberation + 1, std::vector<double>(ps.size(), 0.0));
      counts.resize(deliberation + 1, 0);
    }
    for (std::size_t j = 0; j <= deliberation; ++j) {
      const auto dist = answer_distribution(problem, states[j]);
      for (std::size_t pi = 0; pi < ps.size(); ++pi)
        sums[j][pi] += maj_at_p(dist, problem.hidden_answer, ps[pi]);
      counts[j] += 1;
    }
  }
  MajTable table;
  table.ps = ps;
  for (std::size_t j = 0; j < sums.size(); ++j) {
    if (counts[j] == 0) continue;
    table.js.push_back(static_cast<int>(j));
    std::vector<double> row(ps.size());
    for (std::size_t pi = 0; pi < ps.size(); ++pi) row[pi] = sums[j][pi] / counts[j];
    table.accuracy.push_back(row);
    table.sample_counts.push_back(std::vector<int>(ps.size(), counts[j]));
  }
  return table;
}

void ExtrapolationConfig::validate() const {
  const auto& grid = extension_grid();
  if (std::find(grid.begin(), grid.end(), n_extensions) == grid.end())
    throw std::invalid_argument("n_extensions must be one of 0, 2, 4, 6, 8; got " +
                                std::to_string(n_extensions));
  if (phrase_cycle.empty()) throw std::invalid_argument("phrase cycle must be non-empty");
  if (max_ext_tokens <= 0) throw std::invalid_argument("max_ext_tokens must be positive");
}

Trace budget_force(const Problem& problem, const Trace& trace, const Policy& policy,
                   const ExtrapolationConfig& config, std::uint64_t seed) {
  config.validate();
  if (!trace.committed()) throw std::invalid_argument("budget forcing needs a finished trace");
  if (config.n_extensions == 0) return trace;
  Rng rng(seed);
  Trace out = trace;
  out.total_tokens -= out.episodes.back().token_cost;
  out.episodes.pop_back();
  out.final_answer.reset();
  out.outcome = 0;
  EnvState state = replay(problem, out).back();
  for (int e = 0; e < config.n_extensions; ++e) {
    const std::string& phrase = config.phrase_cycle[e % config.phrase_cycle.size()];
    out.markers.push_back(phrase);
    sample_until_commit(policy, problem, out, state, state.tokens_spent + config.max_ext_tokens, rng,
                        phrase);
  }
  commit_trace(problem, out, state, rng, true);
  return out;
}

double evaluate_accuracy(const Policy& policy, const std::vector<Problem>& problems, int budget,
                         std::uint64_t seed) {
  return scaling_curve(policy, problems, {budget}, {}, seed).points.front().accuracy;
}

std::vector<int> default_budget_schedule(int base) {
  std::vector<int> b;
  for (int i = 1; i <= 8; ++i) b.push_back(base * i);
  return b;
}

namespace {

struct RolloutScore {
  double accuracy = 0.0;
  int tokens = 0;
  Answer answer = -1;
};

RolloutScore score(const Problem& problem, const Trace& t, bool exact) {
  RolloutScore s;
  s.tokens = t.total_tokens;
  s.answer = *t.final_answer;
  if (exact) {
    Trace deliberation = t;
    deliberation.episodes.pop_back();
    deliberation.final_answer.reset();
    s.accuracy = exact_success_prob(problem, replay(problem, deliberation).back());
  } else {
    s.accuracy = t.outcome;
  }
  return s;
}

double majority_credit(const std::vector<Answer>& answers, Answer correct) {
  std::map<Answer, int> counts;
  for (Answer a : answers) counts[a] += 1;
  int top = 0;
  for (const auto& [a, c] : counts) top = std::max(top, c);
  int modal = 0;
  bool hit = false;
  for (const auto& [a, c] : counts)
    if (c == top) {
      ++modal;
      hit = hit || a == correct;
    }
  return hit ? 1.0 / modal : 0.0;
}

}  // namespace

ScalingCurve scaling_curve(const Policy& policy, const std::vector<Problem>& problems,
                           const std::vector<int>& budgets, const ScalingOptions& options,
                           std::uint64_t seed) {
  if (budgets.empty() && options.extensions.empty())
    throw std::invalid_argument("scaling curve needs a non-empty budget schedule");
  if (problems.empty()) throw std::invalid_argument("scaling curve needs problems");
  if (options.votes < 1) throw std::invalid_argument("votes per budget must be at least 1");

  ScalingCurve curve;
  auto measure = [&](double budget, auto&& make_trace) {
    double acc = 0.0, tokens = 0.0, maj = 0.0;
    for (std::size_t i = 0; i < problems.size(); ++i) {
      std::vector<Answer> answers;
      for (int v = 0; v < options.votes; ++v) {
        const auto rollout_seed = derive_seed(seed, "eval-rollout", i * options.votes + v);
        const Trace t = make_trace(problems[i], rollout_seed);
        const auto s = score(problems[i], t, options.exact_accuracy);
        acc += s.accuracy;
        tokens += s.tokens;
        answers.push_back(s.answer);
      }
      maj += majority_credit(answers, problems[i].hidden_answer);
    }
    const double n = static_cast<double>(problems.size());
    curve.points.push_back({budget, acc / (n * options.votes)});
    curve.tokens_mean.push_back(tokens / (n * options.votes));
    curve.maj_k.push_back(maj / n);
  };

  for (int b : budgets)
    measure(b, [&](const Problem& p, std::uint64_t s) { return rollout(policy, p, b, s); });

  if (options.forcing_base > 0) {
    for (int n : options.extensions) {
      ExtrapolationConfig cfg;
      cfg.n_extensions = n;
      cfg.max_ext_tokens = options.max_ext_tokens;
      cfg.validate();
      const int budget = options.forcing_base + n * options.max_ext_tokens;
      measure(budget, [&](const Problem& p, std::uint64_t s) {
        const Trace base = rollout(policy, p, options.forcing_base, s);
        return budget_force(p, base, policy, cfg, derive_seed(s, "budget-force"));
      });
    }
  }
  curve.validate();
  return curve;
}

Histogram progress_histogram(const std::vector<ProgressRecord>& records, double bin_width) {
  if (records.empty()) throw std::invalid_argument("progress histogram needs records");
  if (!(bin_width > 0.0)) throw std::invalid_argument("bin width must be positive");
  Histogram h;
  h.bin_width = bin_width;
  std::map<long long, std::size_t> bins;
  std::size_t positive = 0;
  for (const auto& r : records)
    for (double v : r.per_episode) {
      bins[static_cast<long long>(std::floor(v / bin_width))] += 1;
      positive += v > 0.0 ? 1 : 0;
      h.total += 1;
    }
  for (const auto& [idx, count] : bins) {
    const double lo = static_cast<double>(idx) * bin_width;
    h.bins.push_back({lo, lo + bin_width, count});
  }
  h.fraction_positive = h.total == 0 ? 0.0 : static_cast<double>(positive) / h.total;
  return h;
}

ExportFormat parse_export_format(const std::string& text) {
  if (text == "csv" || text == "CSV") return ExportFormat::CSV;
  if (text == "json" || text == "JSON") return ExportFormat::JSON;
  throw std::invalid_argument("unknown export format '" + text + "' (expected csv or json)");
}

Table to_table(const ScalingCurve& curve, const std::string& name) {
  curve.validate();
  Table t{name, {"budget", "accuracy", "tokens_mean", "maj_k"}, {}};
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double tok = curve.tokens_mean.empty() ? 0.0 : curve.tokens_mean[i];
    const double maj = curve.maj_k.empty() ? curve.points[i].accuracy : curve.maj_k[i];
    t.rows.push_back({curve.points[i].budget, curve.points[i].accuracy, tok, maj});
  }
  return t;
}

Table to_table(const MajTable& table, const std::string& name) {
  Table t{name, {"j", "p", "accuracy", "n"}, {}};
  for (std::size_t ji = 0; ji < table.js.size(); ++ji)
    for (std::size_t pi = 0; pi < table.ps.size(); ++pi) {
      const double n = table.sample_counts.empty() ? 0.0 : table.sample_counts[ji][pi];
      t.rows.push_back({static_cast<double>(table.js[ji]), static_cast<double>(table.ps[pi]),
                        table.accuracy[ji][pi], n});
    }
  return t;
}

Table to_table(const Histogram& hist, const std::string& name) {
  Table t{name, {"bin_lo", "bin_hi", "count"}, {}};
  for (const auto& b : hist.bins) t.rows.push_back({b.lo, b.hi, static_cast<double>(b.count)});
  return t;
}

Table regret_table(const std::vector<double>& c0s, const std::vector<double>& values,
                   const std::string& name) {
  if (c0s.size() != values.size()) throw std::invalid_argument("regret table column mismatch");
  Table t{name, {"c0", "normalized_regret"}, {}};
  for (std::size_t i = 0; i < c0s.size(); ++i) t.rows.push_back({c0s[i], values[i]});
  return t;
}

ScalingCurve curve_from_table(const Table& table) {
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(table.columns.begin(), table.columns.end(), name);
    if (it == table.columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - table.columns.begin());
  };
  const auto b = col("budget"), a = col("accuracy"), tok = col("tokens_mean"), maj = col("maj_k");
  if (!b || !a) throw std::invalid_argument("curve table needs 'budget' and 'accuracy' columns");
  ScalingCurve curve;
  for (const auto& row : table.rows) {
    curve.points.push_back({row[*b], row[*a]});
    if (tok) curve.tokens_mean.push_back(row[*tok]);
    if (maj) curve.maj_k.push_back(row[*maj]);
  }
  curve.validate();
  return curve;
}

std::string render_table(const Table& table, ExportFormat format) {
  std::ostringstream out;
  if (format == ExportFormat::CSV) {
    for (std::size_t c = 0; c < table.columns.size(); ++c)
      out << (c ? "," : "") << table.columns[c];
    out << '\n';
    for (const auto& row : table.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
      out << '\n';
    }
    return out.str();
  }
  // JSON numbers go through the same shortest round-trip formatting as CSV.
  out << "[";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << (r ? ",\n " : "\n ") << "{";
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      out << (c ? ", " : "") << nlohmann::json(table.columns[c]).dump() << ": "
          << format_double(table.rows[r][c]);
    }
    out << "}";
  }
  out << (table.rows.empty() ? "]\n" : "\n]\n");
  return out.str();
}

void write_table(const Table& table, const std::filesystem::path& path, ExportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << render_table(table, format);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

double parse_number(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument(where + ": bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Table t;
  t.name = path.stem().string();
  if (path.extension() == ".json") {
    const auto doc = nlohmann::ordered_json::parse(in);
    if (!doc.is_array()) throw std::invalid_argument(path.string() + ": expected a JSON array");
    for (const auto& obj : doc) {
      if (t.columns.empty())
        for (const auto& [k, v] : obj.items()) t.columns.push_back(k);
      std::vector<double> row;
      for (const auto& c : t.columns) row.push_back(obj.at(c).get<double>());
      t.rows.push_back(std::move(row));
    }
    return t;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != t.columns.size()) throw std::invalid_argument(where + ": column count mismatch");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, where));
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw std::invalid_argument(path.string() + ": missing CSV header");
  return t;
}

std::vector<std::filesystem::path> export_curves(const std::vector<Table>& results,
                                                 const std::filesystem::path& destination,
                                                 ExportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(destination, ec);
  if (ec) throw std::runtime_error("cannot create " + destination.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& table : results) {
    auto path = destination / (table.name + (format == ExportFormat::CSV ? ".csv" : ".json"));
    write_table(table, path, format);
    written.push_back(path);
  }
  return written;
}

}  // namespace mrt
