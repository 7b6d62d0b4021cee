#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "doctest.h"
#include "mrt/eval.hpp"
#include "mrt/rollout.hpp"

using namespace mrt;
namespace fs = std::filesystem;
using Rational = boost::multiprecision::cpp_rational;

namespace {

// Exhaustive m^p enumeration of ordered vote sequences.
Rational enumerate_votes(const std::vector<Rational>& q, std::size_t correct, int p) {
  const std::size_t m = q.size();
  std::vector<std::size_t> votes(static_cast<std::size_t>(p), 0);
  Rational total = 0;
  while (true) {
    Rational w = 1;
    std::vector<int> counts(m, 0);
    for (std::size_t v : votes) {
      w *= q[v];
      counts[v] += 1;
    }
    const int top = *std::max_element(counts.begin(), counts.end());
    if (counts[correct] == top) {
      const auto modal = std::count(counts.begin(), counts.end(), top);
      total += w / Rational(static_cast<long long>(modal));
    }
    std::size_t i = 0;
    while (i < votes.size() && ++votes[i] == m) votes[i++] = 0;
    if (i == votes.size()) break;
  }
  return total;
}

Policy never_commit(EnvKind kind) {
  Policy p(kind);
  for (int bucket = 0; bucket <= 5; ++bucket)
    for (int info = 0; info <= 7; ++info) p.set_logit({{bucket, info}, Action{EpisodeKind::Commit, 0}.id()}, -60.0);
  return p;
}

std::vector<Problem> ce_set(int m, int count, std::uint64_t seed) {
  EnvConfig c;
  c.size = m;
  return sample_problem_set(c, count, seed);
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mrt_eval_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("majority vote on a 0.6 / 0.4 distribution") {
  AnswerDistribution d{{0, 1}, {0.6, 0.4}};
  CHECK(maj_at_p(d, 0, 1) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(std::abs(maj_at_p(d, 0, 3) - 0.648) < 1e-12);
  CHECK(maj_at_p(d, 7, 3) == 0.0);
  CHECK(std::abs(maj_at_p(d, 0, 2) - (0.36 + 0.5 * 2 * 0.24)) < 1e-12);
}

TEST_CASE("closed-form majority vote equals rational enumeration") {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.index(4);
    std::vector<Rational> q;
    Rational sum = 0;
    for (std::size_t a = 0; a < m; ++a) {
      q.emplace_back(static_cast<long long>(1 + rng.index(9)));
      sum += q.back();
    }
    for (auto& x : q) x /= sum;
    const std::size_t correct = rng.index(m);
    for (int p = 1; p <= 7; ++p)
      CHECK(maj_at_p_closed_form<Rational>(q, correct, p) == enumerate_votes(q, correct, p));
  }
}

TEST_CASE("replay majority vote averages over every subset") {
  const std::vector<AnswerSample> s = {{"7", 1}, {"7", 1}, {"3", 0}, {"5", 0}};
  CHECK(std::abs(maj_at_p_replay(s, 1) - 0.5) < 1e-15);
  // Pairs: {7,7} wins; {7,x} ties for 1/2 (4 pairs); {3,5} loses.
  CHECK(std::abs(maj_at_p_replay(s, 2) - (1.0 + 4 * 0.5) / 6) < 1e-12);
  CHECK(maj_at_p_replay(s, 4) == 1.0);
  CHECK_THROWS_AS(maj_at_p_replay(s, 5), std::invalid_argument);
  Rng rng(1);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) mean += maj_at_p_sample(s, 2, rng);
  CHECK(std::abs(mean / 20000 - 0.5) < 0.02);
}

TEST_CASE("pass@k estimator") {
  CHECK(std::abs(pass_at_k(4, 2, 2) - 5.0 / 6.0) < 1e-12);
  for (int n = 1; n <= 10; ++n)
    for (int k = 1; k <= n; ++k) {
      CHECK(pass_at_k(n, n, k) == 1.0);
      CHECK(pass_at_k(n, 0, k) == 0.0);
    }
  CHECK(pass_at_k(std::vector<int>{1, 0, 0, 1}, 2) == pass_at_k(4, 2, 2));
  CHECK_THROWS_AS(pass_at_k(3, 1, 4), std::invalid_argument);
  CHECK(std::abs(direct_pass_at_k(0.25, 2) - 0.4375) < 1e-15);
}

TEST_CASE("budget forcing cycles markers and respects the extension cap") {
  const auto problems = ce_set(16, 40, 5);
  const Policy uniform(EnvKind::CandidateElimination);
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const Trace t = rollout(uniform, problems[i], 100, i);
    ExtrapolationConfig cfg;
    CHECK(budget_force(problems[i], t, uniform, cfg, 3) == t);
    cfg.n_extensions = 2;
    const Trace two = budget_force(problems[i], t, uniform, cfg, 3);
    CHECK(two.markers == std::vector<std::string>{"Wait", "Alternatively"});
    for (int n : {4, 6, 8}) {
      cfg.n_extensions = n;
      const Trace x = budget_force(problems[i], t, uniform, cfg, i + 1);
      CHECK(x.total_tokens <= t.total_tokens + n * cfg.max_ext_tokens);
      CHECK(validate_trace(problems[i], x).empty());
      CHECK(x.markers.size() == static_cast<std::size_t>(n));
      CHECK(x.markers[2] == "But hold on");
      CHECK(x.markers[3] == "But wait");
    }
  }
  ExtrapolationConfig bad;
  bad.n_extensions = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("direct policy gives a flat scaling curve") {
  const auto problems = ce_set(8, 100, 2);
  const ScalingCurve c = scaling_curve(direct_policy(EnvKind::CandidateElimination), problems,
                                       {50, 100, 150, 200}, {}, 4);
  for (const auto& pt : c.points) CHECK(pt.accuracy == 0.125);
  for (double t : c.tokens_mean) CHECK(t == 5.0);
}

TEST_CASE("scaling curve is monotone for a policy that only commits when forced") {
  const auto problems = ce_set(64, 100, 8);
  const Policy pol = never_commit(EnvKind::CandidateElimination);
  ScalingOptions opt;
  opt.forcing_base = 100;
  opt.extensions = {2, 4, 6, 8};
  const ScalingCurve c = scaling_curve(pol, problems, {25, 50, 75, 100}, opt, 6);
  REQUIRE(c.points.size() == 8);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].budget > c.points[i - 1].budget);
    CHECK(c.points[i].accuracy >= c.points[i - 1].accuracy);
  }
  CHECK(scaling_curve(pol, problems, {25, 50, 75, 100}, opt, 6) == c);
  CHECK(default_budget_schedule(50) == std::vector<int>{50, 100, 150, 200, 250, 300, 350, 400});
}

TEST_CASE("maj table from synthetic traces") {
  const auto problems = ce_set(16, 50, 3);
  const Policy pol = never_commit(EnvKind::CandidateElimination);
  std::vector<Trace> traces;
  for (std::size_t i = 0; i < problems.size(); ++i) traces.push_back(rollout(pol, problems[i], 60, i));
  const MajTable t = maj_table_from_traces(problems, traces, default_vote_counts());
  t.validate();
  CHECK(t.js.front() == 0);
  for (int p : t.ps) CHECK(std::abs(t.at(0, p) - 1.0 / 16) < 1e-12);
}

TEST_CASE("progress histograms") {
  ProgressRecord zeros;
  zeros.per_episode = {0.0, 0.0, 0.0};
  const Histogram h0 = progress_histogram({zeros}, 0.1);
  REQUIRE(h0.bins.size() == 1);
  CHECK(h0.bins[0].lo == 0.0);
  CHECK(h0.bins[0].count == 3);
  CHECK(h0.fraction_positive == 0.0);

  ProgressRecord edges;
  edges.per_episode = {0.25, 0.5, -0.25, 0.24999};
  const Histogram h = progress_histogram({edges}, 0.25);
  REQUIRE(h.bins.size() == 4);
  CHECK(h.bins[0].lo == -0.25);
  CHECK(h.bins[1].lo == 0.0);
  CHECK(h.bins[1].count == 1);
  CHECK(h.bins[2].lo == 0.25);
  CHECK(h.bins[2].hi == 0.5);
  CHECK(h.bins[3].lo == 0.5);
  CHECK(h.fraction_positive == 0.75);
}

TEST_CASE("halving probes put progress mass on 1/|S| increments") {
  const auto problems = ce_set(16, 50, 1);
  Policy pol(EnvKind::CandidateElimination);
  for (int bucket = 0; bucket <= 5; ++bucket)
    for (int info = 0; info <= 4; ++info) {
      pol.set_logit({{bucket, info}, Action{EpisodeKind::Probe, kProbeHalves}.id()}, 50.0);
      pol.set_logit({{bucket, info}, Action{EpisodeKind::Commit, 0}.id()}, info == 0 ? 100.0 : -50.0);
    }
  std::vector<ProgressRecord> records;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    Trace t = rollout(pol, problems[i], 200, i);
    t = truncate_trace(t, t.episodes.size() - 1);
    records.push_back(trace_progress_profile(problems[i], t, {}, 0));
  }
  const Histogram h = progress_histogram(records, 1.0 / 64);
  std::vector<double> seen;
  for (const auto& b : h.bins) seen.push_back(b.lo);
  CHECK(seen == std::vector<double>{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2});
  CHECK(h.fraction_positive == 1.0);
}

TEST_CASE("export writes declared schemas and round-trips") {
  const fs::path dir = scratch("roundtrip");
  ScalingCurve c;
  c.points = {{50, 0.1}, {100, 1.0 / 3.0}, {150, 0.7000000000000001}};
  c.tokens_mean = {12.5, 40.125, 1e-17};
  c.maj_k = {0.1, 0.4, 0.9};
  for (auto fmt : {ExportFormat::CSV, ExportFormat::JSON}) {
    const auto written = export_curves({to_table(c)}, dir, fmt);
    REQUIRE(written.size() == 1);
    CHECK(curve_from_table(read_table(written[0])) == c);
  }
  std::ifstream in(dir / "scaling_curve.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "budget,accuracy,tokens_mean,maj_k");
  fs::remove_all(dir);
}

TEST_CASE("empty tables keep their header") {
  const Table t = to_table(ScalingCurve{});
  CHECK(render_table(t, ExportFormat::CSV) == "budget,accuracy,tokens_mean,maj_k\n");
  CHECK(render_table(regret_table({}, {}), ExportFormat::CSV) == "c0,normalized_regret\n");
  CHECK(render_table(to_table(Histogram{}), ExportFormat::CSV) == "bin_lo,bin_hi,count\n");
  CHECK(render_table(to_table(MajTable{}), ExportFormat::CSV) == "j,p,accuracy,n\n");
}

TEST_CASE("unwritable destinations are reported") {
  const fs::path dir = scratch("blocked");
  std::ofstream(dir / "file") << "x";
  CHECK_THROWS_AS(export_curves({to_table(ScalingCurve{})}, dir / "file" / "sub", ExportFormat::CSV),
                  std::runtime_error);
  CHECK_THROWS_AS(write_table(to_table(ScalingCurve{}), dir / "missing" / "x.csv", ExportFormat::CSV),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_export_format("xml"), std::invalid_argument);
  fs::remove_all(dir);
}
