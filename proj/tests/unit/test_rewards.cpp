#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mrt/policy.hpp"
#include "mrt/rewards.hpp"
#include "mrt/rollout.hpp"

using namespace mrt;

namespace {

Problem ce(int m, std::uint64_t seed) {
  EnvConfig c;
  c.size = m;
  return sample_problem(c, seed);
}

EnvState with_survivors(const Problem& p, int n) {
  EnvState s = initial_state(p);
  s.surviving.clear();
  s.surviving.push_back(p.hidden_answer);
  for (Answer a = 0; static_cast<int>(s.surviving.size()) < n; ++a)
    if (a != p.hidden_answer) s.surviving.push_back(a);
  std::sort(s.surviving.begin(), s.surviving.end());
  return s;
}

const EstimatorSpec kExact{EstimateMethod::Exact, 0};

}  // namespace

TEST_CASE("exact estimate with four survivors is one quarter") {
  const Problem p = ce(16, 3);
  const PrefixEstimate e = estimate_success(p, with_survivors(p, 4), 2, kExact, 0);
  CHECK(e.value == 0.25);
  CHECK(e.prefix_len == 2);
  CHECK(e.method == EstimateMethod::Exact);
}

TEST_CASE("twenty-sample Monte Carlo estimates lie on the 1/20 grid") {
  const Problem p = ce(16, 3);
  const EstimatorSpec mc{EstimateMethod::MonteCarlo, 20};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const double v = estimate_success(p, with_survivors(p, 3), 1, mc, seed).value;
    CHECK(std::abs(v * 20 - std::round(v * 20)) < 1e-12);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(estimate_success(p, with_survivors(p, 3), 1, mc, 5).value ==
        estimate_success(p, with_survivors(p, 3), 1, mc, 5).value);
  CHECK_THROWS_AS(estimate_success(p, initial_state(p), 0, {EstimateMethod::MonteCarlo, 0}, 1),
                  std::invalid_argument);
}

TEST_CASE("Monte Carlo error shrinks with more samples") {
  double last = 1.0;
  for (int n : {20, 200, 2000, 10000}) {
    double err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Problem p = ce(16, static_cast<std::uint64_t>(i));
      const EnvState s = with_survivors(p, 1 + i % 8);
      const double exact = exact_success_prob(p, s);
      err += std::abs(estimate_success(p, s, 0, {EstimateMethod::MonteCarlo, n}, derive_seed(9, "mc", i)).value - exact);
    }
    err /= 100;
    CHECK(err < last);
    last = err;
  }
}

TEST_CASE("progress of a halving probe from 1/8 to 1/4") {
  const PrefixEstimate before{0, 0.125, EstimateMethod::Exact, 0};
  const PrefixEstimate after{1, 0.25, EstimateMethod::Exact, 0};
  CHECK(progress(before, after) == 0.125);
  CHECK(progress(after, PrefixEstimate{2, 0.25, EstimateMethod::Exact, 0}) == 0.0);
  CHECK_THROWS_AS(progress(before, PrefixEstimate{3, 0.5, EstimateMethod::Exact, 0}), std::invalid_argument);
}

TEST_CASE("backtrack progress undoes the attempt") {
  EnvConfig c;
  c.kind = EnvKind::BacktrackingSearch;
  c.size = 16;
  const Policy uniform(EnvKind::BacktrackingSearch);
  int checked = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Problem p = sample_problem(c, s);
    const Trace t = rollout(uniform, p, 400, s);
    const ProgressRecord r = trace_progress_profile(p, t, kExact, 0);
    for (std::size_t j = 1; j < t.episodes.size(); ++j)
      if (t.episodes[j].kind() == EpisodeKind::Backtrack) {
        CHECK(r.per_episode[j] == -r.per_episode[j - 1]);
        ++checked;
      }
  }
  CHECK(checked > 0);
}

TEST_CASE("exact progress telescopes on every environment") {
  for (auto kind : {EnvKind::CandidateElimination, EnvKind::DeterministicBandit,
                    EnvKind::BacktrackingSearch}) {
    EnvConfig c;
    c.kind = kind;
    c.size = 12;
    c.num_blocks = 3;
    const Policy uniform(kind);
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Problem p = sample_problem(c, s);
      const Trace t = rollout(uniform, p, 300, s + 1000);
      const ProgressRecord r = trace_progress_profile(p, t, kExact, 0);
      REQUIRE(r.per_episode.size() == t.episodes.size());
      const auto states = replay(p, t);
      const double expected = exact_success_prob(p, states.back()) - exact_success_prob(p, states.front());
      CHECK(std::abs(r.total() - expected) < 1e-12);
    }
  }
}

TEST_CASE("direct policy trace has a single progress entry") {
  const Problem p = ce(8, 4);
  const Trace t = rollout(direct_policy(EnvKind::CandidateElimination), p, 200, 1);
  const ProgressRecord r = trace_progress_profile(p, t, kExact, 0);
  REQUIRE(r.per_episode.size() == 1);
  CHECK(r.per_episode[0] == static_cast<double>(t.outcome) - 0.125);
}

TEST_CASE("trace reward examples") {
  ProgressRecord r;
  r.per_episode = {0.125, 0.125};
  r.alpha = 0.5;
  CHECK(mrt_reward(1, r) == std::vector<double>{1.125});
  r.alpha = 0.0;
  CHECK(mrt_reward(0, r) == std::vector<double>{0.0});
  CHECK(mrt_reward(1, r) == std::vector<double>{1.0});
}

TEST_CASE("per-episode and trace-level rewards have equal totals") {
  const Policy uniform(EnvKind::CandidateElimination);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Problem p = ce(16, s);
    const Trace t = rollout(uniform, p, 200, s);
    for (double alpha : {0.0, 0.3, 1.0, 2.5}) {
      const auto level = mrt_reward(t.outcome, trace_progress_profile(p, t, kExact, 0, alpha, BonusMode::TraceLevel));
      const auto per = mrt_reward(t.outcome, trace_progress_profile(p, t, kExact, 0, alpha, BonusMode::PerEpisode));
      REQUIRE(level.size() == 1);
      REQUIRE(per.size() == t.episodes.size());
      CHECK(std::abs(std::accumulate(per.begin(), per.end(), 0.0) - level[0]) < 1e-12);
    }
  }
}

TEST_CASE("length penalty examples") {
  CHECK(length_penalized_reward(1, 120, 0.0, 200) == 1.0);
  CHECK(length_penalized_reward(1, 200, 0.5, 200) == 0.5);
  CHECK(length_penalized_reward(0, 0, 3.0, 200) == 0.0);
  CHECK(length_penalized_reward(1, 50, 0.5, 200) > length_penalized_reward(1, 60, 0.5, 200));
  CHECK_THROWS_AS(length_penalized_reward(1, 201, 0.5, 200), std::invalid_argument);
}
