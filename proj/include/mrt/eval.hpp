#pragma once

// Measurement: [maj@p]_j, pass@k, accuracy-vs-budget scaling curves, budget
// forcing, progress histograms, and curve export.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrt/envs.hpp"
#include "mrt/policy.hpp"
#include "mrt/random.hpp"
#include "mrt/regret.hpp"
#include "mrt/rewards.hpp"
#include "mrt/segmentation.hpp"

namespace mrt {

inline const std::vector<int>& default_vote_counts() {
  static const std::vector<int> ps = {1, 2, 4, 8};
  return ps;
}

// Probability that answer `correct` wins a p-way majority vote when each vote
// is drawn independently from `probs`; ties among modal answers are broken
// uniformly. Exact for any field type T (double, or an exact rational).
//
// Conditions on the correct answer's count c and runs a DP over the wrong
// answers tracking (votes used, max count, number of answers at the max) with
// weights prod q^n / n!; the multinomial p! is applied at the end.
template <class T>
T maj_at_p_closed_form(std::span<const T> probs, std::size_t correct, int p) {
  if (p < 1) throw std::invalid_argument("vote count p must be at least 1");
  if (correct >= probs.size()) throw std::invalid_argument("correct answer index out of range");
  if (p > 20) throw std::invalid_argument("vote count p above 20 is not supported");
  const std::size_t m = probs.size();
  const int P = p;
  std::vector<T> inv_fact(P + 1);
  {
    unsigned long long f = 1;
    for (int n = 0; n <= P; ++n) {
      if (n > 0) f *= static_cast<unsigned long long>(n);
      inv_fact[n] = T(1) / T(f);
    }
  }
  auto powers = [&](const T& q) {
    std::vector<T> pw(P + 1);
    pw[0] = T(1);
    for (int n = 1; n <= P; ++n) pw[n] = pw[n - 1] * q;
    return pw;
  };

  // state index: (s * (P + 1) + mx) * (m + 1) + t
  const std::size_t stride_mx = m + 1;
  const std::size_t stride_s = static_cast<std::size_t>(P + 1) * stride_mx;
  auto idx = [&](int s, int mx, std::size_t t) {
    return static_cast<std::size_t>(s) * stride_s + static_cast<std::size_t>(mx) * stride_mx + t;
  };
  std::vector<T> cur(static_cast<std::size_t>(P + 1) * stride_s, T(0));
  std::vector<bool> live(cur.size(), false);
  cur[idx(0, 0, 0)] = T(1);
  live[idx(0, 0, 0)] = true;

  for (std::size_t a = 0; a < m; ++a) {
    if (a == correct) continue;
    const auto pw = powers(probs[a]);
    std::vector<T> next(cur.size(), T(0));
    std::vector<bool> next_live(cur.size(), false);
    for (int s = 0; s <= P; ++s)
      for (int mx = 0; mx <= P; ++mx)
        for (std::size_t t = 0; t <= m; ++t) {
          const std::size_t i = idx(s, mx, t);
          if (!live[i]) continue;
          for (int n = 0; s + n <= P; ++n) {
            const T w = cur[i] * pw[n] * inv_fact[n];
            int nmx = mx;
            std::size_t nt = t;
            if (n > mx) {
              nmx = n;
              nt = 1;
            } else if (n == mx && n > 0) {
              nt = t + 1;
            }
            const std::size_t j = idx(s + n, nmx, nt);
            next[j] = next[j] + w;
            next_live[j] = true;
          }
        }
    cur = std::move(next);
    live = std::move(next_live);
  }

  const auto pc = powers(probs[correct]);
  T total(0);
  for (int s = 0; s <= P; ++s)
    for (int mx = 0; mx <= P; ++mx)
      for (std::size_t t = 0; t <= m; ++t) {
        const std::size_t i = idx(s, mx, t);
        if (!live[i]) continue;
        const int c = P - s;
        if (c < mx) continue;
        T w = cur[i] * pc[c] * inv_fact[c];
        if (c == mx) w = w / T(static_cast<long long>(t + 1));
        total = total + w;
      }
  unsigned long long pf = 1;
  for (int n = 2; n <= P; ++n) pf *= static_cast<unsigned long long>(n);
  return total * T(pf);
}

double maj_at_p(const AnswerDistribution& dist, Answer correct, int p);

// Replay mode over recorded answers: the exact average vote outcome over all
// size-p subsets of the samples.
double maj_at_p_replay(const std::vector<AnswerSample>& samples, int p);
// One vote over p samples drawn without replacement; returns the credited
// outcome (1/|modal| when the correct answer ties).
double maj_at_p_sample(const std::vector<AnswerSample>& samples, int p, Rng& rng);

double pass_at_k(int n, int c, int k);
double pass_at_k(const std::vector<int>& success_flags, int k);
// pass@k of k independent attempts with per-attempt success `p`.
double direct_pass_at_k(double p, int k);

// Mean [maj@p]_j over synthetic traces: the meta-prover's answer distribution
// after j deliberation episodes, scored in closed form.
MajTable maj_table_from_traces(const std::vector<Problem>& problems,
                               const std::vector<Trace>& traces, const std::vector<int>& ps);

struct ExtrapolationConfig {
  std::vector<std::string> phrase_cycle = {"Wait", "Alternatively", "But hold on", "But wait"};
  int n_extensions = 0;
  int max_ext_tokens = 25;

  void validate() const;
};

inline const std::vector<int>& extension_grid() {
  static const std::vector<int> grid = {0, 2, 4, 6, 8};
  return grid;
}

// Removes the terminal Commit, then n_extensions times appends the next
// continuation phrase and resumes the policy for up to max_ext_tokens (the
// policy choosing Commit ends an extension), and finally commits.
Trace budget_force(const Problem& problem, const Trace& trace, const Policy& policy,
                   const ExtrapolationConfig& config, std::uint64_t seed);

struct ScalingOptions {
  int votes = 1;
  // Score each rollout by the meta-prover's exact success at its commit point
  // rather than by its sampled 0/1 outcome.
  bool exact_accuracy = true;
  // Budget forcing extrapolation beyond `forcing_base` (0 disables).
  int forcing_base = 0;
  std::vector<int> extensions;
  int max_ext_tokens = 25;
};

ScalingCurve scaling_curve(const Policy& policy, const std::vector<Problem>& problems,
                           const std::vector<int>& budgets, const ScalingOptions& options,
                           std::uint64_t seed);

// Mean exact meta-prover success at the commit point of single budget-capped
// rollouts.
double evaluate_accuracy(const Policy& policy, const std::vector<Problem>& problems, int budget,
                         std::uint64_t seed);

// Budgets {B, 2B, ..., 4B} followed by extrapolation targets {5B, ..., 8B}.
std::vector<int> default_budget_schedule(int base = 50);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct Histogram {
  double bin_width = 0.0;
  std::vector<HistogramBin> bins;  // non-empty bins, ascending
  std::size_t total = 0;
  double fraction_positive = 0.0;
};

// Bins are half-open [lo, lo + width) aligned at integer multiples of width.
Histogram progress_histogram(const std::vector<ProgressRecord>& records, double bin_width);

// Column-stable numeric table used for every exported curve.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

enum class ExportFormat { CSV, JSON };

ExportFormat parse_export_format(const std::string& text);

Table to_table(const ScalingCurve& curve, const std::string& name = "scaling_curve");
Table to_table(const MajTable& table, const std::string& name = "maj_table");
Table to_table(const Histogram& hist, const std::string& name = "histogram");
Table regret_table(const std::vector<double>& c0s, const std::vector<double>& values,
                   const std::string& name = "regret");

ScalingCurve curve_from_table(const Table& table);

std::string render_table(const Table& table, ExportFormat format);
void write_table(const Table& table, const std::filesystem::path& path, ExportFormat format);
Table read_table(const std::filesystem::path& path);

// Writes one file per table into `destination`; returns the paths written.
std::vector<std::filesystem::path> export_curves(const std::vector<Table>& results,
                                                 const std::filesystem::path& destination,
                                                 ExportFormat format);

}  // namespace mrt
