#pragma once

// Regret over episode prefixes and token budgets.
//
// cumulative_regret sums the per-prefix gap to a comparator. normalized_regret
// integrates the gap between a constant oracle level and an accuracy-vs-budget
// curve over [0, c0] with the trapezoid rule and divides by c0; below the first
// measured budget the curve is extended flat at its first accuracy.
// episode_budget_regret compares maj@1 after b episodes against the best
// majority vote over fewer episodes that fits in the same episode budget.

#include <vector>

namespace mrt {

struct CurvePoint {
  double budget = 0.0;
  double accuracy = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct ScalingCurve {
  std::vector<CurvePoint> points;
  double oracle_level = 1.0;
  // Optional per-point columns, parallel to `points` when non-empty.
  std::vector<double> tokens_mean;
  std::vector<double> maj_k;

  void validate() const;
  bool operator==(const ScalingCurve&) const = default;
};

// Accuracy indexed by (j = episodes in the prefix, p = votes).
struct MajTable {
  std::vector<int> js;
  std::vector<int> ps;
  std::vector<std::vector<double>> accuracy;  // [j index][p index]
  std::vector<std::vector<int>> sample_counts;

  double at(int j, int p) const;
  void validate() const;
};

struct CumulativeRegret {
  double value = 0.0;
  bool beats_oracle = false;  // some prefix exceeded its comparator entry
};

CumulativeRegret cumulative_regret(const std::vector<double>& prefix_values,
                                   const std::vector<double>& oracle_values);

// Comparator that is perfect from the first episode on.
std::vector<double> perfect_oracle(std::size_t k);

double normalized_regret(const ScalingCurve& curve, double c0);

struct EpisodeBudgetRegret {
  std::vector<int> budgets;           // episode budgets b
  std::vector<double> optimal;        // comparator value at b
  std::vector<double> gap;            // optimal - maj@1 at b (never negative)
  std::vector<double> normalized;     // mean gap over budgets <= b
  double total = 0.0;                 // mean gap over all budgets
};

EpisodeBudgetRegret episode_budget_regret(const MajTable& table);

}  // namespace mrt
