#include "mrt/regret.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mrt {

void ScalingCurve::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].accuracy < 0.0 || points[i].accuracy > 1.0 || std::isnan(points[i].accuracy))
      throw std::invalid_argument("curve accuracy outside [0, 1]");
    if (i > 0 && !(points[i].budget > points[i - 1].budget))
      throw std::invalid_argument("curve budgets must be strictly increasing");
  }
  if (!tokens_mean.empty() && tokens_mean.size() != points.size())
    throw std::invalid_argument("tokens_mean column length mismatch");
  if (!maj_k.empty() && maj_k.size() != points.size())
    throw std::invalid_argument("maj_k column length mismatch");
}

double MajTable::at(int j, int p) const {
  const auto ji = std::find(js.begin(), js.end(), j);
  const auto pi = std::find(ps.begin(), ps.end(), p);
  if (ji == js.end() || pi == ps.end())
    throw std::out_of_range("maj table has no entry for j=" + std::to_string(j) +
                            " p=" + std::to_string(p));
  return accuracy[ji - js.begin()][pi - ps.begin()];
}

void MajTable::validate() const {
  if (js.empty() || ps.empty()) throw std::invalid_argument("maj table is empty");
  if (accuracy.size() != js.size()) throw std::invalid_argument("maj table is not rectangular");
  for (const auto& row : accuracy) {
    if (row.size() != ps.size()) throw std::invalid_argument("maj table is not rectangular");
    for (double a : row)
      if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("maj table accuracy outside [0, 1]");
  }
}

CumulativeRegret cumulative_regret(const std::vector<double>& prefix_values,
                                   const std::vector<double>& oracle_values) {
  if (prefix_values.size() != oracle_values.size())
    throw std::invalid_argument("cumulative regret needs equal-length prefix and oracle values");
  CumulativeRegret r;
  for (std::size_t j = 0; j < prefix_values.size(); ++j) {
    const double gap = oracle_values[j] - prefix_values[j];
    if (gap < 0.0) r.beats_oracle = true;
    r.value += gap;
  }
  return r;
}

std::vector<double> perfect_oracle(std::size_t k) { return std::vector<double>(k, 1.0); }

double normalized_regret(const ScalingCurve& curve, double c0) {
  curve.validate();
  const auto& pts = curve.points;
  if (pts.empty()) throw std::invalid_argument("normalized regret of an empty curve");
  if (!(c0 > 0.0)) throw std::invalid_argument("c0 must be positive");
  if (c0 < pts.front().budget)
    throw std::invalid_argument("c0 below the first measured budget");
  if (c0 > pts.back().budget)
    throw std::invalid_argument("c0 = " + std::to_string(c0) +
                                " beyond the last measured budget " +
                                std::to_string(pts.back().budget));
  const double oracle = curve.oracle_level;
  double area = (oracle - pts.front().accuracy) * pts.front().budget;
  for (std::size_t i = 1; i < pts.size() && pts[i - 1].budget < c0; ++i) {
    const double x0 = pts[i - 1].budget, y0 = pts[i - 1].accuracy;
    double x1 = pts[i].budget, y1 = pts[i].accuracy;
    if (x1 > c0) {
      y1 = y0 + (y1 - y0) * (c0 - x0) / (x1 - x0);
      x1 = c0;
    }
    area += (x1 - x0) * (oracle - 0.5 * (y0 + y1));
  }
  return area / c0;
}

EpisodeBudgetRegret episode_budget_regret(const MajTable& table) {
  table.validate();
  const auto p1 = std::find(table.ps.begin(), table.ps.end(), 1);
  if (p1 == table.ps.end()) throw std::invalid_argument("maj table needs a p = 1 column");
  const std::size_t p1_idx = p1 - table.ps.begin();

  EpisodeBudgetRegret out;
  double running = 0.0;
  for (std::size_t bi = 0; bi < table.js.size(); ++bi) {
    const int b = table.js[bi];
    if (b < 1) continue;
    const double sequential = table.accuracy[bi][p1_idx];
    double best = sequential;
    for (std::size_t ji = 0; ji < table.js.size(); ++ji) {
      const int j = table.js[ji];
      if (j < 1) continue;
      for (std::size_t pi = 0; pi < table.ps.size(); ++pi) {
        const int p = table.ps[pi];
        if (p < 2 || static_cast<long long>(j) * p > b) continue;
        best = std::max(best, table.accuracy[ji][pi]);
      }
    }
    out.budgets.push_back(b);
    out.optimal.push_back(best);
    out.gap.push_back(best - sequential);
    running += best - sequential;
    out.normalized.push_back(running / static_cast<double>(out.budgets.size()));
  }
  if (out.budgets.empty()) throw std::invalid_argument("maj table has no positive episode budgets");
  out.total = out.normalized.back();
  return out;
}

}  // namespace mrt
