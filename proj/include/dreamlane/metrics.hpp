#pragma once

// Evaluation statistics.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "dreamlane/core.hpp"

namespace dreamlane {

/// Area under the ROC curve from the Mann-Whitney statistic, ties counted as
/// one half. `positive[i]` marks the positive class; higher scores rank
/// positives first.
inline double roc_auc(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw Error("roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie blocks.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("roc_auc: both classes must be present");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

inline double mean_absolute_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw Error("mean_absolute_error: size mismatch or empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

/// Energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'| with Euclidean norms,
/// all pairs averaged (V-statistic, so identical samples give exactly 0).
inline double energy_distance(std::span<const std::vector<double>> xs, std::span<const std::vector<double>> ys) {
  if (xs.empty() || ys.empty()) throw Error("energy_distance: empty sample");
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error("energy_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  auto mean_pair = [&](std::span<const std::vector<double>> a, std::span<const std::vector<double>> b) {
    double s = 0.0;
    for (const auto& x : a)
      for (const auto& y : b) s += dist(x, y);
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  return 2.0 * mean_pair(xs, ys) - mean_pair(xs, xs) - mean_pair(ys, ys);
}

}  // namespace dreamlane
