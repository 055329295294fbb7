#pragma once

#include <cmath>
#include <vector>

#include "muse/errors.hpp"
#include "muse/numerics/linalg.hpp"

namespace muse {

/// Effective sample size via autocovariance with Geyer's
/// initial-positive-sequence truncation: lag pairs are summed while their
/// sum stays positive. Capped at 1.05 * n (slack for antithetic noise).
/// A constant series is degenerate and reports ESS = n.
inline double effective_sample_size(const Vec& series,
                                    bool* degenerate = nullptr) {
  const Eigen::Index n = series.size();
  if (degenerate) *degenerate = false;
  if (n < 10) throw Error("effective_sample_size: need at least 10 samples");

  const double mean = series.mean();
  Vec c = series.array() - mean;

  auto gamma = [&](Eigen::Index k) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t + k < n; ++t) acc += c[t] * c[t + k];
    return acc / static_cast<double>(n);
  };

  const double g0 = gamma(0);
  if (g0 <= 0.0) {
    if (degenerate) *degenerate = true;
    return static_cast<double>(n);
  }

  double pair_sum = 0.0;
  for (Eigen::Index m = 0; 2 * m < n; ++m) {
    double G = gamma(2 * m);
    if (2 * m + 1 < n) G += gamma(2 * m + 1);
    if (G <= 0.0) break;
    pair_sum += G;
  }

  double tau = 2.0 * pair_sum / g0 - 1.0;
  const double cap = 1.05 * static_cast<double>(n);
  if (tau <= 0.0) return cap;
  return std::min(static_cast<double>(n) / tau, cap);
}

}  // namespace muse
