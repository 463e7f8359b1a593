#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pcg/error.hpp"
#include "pcg/random.hpp"

namespace pcg {

struct PairedSummary {
  std::size_t n = 0;
  double mean_a = 0.0, mean_b = 0.0;
  double mean_diff = 0.0;  // mean of a - b
  double ci_low = 0.0, ci_high = 0.0;
};

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

/// Percentile bootstrap interval for the mean paired difference a - b.
inline PairedSummary paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                                      std::size_t resamples, std::uint64_t seed, double level = 0.95) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorCode::DimMismatch, "paired samples must be non-empty and equal length");
  if (resamples == 0) throw Error(ErrorCode::InvalidConfig, "bootstrap needs resamples");
  PairedSummary out;
  out.n = a.size();
  out.mean_a = mean_of(a);
  out.mean_b = mean_of(b);
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  out.mean_diff = mean_of(diff);

  Rng rng(seed);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) s += diff[rng.below(diff.size())];
    m = s / static_cast<double>(diff.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1) + 0.5));
    return means[std::min(idx, resamples - 1)];
  };
  out.ci_low = at(tail);
  out.ci_high = at(1.0 - tail);
  return out;
}

}  // namespace pcg
