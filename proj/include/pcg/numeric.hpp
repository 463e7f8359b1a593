#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace pcg {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

// log(sum_i exp(v_i)) with a max shift. All -inf gives -inf.
inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  double peak = *std::max_element(values.begin(), values.end());
  if (peak == kNegInf) return kNegInf;
  if (std::isinf(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// In-place softmax of log-domain values. Returns the log normalizer.
inline double softmax_in_place(std::span<double> values) {
  double lse = log_sum_exp(values);
  if (lse == kNegInf) return lse;
  for (double& v : values) v = std::exp(v - lse);
  return lse;
}

inline double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

/// Categories are discretized uniformly on [-1, 1]; a single category sits at 0.
inline double grid_value(std::size_t category, std::size_t num_categories) {
  if (num_categories <= 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(category) /
                    static_cast<double>(num_categories - 1);
}

inline std::size_t nearest_grid_category(double value, std::size_t num_categories) {
  if (num_categories <= 1) return 0;
  double pos = (value + 1.0) * 0.5 * static_cast<double>(num_categories - 1);
  double r = std::round(pos);
  r = std::clamp(r, 0.0, static_cast<double>(num_categories - 1));
  return static_cast<std::size_t>(r);
}

}  // namespace pcg
