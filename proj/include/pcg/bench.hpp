#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "pcg/inference.hpp"
#include "pcg/random_circuit.hpp"

namespace pcg {

struct LinearFit {
  double slope = 0.0, intercept = 0.0, r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw Error(ErrorCode::DimMismatch, "fit_line needs >= 2 paired points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  LinearFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (fit.slope * xs[i] + fit.intercept);
    sse += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return fit;
}

/// Random circuit over 16 binary variables whose edge count is linear in the
/// number of repetitions; picks the repetition count
/// closest to `target_edges`.
inline Circuit scaling_circuit(std::size_t target_edges, std::uint64_t seed) {
  RandomCircuitConfig cfg{16, 2, 4, 4, 2, 1, true};
  const std::size_t per_rep = random_circuit(cfg, seed).num_edges();
  cfg.repetitions = std::max<std::size_t>(1, (target_edges + per_rep / 2) / per_rep);
  return random_circuit(cfg, seed);
}

/// Fastest of `repeats` timed forward + backward passes, in seconds.
inline double time_forward_backward(const Circuit& c, const SoftEvidence& ev, std::size_t repeats) {
  using clock = std::chrono::steady_clock;
  double best = std::numeric_limits<double>::infinity();
  volatile double sink = 0.0;
  auto warm = soft_evidence_marginals(c, ev);
  sink = sink + warm.log_z;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
    auto t0 = clock::now();
    auto post = soft_evidence_marginals(c, ev);
    auto t1 = clock::now();
    sink = sink + post.marginals.probs[0];
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

struct ScalingPoint {
  std::size_t edges = 0;
  double seconds = 0.0;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  LinearFit fit;
  double worst_doubling_ratio = 0.0;  // max over consecutive sizes of time ratio / edge ratio * 2
};

inline ScalingReport measure_scaling(const std::vector<std::size_t>& target_edges, std::size_t repeats,
                                     std::uint64_t seed) {
  ScalingReport report;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < target_edges.size(); ++i) {
    Circuit c = scaling_circuit(target_edges[i], Rng::derive(seed, i));
    auto ev = random_soft_evidence(c.num_variables(), c.num_categories(), Rng::derive(seed, "evidence"));
    double s = time_forward_backward(c, ev, repeats);
    report.points.push_back({c.num_edges(), s});
    xs.push_back(static_cast<double>(c.num_edges()));
    ys.push_back(s);
  }
  report.fit = fit_line(xs, ys);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    double per_doubling = (ys[i] / ys[i - 1]) * (2.0 * xs[i - 1] / xs[i]);
    report.worst_doubling_ratio = std::max(report.worst_doubling_ratio, per_doubling);
  }
  return report;
}

}  // namespace pcg
