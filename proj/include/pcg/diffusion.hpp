#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "pcg/error.hpp"
#include "pcg/inference.hpp"
#include "pcg/numeric.hpp"
#include "pcg/random.hpp"

namespace pcg {

/// Variance-preserving Gaussian noising over a discretized value grid.
/// Steps are 1-based: beta(t), alpha_bar(t) for t in [1, T]; alpha_bar(0) = 1.
struct NoiseSchedule {
  std::size_t num_steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
  std::vector<double> value_grid;

  static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end, std::size_t num_categories) {
    if (steps == 0) throw Error(ErrorCode::InvalidConfig, "schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
      throw Error(ErrorCode::InvalidConfig, "need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.num_steps = steps;
    s.beta.resize(steps);
    s.alpha_bar.resize(steps);
    double keep = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
      double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
      s.beta[i] = beta_start + (beta_end - beta_start) * frac;
      keep *= 1.0 - s.beta[i];
      s.alpha_bar[i] = keep;
    }
    s.value_grid.resize(num_categories);
    for (std::size_t c = 0; c < num_categories; ++c) s.value_grid[c] = grid_value(c, num_categories);
    return s;
  }

  /// T = 250, beta linear from 1e-4 to 0.02.
  static NoiseSchedule standard(std::size_t num_categories) { return linear(250, 1e-4, 0.02, num_categories); }

  std::size_t num_categories() const { return value_grid.size(); }
  double beta_at(std::size_t t) const { return beta[t - 1]; }
  double alpha_bar_at(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
};

struct NoisyState {
  std::vector<double> values;
  std::size_t t = 0;
};

/// Known pixels for inpainting; `known_values` is meaningful where the mask is set.
struct InpaintTask {
  std::vector<std::uint8_t> known_mask;
  std::vector<Category> known_values;

  static InpaintTask from_image(std::span<const Category> image, std::vector<std::uint8_t> mask) {
    if (mask.size() != image.size()) throw Error(ErrorCode::DimMismatch, "mask and image sizes differ");
    InpaintTask task{std::move(mask), std::vector<Category>(image.size(), 0)};
    for (std::size_t i = 0; i < image.size(); ++i)
      if (task.known_mask[i]) task.known_values[i] = image[i];
    return task;
  }
  static InpaintTask unconstrained(std::size_t n) { return {std::vector<std::uint8_t>(n, 0), std::vector<Category>(n, 0)}; }

  std::size_t size() const { return known_mask.size(); }
  std::size_t num_known() const {
    std::size_t k = 0;
    for (auto m : known_mask) k += m != 0;
    return k;
  }
};

/// x_t = sqrt(abar_t) * grid[x0] + sqrt(1 - abar_t) * eps.
inline NoisyState forward_noise(std::span<const Category> x0, std::size_t t, const NoiseSchedule& s,
                                std::uint64_t seed) {
  if (t < 1 || t > s.num_steps) throw Error(ErrorCode::InvalidConfig, "t out of range");
  Rng rng(seed);
  NoisyState out{std::vector<double>(x0.size()), t};
  const double signal = std::sqrt(s.alpha_bar_at(t)), noise = std::sqrt(1.0 - s.alpha_bar_at(t));
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (x0[i] >= s.num_categories()) throw Error(ErrorCode::CategoryOutOfRange, "x0 category", i);
    out.values[i] = signal * s.value_grid[x0[i]] + noise * rng.normal();
  }
  return out;
}

/// x_T ~ N(0, I).
inline NoisyState initial_noise(std::size_t num_variables, const NoiseSchedule& s, std::uint64_t seed) {
  Rng rng(seed);
  NoisyState out{std::vector<double>(num_variables), s.num_steps};
  for (auto& v : out.values) v = rng.normal();
  return out;
}

inline double gaussian_log_density(double x, double mean, double var) {
  double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

/// log w_i(c) = log N(x_t^i; sqrt(abar_t) grid[c], 1 - abar_t); known pixels of
/// `task` (if given) are replaced by one-hot indicators.
inline SoftEvidence noise_weights(const NoisyState& state, const NoiseSchedule& s, const InpaintTask* task = nullptr) {
  if (state.t < 1 || state.t > s.num_steps) throw Error(ErrorCode::InvalidConfig, "noise weights need t >= 1");
  const std::size_t cats = s.num_categories();
  SoftEvidence ev(state.values.size(), cats);
  const double ab = s.alpha_bar_at(state.t), scale = std::sqrt(ab), var = 1.0 - ab;
  for (std::size_t i = 0; i < state.values.size(); ++i) {
    if (task && task->known_mask[i]) {
      ev.set_hard(i, task->known_values[i]);
      continue;
    }
    auto row = ev.row(i);
    for (std::size_t c = 0; c < cats; ++c) row[c] = gaussian_log_density(state.values[i], scale * s.value_grid[c], var);
  }
  return ev;
}

/// Per-pixel prior histograms standing in for a learned denoiser.
struct FactorizedDenoiser {
  std::size_t num_variables = 0;
  std::size_t num_categories = 0;
  std::vector<double> prior;  // variable x category, rows sum to 1

  bool trained() const { return !prior.empty(); }

  /// Histogram of each pixel with additive `smoothing` per category.
  static FactorizedDenoiser train(const Dataset& data, double smoothing = 1.0) {
    if (data.num_samples == 0) throw Error(ErrorCode::DatasetEmpty, "denoiser needs training data");
    FactorizedDenoiser d{data.num_variables, data.num_categories,
                         std::vector<double>(data.num_variables * data.num_categories, smoothing)};
    for (std::size_t i = 0; i < data.num_samples; ++i) {
      auto row = data.row(i);
      for (std::size_t v = 0; v < row.size(); ++v) d.prior[v * d.num_categories + row[v]] += 1.0;
    }
    for (std::size_t v = 0; v < d.num_variables; ++v) {
      double total = 0.0;
      for (std::size_t c = 0; c < d.num_categories; ++c) total += d.prior[v * d.num_categories + c];
      for (std::size_t c = 0; c < d.num_categories; ++c) d.prior[v * d.num_categories + c] /= total;
    }
    return d;
  }
};

/// p(x0_i = c | x_t) proportional to prior_i(c) q(x_t^i | c); known pixels forced one-hot.
inline Distributions denoiser_posterior(const FactorizedDenoiser& d, const NoisyState& state, const NoiseSchedule& s,
                                        const InpaintTask* task = nullptr) {
  if (!d.trained()) throw Error(ErrorCode::UntrainedDenoiser, "denoiser has no prior");
  if (d.num_variables != state.values.size() || d.num_categories != s.num_categories())
    throw Error(ErrorCode::DimMismatch, "denoiser does not match state/schedule");
  SoftEvidence ev = noise_weights(state, s, task);
  Distributions out(d.num_variables, d.num_categories);
  for (std::size_t v = 0; v < d.num_variables; ++v) {
    auto dst = out.row(v);
    auto lw = ev.row(v);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = safe_log(d.prior[v * d.num_categories + c]) + lw[c];
    if (softmax_in_place(dst) == kNegInf)
      throw Error(ErrorCode::AllZeroEvidence, "denoiser posterior has no support", v);
  }
  return out;
}

/// Category of each pixel of a clean (t = 0) state.
inline std::vector<Category> state_categories(const NoisyState& state, const NoiseSchedule& s) {
  std::vector<Category> out(state.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<Category>(nearest_grid_category(state.values[i], s.num_categories()));
  return out;
}

/// Samples x0 ~ x0dist per variable, then x_{t-1} ~ q(x_{t-1} | x0, x_t). At
/// t = 1 the sampled x0 itself (grid values, t = 0) is returned.
inline NoisyState reverse_step(const Distributions& x0dist, const NoisyState& state, const NoiseSchedule& s,
                               std::uint64_t seed) {
  const std::size_t t = state.t;
  if (t < 1 || t > s.num_steps) throw Error(ErrorCode::InvalidConfig, "reverse step needs t >= 1");
  if (x0dist.num_variables != state.values.size() || x0dist.num_categories != s.num_categories())
    throw Error(ErrorCode::DimMismatch, "x0 distribution does not match state");
  Rng rng(seed);
  NoisyState out{std::vector<double>(state.values.size()), t - 1};
  const double ab_t = s.alpha_bar_at(t), ab_prev = s.alpha_bar_at(t - 1), beta = s.beta_at(t);
  const double coef_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
  const double coef_xt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_t);
  const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    std::size_t c = rng.categorical(x0dist.row(i));
    if (c >= s.num_categories()) throw Error(ErrorCode::DegenerateMix, "x0 distribution with no mass", i);
    double x0 = s.value_grid[c];
    double eps = rng.normal();  // drawn at every step so trajectories align across t
    out.values[i] = t == 1 ? x0 : coef_x0 * x0 + coef_xt * state.values[i] + sigma * eps;
  }
  return out;
}

}  // namespace pcg
