#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pcg/diffusion.hpp"
#include "pcg/error.hpp"
#include "pcg/inference.hpp"
#include "pcg/numeric.hpp"
#include "pcg/random.hpp"

namespace pcg {

/// alpha(t) = 1 for t <= t_cut, else (b - a) exp(-lambda t / T) + a.
struct MixSchedule {
  double a = 0.8;
  double b = 1.0;
  double lambda = 2.0;
  std::size_t t_cut = 200;
  std::size_t num_steps = 250;

  static MixSchedule celeba() { return {}; }
  static MixSchedule imagenet() { return {0.8, 1.0, 2.0, 235, 250}; }
  /// Circuit never consulted.
  static MixSchedule off(std::size_t steps) { return {1.0, 1.0, 0.0, steps, steps}; }

  void validate() const {
    if (!(a >= 0.0 && a <= b && b <= 1.0)) throw Error(ErrorCode::InvalidConfig, "mix schedule needs 0 <= a <= b <= 1");
    if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "mix schedule needs lambda >= 0");
    if (num_steps == 0 || t_cut > num_steps) throw Error(ErrorCode::InvalidConfig, "mix schedule needs t_cut <= T");
  }
};

inline double alpha_at(std::size_t t, const MixSchedule& s) {
  if (t <= s.t_cut) return 1.0;
  return (s.b - s.a) * std::exp(-s.lambda * static_cast<double>(t) / static_cast<double>(s.num_steps)) + s.a;
}

/// p_TPM(x0_i | x_t, known pixels) under a pixel-space circuit.
inline PosteriorMarginals tpm_posterior(const Circuit& c, const NoisyState& state, const InpaintTask& task,
                                        const NoiseSchedule& s) {
  if (c.num_variables() != state.values.size() || c.num_categories() != s.num_categories())
    throw Error(ErrorCode::DimMismatch, "circuit does not cover the image variables");
  return soft_evidence_marginals(c, noise_weights(state, s, &task));
}

/// Per-variable log-linear pool p proportional to p_dm^alpha p_tpm^(1 - alpha).
/// The endpoints return the corresponding input unchanged.
inline Distributions mix_distributions(const Distributions& p_dm, const Distributions& p_tpm, double alpha) {
  if (p_dm.num_variables != p_tpm.num_variables || p_dm.num_categories != p_tpm.num_categories)
    throw Error(ErrorCode::DimMismatch, "mixed distributions differ in shape");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha outside [0, 1]");
  if (alpha == 1.0) return p_dm;
  if (alpha == 0.0) return p_tpm;
  Distributions out(p_dm.num_variables, p_dm.num_categories);
  for (std::size_t v = 0; v < out.num_variables; ++v) {
    auto dm = p_dm.row(v), tpm = p_tpm.row(v);
    auto dst = out.row(v);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = alpha * safe_log(dm[c]) + (1.0 - alpha) * safe_log(tpm[c]);
    if (softmax_in_place(dst) == kNegInf)
      throw Error(ErrorCode::DegenerateMix, "no category supported by both distributions", v);
  }
  return out;
}

/// Source of p_TPM(x0 | x_t, known pixels) for the guided loop.
class Guide {
 public:
  virtual ~Guide() = default;
  virtual Distributions posterior(const NoisyState& state, const InpaintTask& task, const NoiseSchedule& s,
                                  std::uint64_t seed) = 0;
};

class PixelGuide : public Guide {
 public:
  explicit PixelGuide(const Circuit& circuit) : circuit_(circuit) {}
  Distributions posterior(const NoisyState& state, const InpaintTask& task, const NoiseSchedule& s,
                          std::uint64_t) override {
    return tpm_posterior(circuit_, state, task, s).marginals;
  }

 private:
  const Circuit& circuit_;
};

struct Snapshot {
  std::size_t t = 0;
  Distributions dm;
  Distributions tpm;  // empty when the step was unguided
  Distributions mixed;
};

struct StepTimings {
  double denoiser_seconds = 0.0;
  double circuit_seconds = 0.0;
  double mix_seconds = 0.0;
  double total_seconds = 0.0;
};

struct InpaintResult {
  std::vector<Category> image;
  std::vector<Snapshot> trace;
  std::size_t guided_steps = 0;
  StepTimings timings;
};

/// True when step t gets a snapshot for trace interval k: t = T, T - k, ... and t = 1.
inline bool is_trace_step(std::size_t t, std::size_t num_steps, std::size_t every) {
  return every != 0 && ((num_steps - t) % every == 0 || t == 1);
}

/// Full reverse chain from x_T. With `guide == nullptr` (or alpha == 1) the
/// circuit is skipped; randomness for noise, sampling and the guide comes from
/// separate substreams of `seed` so guided and unguided runs share x_T.
inline InpaintResult run_inpainting(const FactorizedDenoiser& denoiser, Guide* guide, const InpaintTask& task,
                                    const NoiseSchedule& schedule, const MixSchedule& mix, std::uint64_t seed,
                                    std::size_t trace_every = 0) {
  mix.validate();
  if (mix.num_steps != schedule.num_steps)
    throw Error(ErrorCode::InvalidConfig, "mix schedule and noise schedule disagree on T");
  if (task.size() != denoiser.num_variables) throw Error(ErrorCode::DimMismatch, "task does not match denoiser");
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point from) { return std::chrono::duration<double>(clock::now() - from).count(); };
  const auto start = clock::now();
  const std::uint64_t step_root = Rng::derive(seed, "step"), guide_root = Rng::derive(seed, "guide");

  InpaintResult result;
  NoisyState state = initial_noise(task.size(), schedule, Rng::derive(seed, "init"));
  for (std::size_t t = schedule.num_steps; t >= 1; --t) {
    try {
      auto t0 = clock::now();
      Distributions dm = denoiser_posterior(denoiser, state, schedule, &task);
      result.timings.denoiser_seconds += seconds(t0);
      const double alpha = alpha_at(t, mix);
      Distributions tpm, mixed;
      if (guide && alpha < 1.0) {
        t0 = clock::now();
        tpm = guide->posterior(state, task, schedule, Rng::derive(guide_root, t));
        result.timings.circuit_seconds += seconds(t0);
        t0 = clock::now();
        mixed = mix_distributions(dm, tpm, alpha);
        result.timings.mix_seconds += seconds(t0);
        ++result.guided_steps;
      } else {
        mixed = dm;
      }
      if (is_trace_step(t, schedule.num_steps, trace_every)) result.trace.push_back({t, dm, tpm, mixed});
      state = reverse_step(mixed, state, schedule, Rng::derive(step_root, t));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (reverse step t=" + std::to_string(t) + ")", t);
    }
  }
  result.image = state_categories(state, schedule);
  result.timings.total_seconds = seconds(start);
  return result;
}

/// Inpainting masks; `known_mask[i] == 1` marks a provided pixel.
///   left   - left half of the columns missing
///   top    - top half of the rows missing
///   expand - only the central (H/2 x W/2) box provided
///   wide   - the central (H/2 x W/2) box missing
///   strip  - every other row missing
///   none   - nothing missing
///   all    - everything missing
inline std::vector<std::uint8_t> make_mask(const std::string& name, std::size_t height, std::size_t width) {
  std::vector<std::uint8_t> known(height * width, 1);
  const std::size_t r0 = height / 4, r1 = r0 + height / 2, c0 = width / 4, c1 = c0 + width / 2;
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const bool centre = r >= r0 && r < r1 && c >= c0 && c < c1;
      bool missing;
      if (name == "left") missing = c < width / 2;
      else if (name == "top") missing = r < height / 2;
      else if (name == "expand") missing = !centre;
      else if (name == "wide") missing = centre;
      else if (name == "strip") missing = r % 2 == 1;
      else if (name == "none") missing = false;
      else if (name == "all") missing = true;
      else throw Error(ErrorCode::InvalidConfig, "unknown mask '" + name + "'");
      known[r * width + c] = missing ? 0 : 1;
    }
  return known;
}

/// log p(x) - log p(x_known): exact conditional log-likelihood of the missing
/// pixels of `sample` given the known ones.
inline double conditional_log_likelihood(const Circuit& c, std::span<const Category> sample, const InpaintTask& task) {
  SoftEvidence ev(c.num_variables(), c.num_categories());
  for (std::size_t v = 0; v < task.size(); ++v)
    if (task.known_mask[v]) ev.set_hard(v, sample[v]);
  return log_likelihood(c, sample) - forward_soft_evidence(c, ev).log_z;
}

/// Fraction of provided pixels reproduced exactly.
inline double known_pixel_match_rate(std::span<const Category> sample, const InpaintTask& task) {
  std::size_t known = 0, hit = 0;
  for (std::size_t v = 0; v < task.size(); ++v) {
    if (!task.known_mask[v]) continue;
    ++known;
    hit += sample[v] == task.known_values[v];
  }
  return known == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(known);
}

}  // namespace pcg
