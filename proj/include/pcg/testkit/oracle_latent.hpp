#pragma once

// Exact reference for the latent pipeline on tiny grids. Only the codebook and
// circuit data are shared with the library; distances, the soft assignment,
// decoding and the conditional are recomputed here by enumeration.

#include <cmath>
#include <vector>

#include "pcg/latent.hpp"
#include "pcg/testkit/oracle.hpp"

namespace pcg::oracle {

struct Eq6Result {
  std::vector<long double> latent_weights;  // per cell, per code: E[q(z | patch)]
  Distributions pixels;                     // E_z[onehot(decode(z))] under p(z) prod_i W_i(z_i)
  long double normalizer = 0.0L;
};

namespace detail {

inline long double grid_point(std::size_t c, std::size_t cats) {
  return static_cast<long double>(
      static_cast<float>(-1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(cats - 1)));
}

/// Category whose grid point is closest; halfway values go to the higher one.
inline Category closest_category(double value, std::size_t cats) {
  Category best = 0;
  long double best_d = -1.0L;
  for (std::size_t c = 0; c < cats; ++c) {
    long double g = -1.0L + 2.0L * static_cast<long double>(c) / static_cast<long double>(cats - 1);
    long double d = std::fabs(static_cast<long double>(value) - g);
    if (best_d < 0.0L || d <= best_d) {
      best_d = d;
      best = static_cast<Category>(c);
    }
  }
  return best;
}

inline std::size_t pixel_index(const PatchCodebook& cb, std::size_t cell, std::size_t e) {
  std::size_t row = (cell / cb.grid_width) * cb.patch_height + e / cb.patch_width;
  std::size_t col = (cell % cb.grid_width) * cb.patch_width + e % cb.patch_width;
  return row * cb.grid_width * cb.patch_width + col;
}

}  // namespace detail

/// Exact version of the Monte Carlo chain behind the latent guide:
///   W_i(z)  = sum over patch pixels x of prod_e p_e(x_e) q(z | x),
///   p(z)   proportional to circuit(z) prod_i W_i(z_i),
///   output = sum_z p(z) onehot(decode(z)).
/// q(z | x) is the softmax of -||x - e_z||_2 / temperature, or the nearest code
/// (lowest index on ties) when temperature is 0.
inline Eq6Result oracle_eq6(const PatchCodebook& cb, const Circuit& latent_circuit, const SoftEvidence& pixel_ev,
                            double temperature, const EnumerationBudget& budget = {}) {
  const std::size_t cells = cb.grid_height * cb.grid_width, codes = cb.num_codes, cats = cb.num_categories;
  const std::size_t psize = cb.patch_height * cb.patch_width;
  const std::size_t npix = cells * psize;
  std::uint64_t patch_states = state_count(psize, cats, budget);
  std::uint64_t latent_states = state_count(cells, codes, budget);

  std::vector<long double> pixel_prob(npix * cats);
  for (std::size_t p = 0; p < npix; ++p) {
    CompensatedSum total;
    for (std::size_t c = 0; c < cats; ++c) total.add(std::exp(static_cast<long double>(pixel_ev.row(p)[c])));
    if (!(total.value() > 0.0L)) throw Error(ErrorCode::AllZeroEvidence, "pixel with no support", p);
    for (std::size_t c = 0; c < cats; ++c)
      pixel_prob[p * cats + c] = std::exp(static_cast<long double>(pixel_ev.row(p)[c])) / total.value();
  }

  Eq6Result out;
  out.latent_weights.assign(cells * codes, 0.0L);
  std::vector<Category> x(psize);
  std::vector<long double> q(codes);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::vector<CompensatedSum> acc(codes);
    for (std::uint64_t s = 0; s < patch_states; ++s) {
      decode_index(s, cats, x);
      long double prob = 1.0L;
      for (std::size_t e = 0; e < psize; ++e) prob *= pixel_prob[detail::pixel_index(cb, cell, e) * cats + x[e]];
      if (prob == 0.0L) continue;
      long double best = -1.0L;
      std::size_t arg = 0;
      for (std::size_t z = 0; z < codes; ++z) {
        long double d2 = 0.0L;
        for (std::size_t e = 0; e < psize; ++e) {
          long double diff = detail::grid_point(x[e], cats) - static_cast<long double>(cb.embeddings[z * psize + e]);
          d2 += diff * diff;
        }
        q[z] = std::sqrt(d2);
        if (best < 0.0L || q[z] < best) {
          best = q[z];
          arg = z;
        }
      }
      if (temperature <= 0.0) {
        for (std::size_t z = 0; z < codes; ++z) q[z] = z == arg ? 1.0L : 0.0L;
      } else {
        CompensatedSum norm;
        for (std::size_t z = 0; z < codes; ++z) norm.add(q[z] = std::exp(-(q[z] - best) / temperature));
        for (std::size_t z = 0; z < codes; ++z) q[z] /= norm.value();
      }
      for (std::size_t z = 0; z < codes; ++z) acc[z].add(prob * q[z]);
    }
    for (std::size_t z = 0; z < codes; ++z) out.latent_weights[cell * codes + z] = acc[z].value();
  }

  DirectEvaluator eval(latent_circuit);
  std::vector<Category> zs(cells);
  std::vector<CompensatedSum> mass(npix * cats);
  CompensatedSum total;
  for (std::uint64_t s = 0; s < latent_states; ++s) {
    decode_index(s, codes, zs);
    long double weight = eval.probability(zs);
    for (std::size_t cell = 0; cell < cells; ++cell) weight *= out.latent_weights[cell * codes + zs[cell]];
    if (weight == 0.0L) continue;
    total.add(weight);
    for (std::size_t cell = 0; cell < cells; ++cell)
      for (std::size_t e = 0; e < psize; ++e) {
        Category c = detail::closest_category(cb.embeddings[zs[cell] * psize + e], cats);
        mass[detail::pixel_index(cb, cell, e) * cats + c].add(weight);
      }
  }
  out.normalizer = total.value();
  if (!(out.normalizer > 0.0L)) throw Error(ErrorCode::AllZeroEvidence, "latent posterior has no mass");
  out.pixels = Distributions(npix, cats);
  for (std::size_t i = 0; i < npix * cats; ++i) out.pixels.probs[i] = static_cast<double>(mass[i].value() / out.normalizer);
  return out;
}

}  // namespace pcg::oracle
