#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "pcg/binary_io.hpp"
#include "pcg/diffusion.hpp"
#include "pcg/error.hpp"
#include "pcg/guidance.hpp"
#include "pcg/inference.hpp"
#include "pcg/numeric.hpp"
#include "pcg/random.hpp"

namespace pcg {

/// Nearest-neighbour patch quantizer. Images are single-channel, row-major;
/// latent cell (gr, gc) covers pixel rows [gr*ph, (gr+1)*ph) and the matching
/// columns, and latents are numbered row-major. Embeddings live in value space
/// ([-1, 1] grid values) and are stored at float precision.
struct PatchCodebook {
  std::size_t patch_height = 0, patch_width = 0;
  std::size_t grid_height = 0, grid_width = 0;
  std::size_t num_codes = 0;
  std::size_t num_categories = 0;
  std::vector<double> embeddings;  // num_codes x patch_size

  std::size_t patch_size() const { return patch_height * patch_width; }
  std::size_t num_latents() const { return grid_height * grid_width; }
  std::size_t image_height() const { return grid_height * patch_height; }
  std::size_t image_width() const { return grid_width * patch_width; }
  std::size_t num_pixels() const { return image_height() * image_width(); }
  std::span<const double> embedding(std::size_t k) const { return {embeddings.data() + k * patch_size(), patch_size()}; }

  /// Pixel index of element `e` (row-major within the patch) of latent cell `cell`.
  std::size_t pixel_of(std::size_t cell, std::size_t e) const {
    const std::size_t gr = cell / grid_width, gc = cell % grid_width;
    const std::size_t r = gr * patch_height + e / patch_width, c = gc * patch_width + e % patch_width;
    return r * image_width() + c;
  }
};

inline double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

/// Grid values of one patch, rounded to float like the embeddings.
inline std::vector<double> patch_values(const PatchCodebook& cb, std::span<const Category> image, std::size_t cell) {
  std::vector<double> out(cb.patch_size());
  for (std::size_t e = 0; e < out.size(); ++e)
    out[e] = round_to_float(grid_value(image[cb.pixel_of(cell, e)], cb.num_categories));
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

/// Index of the closest embedding; ties go to the lowest index.
inline std::size_t nearest_code(const PatchCodebook& cb, std::span<const double> patch) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cb.num_codes; ++k) {
    double d = squared_distance(patch, cb.embedding(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

inline void check_image(const PatchCodebook& cb, std::size_t size) {
  if (size != cb.num_pixels()) throw Error(ErrorCode::DimMismatch, "image size does not match codebook grid");
}

inline std::vector<Category> encode(const PatchCodebook& cb, std::span<const Category> image) {
  check_image(cb, image.size());
  std::vector<Category> codes(cb.num_latents());
  for (std::size_t cell = 0; cell < codes.size(); ++cell)
    codes[cell] = static_cast<Category>(nearest_code(cb, patch_values(cb, image, cell)));
  return codes;
}

inline std::vector<Category> decode(const PatchCodebook& cb, std::span<const Category> codes) {
  if (codes.size() != cb.num_latents()) throw Error(ErrorCode::DimMismatch, "latent count does not match codebook");
  std::vector<Category> image(cb.num_pixels());
  for (std::size_t cell = 0; cell < codes.size(); ++cell) {
    if (codes[cell] >= cb.num_codes) throw Error(ErrorCode::CategoryOutOfRange, "latent code", cell);
    auto emb = cb.embedding(codes[cell]);
    for (std::size_t e = 0; e < emb.size(); ++e)
      image[cb.pixel_of(cell, e)] = static_cast<Category>(nearest_grid_category(emb[e], cb.num_categories));
  }
  return image;
}

struct CodebookConfig {
  std::size_t patch_height = 4, patch_width = 4;
  std::size_t num_codes = 16;
  std::size_t max_iterations = 100;
  std::uint64_t seed = 0;
};

/// Seeded k-means++ followed by Lloyd iterations over every training patch.
inline PatchCodebook train_codebook(const Dataset& data, std::size_t height, std::size_t width,
                                    const CodebookConfig& cfg) {
  if (data.num_samples == 0) throw Error(ErrorCode::DatasetEmpty, "codebook needs training images");
  if (height * width != data.num_variables) throw Error(ErrorCode::DimMismatch, "height x width != variables");
  if (cfg.patch_height == 0 || cfg.patch_width == 0 || height % cfg.patch_height || width % cfg.patch_width)
    throw Error(ErrorCode::DimMismatch, "image does not divide into whole patches");
  if (cfg.num_codes == 0) throw Error(ErrorCode::InvalidConfig, "codebook needs at least one code");
  PatchCodebook cb{cfg.patch_height, cfg.patch_width, height / cfg.patch_height, width / cfg.patch_width,
                   cfg.num_codes, data.num_categories, {}};
  const std::size_t dim = cb.patch_size();

  std::vector<double> points;
  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < data.num_samples; ++i)
    for (std::size_t cell = 0; cell < cb.num_latents(); ++cell) {
      auto p = patch_values(cb, data.row(i), cell);
      points.insert(points.end(), p.begin(), p.end());
      distinct.insert(std::move(p));
    }
  if (cfg.num_codes > distinct.size())
    throw Error(ErrorCode::KTooLarge, "K=" + std::to_string(cfg.num_codes) + " exceeds " +
                                          std::to_string(distinct.size()) + " distinct patches");
  const std::size_t n = points.size() / dim;
  auto point = [&](std::size_t i) { return std::span<const double>(points.data() + i * dim, dim); };

  Rng rng(Rng::derive(cfg.seed, "codebook"));
  std::vector<double> centres;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  auto add_centre = [&](std::size_t i) {
    auto p = point(i);
    centres.insert(centres.end(), p.begin(), p.end());
    std::span<const double> c(centres.data() + centres.size() - dim, dim);
    for (std::size_t j = 0; j < n; ++j) nearest[j] = std::min(nearest[j], squared_distance(point(j), c));
  };
  add_centre(static_cast<std::size_t>(rng.below(n)));
  while (centres.size() / dim < cfg.num_codes) add_centre(rng.categorical(nearest));

  std::vector<std::size_t> assign(n, 0);
  cb.embeddings = centres;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    bool moved = it == 0;
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t k = nearest_code(cb, point(j));
      moved = moved || k != assign[j];
      assign[j] = k;
    }
    if (!moved) break;
    std::vector<double> sums(cfg.num_codes * dim, 0.0);
    std::vector<std::size_t> counts(cfg.num_codes, 0);
    for (std::size_t j = 0; j < n; ++j) {
      ++counts[assign[j]];
      for (std::size_t e = 0; e < dim; ++e) sums[assign[j] * dim + e] += points[j * dim + e];
    }
    for (std::size_t k = 0; k < cfg.num_codes; ++k) {
      if (counts[k] == 0) continue;  // keep the previous centre
      for (std::size_t e = 0; e < dim; ++e) cb.embeddings[k * dim + e] = sums[k * dim + e] / static_cast<double>(counts[k]);
    }
  }
  for (auto& e : cb.embeddings) e = round_to_float(e);
  return cb;
}

/// q(z | patch) = softmax_j(-||patch - e_j||_2 / temperature); temperature 0
/// gives the one-hot nearest code.
inline std::vector<double> soft_assign(const PatchCodebook& cb, std::span<const double> patch, double temperature) {
  std::vector<double> q(cb.num_codes, 0.0);
  if (temperature <= 0.0) {
    q[nearest_code(cb, patch)] = 1.0;
    return q;
  }
  for (std::size_t k = 0; k < cb.num_codes; ++k) q[k] = -std::sqrt(squared_distance(patch, cb.embedding(k))) / temperature;
  softmax_in_place(q);
  return q;
}

/// log w(j) = -d_j / lambda.
inline std::vector<double> fusion_log_weights(std::span<const double> distances, double lambda_sf) {
  std::vector<double> out(distances.size());
  for (std::size_t j = 0; j < distances.size(); ++j) out[j] = -distances[j] / lambda_sf;
  return out;
}

/// Monte Carlo latent evidence: for every cell, the average over
/// `num_samples` draws x ~ prod_j w_j of q(z | patch of x). Each cell uses its
/// own substream so a cell's row depends only on its own pixels.
inline SoftEvidence estimate_latent_evidence(const PatchCodebook& cb, const SoftEvidence& pixel_evidence,
                                             std::size_t num_samples, double temperature, std::uint64_t seed) {
  if (num_samples == 0) throw Error(ErrorCode::InvalidConfig, "latent evidence needs at least one sample");
  check_image(cb, pixel_evidence.num_variables);
  if (pixel_evidence.num_categories != cb.num_categories)
    throw Error(ErrorCode::DimMismatch, "pixel evidence categories differ from codebook");
  pixel_evidence.check_support();
  SoftEvidence out(cb.num_latents(), cb.num_codes);
  std::vector<double> patch(cb.patch_size()), mean(cb.num_codes);
  for (std::size_t cell = 0; cell < cb.num_latents(); ++cell) {
    Rng rng(Rng::derive(seed, cell));
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t s = 0; s < num_samples; ++s) {
      for (std::size_t e = 0; e < patch.size(); ++e) {
        std::size_t x = rng.categorical_log(pixel_evidence.row(cb.pixel_of(cell, e)));
        patch[e] = round_to_float(grid_value(x, cb.num_categories));
      }
      auto q = soft_assign(cb, patch, temperature);
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += q[k];
    }
    for (auto& m : mean) m /= static_cast<double>(num_samples);
    out.set_weights(cell, mean);
  }
  return out;
}

struct FusionReference {
  std::vector<Category> image;
  std::vector<std::uint8_t> keep;  // 1 where the reference pixel is used
};

struct FusionEvidence {
  SoftEvidence evidence;
  std::vector<std::uint8_t> covered;
  bool empty_coverage = false;
};

/// Semantic-fusion constraints: a cell is covered by a reference when every
/// pixel of its patch is kept. Covered cells get log w(j) = -||e - e_j||_2 /
/// lambda_sf summed over covering references; uncovered cells stay uniform.
inline FusionEvidence semantic_fusion_evidence(const PatchCodebook& cb, const std::vector<FusionReference>& refs,
                                               double lambda_sf) {
  if (!(lambda_sf > 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda_sf must be positive");
  FusionEvidence out{SoftEvidence(cb.num_latents(), cb.num_codes), std::vector<std::uint8_t>(cb.num_latents(), 0),
                     false};
  std::vector<double> dist(cb.num_codes);
  for (const auto& ref : refs) {
    check_image(cb, ref.image.size());
    check_image(cb, ref.keep.size());
    for (std::size_t cell = 0; cell < cb.num_latents(); ++cell) {
      bool whole = true;
      for (std::size_t e = 0; e < cb.patch_size() && whole; ++e) whole = ref.keep[cb.pixel_of(cell, e)] != 0;
      if (!whole) continue;
      auto patch = patch_values(cb, ref.image, cell);
      for (std::size_t k = 0; k < cb.num_codes; ++k) dist[k] = std::sqrt(squared_distance(patch, cb.embedding(k)));
      auto lw = fusion_log_weights(dist, lambda_sf);
      auto row = out.evidence.row(cell);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += lw[k];
      out.covered[cell] = 1;
    }
  }
  out.empty_coverage = std::none_of(out.covered.begin(), out.covered.end(), [](auto c) { return c != 0; });
  return out;
}

struct LatentGuidedResult {
  Distributions pixels;
  PosteriorMarginals latents;
};

/// Decoded expectation E_z[onehot(decode(z))] with z drawn exactly from the
/// latent circuit conditioned on `latent_evidence`.
inline LatentGuidedResult latent_guided_sample(const Circuit& c, const PatchCodebook& cb,
                                               const SoftEvidence& latent_evidence, std::size_t num_decodes,
                                               std::uint64_t seed) {
  if (c.num_variables() != cb.num_latents() || c.num_categories() != cb.num_codes)
    throw Error(ErrorCode::DimMismatch, "latent circuit does not match codebook grid");
  if (num_decodes == 0) throw Error(ErrorCode::InvalidConfig, "need at least one decode sample");
  ForwardValues fw = forward_soft_evidence(c, latent_evidence);
  LatentGuidedResult out{Distributions(cb.num_pixels(), cb.num_categories), backward_marginals(c, latent_evidence, fw)};
  Dataset samples = conditional_sample(c, latent_evidence, seed, num_decodes, &fw);
  const double share = 1.0 / static_cast<double>(num_decodes);
  for (std::size_t s = 0; s < num_decodes; ++s) {
    auto image = decode(cb, samples.row(s));
    for (std::size_t p = 0; p < image.size(); ++p) out.pixels(p, image[p]) += share;
  }
  return out;
}

/// p_TPM for the guided loop through the latent circuit: pixel noise weights
/// -> latent evidence -> conditional latent samples -> decoded pixels.
/// Known pixels are reported one-hot.
class LatentGuide : public Guide {
 public:
  LatentGuide(const Circuit& circuit, const PatchCodebook& codebook, double temperature = 0.1,
              std::size_t evidence_samples = 4, std::size_t decode_samples = 8)
      : circuit_(circuit),
        codebook_(codebook),
        temperature_(temperature),
        evidence_samples_(evidence_samples),
        decode_samples_(decode_samples) {}

  Distributions posterior(const NoisyState& state, const InpaintTask& task, const NoiseSchedule& s,
                          std::uint64_t seed) override {
    SoftEvidence pixel_ev = noise_weights(state, s, &task);
    SoftEvidence latent_ev = estimate_latent_evidence(codebook_, pixel_ev, evidence_samples_, temperature_,
                                                      Rng::derive(seed, "evidence"));
    auto result = latent_guided_sample(circuit_, codebook_, latent_ev, decode_samples_, Rng::derive(seed, "decode"));
    for (std::size_t p = 0; p < task.size(); ++p) {
      if (!task.known_mask[p]) continue;
      auto row = result.pixels.row(p);
      std::fill(row.begin(), row.end(), 0.0);
      row[task.known_values[p]] = 1.0;
    }
    return std::move(result.pixels);
  }

 private:
  const Circuit& circuit_;
  const PatchCodebook& codebook_;
  double temperature_;
  std::size_t evidence_samples_, decode_samples_;
};

// PCCB layout: "PCCB" | version u32 | K u32 | patchHeight u32 | patchWidth u32 |
// gridHeight u32 | gridWidth u32 | C u32 | K x patchSize f32 embeddings.
inline constexpr std::uint32_t kCodebookFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_codebook(const PatchCodebook& cb) {
  io::ByteWriter w;
  w.magic("PCCB");
  w.u32(kCodebookFormatVersion);
  for (std::size_t v : {cb.num_codes, cb.patch_height, cb.patch_width, cb.grid_height, cb.grid_width,
                        cb.num_categories})
    w.u32(static_cast<std::uint32_t>(v));
  for (double e : cb.embeddings) w.f32(static_cast<float>(e));
  return w.bytes();
}

inline PatchCodebook parse_codebook(io::ByteReader r) {
  r.expect_magic("PCCB");
  if (std::uint32_t version = r.u32(); version != kCodebookFormatVersion)
    throw Error(ErrorCode::FormatError, "unsupported codebook version " + std::to_string(version));
  PatchCodebook cb;
  cb.num_codes = r.u32();
  cb.patch_height = r.u32();
  cb.patch_width = r.u32();
  cb.grid_height = r.u32();
  cb.grid_width = r.u32();
  cb.num_categories = r.u32();
  if (r.remaining() != cb.num_codes * cb.patch_size() * 4)
    throw Error(ErrorCode::FormatError, "codebook payload size does not match header");
  cb.embeddings.resize(cb.num_codes * cb.patch_size());
  for (auto& e : cb.embeddings) e = r.f32();
  return cb;
}

inline void save_codebook(const PatchCodebook& cb, const std::string& path) {
  io::write_file(path, serialize_codebook(cb));
}

inline PatchCodebook load_codebook(const std::string& path) { return parse_codebook(io::ByteReader::load(path)); }

}  // namespace pcg
