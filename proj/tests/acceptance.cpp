// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "pcg/pcg.hpp"
#include "pcg/testkit/certification.hpp"
#include "pcg/testkit/oracle.hpp"
#include "pcg/testkit/oracle_latent.hpp"

using namespace pcg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dataset toy(std::size_t h, std::size_t w, std::size_t count, std::uint64_t seed, std::size_t bar_width) {
  ToyDatasetSpec spec;
  spec.height = h;
  spec.width = w;
  spec.count = count;
  spec.seed = seed;
  spec.bar_width = bar_width;
  return generate_toy_dataset(spec);
}

// AC1 + AC2 share the battery.
oracle::CertificationReport certification_report;
double certification_seconds = 0.0;

void run_battery() {
  auto t0 = std::chrono::steady_clock::now();
  oracle::CertificationConfig cfg;
  cfg.num_cases = 200;
  cfg.seed = 2024;
  cfg.min_variables = 2;
  cfg.max_variables = 10;
  cfg.marginal_tolerance = 1e-9;
  cfg.log_z_tolerance = 1e-9;
  cfg.flow_tolerance = 1e-9;
  certification_report = oracle::run_certification(cfg);
  certification_seconds = seconds_since(t0);
}

Outcome ac1() {
  const auto& r = certification_report;
  bool pass = r.marginals.passed == 200 && r.log_z.passed == 200 && certification_seconds < 30.0;
  return {pass, fmt("marginals %.0f/200, logZ %.0f/200, worst abs %.2e, worst rel logZ %.2e", double(r.marginals.passed),
                    double(r.log_z.passed), r.worst_marginal_error, r.worst_log_z_error) +
                    fmt(", %.1fs", certification_seconds)};
}

Outcome ac2() {
  const auto& r = certification_report;
  return {r.flow_conservation.passed == 200,
          fmt("%.0f/200 cases, worst |sum - 1| %.2e", double(r.flow_conservation.passed), r.worst_flow_error)};
}

Outcome ac3() {
  // Timing is noisy on shared machines; a criterion miss is re-measured up to twice.
  ScalingReport s;
  int attempt = 0;
  for (; attempt < 3; ++attempt) {
    s = measure_scaling({10000, 20000, 40000, 80000}, 25, Rng::derive(7, attempt));
    if (s.fit.r_squared >= 0.95 && s.worst_doubling_ratio <= 2.5) break;
  }
  std::string pts;
  for (const auto& p : s.points) pts += fmt(" %.0f:%.3fms", double(p.edges), p.seconds * 1e3);
  return {s.fit.r_squared >= 0.95 && s.worst_doubling_ratio <= 2.5,
          fmt("R^2 %.4f, worst doubling %.2fx, attempts %.0f;", s.fit.r_squared, s.worst_doubling_ratio,
              double(std::min(attempt + 1, 3))) +
              pts};
}

Outcome ac4() {
  Dataset data = toy(4, 4, 300, 4, 1);
  Circuit init = initialize_parameters(build_pd_circuit({4, 4, 2, 4}), 9);
  EmConfig cfg;
  cfg.step_size = 1.0;
  cfg.pseudocount = 0.0;
  cfg.batch_size = data.num_samples;
  cfg.num_iterations = 50;
  auto [trained, report] = fit(init, data, cfg);
  double prev = report.initial_log_likelihood, worst = 0.0;
  for (double ll : report.avg_log_likelihood) {
    worst = std::min(worst, ll - prev);
    prev = ll;
  }
  bool monotone = worst >= -1e-8 && report.avg_log_likelihood.size() == 50;

  EmConfig table4;  // step 1.0, pseudocount 0.1
  table4.num_iterations = 200;
  auto [t4, r4] = fit(init, data, table4);
  bool finite = std::isfinite(r4.initial_log_likelihood);
  for (double ll : r4.avg_log_likelihood) finite = finite && std::isfinite(ll);
  for (double p : t4.all_edge_params()) finite = finite && std::isfinite(p);
  for (double p : t4.all_leaf_params()) finite = finite && std::isfinite(p);
  return {monotone && finite && r4.avg_log_likelihood.size() == 200,
          fmt("worst step %.2e over 50 its (LL %.4f -> %.4f); Table-4 run 200 its finite=%.0f", worst,
              report.initial_log_likelihood, report.avg_log_likelihood.back(), finite ? 1.0 : 0.0)};
}

Outcome ac5() {
  bool endpoints = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Distributions dm(16, 3), tpm(16, 3);
    for (std::size_t v = 0; v < 16; ++v) {
      double a = 0.0, b = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        a += dm(v, c) = rng.uniform(0.01, 1.0);
        b += tpm(v, c) = rng.uniform(0.01, 1.0);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        dm(v, c) /= a;
        tpm(v, c) /= b;
      }
    }
    endpoints = endpoints && mix_distributions(dm, tpm, 1.0).probs == dm.probs &&
                mix_distributions(dm, tpm, 0.0).probs == tpm.probs;
  }
  double worst = 0.0;
  bool cutoff = true;
  for (std::size_t t_cut : {200u, 235u}) {
    MixSchedule s{0.8, 1.0, 2.0, t_cut, 250};
    for (std::size_t t = 1; t <= 250; ++t) {
      double got = alpha_at(t, s);
      if (t <= t_cut) {
        cutoff = cutoff && got == 1.0;
      } else {
        double direct = (1.0 - 0.8) * std::exp(-2.0 * static_cast<double>(t) / 250.0) + 0.8;
        worst = std::max(worst, std::abs(got - direct));
      }
    }
  }
  return {endpoints && cutoff && worst <= 1e-15,
          fmt("endpoints exact=%.0f, alpha=1 below cut=%.0f, worst |alpha - direct| %.1e", endpoints ? 1.0 : 0.0,
              cutoff ? 1.0 : 0.0, worst)};
}

Outcome ac6() {
  auto t0 = std::chrono::steady_clock::now();
  Dataset train = toy(8, 8, 500, 1, 2);
  Dataset held = toy(8, 8, 500, 2, 2);
  Dataset tests = toy(8, 8, 100, 3, 2);
  EmConfig em;
  em.num_iterations = 30;
  em.seed = 21;
  Circuit guide_circuit = fit(initialize_parameters(build_pd_circuit({8, 8, 2, 4}), 11), train, em).first;
  em.seed = 22;
  Circuit truth = fit(initialize_parameters(build_pd_circuit({8, 8, 2, 4}), 12), held, em).first;

  auto den = FactorizedDenoiser::train(train);
  auto schedule = NoiseSchedule::standard(2);
  auto mix = MixSchedule::celeba();
  auto mask = make_mask("left", 8, 8);
  PixelGuide guide(guide_circuit);
  std::vector<double> guided, unguided;
  bool all_match = true;
  for (std::size_t i = 0; i < 100; ++i) {
    auto task = InpaintTask::from_image(tests.row(i), mask);
    const std::uint64_t seed = Rng::derive(606, i);
    auto g = run_inpainting(den, &guide, task, schedule, mix, seed);
    auto u = run_inpainting(den, nullptr, task, schedule, MixSchedule::off(250), seed);
    all_match = all_match && known_pixel_match_rate(g.image, task) == 1.0;
    guided.push_back(conditional_log_likelihood(truth, g.image, task));
    unguided.push_back(conditional_log_likelihood(truth, u.image, task));
  }
  auto s = paired_bootstrap(guided, unguided, 2000, 6060);
  double secs = seconds_since(t0);
  return {s.mean_diff > 0.0 && s.ci_low > 0.0 && all_match && secs < 300.0,
          fmt("guided %.3f vs unguided %.3f, diff %.3f", s.mean_a, s.mean_b, s.mean_diff) +
              fmt(" CI95 [%.3f, %.3f], match %.0f%%, %.0fs", s.ci_low, s.ci_high, all_match ? 100.0 : 0.0, secs)};
}

Outcome ac7() {
  const std::size_t n = 10000;
  const double sigma = std::sqrt(0.25 / n + 0.25 / n);
  double worst_ratio = 0.0;
  bool exact = true;
  std::size_t cases = 0;
  for (std::size_t codes : {2u, 3u, 4u}) {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      Rng rng(Rng::derive(codes, seed));
      PatchCodebook cb{2, 2, 2, 2, codes, 2, {}};
      for (std::size_t i = 0; i < codes * 4; ++i) cb.embeddings.push_back(round_to_float(rng.uniform(-1.0, 1.0)));
      RandomCircuitConfig rc{4, codes, 2, 2, 2, 1, false};
      Circuit lc = random_circuit(rc, rng.next_u64());
      const double tau = 0.3;

      auto pixel_ev = random_soft_evidence(16, 2, rng.next_u64());
      auto exact_res = oracle::oracle_eq6(cb, lc, pixel_ev, tau);
      auto latent_ev = estimate_latent_evidence(cb, pixel_ev, n, tau, rng.next_u64());
      auto sampled = latent_guided_sample(lc, cb, latent_ev, n, rng.next_u64());
      for (std::size_t i = 0; i < sampled.pixels.probs.size(); ++i)
        worst_ratio = std::max(worst_ratio, std::abs(sampled.pixels.probs[i] - exact_res.pixels.probs[i]) / sigma);
      for (std::size_t cell = 0; cell < 4; ++cell)
        for (std::size_t k = 0; k < codes; ++k) {
          double w = std::exp(latent_ev.row(cell)[k]);
          double ref = static_cast<double>(exact_res.latent_weights[cell * codes + k]);
          worst_ratio = std::max(worst_ratio, std::abs(w - ref) / std::sqrt(0.25 / n));
        }

      // One-hot pixels with a hard encoder: everything is deterministic.
      std::vector<Category> image(16);
      for (auto& p : image) p = static_cast<Category>(rng.below(2));
      auto hard = SoftEvidence::hard_sample(image, 2);
      auto exact_hard = oracle::oracle_eq6(cb, lc, hard, 0.0);
      auto hard_latent = estimate_latent_evidence(cb, hard, 16, 0.0, rng.next_u64());
      auto hard_sampled = latent_guided_sample(lc, cb, hard_latent, 64, rng.next_u64());
      exact = exact && hard_sampled.pixels.probs == exact_hard.pixels.probs;
      ++cases;
    }
  }
  return {worst_ratio <= 3.0 && exact,
          fmt("%.0f cases, worst |MC - exact| = %.2f sigma (sigma %.4f), one-hot exact=%.0f", double(cases), worst_ratio,
              sigma, exact ? 1.0 : 0.0)};
}

Outcome ac8() {
  // Single-pixel bars show exactly six distinct 2x2 patches.
  Dataset train = toy(8, 8, 300, 31, 1);
  Dataset refs_data = toy(8, 8, 40, 32, 1);
  PatchCodebook cb = train_codebook(train, 8, 8, {2, 2, 6, 100, 5});
  const std::vector<double> ladder{1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0};
  auto left = make_mask("left", 8, 8), top = make_mask("top", 8, 8);
  std::size_t covered_cells = 0, argmax_cells = 0, argmax_hits = 0;
  bool monotone = true;
  for (std::size_t i = 0; i + 1 < refs_data.num_samples; i += 2) {
    std::vector<Category> a(refs_data.row(i).begin(), refs_data.row(i).end());
    std::vector<Category> b(refs_data.row(i + 1).begin(), refs_data.row(i + 1).end());
    std::vector<FusionReference> refs{{a, left}, {b, top}};
    std::vector<double> prev(cb.num_latents(), -1.0);
    for (double lambda : ladder) {
      auto fused = semantic_fusion_evidence(cb, refs, lambda);
      for (std::size_t cell = 0; cell < cb.num_latents(); ++cell) {
        if (!fused.covered[cell]) continue;
        std::vector<double> p(fused.evidence.row(cell).begin(), fused.evidence.row(cell).end());
        softmax_in_place(p);
        double h = entropy(p);
        if (h < prev[cell] - 1e-12) monotone = false;
        prev[cell] = h;
        if (lambda == ladder.front()) ++covered_cells;
      }
    }
    // lambda -> 0 with a single reference: argmax is the nearest code.
    auto sharp = semantic_fusion_evidence(cb, {{a, std::vector<std::uint8_t>(64, 1)}}, 1e-9);
    for (std::size_t cell = 0; cell < cb.num_latents(); ++cell) {
      auto row = sharp.evidence.row(cell);
      auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      ++argmax_cells;
      argmax_hits += arg == nearest_code(cb, patch_values(cb, a, cell));
    }
  }
  return {monotone && covered_cells > 0 && argmax_hits == argmax_cells,
          fmt("entropy monotone=%.0f over %.0f covered cells x 10 lambdas; argmax = nearest code %.0f/%.0f",
              monotone ? 1.0 : 0.0, double(covered_cells), double(argmax_hits), double(argmax_cells))};
}

struct Broken {
  std::string name;
  std::function<Circuit()> make;
  std::optional<ViolationKind> kind;  // flagged by the report
  std::optional<ErrorCode> code;      // or aborted with an error
  std::set<NodeId> locations;         // acceptable node ids
};

Outcome ac9() {
  std::size_t accepted = 0, built = 0;
  for (std::size_t side : {2u, 3u, 4u, 8u})
    for (std::size_t k : {1u, 2u, 4u})
      for (std::size_t cats : {2u, 3u})
        for (bool tie : {true, false}) {
          PdStructureConfig cfg{side, side + (side == 3 ? 1 : 0), cats, k, 64, tie};
          ++built;
          if (validate_structure(initialize_parameters(build_pd_circuit(cfg), side * 31 + k)).ok()) ++accepted;
        }

  auto leaf = [](CircuitBuilder& b, VarId v) { return b.add_input(v, {0.5, 0.5}); };
  std::vector<Broken> lib;
  lib.push_back({"sum over different scopes",
                 [&] {
                   CircuitBuilder b(2, 2);
                   NodeId x = leaf(b, 0), y = leaf(b, 1);
                   b.add_sum({x, y});  // node 2
                   return b.build();
                 },
                 ViolationKind::NotSmooth, {}, {2}});
  lib.push_back({"nested non-smooth sum",
                 [&] {
                   CircuitBuilder b(3, 2);
                   NodeId x = leaf(b, 0), y = leaf(b, 1), z = leaf(b, 2);
                   NodeId p1 = b.add_product({x, y});           // 3
                   NodeId p2 = b.add_product({x, z});           // 4
                   NodeId bad = b.add_sum({p1, p2});            // 5
                   NodeId y2 = leaf(b, 1);                      // 6
                   NodeId pr = b.add_product({bad, y2});        // 7, also overlapping
                   b.add_sum({b.add_product({pr})});
                   return b.build();
                 },
                 ViolationKind::NotSmooth, {}, {5}});
  lib.push_back({"product with shared variable",
                 [&] {
                   CircuitBuilder b(1, 2);
                   NodeId x = leaf(b, 0), x2 = leaf(b, 0);
                   b.add_product({x, x2});  // 2
                   return b.build();
                 },
                 ViolationKind::NotDecomposable, {}, {2}});
  lib.push_back({"product reusing one child twice",
                 [&] {
                   CircuitBuilder b(2, 2);
                   NodeId x = leaf(b, 0), y = leaf(b, 1);
                   NodeId p = b.add_product({x, y});  // 2
                   NodeId q = b.add_product({p, y});  // 3
                   b.add_sum({q});
                   return b.build();
                 },
                 ViolationKind::NotDecomposable, {}, {3}});
  lib.push_back({"sum weights above one",
                 [&] {
                   CircuitBuilder b(1, 2);
                   NodeId x = leaf(b, 0), x2 = leaf(b, 0);
                   b.add_sum({x, x2}, {0.5, 0.6});  // 2
                   return b.build();
                 },
                 ViolationKind::SumNotNormalized, {}, {2}});
  lib.push_back({"sum weights below one",
                 [&] {
                   CircuitBuilder b(2, 2);
                   NodeId p = b.add_product({leaf(b, 0), leaf(b, 1)});       // 2
                   NodeId q = b.add_product({leaf(b, 0), leaf(b, 1)});       // 5
                   NodeId s = b.add_sum({p, q}, {0.3, 0.3});                 // 6
                   b.add_sum({s}, {1.0});
                   return b.build();
                 },
                 ViolationKind::SumNotNormalized, {}, {6}});
  lib.push_back({"input distribution not normalized",
                 [&] {
                   CircuitBuilder b(1, 2);
                   NodeId x = b.add_input(0, {0.5, 0.6});  // 0
                   b.add_sum({x});
                   return b.build();
                 },
                 ViolationKind::LeafNotNormalized, {}, {0}});
  lib.push_back({"negative sum weight",
                 [&] {
                   CircuitBuilder b(1, 2);
                   NodeId x = leaf(b, 0), x2 = leaf(b, 0);
                   b.add_sum({x, x2}, {1.5, -0.5});  // 2
                   return b.build();
                 },
                 ViolationKind::NegativeParameter, {}, {2}});
  lib.push_back({"two-node cycle",
                 [&] {
                   CircuitBuilder b(1, 2);
                   NodeId x = leaf(b, 0);  // 0
                   b.add_product({x, 2});  // 1 -> 2
                   b.add_sum({1});         // 2 -> 1
                   return b.build();
                 },
                 {}, ErrorCode::CyclicGraph, {1, 2}});
  lib.push_back({"self loop",
                 [&] {
                   CircuitBuilder b(1, 2);
                   NodeId x = leaf(b, 0);     // 0
                   b.add_sum({x, 1});         // 1 -> 1
                   b.add_product({1});        // 2
                   return b.build();
                 },
                 {}, ErrorCode::CyclicGraph, {1}});
  lib.push_back({"dangling child id",
                 [&] {
                   CircuitBuilder b(2, 2);
                   NodeId x = leaf(b, 0), y = leaf(b, 1);
                   b.add_product({x, y, 42});  // 2
                   return b.build();
                 },
                 {}, ErrorCode::DanglingChild, {2}});
  lib.push_back({"dangling child under sum",
                 [&] {
                   CircuitBuilder b(1, 2);
                   NodeId x = leaf(b, 0);
                   NodeId s = b.add_sum({x, 7}, {0.5, 0.5});  // 1
                   b.add_product({s});
                   return b.build();
                 },
                 {}, ErrorCode::DanglingChild, {1}});

  std::size_t rejected = 0;
  std::string misses;
  for (const auto& item : lib) {
    bool ok = false;
    try {
      auto report = validate_structure(item.make());
      if (item.kind)
        for (NodeId n : item.locations) ok = ok || report.has(*item.kind, n);
    } catch (const Error& e) {
      ok = item.code && e.code() == *item.code && e.location() && item.locations.count(static_cast<NodeId>(*e.location()));
    }
    if (ok) ++rejected;
    else misses += " [" + item.name + "]";
  }
  return {accepted == built && rejected == lib.size() && lib.size() == 12,
          fmt("PD circuits accepted %.0f/%.0f, broken circuits rejected and localized %.0f/%.0f", double(accepted),
              double(built), double(rejected), double(lib.size())) +
              misses};
}

}  // namespace

int main() {
  run_battery();
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"AC1 marginals match enumeration", ac1},     {"AC2 input flows sum to one", ac2},
      {"AC3 linear-time inference", ac3},           {"AC4 EM monotone and stable", ac4},
      {"AC5 mixing endpoints and schedule", ac5},   {"AC6 guided inpainting gain", ac6},
      {"AC7 latent evidence vs enumeration", ac7},  {"AC8 semantic fusion temperature", ac8},
      {"AC9 structural validation", ac9},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
