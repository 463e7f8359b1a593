#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcg/pcg.hpp"
#include "pcg/testkit/certification.hpp"

namespace pcg::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kPropertyFailure = 1, kUsageError = 2 };

/// Reads a JSON object as CLI11 config items. Nested objects become sections,
/// arrays become multi-value inputs.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError("config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config", "JSON config must be an object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        flatten(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& e : value) item.inputs.push_back(scalar(e));
      else
        item.inputs.push_back(scalar(value));
      out.push_back(std::move(item));
    }
  }
};

// ---------------------------------------------------------------------------
// helpers

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

inline void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory " + dir + ": " + ec.message());
}

inline std::string numbered(const std::string& stem, std::size_t i, const char* ext) {
  std::ostringstream os;
  os << stem << '_' << std::setw(4) << std::setfill('0') << i << ext;
  return os.str();
}

/// Image dimensions for a dataset: explicit, one side given, or square.
inline std::pair<std::size_t, std::size_t> image_dims(std::size_t vars, std::size_t height, std::size_t width) {
  if (height == 0 && width == 0) {
    auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(vars))));
    height = width = side;
  } else if (height == 0) {
    height = width ? vars / width : 0;
  } else if (width == 0) {
    width = vars / height;
  }
  if (height * width != vars || vars == 0)
    throw Error(ErrorCode::DimMismatch, std::to_string(vars) + " variables do not form a " + std::to_string(height) +
                                            "x" + std::to_string(width) + " image");
  return {height, width};
}

inline void write_image(std::span<const Category> values, std::size_t h, std::size_t w, std::size_t cats,
                        const std::string& path) {
  write_pnm(categories_to_image(values, h, w, cats), path);
}

/// Side-by-side panels of per-pixel expected gray levels; empty panels are mid-gray.
inline Image expectation_panels(const std::vector<const Distributions*>& panels, std::size_t h, std::size_t w,
                                std::size_t cats) {
  const std::size_t stride = panels.size() * (w + 1) - 1;
  Image img{h, stride, 1, std::vector<std::uint8_t>(h * stride, 128)};
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Distributions* d = panels[p];
    if (!d || d->probs.empty()) continue;
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        double e = 0.0;
        for (std::size_t k = 0; k < cats; ++k) e += static_cast<double>(k) * (*d)(r * w + c, k);
        double gray = cats > 1 ? 255.0 * e / static_cast<double>(cats - 1) : 0.0;
        img.pixels[r * stride + p * (w + 1) + c] = static_cast<std::uint8_t>(std::lround(std::clamp(gray, 0.0, 255.0)));
      }
  }
  return img;
}

inline json timings_json(const StepTimings& t) {
  return {{"denoiser_seconds", t.denoiser_seconds},
          {"circuit_seconds", t.circuit_seconds},
          {"mix_seconds", t.mix_seconds},
          {"total_seconds", t.total_seconds}};
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOptions {
  ToyDatasetSpec spec;
  std::string out, csv;
};

inline int gen_data(const GenDataOptions& o, std::ostream& out) {
  Dataset d = generate_toy_dataset(o.spec);
  save_dataset(d, o.out);
  if (!o.csv.empty()) {
    std::ofstream csv(o.csv, std::ios::trunc);
    if (!csv) throw Error(ErrorCode::IoError, "cannot open " + o.csv + " for writing");
    write_csv_dataset(csv, d);
  }
  out << json{{"command", "gen-data"},
              {"generator", o.spec.generator},
              {"samples", d.num_samples},
              {"variables", d.num_variables},
              {"categories", d.num_categories},
              {"path", o.out}}
             .dump(2)
      << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train-pc

struct TrainPcOptions {
  std::string data, out, report;
  std::size_t height = 0, width = 0;
  std::size_t sums_per_region = 4;
  std::size_t max_split_depth = 64;
  bool untied = false;
  EmConfig em;
  std::uint64_t seed = 0;
};

inline int train_pc(TrainPcOptions o, std::ostream& out) {
  Dataset data = load_dataset(o.data);
  auto [h, w] = image_dims(data.num_variables, o.height, o.width);
  PdStructureConfig pd{h, w, data.num_categories, o.sums_per_region, o.max_split_depth, !o.untied};
  Circuit c = initialize_parameters(build_pd_circuit(pd), Rng::derive(o.seed, "init"));
  o.em.seed = Rng::derive(o.seed, "train");
  auto [trained, report] = fit(std::move(c), data, o.em);
  save_circuit(trained, o.out);
  json j{{"command", "train-pc"},
         {"circuit", o.out},
         {"num_nodes", trained.num_nodes()},
         {"num_edges", trained.num_edges()},
         {"height", h},
         {"width", w},
         {"initial_avg_log_likelihood", report.initial_log_likelihood},
         {"final_avg_log_likelihood",
          report.avg_log_likelihood.empty() ? report.initial_log_likelihood : report.avg_log_likelihood.back()},
         {"avg_log_likelihood", report.avg_log_likelihood},
         {"checksum", report.checksum}};
  if (!o.report.empty()) write_json_file(o.report, j);
  out << j.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train-codebook

struct TrainCodebookOptions {
  std::string data, out, report;
  std::size_t height = 0, width = 0;
  CodebookConfig codebook;
  std::uint64_t seed = 0;
};

inline int train_codebook_cmd(TrainCodebookOptions o, std::ostream& out) {
  Dataset data = load_dataset(o.data);
  auto [h, w] = image_dims(data.num_variables, o.height, o.width);
  o.codebook.seed = o.seed;
  PatchCodebook cb = train_codebook(data, h, w, o.codebook);
  save_codebook(cb, o.out);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.num_samples; ++i) {
    auto rec = decode(cb, encode(cb, data.row(i)));
    for (std::size_t p = 0; p < rec.size(); ++p) hits += rec[p] == data.row(i)[p];
  }
  json j{{"command", "train-codebook"},
         {"codebook", o.out},
         {"num_codes", cb.num_codes},
         {"grid", {cb.grid_height, cb.grid_width}},
         {"patch", {cb.patch_height, cb.patch_width}},
         {"reconstruction_accuracy", static_cast<double>(hits) / static_cast<double>(data.values.size())}};
  if (!o.report.empty()) write_json_file(o.report, j);
  out << j.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// inpaint

struct InpaintOptions {
  std::string circuit, score_circuit, data, images, out;
  std::string mode = "pixel";
  std::string mask = "left";
  std::string codebook, latent_circuit;
  double temperature = 0.1;
  std::size_t evidence_samples = 4, decode_samples = 8;
  std::size_t height = 0, width = 0;
  std::size_t runs = 100;
  std::size_t steps = 250;
  double beta_start = 1e-4, beta_end = 0.02;
  MixSchedule mix = MixSchedule::celeba();
  double smoothing = 1.0;
  std::size_t trace_every = 0;
  std::size_t bootstrap = 2000;
  std::uint64_t seed = 0;
};

inline void write_trace(const InpaintResult& r, std::size_t h, std::size_t w, std::size_t cats,
                        std::size_t steps, std::size_t every, const std::string& dir) {
  ensure_directory(dir);
  json index{{"num_steps", steps}, {"every", every}, {"panels", {"denoiser", "circuit", "mixed"}},
             {"snapshots", json::array()}};
  for (const auto& snap : r.trace) {
    std::string file = numbered("step", snap.t, ".pgm");
    write_pnm(expectation_panels({&snap.dm, &snap.tpm, &snap.mixed}, h, w, cats), dir + "/" + file);
    index["snapshots"].push_back({{"t", snap.t}, {"file", file}, {"guided", !snap.tpm.probs.empty()}});
  }
  write_json_file(dir + "/index.json", index);
}

inline int inpaint(InpaintOptions o, std::ostream& out) {
  if (o.mode != "pixel" && o.mode != "latent") throw Error(ErrorCode::InvalidConfig, "mode must be pixel or latent");
  Dataset train = load_dataset(o.data);
  Dataset images = o.images.empty() ? train : load_dataset(o.images);
  if (images.num_samples == 0) throw Error(ErrorCode::DatasetEmpty, "no images to inpaint");
  if (images.num_variables != train.num_variables || images.num_categories != train.num_categories)
    throw Error(ErrorCode::DimMismatch, "image set does not match training data");
  auto [h, w] = image_dims(train.num_variables, o.height, o.width);
  const std::size_t cats = train.num_categories;
  Circuit pixel_circuit = load_circuit(o.circuit);
  Circuit score = o.score_circuit.empty() ? pixel_circuit : load_circuit(o.score_circuit);
  if (score.num_variables() != train.num_variables || score.num_categories() != cats)
    throw Error(ErrorCode::DimMismatch, "scoring circuit does not match the images");

  auto den = FactorizedDenoiser::train(train, o.smoothing);
  auto schedule = NoiseSchedule::linear(o.steps, o.beta_start, o.beta_end, cats);
  o.mix.num_steps = o.steps;
  o.mix.validate();
  auto mask = make_mask(o.mask, h, w);

  std::optional<Circuit> latent_circuit;
  std::optional<PatchCodebook> codebook;
  std::unique_ptr<Guide> guide;
  if (o.mode == "pixel") {
    guide = std::make_unique<PixelGuide>(pixel_circuit);
  } else {
    if (o.codebook.empty() || o.latent_circuit.empty())
      throw Error(ErrorCode::InvalidConfig, "latent mode needs --codebook and --latent-circuit");
    codebook = load_codebook(o.codebook);
    latent_circuit = load_circuit(o.latent_circuit);
    if (codebook->num_pixels() != train.num_variables || codebook->num_categories != cats)
      throw Error(ErrorCode::DimMismatch, "codebook does not match the images");
    guide = std::make_unique<LatentGuide>(*latent_circuit, *codebook, o.temperature, o.evidence_samples,
                                          o.decode_samples);
  }

  ensure_directory(o.out);
  const std::uint64_t sample_root = Rng::derive(o.seed, "sample");
  std::vector<double> guided_ll, unguided_ll;
  double guided_match = 0.0, unguided_match = 0.0;
  bool all_match = true;
  std::size_t guided_steps = 0;
  StepTimings total;
  json samples = json::array();
  for (std::size_t i = 0; i < o.runs; ++i) {
    const std::size_t src = i % images.num_samples;
    auto task = InpaintTask::from_image(images.row(src), mask);
    const std::uint64_t s = Rng::derive(sample_root, i);
    auto g = run_inpainting(den, guide.get(), task, schedule, o.mix, s, i == 0 ? o.trace_every : 0);
    auto u = run_inpainting(den, nullptr, task, schedule, MixSchedule::off(o.steps), s);
    double gll = conditional_log_likelihood(score, g.image, task);
    double ull = conditional_log_likelihood(score, u.image, task);
    double gm = known_pixel_match_rate(g.image, task), um = known_pixel_match_rate(u.image, task);
    guided_ll.push_back(gll);
    unguided_ll.push_back(ull);
    guided_match += gm;
    unguided_match += um;
    all_match = all_match && gm == 1.0;
    guided_steps = g.guided_steps;
    total.denoiser_seconds += g.timings.denoiser_seconds;
    total.circuit_seconds += g.timings.circuit_seconds;
    total.mix_seconds += g.timings.mix_seconds;
    total.total_seconds += g.timings.total_seconds;
    write_image(g.image, h, w, cats, o.out + "/" + numbered("guided", i, ".pgm"));
    write_image(u.image, h, w, cats, o.out + "/" + numbered("unguided", i, ".pgm"));
    samples.push_back({{"run", i},
                       {"image", src},
                       {"guided_conditional_ll", gll},
                       {"unguided_conditional_ll", ull},
                       {"guided_match_rate", gm},
                       {"unguided_match_rate", um}});
    if (i == 0 && o.trace_every) write_trace(g, h, w, cats, o.steps, o.trace_every, o.out + "/trace");
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, o.runs));
  json metrics{{"command", "inpaint"},
               {"mode", o.mode},
               {"mask", o.mask},
               {"runs", o.runs},
               {"num_steps", o.steps},
               {"t_cut", o.mix.t_cut},
               {"guided_steps", guided_steps},
               {"guided", {{"mean_conditional_ll", mean_of(guided_ll)}, {"mean_match_rate", guided_match / n},
                           {"all_known_pixels_match", all_match}}},
               {"unguided", {{"mean_conditional_ll", mean_of(unguided_ll)}, {"mean_match_rate", unguided_match / n}}},
               {"samples", samples}};
  if (o.runs > 0) {
    auto summary = paired_bootstrap(guided_ll, unguided_ll, o.bootstrap, Rng::derive(o.seed, "bootstrap"));
    metrics["paired_difference"] = {{"mean", summary.mean_diff}, {"ci95", {summary.ci_low, summary.ci_high}}};
  }
  write_json_file(o.out + "/metrics.json", metrics);
  write_json_file(o.out + "/timings.json", timings_json(total));
  metrics.erase("samples");
  out << metrics.dump(2) << '\n';
  return all_match ? kOk : kPropertyFailure;
}

// ---------------------------------------------------------------------------
// fuse

struct FuseOptions {
  std::string codebook, latent_circuit, data, out;
  std::vector<std::string> refs;  // "index:mask"
  double lambda = 0.1;
  std::size_t samples = 8;
  std::uint64_t seed = 0;
};

inline int fuse(const FuseOptions& o, std::ostream& out) {
  PatchCodebook cb = load_codebook(o.codebook);
  Circuit lc = load_circuit(o.latent_circuit);
  Dataset data = load_dataset(o.data);
  if (data.num_variables != cb.num_pixels() || data.num_categories != cb.num_categories)
    throw Error(ErrorCode::DimMismatch, "reference images do not match codebook");
  if (o.refs.empty()) throw Error(ErrorCode::InvalidConfig, "fuse needs at least one --ref index:mask");
  const std::size_t h = cb.image_height(), w = cb.image_width();
  std::vector<FusionReference> refs;
  for (const auto& spec : o.refs) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "reference '" + spec + "' is not index:mask");
    std::size_t idx = std::stoul(spec.substr(0, colon));
    if (idx >= data.num_samples) throw Error(ErrorCode::InvalidConfig, "reference index out of range: " + spec);
    refs.push_back({{data.row(idx).begin(), data.row(idx).end()}, make_mask(spec.substr(colon + 1), h, w)});
  }
  FusionEvidence fused = semantic_fusion_evidence(cb, refs, o.lambda);
  if (lc.num_variables() != cb.num_latents() || lc.num_categories() != cb.num_codes)
    throw Error(ErrorCode::DimMismatch, "latent circuit does not match codebook grid");

  ensure_directory(o.out);
  Dataset z = conditional_sample(lc, fused.evidence, Rng::derive(o.seed, "sample"), o.samples);
  Distributions mean(cb.num_pixels(), cb.num_categories);
  for (std::size_t s = 0; s < z.num_samples; ++s) {
    auto image = decode(cb, z.row(s));
    write_image(image, h, w, cb.num_categories, o.out + "/" + numbered("fused", s, ".pgm"));
    for (std::size_t p = 0; p < image.size(); ++p) mean(p, image[p]) += 1.0 / static_cast<double>(z.num_samples);
  }
  write_pnm(expectation_panels({&mean}, h, w, cb.num_categories), o.out + "/mean.pgm");

  json cells = json::array();
  for (std::size_t cell = 0; cell < cb.num_latents(); ++cell) {
    std::vector<double> p(fused.evidence.row(cell).begin(), fused.evidence.row(cell).end());
    softmax_in_place(p);
    auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    cells.push_back({{"cell", cell}, {"covered", fused.covered[cell] != 0}, {"argmax", arg}, {"entropy", entropy(p)}});
  }
  json j{{"command", "fuse"},
         {"lambda_sf", o.lambda},
         {"references", o.refs},
         {"empty_coverage", fused.empty_coverage},
         {"samples", z.num_samples},
         {"cells", cells}};
  write_json_file(o.out + "/fusion.json", j);
  j.erase("cells");
  out << j.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  oracle::CertificationConfig cert;
  long long corrupt_case = -1;
};

inline int verify(VerifyOptions o, std::ostream& out) {
  if (o.corrupt_case >= 0) o.cert.corrupt_case = static_cast<std::size_t>(o.corrupt_case);
  auto report = oracle::run_certification(o.cert);
  auto count = [](const oracle::PropertyCount& p) { return json{{"passed", p.passed}, {"total", p.total}}; };
  json failures = json::array();
  for (std::size_t i = 0; i < report.failures.size() && i < 20; ++i) {
    const auto& f = report.failures[i];
    json item{{"case", f.case_index}, {"property", f.property}, {"error", f.error}};
    if (f.node) item["node"] = *f.node;
    failures.push_back(item);
  }
  json j{{"command", "verify"},
         {"seed", o.cert.seed},
         {"cases", o.cert.num_cases},
         {"properties",
          {{"marginals", count(report.marginals)},
           {"log_z", count(report.log_z)},
           {"flow_conservation", count(report.flow_conservation)}}},
         {"worst_errors",
          {{"marginals", report.worst_marginal_error},
           {"log_z", report.worst_log_z_error},
           {"flow_conservation", report.worst_flow_error}}},
         {"failures", failures},
         {"passed", report.ok()}};
  if (report.corrupted_node) j["corrupted_node"] = *report.corrupted_node;
  out << j.dump(2) << '\n';
  return report.ok() ? kOk : kPropertyFailure;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::vector<std::size_t> edges{10000, 20000, 40000, 80000};
  std::size_t repeats = 20;
  std::string csv = "bench.csv";
  std::string circuit, data;
  std::size_t sums_per_region = 4;
  std::size_t steps = 250;
  std::vector<std::size_t> t_cuts{250, 235, 200, 150, 100, 0};
  std::uint64_t seed = 0;
};

inline int bench(const BenchOptions& o, std::ostream& out) {
  auto scaling = measure_scaling(o.edges, o.repeats, Rng::derive(o.seed, "scaling"));

  Dataset data;
  if (o.data.empty()) {
    ToyDatasetSpec spec;
    spec.count = 500;
    spec.seed = Rng::derive(o.seed, "data");
    data = generate_toy_dataset(spec);
  } else {
    data = load_dataset(o.data);
  }
  auto [h, w] = image_dims(data.num_variables, 0, 0);
  Circuit c = o.circuit.empty() ? initialize_parameters(build_pd_circuit({h, w, data.num_categories, o.sums_per_region}),
                                                        Rng::derive(o.seed, "init"))
                                : load_circuit(o.circuit);
  auto den = FactorizedDenoiser::train(data);
  auto schedule = NoiseSchedule::linear(o.steps, 1e-4, 0.02, data.num_categories);
  auto task = InpaintTask::from_image(data.row(0), make_mask("left", h, w));
  PixelGuide guide(c);

  std::ofstream csv(o.csv, std::ios::trunc);
  if (!csv) throw Error(ErrorCode::IoError, "cannot open " + o.csv + " for writing");
  csv << "section,edges,t_cut,guided_fraction,pass_seconds,denoiser_seconds,circuit_seconds,mix_seconds,total_seconds\n";
  for (const auto& p : scaling.points) csv << "scaling," << p.edges << ",,," << p.seconds << ",,,,\n";
  json loop = json::array();
  for (std::size_t t_cut : o.t_cuts) {
    MixSchedule mix{0.8, 1.0, 2.0, std::min(t_cut, o.steps), o.steps};
    auto r = run_inpainting(den, &guide, task, schedule, mix, Rng::derive(o.seed, "loop"));
    const double fraction = static_cast<double>(r.guided_steps) / static_cast<double>(o.steps);
    const auto& t = r.timings;
    csv << "loop," << c.num_edges() << ',' << mix.t_cut << ',' << fraction << ",," << t.denoiser_seconds << ','
        << t.circuit_seconds << ',' << t.mix_seconds << ',' << t.total_seconds << '\n';
    loop.push_back({{"t_cut", mix.t_cut},
                    {"guided_fraction", fraction},
                    {"circuit_overhead_fraction", t.total_seconds > 0 ? t.circuit_seconds / t.total_seconds : 0.0},
                    {"timings", timings_json(t)}});
  }
  json points = json::array();
  for (const auto& p : scaling.points) points.push_back({{"edges", p.edges}, {"seconds", p.seconds}});
  out << json{{"command", "bench"},
              {"csv", o.csv},
              {"scaling", {{"points", points},
                           {"r_squared", scaling.fit.r_squared},
                           {"seconds_per_edge", scaling.fit.slope},
                           {"worst_doubling_ratio", scaling.worst_doubling_ratio}}},
              {"loop", loop}}
             .dump(2)
      << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// entry point

inline void report_error(std::ostream& err, const std::string& code, const std::string& message) {
  err << json{{"error", code}, {"message", message}}.dump() << '\n';
}

inline std::string config_file_arg(const std::vector<std::string>& args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

inline bool flag_given(const std::vector<std::string>& args, const std::string& flag) {
  for (std::size_t i = 1; i < args.size(); ++i)
    if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
  return false;
}

/// CLI11 only reads config files for the top-level app, so a subcommand's
/// `--config` file is expanded into flags placed ahead of the command line.
/// Keys are long flag names; command-line flags win; unknown keys are errors.
inline std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args) {
  if (args.empty()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  std::string path = config_file_arg(args);
  if (sub == nullptr || path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<CLI::ConfigItem> items;
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
    items = JsonConfig().from_config(in);
  else
    items = CLI::ConfigTOML().from_config(in);

  std::vector<std::string> injected{args[0]};
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string flag = "--" + item.name;
    const CLI::Option* opt = item.parents.empty() ? sub->get_option_no_throw(flag) : nullptr;
    if (opt == nullptr || item.name == "config") throw CLI::ConfigError("unknown config key '" + item.fullname() + "'");
    if (flag_given(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "1")) injected.push_back(flag);
      continue;
    }
    for (const auto& v : item.inputs) injected.push_back(flag + "=" + v);
  }
  injected.insert(injected.end(), args.begin() + 1, args.end());
  return injected;
}

/// Runs one CLI invocation; `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Probabilistic circuits with guided denoising", "pcg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");
  std::function<int()> action;

  std::string config_path;
  auto command = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "TOML or JSON file with option values; flags override it");
    return sub;
  };

  GenDataOptions gd;
  {
    auto* s = command("gen-data", "Generate a toy image dataset");
    s->add_option("--generator", gd.spec.generator, "bars | checker | constant | mixture")->capture_default_str();
    s->add_option("--height", gd.spec.height)->capture_default_str();
    s->add_option("--width", gd.spec.width)->capture_default_str();
    s->add_option("--categories", gd.spec.num_categories)->capture_default_str();
    s->add_option("--count", gd.spec.count)->capture_default_str();
    s->add_option("--bar-width", gd.spec.bar_width)->capture_default_str();
    s->add_option("--bar-probability", gd.spec.bar_probability)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    s->add_option("--cell-size", gd.spec.cell_size)->capture_default_str();
    s->add_option("--constant-value", gd.spec.constant_value)->capture_default_str();
    s->add_option("--seed", gd.spec.seed)->capture_default_str();
    s->add_option("--out", gd.out, "PCDS output")->required();
    s->add_option("--csv", gd.csv, "Optional CSV copy");
    s->callback([&] { action = [&] { return gen_data(gd, out); }; });
  }

  TrainPcOptions tp;
  {
    auto* s = command("train-pc", "Build an image-structured circuit and fit it with EM");
    s->add_option("--data", tp.data, "PCDS training set")->required();
    s->add_option("--out", tp.out, "PCIR output")->required();
    s->add_option("--report", tp.report, "Also write the JSON report here");
    s->add_option("--height", tp.height, "Image height (0: square)");
    s->add_option("--width", tp.width, "Image width (0: square)");
    s->add_option("--sums-per-region", tp.sums_per_region)->capture_default_str();
    s->add_option("--max-split-depth", tp.max_split_depth)->capture_default_str();
    s->add_flag("--untied", tp.untied, "Do not tie input parameters");
    s->add_option("--iterations", tp.em.num_iterations)->capture_default_str();
    s->add_option("--batch-size", tp.em.batch_size)->capture_default_str();
    s->add_option("--step-size", tp.em.step_size)->capture_default_str();
    s->add_option("--pseudocount", tp.em.pseudocount)->capture_default_str();
    s->add_option("--seed", tp.seed)->capture_default_str();
    s->callback([&] { action = [&] { return train_pc(tp, out); }; });
  }

  TrainCodebookOptions tc;
  {
    auto* s = command("train-codebook", "Fit a k-means patch codebook");
    s->add_option("--data", tc.data, "PCDS training set")->required();
    s->add_option("--out", tc.out, "PCCB output")->required();
    s->add_option("--report", tc.report, "Also write the JSON report here");
    s->add_option("--height", tc.height);
    s->add_option("--width", tc.width);
    s->add_option("--patch-height", tc.codebook.patch_height)->capture_default_str();
    s->add_option("--patch-width", tc.codebook.patch_width)->capture_default_str();
    s->add_option("--codes", tc.codebook.num_codes)->capture_default_str();
    s->add_option("--iterations", tc.codebook.max_iterations)->capture_default_str();
    s->add_option("--seed", tc.seed)->capture_default_str();
    s->callback([&] { action = [&] { return train_codebook_cmd(tc, out); }; });
  }

  InpaintOptions ip;
  {
    auto* s = command("inpaint", "Guided vs unguided inpainting over seeded runs");
    s->add_option("--circuit", ip.circuit, "Pixel circuit (guide in pixel mode, default scorer)")->required();
    s->add_option("--score-circuit", ip.score_circuit, "Circuit for conditional log-likelihood scoring");
    s->add_option("--data", ip.data, "PCDS set the denoiser is fitted on")->required();
    s->add_option("--images", ip.images, "PCDS ground-truth images (default: --data)");
    s->add_option("--out", ip.out, "Output directory")->required();
    s->add_option("--mode", ip.mode, "pixel | latent")->capture_default_str();
    s->add_option("--mask", ip.mask, "left | top | expand | wide | strip | none | all")->capture_default_str();
    s->add_option("--codebook", ip.codebook);
    s->add_option("--latent-circuit", ip.latent_circuit);
    s->add_option("--temperature", ip.temperature)->capture_default_str();
    s->add_option("--evidence-samples", ip.evidence_samples)->capture_default_str();
    s->add_option("--decode-samples", ip.decode_samples)->capture_default_str();
    s->add_option("--height", ip.height);
    s->add_option("--width", ip.width);
    s->add_option("--runs", ip.runs)->capture_default_str();
    s->add_option("--steps", ip.steps)->capture_default_str();
    s->add_option("--beta-start", ip.beta_start)->capture_default_str();
    s->add_option("--beta-end", ip.beta_end)->capture_default_str();
    s->add_option("--mix-a", ip.mix.a)->capture_default_str();
    s->add_option("--mix-b", ip.mix.b)->capture_default_str();
    s->add_option("--mix-lambda", ip.mix.lambda)->capture_default_str();
    s->add_option("--t-cut", ip.mix.t_cut)->capture_default_str();
    s->add_option("--smoothing", ip.smoothing, "Denoiser prior pseudocount")->capture_default_str();
    s->add_option("--trace-every", ip.trace_every, "Snapshot interval for run 0 (0: off)")->capture_default_str();
    s->add_option("--bootstrap", ip.bootstrap)->capture_default_str();
    s->add_option("--seed", ip.seed)->capture_default_str();
    s->callback([&] { action = [&] { return inpaint(ip, out); }; });
  }

  FuseOptions fu;
  {
    auto* s = command("fuse", "Semantic fusion of reference image regions in latent space");
    s->add_option("--codebook", fu.codebook)->required();
    s->add_option("--latent-circuit", fu.latent_circuit)->required();
    s->add_option("--data", fu.data, "PCDS holding the reference images")->required();
    s->add_option("--ref", fu.refs, "index:mask, the mask's known pixels are kept")->required();
    s->add_option("--lambda", fu.lambda)->capture_default_str();
    s->add_option("--samples", fu.samples)->capture_default_str();
    s->add_option("--out", fu.out, "Output directory")->required();
    s->add_option("--seed", fu.seed)->capture_default_str();
    s->callback([&] { action = [&] { return fuse(fu, out); }; });
  }

  VerifyOptions ve;
  {
    auto* s = command("verify", "Randomized oracle-equivalence battery");
    s->add_option("--cases", ve.cert.num_cases)->capture_default_str();
    s->add_option("--min-vars", ve.cert.min_variables)->capture_default_str();
    s->add_option("--max-vars", ve.cert.max_variables)->capture_default_str();
    s->add_option("--inject-corruption", ve.corrupt_case, "Perturb one sum weight in this case (test hook)");
    s->add_option("--seed", ve.cert.seed)->capture_default_str();
    s->callback([&] { action = [&] { return verify(ve, out); }; });
  }

  BenchOptions be;
  {
    auto* s = command("bench", "Inference scaling and guided-loop timings");
    s->add_option("--edges", be.edges)->capture_default_str();
    s->add_option("--repeats", be.repeats)->capture_default_str();
    s->add_option("--csv", be.csv)->capture_default_str();
    s->add_option("--circuit", be.circuit, "Pixel circuit for the loop (default: untrained PD circuit)");
    s->add_option("--data", be.data, "PCDS for the denoiser (default: 8x8 bars)");
    s->add_option("--sums-per-region", be.sums_per_region)->capture_default_str();
    s->add_option("--steps", be.steps)->capture_default_str();
    s->add_option("--t-cuts", be.t_cuts)->capture_default_str();
    s->add_option("--seed", be.seed)->capture_default_str();
    s->callback([&] { action = [&] { return bench(be, out); }; });
  }

  try {
    auto expanded = expand_config(app, args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "UsageError", e.what());
    return kUsageError;
  }

  try {
    return action();
  } catch (const Error& e) {
    report_error(err, to_string(e.code()), e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    report_error(err, "InternalError", e.what());
    return kUsageError;
  }
}

}  // namespace pcg::cli
