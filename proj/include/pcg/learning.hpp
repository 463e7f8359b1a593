#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <tuple>
#include <utility>
#include <vector>

#include "pcg/circuit.hpp"
#include "pcg/error.hpp"
#include "pcg/inference.hpp"
#include "pcg/random.hpp"

namespace pcg {

// ---------------------------------------------------------------------------
// Image-structured circuit (recursive halving of rectangular regions)

struct PdStructureConfig {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_categories = 2;
  std::size_t sums_per_region = 2;
  std::size_t max_split_depth = 64;
  bool tie_leaf_params = true;
};

namespace detail {

class PdBuilder {
 public:
  explicit PdBuilder(const PdStructureConfig& cfg) : cfg_(cfg), b_(cfg.height * cfg.width, cfg.num_categories) {}

  Circuit build() {
    Box whole{0, static_cast<std::uint32_t>(cfg_.height), 0, static_cast<std::uint32_t>(cfg_.width)};
    auto nodes = region(whole, 0, true);
    b_.set_root(nodes.front());
    return certify(b_.build());
  }

 private:
  using Key = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>;

  std::uint32_t leaf_tie(std::size_t j) const { return cfg_.tie_leaf_params ? static_cast<std::uint32_t>(j) : kNone; }
  std::uint32_t patch_tie(std::size_t j) const {
    return cfg_.tie_leaf_params ? static_cast<std::uint32_t>(cfg_.sums_per_region + j) : kNone;
  }

  std::vector<double> uniform(std::size_t n) const { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

  VarId var(std::uint32_t r, std::uint32_t c) const { return static_cast<VarId>(r * cfg_.width + c); }

  std::vector<NodeId> pixel(std::uint32_t r, std::uint32_t c) {
    Key key{r, r + 1, c, c + 1};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<NodeId> out;
    for (std::size_t j = 0; j < cfg_.sums_per_region; ++j)
      out.push_back(b_.add_input(var(r, c), uniform(cfg_.num_categories), leaf_tie(j)));
    memo_[key] = out;
    return out;
  }

  std::vector<NodeId> region(const Box& box, std::size_t depth, bool is_root) {
    Key key{box.row_begin, box.row_end, box.col_begin, box.col_end};
    if (!is_root) {
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    if (box.area() == 1) return pixel(box.row_begin, box.col_begin);

    std::vector<NodeId> products;
    if (depth >= cfg_.max_split_depth) {
      // Fully factorized mixture over the pixels of the region.
      for (std::size_t j = 0; j < cfg_.sums_per_region; ++j) {
        std::vector<NodeId> kids;
        for (auto r = box.row_begin; r < box.row_end; ++r)
          for (auto c = box.col_begin; c < box.col_end; ++c) kids.push_back(pixel(r, c)[j]);
        products.push_back(b_.add_product(std::move(kids)));
      }
    } else {
      auto cross = [&](const Box& first, const Box& second) {
        auto a = region(first, depth + 1, false);
        auto b = region(second, depth + 1, false);
        for (NodeId x : a)
          for (NodeId y : b) products.push_back(b_.add_product({x, y}));
      };
      std::uint32_t h = box.row_end - box.row_begin, w = box.col_end - box.col_begin;
      if (h >= 2) {
        std::uint32_t mid = box.row_begin + h / 2;
        cross({box.row_begin, mid, box.col_begin, box.col_end}, {mid, box.row_end, box.col_begin, box.col_end});
      }
      if (w >= 2) {
        std::uint32_t mid = box.col_begin + w / 2;
        cross({box.row_begin, box.row_end, box.col_begin, mid}, {box.row_begin, box.row_end, mid, box.col_end});
      }
    }

    std::vector<NodeId> out;
    const bool tied_patch = h_is_2x2(box);
    const std::size_t count = is_root ? 1 : cfg_.sums_per_region;
    for (std::size_t j = 0; j < count; ++j)
      out.push_back(b_.add_sum(products, uniform(products.size()), tied_patch ? patch_tie(j) : kNone));
    if (!is_root) memo_[key] = out;
    return out;
  }

  static bool h_is_2x2(const Box& box) { return box.row_end - box.row_begin == 2 && box.col_end - box.col_begin == 2; }

  PdStructureConfig cfg_;
  CircuitBuilder b_;
  std::map<Key, std::vector<NodeId>> memo_;
};

}  // namespace detail

/// Every node's scope is an axis-aligned patch. Each region holds
/// `sums_per_region` sum nodes mixing over products of both its horizontal and
/// vertical halvings; the root region holds a single sum. With
/// `tie_leaf_params`, the j-th input of every pixel shares one distribution
/// and the j-th sum of every 2x2 region shares one weight vector.
/// Parameters start uniform; see `initialize_parameters`.
inline Circuit build_pd_circuit(const PdStructureConfig& cfg) {
  if (cfg.height < 2 || cfg.width < 2)
    throw Error(ErrorCode::GridTooSmall, "grid must be at least 2x2");
  if (cfg.sums_per_region < 1 || cfg.num_categories < 1)
    throw Error(ErrorCode::InvalidConfig, "sums_per_region and num_categories must be positive");
  return detail::PdBuilder(cfg).build();
}

/// Sum weights ~ Dirichlet(1), input distributions ~ normalized U(0.1, 1).
/// Nodes sharing a tie group receive identical values.
inline Circuit initialize_parameters(const Circuit& c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> edges = c.all_edge_params();
  std::vector<double> leaves = c.all_leaf_params();
  std::map<std::pair<int, std::uint32_t>, NodeId> first_of_group;
  const std::size_t cats = c.num_categories();
  for (NodeId n = 0; n < c.num_nodes(); ++n) {
    if (c.is_product(n)) continue;
    std::uint32_t tie = c.tie_group(n);
    int kind = c.is_sum(n) ? 1 : 0;
    if (tie != kNone) {
      auto [it, fresh] = first_of_group.emplace(std::make_pair(kind, tie), n);
      if (!fresh) {
        NodeId src = it->second;
        if (c.is_sum(n)) {
          if (c.children(src).size() != c.children(n).size())
            throw Error(ErrorCode::InvalidStructure, "tied sum nodes differ in child count", n);
          std::copy_n(edges.begin() + static_cast<std::ptrdiff_t>(c.edge_begin(src)), c.children(n).size(),
                      edges.begin() + static_cast<std::ptrdiff_t>(c.edge_begin(n)));
        } else {
          std::copy_n(leaves.begin() + static_cast<std::ptrdiff_t>(std::size_t{c.leaf_slot(src)} * cats), cats,
                      leaves.begin() + static_cast<std::ptrdiff_t>(std::size_t{c.leaf_slot(n)} * cats));
        }
        continue;
      }
    }
    if (c.is_sum(n)) {
      std::size_t k = c.children(n).size();
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) total += (edges[c.edge_begin(n) + i] = rng.exponential());
      for (std::size_t i = 0; i < k; ++i) edges[c.edge_begin(n) + i] /= total;
    } else {
      double* dst = leaves.data() + std::size_t{c.leaf_slot(n)} * cats;
      double total = 0.0;
      for (std::size_t x = 0; x < cats; ++x) total += (dst[x] = rng.uniform(0.1, 1.0));
      for (std::size_t x = 0; x < cats; ++x) dst[x] /= total;
    }
  }
  return c.with_parameters(std::move(edges), std::move(leaves));
}

// ---------------------------------------------------------------------------
// EM parameter learning

struct EmConfig {
  double step_size = 1.0;
  std::size_t batch_size = 20000;
  double pseudocount = 0.1;
  std::size_t num_iterations = 200;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(step_size > 0.0 && step_size <= 1.0)) throw Error(ErrorCode::InvalidConfig, "step_size must be in (0, 1]");
    if (!(pseudocount >= 0.0)) throw Error(ErrorCode::InvalidConfig, "pseudocount must be nonnegative");
    if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
  }
};

/// Expected edge flows summed over a batch. For a sum edge (m, c) the
/// per-sample flow equals g_{m,c} * theta_{m,c}, with g the gradient of
/// log p(x) with respect to theta_{m,c}.
struct FlowStatistics {
  std::vector<double> edge_flow;    // one per edge; zero under products
  std::vector<double> leaf_counts;  // leaf slot x category
  double log_likelihood_sum = 0.0;
  std::size_t num_samples = 0;
};

inline FlowStatistics accumulate_flows(const Circuit& c, const Dataset& data, std::span<const std::size_t> rows) {
  c.require_prepared();
  if (data.num_variables != c.num_variables())
    throw Error(ErrorCode::DimMismatch, "dataset column count does not match circuit");
  FlowStatistics stats;
  stats.edge_flow.assign(c.num_edges(), 0.0);
  stats.leaf_counts.assign(c.all_leaf_params().size(), 0.0);
  const std::size_t cats = c.num_categories();
  std::vector<double> log_fw;
  for (std::size_t r : rows) {
    auto sample = data.row(r);
    forward_sample(c, sample, log_fw);
    const double root = log_fw[c.root()];
    stats.log_likelihood_sum += root;
    ++stats.num_samples;
    if (root == kNegInf) continue;  // zero-probability sample contributes no flow
    auto flow = backward_flows(c, log_fw, &stats.edge_flow);
    for (NodeId n : c.layer_nodes(0)) {
      if (c.is_input(n) && flow[n] != 0.0)
        stats.leaf_counts[std::size_t{c.leaf_slot(n)} * cats + sample[c.variable(n)]] += flow[n];
    }
  }
  return stats;
}

inline FlowStatistics accumulate_flows(const Circuit& c, const Dataset& data) {
  std::vector<std::size_t> rows(data.num_samples);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return accumulate_flows(c, data, rows);
}

/// theta <- (1 - a) theta + a (flow + pc / k) / sum(flow + pc / k), with
/// statistics pooled across tie groups. Input distributions are updated the
/// same way, treating each category as an indicator child.
inline Circuit apply_em_update(const Circuit& c, const FlowStatistics& stats, const EmConfig& cfg) {
  cfg.validate();
  const std::size_t cats = c.num_categories();
  std::vector<double> edges = c.all_edge_params();
  std::vector<double> leaves = c.all_leaf_params();

  // Group members: (kind, tie) -> nodes; untied nodes form singleton groups.
  std::map<std::pair<int, std::uint64_t>, std::vector<NodeId>> groups;
  for (NodeId n = 0; n < c.num_nodes(); ++n) {
    if (c.is_product(n)) continue;
    int kind = c.is_sum(n) ? 1 : 0;
    std::uint64_t key = c.tie_group(n) != kNone ? c.tie_group(n) : (std::uint64_t{1} << 32) + n;
    groups[{kind, key}].push_back(n);
  }

  std::vector<double> pooled, fresh;
  for (const auto& [key, members] : groups) {
    const bool is_sum = key.first == 1;
    NodeId lead = members.front();
    const std::size_t width = is_sum ? c.children(lead).size() : cats;
    auto offset = [&](NodeId n) {
      return is_sum ? c.edge_begin(n) : std::size_t{c.leaf_slot(n)} * cats;
    };
    const std::vector<double>& src = is_sum ? stats.edge_flow : stats.leaf_counts;
    std::vector<double>& dst = is_sum ? edges : leaves;

    pooled.assign(width, cfg.pseudocount / static_cast<double>(width));
    for (NodeId n : members) {
      if ((is_sum ? c.children(n).size() : cats) != width)
        throw Error(ErrorCode::InvalidStructure, "tied nodes differ in arity", n);
      for (std::size_t k = 0; k < width; ++k) pooled[k] += src[offset(n) + k];
    }
    double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
    if (!(total > 0.0)) continue;  // unreached and unsmoothed: keep parameters
    fresh.resize(width);
    const double* old = dst.data() + offset(lead);
    double norm = 0.0;
    for (std::size_t k = 0; k < width; ++k) {
      fresh[k] = (1.0 - cfg.step_size) * old[k] + cfg.step_size * pooled[k] / total;
      norm += fresh[k];
    }
    for (auto& v : fresh) v /= norm;
    for (NodeId n : members) std::copy(fresh.begin(), fresh.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset(n)));
  }
  return c.with_parameters(std::move(edges), std::move(leaves));
}

/// One EM update from a batch of complete samples.
inline Circuit em_step(const Circuit& c, const Dataset& batch, const EmConfig& cfg) {
  if (batch.num_samples == 0) throw Error(ErrorCode::EmptyBatch, "EM step needs at least one sample");
  return apply_em_update(c, accumulate_flows(c, batch), cfg);
}

/// FNV-1a over the value-space parameter bytes.
inline std::uint64_t parameter_checksum(const Circuit& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&](const std::vector<double>& values) {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  };
  eat(c.all_edge_params());
  eat(c.all_leaf_params());
  return h;
}

struct TrainReport {
  double initial_log_likelihood = 0.0;
  std::vector<double> avg_log_likelihood;  // after each iteration, full dataset
  std::uint64_t checksum = 0;
};

/// Mini-batch EM for `num_iterations` steps. Batches are consecutive slices
/// of a seeded permutation that is redrawn every epoch.
inline std::pair<Circuit, TrainReport> fit(Circuit c, const Dataset& data, const EmConfig& cfg) {
  cfg.validate();
  if (data.num_samples == 0) throw Error(ErrorCode::DatasetEmpty, "dataset has no samples");
  if (data.num_variables != c.num_variables())
    throw Error(ErrorCode::DimMismatch, "dataset column count does not match circuit");
  for (std::size_t i = 0; i < data.values.size(); ++i)
    if (data.values[i] >= c.num_categories())
      throw Error(ErrorCode::CategoryOutOfRange,
                  "sample " + std::to_string(i / data.num_variables) + " has category " +
                      std::to_string(data.values[i]),
                  i / data.num_variables);

  Rng rng(Rng::derive(cfg.seed, "em-batches"));
  std::vector<std::size_t> perm(data.num_samples);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t cursor = perm.size();
  const std::size_t batch = std::min(cfg.batch_size, data.num_samples);

  TrainReport report;
  report.initial_log_likelihood = average_log_likelihood(c, data);
  for (std::size_t it = 0; it < cfg.num_iterations; ++it) {
    if (cursor >= perm.size()) {
      rng.shuffle(std::span<std::size_t>(perm));
      cursor = 0;
    }
    std::size_t end = std::min(cursor + batch, perm.size());
    std::span<const std::size_t> rows(perm.data() + cursor, end - cursor);
    cursor = end;
    c = apply_em_update(c, accumulate_flows(c, data, rows), cfg);
    report.avg_log_likelihood.push_back(average_log_likelihood(c, data));
  }
  report.checksum = parameter_checksum(c);
  return {std::move(c), std::move(report)};
}

}  // namespace pcg
