#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pcg/circuit.hpp"
#include "pcg/error.hpp"
#include "pcg/numeric.hpp"
#include "pcg/random.hpp"

namespace pcg {

/// Row-major matrix of category assignments (one row per sample).
struct Dataset {
  std::size_t num_samples = 0;
  std::size_t num_variables = 0;
  std::size_t num_categories = 0;
  std::vector<Category> values;

  Dataset() = default;
  Dataset(std::size_t rows, std::size_t cols, std::size_t cats)
      : num_samples(rows), num_variables(cols), num_categories(cats), values(rows * cols, 0) {}

  std::span<const Category> row(std::size_t i) const { return {values.data() + i * num_variables, num_variables}; }
  std::span<Category> row(std::size_t i) { return {values.data() + i * num_variables, num_variables}; }

  void push_back(std::span<const Category> sample) {
    if (sample.size() != num_variables) throw Error(ErrorCode::DimMismatch, "sample length mismatch");
    values.insert(values.end(), sample.begin(), sample.end());
    ++num_samples;
  }
};

/// Per-variable categorical distributions, row-major (variable x category).
struct Distributions {
  std::size_t num_variables = 0;
  std::size_t num_categories = 0;
  std::vector<double> probs;

  Distributions() = default;
  Distributions(std::size_t vars, std::size_t cats, double fill = 0.0)
      : num_variables(vars), num_categories(cats), probs(vars * cats, fill) {}

  std::span<const double> row(std::size_t v) const { return {probs.data() + v * num_categories, num_categories}; }
  std::span<double> row(std::size_t v) { return {probs.data() + v * num_categories, num_categories}; }
  double operator()(std::size_t v, std::size_t c) const { return probs[v * num_categories + c]; }
  double& operator()(std::size_t v, std::size_t c) { return probs[v * num_categories + c]; }
};

/// Independent per-variable weights w_i(x) in log space. Weights need not be
/// normalized; hard evidence is the one-hot case.
struct SoftEvidence {
  std::size_t num_variables = 0;
  std::size_t num_categories = 0;
  std::vector<double> log_weights;
  std::vector<std::uint8_t> hard;

  SoftEvidence() = default;
  SoftEvidence(std::size_t vars, std::size_t cats)
      : num_variables(vars), num_categories(cats), log_weights(vars * cats, 0.0), hard(vars, 0) {}

  /// w_i = 1 everywhere.
  static SoftEvidence ones(std::size_t vars, std::size_t cats) { return SoftEvidence(vars, cats); }

  static SoftEvidence hard_sample(std::span<const Category> sample, std::size_t cats) {
    SoftEvidence ev(sample.size(), cats);
    for (std::size_t v = 0; v < sample.size(); ++v) ev.set_hard(v, sample[v]);
    return ev;
  }

  std::span<const double> row(std::size_t v) const {
    return {log_weights.data() + v * num_categories, num_categories};
  }
  std::span<double> row(std::size_t v) { return {log_weights.data() + v * num_categories, num_categories}; }

  void set_hard(std::size_t v, Category value) {
    if (value >= num_categories) throw Error(ErrorCode::CategoryOutOfRange, "hard evidence value", v);
    auto r = row(v);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] = c == value ? 0.0 : kNegInf;
    hard[v] = 1;
  }

  void set_weights(std::size_t v, std::span<const double> values) {
    auto r = row(v);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] = safe_log(values[c]);
    hard[v] = 0;
  }

  /// Throws AllZeroEvidence naming the first variable with no positive weight.
  void check_support() const {
    for (std::size_t v = 0; v < num_variables; ++v) {
      bool any = false;
      for (double lw : row(v)) any = any || lw > kNegInf;
      if (!any) throw Error(ErrorCode::AllZeroEvidence, "variable " + std::to_string(v) + " has all-zero weights", v);
    }
  }
};

struct ForwardValues {
  std::vector<double> log_fw;
  double log_z = kNegInf;
};

struct PosteriorMarginals {
  Distributions marginals;
  double log_z = kNegInf;
};

namespace detail {

inline void check_evidence_shape(const Circuit& c, const SoftEvidence& ev) {
  if (ev.num_variables != c.num_variables() || ev.num_categories != c.num_categories())
    throw Error(ErrorCode::DimMismatch, "evidence shape does not match circuit");
}

// log sum_c theta_c * fw_c over a sum node's children, max-shifted.
inline double sum_node_value(const Circuit& c, NodeId n, const std::vector<double>& log_fw) {
  auto kids = c.children(n);
  auto lw = c.log_edge_params(n);
  double peak = kNegInf;
  for (std::size_t k = 0; k < kids.size(); ++k) peak = std::max(peak, lw[k] + log_fw[kids[k]]);
  if (peak == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t k = 0; k < kids.size(); ++k) acc += std::exp(lw[k] + log_fw[kids[k]] - peak);
  return peak + std::log(acc);
}

inline void propagate_internal(const Circuit& c, std::vector<double>& log_fw) {
  for (NodeId n : c.order()) {
    if (c.is_product(n)) {
      double acc = 0.0;
      for (NodeId ch : c.children(n)) acc += log_fw[ch];
      log_fw[n] = std::isnan(acc) ? kNegInf : acc;
    } else if (c.is_sum(n)) {
      log_fw[n] = sum_node_value(c, n, log_fw);
    }
  }
}

}  // namespace detail

/// Per-node log values for one complete assignment (likelihood pass).
inline void forward_sample(const Circuit& c, std::span<const Category> sample, std::vector<double>& log_fw) {
  c.require_prepared();
  if (sample.size() != c.num_variables())
    throw Error(ErrorCode::DimMismatch, "sample length does not match circuit");
  log_fw.assign(c.num_nodes(), kNegInf);
  for (NodeId n : c.layer_nodes(0)) {
    if (!c.is_input(n)) continue;
    Category x = sample[c.variable(n)];
    if (x >= c.num_categories())
      throw Error(ErrorCode::CategoryOutOfRange,
                  "category " + std::to_string(x) + " for variable " + std::to_string(c.variable(n)),
                  c.variable(n));
    log_fw[n] = c.log_leaf_params(n)[x];
  }
  detail::propagate_internal(c, log_fw);
}

/// log p(x).
inline double log_likelihood(const Circuit& c, std::span<const Category> sample) {
  std::vector<double> log_fw;
  forward_sample(c, sample, log_fw);
  return log_fw[c.root()];
}

inline double average_log_likelihood(const Circuit& c, const Dataset& data) {
  if (data.num_samples == 0) throw Error(ErrorCode::DatasetEmpty, "no samples");
  std::vector<double> log_fw;
  double total = 0.0;
  for (std::size_t i = 0; i < data.num_samples; ++i) {
    forward_sample(c, data.row(i), log_fw);
    total += log_fw[c.root()];
  }
  return total / static_cast<double>(data.num_samples);
}

/// Postorder pass: input nodes get log sum_x f_n(x) w_i(x), inner nodes
/// combine their children. log_z = log sum_x prod_i w_i(x_i) p(x).
inline ForwardValues forward_soft_evidence(const Circuit& c, const SoftEvidence& ev) {
  c.require_prepared();
  detail::check_evidence_shape(c, ev);
  ev.check_support();
  ForwardValues fw;
  fw.log_fw.assign(c.num_nodes(), kNegInf);
  const std::size_t cats = c.num_categories();
  std::vector<double> scratch(cats);
  for (NodeId n : c.layer_nodes(0)) {
    if (!c.is_input(n)) continue;
    auto lf = c.log_leaf_params(n);
    auto lw = ev.row(c.variable(n));
    for (std::size_t x = 0; x < cats; ++x) scratch[x] = lf[x] + lw[x];
    fw.log_fw[n] = log_sum_exp(scratch);
  }
  detail::propagate_internal(c, fw.log_fw);
  fw.log_z = fw.log_fw[c.root()];
  if (fw.log_z == kNegInf || std::isnan(fw.log_z))
    throw Error(ErrorCode::AllZeroEvidence, "evidence has zero probability under the circuit (log Z = -inf)");
  return fw;
}

/// Preorder pass computing normalized flows: the root gets 1, a sum node
/// sends theta_{m,n} * fw_n / fw_m of its flow to child n, and a product
/// node passes its whole flow to every child. Flows into the input nodes of
/// one variable sum to 1. When `edge_flow` is given, the flow along every sum
/// edge is added to it (indexed like the edge array).
inline std::vector<double> backward_flows(const Circuit& c, const std::vector<double>& log_fw,
                                          std::vector<double>* edge_flow = nullptr) {
  c.require_prepared();
  std::vector<double> flow(c.num_nodes(), 0.0);
  flow[c.root()] = 1.0;
  auto order = c.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeId m = *it;
    double bk = flow[m];
    if (bk == 0.0 || c.is_input(m)) continue;
    if (std::isnan(bk) || log_fw[m] == kNegInf || std::isnan(log_fw[m]))
      throw Error(ErrorCode::NumericalUnderflow,
                  "node " + std::to_string(m) + " carries flow but has zero forward value", m);
    auto kids = c.children(m);
    if (c.is_product(m)) {
      for (NodeId ch : kids) flow[ch] += bk;
    } else {
      auto lw = c.log_edge_params(m);
      const std::size_t base = c.edge_begin(m);
      for (std::size_t k = 0; k < kids.size(); ++k) {
        double lf = log_fw[kids[k]];
        if (lf == kNegInf || lw[k] == kNegInf) continue;  // zero posterior mass on this branch
        double share = std::exp(lw[k] + lf - log_fw[m]) * bk;
        flow[kids[k]] += share;
        if (edge_flow) (*edge_flow)[base + k] += share;
      }
    }
  }
  return flow;
}

/// p'(x_i) = sum over input nodes n on X_i of flow_n * f_n(x_i) w_i(x_i) / fw_n.
inline PosteriorMarginals backward_marginals(const Circuit& c, const SoftEvidence& ev, const ForwardValues& fw,
                                             std::vector<double>* flows_out = nullptr) {
  detail::check_evidence_shape(c, ev);
  if (!std::isfinite(fw.log_z))
    throw Error(ErrorCode::AllZeroEvidence, "log Z is not finite");
  auto flow = backward_flows(c, fw.log_fw);
  PosteriorMarginals out;
  out.log_z = fw.log_z;
  out.marginals = Distributions(c.num_variables(), c.num_categories());
  const std::size_t cats = c.num_categories();
  for (NodeId n : c.layer_nodes(0)) {
    if (!c.is_input(n) || flow[n] == 0.0) continue;
    auto lf = c.log_leaf_params(n);
    auto lw = ev.row(c.variable(n));
    auto dst = out.marginals.row(c.variable(n));
    for (std::size_t x = 0; x < cats; ++x) {
      double term = lf[x] + lw[x];
      if (term == kNegInf) continue;
      dst[x] += flow[n] * std::exp(term - fw.log_fw[n]);
    }
  }
  if (flows_out) *flows_out = std::move(flow);
  return out;
}

/// Both passes in one call.
inline PosteriorMarginals soft_evidence_marginals(const Circuit& c, const SoftEvidence& ev) {
  return backward_marginals(c, ev, forward_soft_evidence(c, ev));
}

/// Exact ancestral samples from p'(x) proportional to prod_i w_i(x_i) p(x).
/// Deterministic in `seed`.
inline Dataset conditional_sample(const Circuit& c, const SoftEvidence& ev, std::uint64_t seed, std::size_t count,
                                  const ForwardValues* precomputed = nullptr) {
  ForwardValues local;
  if (!precomputed) {
    local = forward_soft_evidence(c, ev);
    precomputed = &local;
  }
  const auto& log_fw = precomputed->log_fw;
  Rng rng(seed);
  Dataset out(count, c.num_variables(), c.num_categories());
  std::vector<NodeId> stack;
  std::vector<double> scratch;
  const std::size_t cats = c.num_categories();
  for (std::size_t s = 0; s < count; ++s) {
    auto dst = out.row(s);
    stack.assign(1, c.root());
    while (!stack.empty()) {
      NodeId n = stack.back();
      stack.pop_back();
      switch (c.type(n)) {
        case NodeType::Product:
          for (auto it = c.children(n).rbegin(); it != c.children(n).rend(); ++it) stack.push_back(*it);
          break;
        case NodeType::Sum: {
          auto kids = c.children(n);
          auto lw = c.log_edge_params(n);
          scratch.resize(kids.size());
          for (std::size_t k = 0; k < kids.size(); ++k) scratch[k] = lw[k] + log_fw[kids[k]];
          std::size_t pick = rng.categorical_log(scratch);
          if (pick >= kids.size())
            throw Error(ErrorCode::NumericalUnderflow, "sum node with no positive branch", n);
          stack.push_back(kids[pick]);
          break;
        }
        case NodeType::Input: {
          auto lf = c.log_leaf_params(n);
          auto lw = ev.row(c.variable(n));
          scratch.resize(cats);
          for (std::size_t x = 0; x < cats; ++x) scratch[x] = lf[x] + lw[x];
          std::size_t x = rng.categorical_log(scratch);
          if (x >= cats) throw Error(ErrorCode::AllZeroEvidence, "input node with no support", n);
          dst[c.variable(n)] = static_cast<Category>(x);
          break;
        }
      }
    }
  }
  return out;
}

/// CSV with header `variable,category,probability`.
inline void write_marginals_csv(std::ostream& os, const Distributions& d) {
  os << "variable,category,probability\n";
  char buf[64];
  for (std::size_t v = 0; v < d.num_variables; ++v)
    for (std::size_t c = 0; c < d.num_categories; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", d(v, c));
      os << v << ',' << c << ',' << buf << '\n';
    }
}

}  // namespace pcg
