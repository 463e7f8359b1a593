#pragma once

// Brute-force reference implementations. These evaluate the circuit
// definition directly in value space with compensated extended-precision
// sums and deliberately avoid the library's inference passes; only the
// Circuit/evidence data types are shared.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcg/circuit.hpp"
#include "pcg/error.hpp"
#include "pcg/inference.hpp"

namespace pcg::oracle {

struct EnumerationBudget {
  std::uint64_t max_states = std::uint64_t{1} << 20;
};

/// Neumaier-compensated accumulator over long double.
class CompensatedSum {
 public:
  void add(long double x) {
    long double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
  }
  long double value() const { return sum_ + carry_; }

 private:
  long double sum_ = 0.0L;
  long double carry_ = 0.0L;
};

inline std::uint64_t state_count(std::size_t num_variables, std::size_t num_categories,
                                 const EnumerationBudget& budget) {
  std::uint64_t states = 1;
  for (std::size_t i = 0; i < num_variables; ++i) {
    if (states > budget.max_states / std::max<std::size_t>(1, num_categories))
      throw Error(ErrorCode::BudgetExceeded,
                  std::to_string(num_categories) + "^" + std::to_string(num_variables) + " states exceed budget of " +
                      std::to_string(budget.max_states));
    states *= num_categories;
  }
  if (states > budget.max_states) throw Error(ErrorCode::BudgetExceeded, "state count exceeds budget");
  return states;
}

/// Assignment for a mixed-radix index; variable 0 is the least significant digit.
inline void decode_index(std::uint64_t index, std::size_t num_categories, std::vector<Category>& x) {
  for (auto& v : x) {
    v = static_cast<Category>(index % num_categories);
    index /= num_categories;
  }
}

/// Evaluates the recursive circuit definition for complete assignments.
/// Keeps its own child-before-parent order, computed by depth-first search
/// from the root.
class DirectEvaluator {
 public:
  explicit DirectEvaluator(const Circuit& c) : c_(c), value_(c.num_nodes(), 0.0L) {
    std::vector<std::uint8_t> seen(c.num_nodes(), 0);
    std::function<void(NodeId)> visit = [&](NodeId n) {
      if (seen[n]) return;
      seen[n] = 1;
      for (NodeId ch : c.children(n)) visit(ch);
      order_.push_back(n);
    };
    visit(c.root());
  }

  /// p(x) with optional override of one sum-edge parameter.
  long double probability(const std::vector<Category>& x, std::size_t zeroed_edge = SIZE_MAX) {
    for (NodeId n : order_) {
      switch (c_.type(n)) {
        case NodeType::Input:
          value_[n] = static_cast<long double>(c_.leaf_params(n)[x[c_.variable(n)]]);
          break;
        case NodeType::Product: {
          long double acc = 1.0L;
          for (NodeId ch : c_.children(n)) acc *= value_[ch];
          value_[n] = acc;
          break;
        }
        case NodeType::Sum: {
          CompensatedSum acc;
          auto kids = c_.children(n);
          auto w = c_.edge_params(n);
          for (std::size_t k = 0; k < kids.size(); ++k) {
            if (c_.edge_begin(n) + k == zeroed_edge) continue;
            acc.add(static_cast<long double>(w[k]) * value_[kids[k]]);
          }
          value_[n] = acc.value();
          break;
        }
      }
    }
    return value_[c_.root()];
  }

 private:
  const Circuit& c_;
  std::vector<NodeId> order_;
  std::vector<long double> value_;
};

/// Full joint table; entry index follows `decode_index`.
inline std::vector<long double> enumerate_distribution(const Circuit& c, const EnumerationBudget& budget = {}) {
  std::uint64_t states = state_count(c.num_variables(), c.num_categories(), budget);
  DirectEvaluator eval(c);
  std::vector<long double> table(states);
  std::vector<Category> x(c.num_variables());
  for (std::uint64_t s = 0; s < states; ++s) {
    decode_index(s, c.num_categories(), x);
    table[s] = eval.probability(x);
  }
  return table;
}

inline long double table_total(const std::vector<long double>& table) {
  CompensatedSum acc;
  for (auto p : table) acc.add(p);
  return acc.value();
}

/// Z and every p'(x_i) by explicit summation over all assignments.
inline PosteriorMarginals oracle_soft_evidence_marginals(const Circuit& c, const SoftEvidence& ev,
                                                         const EnumerationBudget& budget = {}) {
  if (ev.num_variables != c.num_variables() || ev.num_categories != c.num_categories())
    throw Error(ErrorCode::DimMismatch, "evidence shape does not match circuit");
  const std::size_t nv = c.num_variables(), cats = c.num_categories();
  std::uint64_t states = state_count(nv, cats, budget);
  std::vector<long double> weight(nv * cats);
  for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = std::exp(static_cast<long double>(ev.log_weights[i]));

  DirectEvaluator eval(c);
  std::vector<CompensatedSum> mass(nv * cats);
  CompensatedSum z;
  std::vector<Category> x(nv);
  for (std::uint64_t s = 0; s < states; ++s) {
    decode_index(s, cats, x);
    long double term = eval.probability(x);
    for (std::size_t v = 0; v < nv && term != 0.0L; ++v) term *= weight[v * cats + x[v]];
    if (term == 0.0L) continue;
    z.add(term);
    for (std::size_t v = 0; v < nv; ++v) mass[v * cats + x[v]].add(term);
  }
  PosteriorMarginals out;
  out.marginals = Distributions(nv, cats);
  long double total = z.value();
  if (!(total > 0.0L)) throw Error(ErrorCode::AllZeroEvidence, "Z = 0 under enumeration");
  out.log_z = static_cast<double>(std::log(total));
  for (std::size_t i = 0; i < nv * cats; ++i) out.marginals.probs[i] = static_cast<double>(mass[i].value() / total);
  return out;
}

/// Posterior probability that the sum edge at global edge index `edge` lies
/// in the induced tree of `x`. The root value is linear in each sum weight,
/// so this equals 1 - p(x | theta_edge = 0) / p(x).
inline long double oracle_edge_flow(const Circuit& c, const std::vector<Category>& x, std::size_t edge) {
  DirectEvaluator eval(c);
  long double full = eval.probability(x);
  if (full == 0.0L) return 0.0L;
  long double without = eval.probability(x, edge);
  return 1.0L - without / full;
}

}  // namespace pcg::oracle
