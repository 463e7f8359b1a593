#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pcg/circuit.hpp"
#include "pcg/inference.hpp"
#include "pcg/random.hpp"

namespace pcg {

/// Random smooth, decomposable, alternation-normal circuits built from
/// recursive random variable partitions (one partition tree per repetition,
/// mixed at the root). With `fixed_width` every region gets exactly
/// `sums_per_region` sums and `leaves_per_variable` leaves, so the edge count
/// scales linearly in `repetitions`.
struct RandomCircuitConfig {
  std::size_t num_variables = 4;
  std::size_t num_categories = 2;
  std::size_t sums_per_region = 2;
  std::size_t leaves_per_variable = 2;
  std::size_t max_parts = 2;
  std::size_t repetitions = 1;
  bool fixed_width = false;
};

namespace detail {

inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& x : w) total += (x = rng.exponential());
  for (auto& x : w) x /= total;
  return w;
}

inline std::vector<double> random_leaf(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& x : w) total += (x = rng.uniform(0.1, 1.0));
  for (auto& x : w) x /= total;
  return w;
}

class RandomCircuitGrower {
 public:
  RandomCircuitGrower(const RandomCircuitConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed), builder_(cfg.num_variables, cfg.num_categories) {}

  Circuit grow() {
    std::vector<VarId> all(cfg_.num_variables);
    std::iota(all.begin(), all.end(), VarId{0});
    std::vector<NodeId> top;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, cfg_.repetitions); ++r) {
      auto nodes = region(all, true);
      top.insert(top.end(), nodes.begin(), nodes.end());
    }
    NodeId root;
    if (cfg_.num_variables == 1) {
      // Leaves need a product parent to stay alternation-normal.
      std::vector<NodeId> wrapped;
      for (NodeId leaf : top) wrapped.push_back(builder_.add_product({leaf}));
      root = builder_.add_sum(wrapped, random_simplex(rng_, wrapped.size()));
    } else {
      root = builder_.add_sum(top, random_simplex(rng_, top.size()));
    }
    builder_.set_root(root);
    return certify(builder_.build());
  }

 private:
  std::size_t width(std::size_t cap) { return cfg_.fixed_width ? cap : 1 + rng_.below(cap); }

  // The top region hands its products straight to the root so the root sum
  // never sits on top of other sums.
  std::vector<NodeId> region(std::vector<VarId> vars, bool top = false) {
    std::vector<NodeId> out;
    if (vars.size() == 1) {
      std::size_t n = width(cfg_.leaves_per_variable);
      for (std::size_t i = 0; i < n; ++i)
        out.push_back(builder_.add_input(vars[0], random_leaf(rng_, cfg_.num_categories)));
      return out;
    }
    std::size_t parts = 2;
    if (!cfg_.fixed_width && cfg_.max_parts > 2)
      parts = 2 + rng_.below(std::min(cfg_.max_parts, vars.size()) - 1);
    std::vector<std::vector<VarId>> groups(parts);
    if (cfg_.fixed_width) {
      std::size_t half = vars.size() / 2;
      groups[0].assign(vars.begin(), vars.begin() + static_cast<std::ptrdiff_t>(half));
      groups[1].assign(vars.begin() + static_cast<std::ptrdiff_t>(half), vars.end());
    } else {
      rng_.shuffle(std::span<VarId>(vars));
      // Every part gets one variable, the rest are spread at random.
      for (std::size_t i = 0; i < parts; ++i) groups[i].push_back(vars[i]);
      for (std::size_t i = parts; i < vars.size(); ++i) groups[rng_.below(parts)].push_back(vars[i]);
      for (auto& g : groups) std::sort(g.begin(), g.end());
    }
    std::vector<std::vector<NodeId>> sub;
    for (auto& g : groups) sub.push_back(region(g));

    // Products over the cross product of child-region nodes, capped. The
    // first products pair up nodes index-wise so every child node is used.
    std::vector<NodeId> products;
    std::size_t combos = 1, widest = 1;
    for (auto& s : sub) {
      combos *= s.size();
      widest = std::max(widest, s.size());
    }
    const std::size_t cap = cfg_.fixed_width ? combos : std::min<std::size_t>(combos, std::max<std::size_t>(6, widest));
    for (std::size_t k = 0; k < cap; ++k) {
      std::vector<NodeId> kids;
      if (!cfg_.fixed_width && combos != cap && k < widest) {
        for (auto& s : sub) kids.push_back(s[k % s.size()]);
      } else {
        std::size_t idx = cfg_.fixed_width || combos == cap ? k : static_cast<std::size_t>(rng_.below(combos));
        for (auto& s : sub) {
          kids.push_back(s[idx % s.size()]);
          idx /= s.size();
        }
      }
      products.push_back(builder_.add_product(std::move(kids)));
    }
    if (top) return products;
    std::size_t sums = width(cfg_.sums_per_region);
    std::vector<std::vector<NodeId>> kid_lists(sums, products);
    if (!cfg_.fixed_width && products.size() > 1) {
      std::vector<std::uint8_t> used(products.size(), 0);
      for (auto& kids : kid_lists) {
        std::vector<std::size_t> pick(products.size());
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        rng_.shuffle(std::span<std::size_t>(pick));
        pick.resize(1 + rng_.below(pick.size()));
        std::sort(pick.begin(), pick.end());
        kids.clear();
        for (std::size_t i : pick) {
          kids.push_back(products[i]);
          used[i] = 1;
        }
      }
      for (std::size_t i = 0; i < products.size(); ++i)
        if (!used[i]) kid_lists[i % sums].push_back(products[i]);
    }
    for (auto& kids : kid_lists) out.push_back(builder_.add_sum(kids, random_simplex(rng_, kids.size())));
    return out;
  }

  RandomCircuitConfig cfg_;
  Rng rng_;
  CircuitBuilder builder_;
};

}  // namespace detail

inline Circuit random_circuit(const RandomCircuitConfig& cfg, std::uint64_t seed) {
  return detail::RandomCircuitGrower(cfg, seed).grow();
}

/// Random evidence: each weight is exp(U(-3, 3)); with probability
/// `hard_fraction` a variable instead gets one-hot evidence.
inline SoftEvidence random_soft_evidence(std::size_t vars, std::size_t cats, std::uint64_t seed,
                                         double hard_fraction = 0.0) {
  Rng rng(seed);
  SoftEvidence ev(vars, cats);
  for (std::size_t v = 0; v < vars; ++v) {
    if (rng.uniform() < hard_fraction) {
      ev.set_hard(v, static_cast<Category>(rng.below(cats)));
    } else {
      for (auto& lw : ev.row(v)) lw = rng.uniform(-3.0, 3.0);
    }
  }
  return ev;
}

}  // namespace pcg
