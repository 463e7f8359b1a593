#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcg/inference.hpp"
#include "pcg/random_circuit.hpp"
#include "pcg/testkit/oracle.hpp"

namespace pcg::oracle {

/// Randomized oracle-equivalence battery over small binary circuits.
struct CertificationConfig {
  std::size_t num_cases = 200;
  std::uint64_t seed = 0;
  std::size_t min_variables = 2, max_variables = 10;
  double marginal_tolerance = 1e-9;  // absolute
  double log_z_tolerance = 1e-9;     // relative
  double flow_tolerance = 1e-9;
  std::optional<std::size_t> corrupt_case;  // test hook: perturb one sum weight in this case
};

struct PropertyCount {
  std::size_t passed = 0, total = 0;
  bool ok() const { return passed == total; }
};

struct CertificationFailure {
  std::size_t case_index = 0;
  std::string property;
  double error = 0.0;
  std::optional<NodeId> node;  // first node whose subcircuit no longer normalizes
};

struct CertificationReport {
  PropertyCount marginals, log_z, flow_conservation;
  double worst_marginal_error = 0.0, worst_log_z_error = 0.0, worst_flow_error = 0.0;
  std::vector<CertificationFailure> failures;
  std::optional<NodeId> corrupted_node;
  bool ok() const { return marginals.ok() && log_z.ok() && flow_conservation.ok(); }
};

/// Lowest node (children first) whose value under all-ones evidence is not 1.
/// Every subcircuit of a normalized smooth, decomposable circuit sums to one,
/// so this pins the first node whose parameters break normalization.
inline std::optional<NodeId> localize_normalization(const Circuit& c, double tolerance = 1e-9) {
  auto fw = forward_soft_evidence(c, SoftEvidence::ones(c.num_variables(), c.num_categories()));
  for (NodeId n : c.order())
    if (!(std::abs(fw.log_fw[n]) <= tolerance)) return n;
  return std::nullopt;
}

inline Circuit certification_circuit(const CertificationConfig& cfg, std::size_t index) {
  Rng rng(Rng::derive(Rng::derive(cfg.seed, "circuit"), index));
  RandomCircuitConfig rc;
  rc.num_variables = cfg.min_variables + rng.below(cfg.max_variables - cfg.min_variables + 1);
  rc.num_categories = 2;
  rc.sums_per_region = 1 + rng.below(3);
  rc.leaves_per_variable = 1 + rng.below(3);
  rc.max_parts = 2 + rng.below(2);
  rc.repetitions = 1 + rng.below(2);
  return random_circuit(rc, rng.next_u64());
}

inline CertificationReport run_certification(const CertificationConfig& cfg) {
  if (cfg.min_variables < 1 || cfg.max_variables < cfg.min_variables)
    throw Error(ErrorCode::InvalidConfig, "bad variable range");
  CertificationReport report;
  for (std::size_t i = 0; i < cfg.num_cases; ++i) {
    Circuit truth = certification_circuit(cfg, i);
    Circuit tested = truth;
    if (cfg.corrupt_case && *cfg.corrupt_case == i) {
      Rng rng(Rng::derive(cfg.seed, "corrupt"));
      std::vector<NodeId> sums;
      for (NodeId n = 0; n < truth.num_nodes(); ++n)
        if (truth.is_sum(n)) sums.push_back(n);
      NodeId victim = sums[rng.below(sums.size())];
      std::vector<double> edges = truth.all_edge_params();
      edges[truth.edge_begin(victim)] *= 1.5;
      tested = truth.with_parameters(std::move(edges), truth.all_leaf_params());
      report.corrupted_node = victim;
    }
    auto ev = random_soft_evidence(truth.num_variables(), 2, Rng::derive(Rng::derive(cfg.seed, "evidence"), i), 0.2);

    auto fw = forward_soft_evidence(tested, ev);
    std::vector<double> flows;
    auto fast = backward_marginals(tested, ev, fw, &flows);
    auto slow = oracle_soft_evidence_marginals(truth, ev);

    auto fail = [&](const char* property, double err) {
      report.failures.push_back({i, property, err, localize_normalization(tested)});
    };

    double merr = 0.0;
    for (std::size_t k = 0; k < fast.marginals.probs.size(); ++k)
      merr = std::max(merr, std::abs(fast.marginals.probs[k] - slow.marginals.probs[k]));
    report.worst_marginal_error = std::max(report.worst_marginal_error, merr);
    ++report.marginals.total;
    if (merr <= cfg.marginal_tolerance) ++report.marginals.passed;
    else fail("marginals", merr);

    double zerr = std::abs(fast.log_z - slow.log_z) / std::max(1.0, std::abs(slow.log_z));
    report.worst_log_z_error = std::max(report.worst_log_z_error, zerr);
    ++report.log_z.total;
    if (zerr <= cfg.log_z_tolerance) ++report.log_z.passed;
    else fail("log_z", zerr);

    std::vector<double> per_var(tested.num_variables(), 0.0);
    for (NodeId n : tested.layer_nodes(0)) per_var[tested.variable(n)] += flows[n];
    double ferr = 0.0;
    for (double total : per_var) ferr = std::max(ferr, std::abs(total - 1.0));
    report.worst_flow_error = std::max(report.worst_flow_error, ferr);
    ++report.flow_conservation.total;
    if (ferr <= cfg.flow_tolerance) ++report.flow_conservation.passed;
    else fail("flow_conservation", ferr);
  }
  return report;
}

}  // namespace pcg::oracle
