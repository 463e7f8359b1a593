#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "pcg/pcg.hpp"
#include "pcg/testkit/oracle.hpp"
#include "support.hpp"

using namespace pcg;

TEST(Likelihood, HandComputedMixture) {
  Circuit c = test::two_component_mixture();
  // p(x0=1, x1=0) = 0.3 * 0.8 * 0.6 + 0.7 * 0.1 * 0.5, by hand.
  std::vector<Category> x{1, 0};
  EXPECT_NEAR(std::exp(log_likelihood(c, x)), 0.179, 1e-15);
  // p(x0=0, x1=1) = 0.3 * 0.2 * 0.4 + 0.7 * 0.9 * 0.5
  x = {0, 1};
  EXPECT_NEAR(std::exp(log_likelihood(c, x)), 0.339, 1e-15);
}

TEST(Likelihood, MatchesEnumeration) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    Circuit c = test::small_random(2 + seed % 4, 3, seed);
    auto table = oracle::enumerate_distribution(c);
    std::vector<Category> x(c.num_variables());
    for (std::size_t s = 0; s < table.size(); ++s) {
      oracle::decode_index(s, c.num_categories(), x);
      EXPECT_NEAR(std::exp(log_likelihood(c, x)) / static_cast<double>(table[s]), 1.0, 1e-9);
    }
  }
}

TEST(Likelihood, RejectsBadSamples) {
  Circuit c = test::two_component_mixture();
  std::vector<Category> too_short{1};
  EXPECT_THROW(log_likelihood(c, too_short), Error);
  std::vector<Category> bad{0, 2};
  try {
    log_likelihood(c, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CategoryOutOfRange);
  }
}

TEST(Forward, OnesEvidenceGivesZeroLogZ) {
  Circuit c = test::small_random(5, 2, 9);
  auto fw = forward_soft_evidence(c, SoftEvidence::ones(5, 2));
  EXPECT_NEAR(fw.log_z, 0.0, 1e-12);
}

TEST(Forward, HardEvidenceEqualsLikelihood) {
  Circuit c = test::small_random(4, 3, 2);
  std::vector<Category> x{2, 0, 1, 1};
  auto fw = forward_soft_evidence(c, SoftEvidence::hard_sample(x, 3));
  EXPECT_NEAR(fw.log_z, log_likelihood(c, x), 1e-12);
}

TEST(Forward, ContradictoryEvidenceIsAnError) {
  // x0 is always 0 under this circuit.
  CircuitBuilder b(1, 2);
  b.add_sum({b.add_product({b.add_input(0, {1.0, 0.0})})});
  Circuit c = certify(b.build());
  SoftEvidence ev(1, 2);
  ev.set_hard(0, 1);
  try {
    forward_soft_evidence(c, ev);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllZeroEvidence);
  }
  SoftEvidence none(1, 2);
  none.row(0)[0] = none.row(0)[1] = kNegInf;
  EXPECT_THROW(forward_soft_evidence(c, none), Error);
}

TEST(Marginals, HandComputedConditional) {
  Circuit c = test::two_component_mixture();
  SoftEvidence ev(2, 2);
  ev.set_hard(1, 0);
  auto post = soft_evidence_marginals(c, ev);
  // p(x1=0) = 0.3*0.6 + 0.7*0.5 = 0.53; p(x0=1, x1=0) = 0.179.
  EXPECT_NEAR(std::exp(post.log_z), 0.53, 1e-15);
  EXPECT_NEAR(post.marginals(0, 1), 0.179 / 0.53, 1e-14);
  EXPECT_NEAR(post.marginals(1, 0), 1.0, 1e-15);
  EXPECT_EQ(post.marginals(1, 1), 0.0);
}

TEST(Marginals, MatchOracleOnRandomCases) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t vars = 2 + seed % 6, cats = 2 + seed % 3;
    Circuit c = test::small_random(vars, cats, seed);
    auto ev = random_soft_evidence(vars, cats, seed * 7 + 1, 0.25);
    auto fast = soft_evidence_marginals(c, ev);
    auto slow = oracle::oracle_soft_evidence_marginals(c, ev);
    EXPECT_NEAR(fast.log_z, slow.log_z, 1e-9 * std::max(1.0, std::abs(slow.log_z)));
    for (std::size_t i = 0; i < fast.marginals.probs.size(); ++i)
      EXPECT_NEAR(fast.marginals.probs[i], slow.marginals.probs[i], 1e-9) << "seed " << seed << " entry " << i;
  }
}

TEST(Marginals, OnesEvidenceGivesUnconditionalMarginals) {
  Circuit c = test::small_random(4, 3, 17);
  auto fast = soft_evidence_marginals(c, SoftEvidence::ones(4, 3));
  auto table = oracle::enumerate_distribution(c);
  std::vector<double> direct(4 * 3, 0.0);
  std::vector<Category> x(4);
  for (std::size_t s = 0; s < table.size(); ++s) {
    oracle::decode_index(s, 3, x);
    for (std::size_t v = 0; v < 4; ++v) direct[v * 3 + x[v]] += static_cast<double>(table[s]);
  }
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(fast.marginals.probs[i], direct[i], 1e-12);
}

TEST(Marginals, ScalingOneVariablesWeightsChangesNothing) {
  Circuit c = test::small_random(5, 3, 23);
  auto ev = random_soft_evidence(5, 3, 4);
  auto base = soft_evidence_marginals(c, ev);
  for (double& lw : ev.row(2)) lw += std::log(37.5);
  auto scaled = soft_evidence_marginals(c, ev);
  EXPECT_NEAR(scaled.log_z - base.log_z, std::log(37.5), 1e-12);
  for (std::size_t i = 0; i < base.marginals.probs.size(); ++i)
    EXPECT_NEAR(scaled.marginals.probs[i], base.marginals.probs[i], 1e-9);
}

TEST(Flows, InputFlowsOfEachVariableSumToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Circuit c = test::small_random(3 + seed % 5, 2, seed + 100);
    auto ev = random_soft_evidence(c.num_variables(), 2, seed, 0.3);
    auto fw = forward_soft_evidence(c, ev);
    std::vector<double> flows;
    backward_marginals(c, ev, fw, &flows);
    std::vector<double> per_var(c.num_variables(), 0.0);
    for (NodeId n = 0; n < c.num_nodes(); ++n)
      if (c.is_input(n)) per_var[c.variable(n)] += flows[n];
    for (double total : per_var) EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(flows[c.root()], 1.0);
  }
}

TEST(Flows, WorkOnNonAlternatingCircuits) {
  // Sum directly over inputs and nested sums: the general flow rule still
  // yields exact marginals.
  CircuitBuilder b(2, 2);
  NodeId a = b.add_input(0, {0.3, 0.7});
  NodeId a2 = b.add_input(0, {0.8, 0.2});
  NodeId s0 = b.add_sum({a, a2}, {0.5, 0.5});
  NodeId s1 = b.add_sum({s0, a2}, {0.1, 0.9});
  NodeId y = b.add_input(1, {0.4, 0.6});
  b.add_product({s1, y});
  Circuit c = certify(b.build());
  auto ev = random_soft_evidence(2, 2, 11);
  auto fast = soft_evidence_marginals(c, ev);
  auto slow = oracle::oracle_soft_evidence_marginals(c, ev);
  for (std::size_t i = 0; i < fast.marginals.probs.size(); ++i)
    EXPECT_NEAR(fast.marginals.probs[i], slow.marginals.probs[i], 1e-12);
}

TEST(Flows, UnpreparedCircuitIsRejected) {
  CircuitBuilder b(1, 2);
  b.add_sum({b.add_product({b.add_input(0, {0.5, 0.5})})});
  Circuit raw = b.build();
  try {
    forward_soft_evidence(raw, SoftEvidence::ones(1, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPrepared);
  }
}

TEST(ConditionalSample, RespectsHardEvidence) {
  Circuit c = test::small_random(6, 3, 8);
  SoftEvidence ev(6, 3);
  ev.set_hard(1, 2);
  ev.set_hard(4, 0);
  Dataset s = conditional_sample(c, ev, 42, 200);
  for (std::size_t i = 0; i < s.num_samples; ++i) {
    EXPECT_EQ(s.row(i)[1], 2);
    EXPECT_EQ(s.row(i)[4], 0);
  }
}

TEST(ConditionalSample, FrequenciesMatchPosteriorMarginals) {
  Circuit c = test::small_random(4, 2, 31);
  auto ev = random_soft_evidence(4, 2, 5);
  auto exact = oracle::oracle_soft_evidence_marginals(c, ev);
  const std::size_t n = 20000;
  Dataset s = conditional_sample(c, ev, 77, n);
  for (std::size_t v = 0; v < 4; ++v) {
    double ones = 0.0;
    for (std::size_t i = 0; i < n; ++i) ones += s.row(i)[v];
    double p = exact.marginals(v, 1);
    double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    EXPECT_NEAR(ones / static_cast<double>(n), p, 4.0 * sigma + 1e-12) << v;
  }
}

TEST(ConditionalSample, IsDeterministicInSeed) {
  Circuit c = test::small_random(5, 2, 3);
  auto ev = random_soft_evidence(5, 2, 1);
  EXPECT_EQ(conditional_sample(c, ev, 9, 50).values, conditional_sample(c, ev, 9, 50).values);
  EXPECT_NE(conditional_sample(c, ev, 9, 50).values, conditional_sample(c, ev, 10, 50).values);
}

TEST(MarginalsCsv, HeaderAndRows) {
  Distributions d(1, 2);
  d(0, 0) = 0.25;
  d(0, 1) = 0.75;
  std::ostringstream os;
  write_marginals_csv(os, d);
  EXPECT_EQ(os.str(), "variable,category,probability\n0,0,0.25\n0,1,0.75\n");
}
