#include <gtest/gtest.h>

#include <cmath>

#include "pcg/pcg.hpp"
#include "pcg/testkit/oracle.hpp"
#include "pcg/testkit/oracle_latent.hpp"
#include "support.hpp"

using namespace pcg;

TEST(Enumerate, UniformFactorizedIsFlat) {
  auto table = oracle::enumerate_distribution(test::uniform_factorized(4, 2));
  ASSERT_EQ(table.size(), 16u);
  for (auto p : table) EXPECT_EQ(p, 1.0L / 16.0L);
}

TEST(Enumerate, RandomCircuitsAreNormalized) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto table = oracle::enumerate_distribution(test::small_random(3 + seed % 4, 2 + seed % 2, seed));
    EXPECT_NEAR(static_cast<double>(oracle::table_total(table)), 1.0, 1e-14);
  }
}

TEST(Enumerate, HandComputedMixtureTable) {
  auto table = oracle::enumerate_distribution(test::two_component_mixture());
  // index = x0 + 2 * x1
  EXPECT_NEAR(static_cast<double>(table[1]), 0.179, 1e-15);
  EXPECT_NEAR(static_cast<double>(table[2]), 0.339, 1e-15);
}

TEST(Enumerate, DecodeIndexIsLittleEndian) {
  std::vector<Category> x(3);
  oracle::decode_index(5, 3, x);  // 5 = 2 + 1 * 3
  EXPECT_EQ(x, (std::vector<Category>{2, 1, 0}));
}

TEST(Budget, LargeProblemsAreRefused) {
  try {
    oracle::state_count(21, 2, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
  EXPECT_EQ(oracle::state_count(20, 2, {}), std::uint64_t{1} << 20);
  EXPECT_THROW(oracle::enumerate_distribution(test::uniform_factorized(30, 2)), Error);
}

TEST(Budget, LatentOracleRefusesLargeGrids) {
  PatchCodebook cb{1, 1, 16, 16, 2, 2, {-1.0, 1.0}};
  try {
    oracle::oracle_eq6(cb, test::uniform_factorized(256, 2), SoftEvidence::ones(256, 2), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(EdgeFlowOracle, RootEdgesSumToOne) {
  Circuit c = test::two_component_mixture();
  std::vector<Category> x{1, 0};
  long double total = 0.0L;
  for (std::size_t e = c.edge_begin(c.root()); e < c.edge_end(c.root()); ++e) total += oracle::oracle_edge_flow(c, x, e);
  EXPECT_NEAR(static_cast<double>(total), 1.0, 1e-15);
  // Component 1 share: 0.3 * 0.8 * 0.6 / 0.179.
  EXPECT_NEAR(static_cast<double>(oracle::oracle_edge_flow(c, x, c.edge_begin(c.root()))), 0.144 / 0.179, 1e-15);
}

TEST(Eq6Oracle, HardEvidenceAndZeroTemperatureReproducesEncodeDecode) {
  PatchCodebook cb{1, 2, 2, 2, 4, 2, {-1, -1, -1, 1, 1, -1, 1, 1}};
  std::vector<Category> image{0, 1, 1, 1, 0, 0, 1, 0};
  auto res = oracle::oracle_eq6(cb, test::uniform_factorized(4, 4), SoftEvidence::hard_sample(image, 2), 0.0);
  for (std::size_t p = 0; p < 8; ++p) EXPECT_EQ(res.pixels(p, image[p]), 1.0);
  auto codes = encode(cb, image);
  for (std::size_t cell = 0; cell < 4; ++cell)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(res.latent_weights[cell * 4 + k], k == codes[cell] ? 1.0L : 0.0L);
}

TEST(Eq6Oracle, LatentWeightsAreDistributions) {
  PatchCodebook cb{1, 2, 2, 1, 3, 3, {-1, -1, 0, 0.5, 1, 1}};
  auto res = oracle::oracle_eq6(cb, test::uniform_factorized(2, 3), random_soft_evidence(4, 3, 2), 0.4);
  for (std::size_t cell = 0; cell < 2; ++cell) {
    long double total = 0.0L;
    for (std::size_t k = 0; k < 3; ++k) total += res.latent_weights[cell * 3 + k];
    EXPECT_NEAR(static_cast<double>(total), 1.0, 1e-15);
  }
  for (std::size_t p = 0; p < 4; ++p) {
    double total = 0.0;
    for (double v : res.pixels.row(p)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-15);
  }
}
