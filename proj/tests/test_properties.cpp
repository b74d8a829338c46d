#include "support.hpp"

#include "bform/formation_analysis.hpp"
#include "bform/graph.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace bform;

namespace {

struct Case {
  FormationGraph g;
  Vec p;
};

std::vector<Case> random_cases(std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::vector<Case> out;
  for (int k = 0; k < count; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 8)(rng);
    const int d = std::uniform_int_distribution<int>(2, 3)(rng);
    FormationGraph g = test::random_connected_graph(rng, n, d);
    out.push_back({g, test::spread_configuration(rng, n, d)});
  }
  return out;
}

}  // namespace

TEST(Properties, LaplacianRankOnConnectedGraphs) {
  for (const auto& c : random_cases(101, 200)) {
    const int n = c.g.vertex_count(), d = c.g.dimension();
    const Mat L = laplacian(c.g);
    ASSERT_EQ(numerical_rank(L), d * n - d);
    ASSERT_TRUE(L.isApprox(incidence(c.g).H_bar.transpose() * incidence(c.g).H_bar));
  }
}

TEST(Properties, BearingLaplacianAnnihilatesConfiguration) {
  for (const auto& c : random_cases(202, 200)) {
    const int n = c.g.vertex_count(), d = c.g.dimension();
    const Mat LB = bearing_laplacian(bearings(c.p, c.g), c.g);
    ASSERT_LT((LB * c.p).norm(), 1e-9 * c.p.norm());
    ASSERT_LE(numerical_rank(LB), d * n - d - 1);
    ASSERT_TRUE((LB * translation_basis(n, d)).isZero(1e-12));
    ASSERT_TRUE(LB.isApprox(LB.transpose()));
    ASSERT_GT(min_eigenvalue(LB), -1e-12);
  }
}

TEST(Properties, MeasuredBearingsAreUnit) {
  for (const auto& c : random_cases(303, 100)) {
    const auto s = bearings(c.p, c.g);
    for (int k = 0; k < c.g.edge_count(); ++k) ASSERT_NEAR(s.at(k).norm(), 1.0, 1e-12);
  }
}

TEST(Properties, PseudoLaplacianDominatesBearingLaplacian) {
  std::mt19937_64 rng(404);
  for (const auto& c : random_cases(404, 150)) {
    std::set<int> pe;
    for (int k = 0; k < c.g.edge_count(); ++k)
      if (std::bernoulli_distribution(0.5)(rng)) pe.insert(k);
    const auto s = bearings(c.p, c.g);
    const Mat gap = pseudo_bearing_laplacian(c.g, pe, s) - bearing_laplacian(s, c.g);
    ASSERT_GT(min_eigenvalue(symmetrized(gap)), -1e-12);
    ASSERT_TRUE((laplacian(c.g) - pseudo_bearing_laplacian(c.g, pe, s)).eval().isApprox(
        (laplacian(c.g) - pseudo_bearing_laplacian(c.g, pe, s)).transpose()));
    ASSERT_GT(min_eigenvalue(symmetrized(laplacian(c.g) - pseudo_bearing_laplacian(c.g, pe, s))), -1e-12);
  }
}

TEST(Properties, BpeVerdictImpliesConnectedAndAboveThreshold) {
  std::mt19937_64 rng(505);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 5)(rng);
    const FormationGraph g = test::random_connected_graph(rng, n, 2);
    const Vec anchors = test::spread_configuration(rng, n, 2, 1.5);
    const CircularReference ref(anchors, 2, 0.3, 2 * std::numbers::pi);
    std::vector<BearingSnapshot> trace;
    for (int k = 0; k <= 2000; ++k) trace.push_back(bearings(ref.sample(k * 1e-3).p, g, k * 1e-3));
    const PEReport rep = bpe_check(trace, g, 1.0);
    for (double mu : rep.edge_levels) ASSERT_GE(mu, 0.0);
    ASSERT_GE(rep.formation_level, 0.0);
    if (rep.bpe) {
      ASSERT_TRUE(rep.connected);
      ASSERT_GT(rep.formation_level, rep.threshold);
    }
  }
}

TEST(Properties, PseudoLaplacianWithLeaderInvertibleWhenBoundMet) {
  // Every edge PE: the pseudo bearing Laplacian is L itself, and L + C1 is
  // invertible for any connected graph.
  for (const auto& c : random_cases(606, 100)) {
    std::set<int> all;
    for (int k = 0; k < c.g.edge_count(); ++k) all.insert(k);
    const int n = c.g.vertex_count(), d = c.g.dimension();
    const Mat A = pseudo_bearing_laplacian(c.g, all, bearings(c.p, c.g)) + leader_selector(n, d, n - 1);
    ASSERT_EQ(numerical_rank(A), n * d);
  }
}
