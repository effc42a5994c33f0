#include "must/community.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace must;
using namespace must::testkit;

namespace {
bool same_grouping(const Partition& a, const Partition& b, const std::vector<int>& perm) {
  const int n = a.node_count();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const bool together_a = a.assignment[static_cast<std::size_t>(i)] == a.assignment[static_cast<std::size_t>(j)];
      const bool together_b = b.assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] ==
                              b.assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
      if (together_a != together_b) return false;
    }
  return true;
}
}  // namespace

TEST(Modularity, Examples) {
  Gen g(1);
  const Matrix m = random_weights(g, 10, 0.4);
  EXPECT_NEAR(modularity(m, Partition::from_labels(std::vector<int>(10, 0))), 0.0, 1e-12);

  Matrix split = two_cliques(0.0);
  EXPECT_NEAR(modularity(split, Partition::from_labels({0, 0, 0, 0, 1, 1, 1, 1})), 0.5, 1e-12);
  EXPECT_EQ(modularity(Matrix::Zero(5, 5), Partition::singletons(5)), 0.0);
}

TEST(Modularity, StaysInRange) {
  Gen g(2);
  for (int it = 0; it < 100; ++it) {
    const int n = uniform_int(g, 2, 12);
    const Matrix m = random_weights(g, n, uniform(g));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = uniform_int(g, 0, 3);
    const double q = modularity(m, Partition::from_labels(labels));
    EXPECT_GE(q, -0.5 - 1e-12);
    EXPECT_LE(q, 1.0 + 1e-12);
  }
}

TEST(Louvain, RecoversTwoCliquesMatchingBruteForce) {
  const Matrix m = two_cliques(0.1);
  double best = -1.0;
  std::vector<int> best_labels;
  int count = 0;
  for_each_partition(8, [&](const std::vector<int>& l) {
    ++count;
    const double q = modularity(m, Partition::from_labels(l));
    if (q > best + 1e-12) {
      best = q;
      best_labels = l;
    }
  });
  ASSERT_EQ(count, 4140);  // Bell number B8
  const Partition expected = Partition::from_labels(best_labels);
  EXPECT_EQ(expected, Partition::from_labels({0, 0, 0, 0, 1, 1, 1, 1}));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Partition p = louvain(m, seed);
    EXPECT_EQ(p, expected) << "seed " << seed;
    EXPECT_NEAR(modularity(m, p), best, 1e-12);
  }
}

TEST(Louvain, EdgelessGraphGivesSingletons) {
  EXPECT_EQ(louvain(Matrix::Zero(6, 6), 3), Partition::singletons(6));
}

TEST(Louvain, IsolatedNodesStaySingletons) {
  Matrix m = two_cliques(0.1);
  Matrix big = Matrix::Zero(10, 10);
  big.topLeftCorner(8, 8) = m;
  const Partition p = louvain(big, 5);
  EXPECT_EQ(p.communities[static_cast<std::size_t>(p.assignment[8])].size(), 1u);
  EXPECT_EQ(p.communities[static_cast<std::size_t>(p.assignment[9])].size(), 1u);
}

TEST(Louvain, PassModularityNonDecreasingOnRandomGraphs) {
  Gen g(3);
  for (int it = 0; it < 100; ++it) {
    const int n = uniform_int(g, 2, 40);
    const Matrix m = random_weights(g, n, uniform(g, 0.02, 0.5));
    const LouvainResult r = louvain_trace(m, static_cast<std::uint64_t>(it));
    ASSERT_TRUE(r.partition.valid());
    for (std::size_t k = 1; k < r.pass_modularity.size(); ++k)
      EXPECT_GE(r.pass_modularity[k], r.pass_modularity[k - 1] - 1e-12) << "graph " << it << " pass " << k;
    EXPECT_GE(modularity(m, r.partition), modularity(m, Partition::singletons(n)) - 1e-12);
    EXPECT_NEAR(modularity(m, r.partition), r.pass_modularity.back(), 1e-12);
  }
}

TEST(Louvain, DenseIdsAndDeterminism) {
  Gen g(4);
  for (int it = 0; it < 30; ++it) {
    const Matrix m = random_weights(g, 25, 0.15);
    const Partition a = louvain(m, 99), b = louvain(m, 99);
    EXPECT_EQ(a, b);
    for (std::size_t c = 0; c < a.communities.size(); ++c) EXPECT_FALSE(a.communities[c].empty());
    for (int id : a.assignment) EXPECT_LT(id, a.size());
  }
}

TEST(Louvain, PermutationConsistency) {
  Gen g(5);
  for (int it = 0; it < 50; ++it) {
    const int n = uniform_int(g, 3, 30);
    const Matrix m = random_weights(g, n, uniform(g, 0.05, 0.4));
    std::vector<int> perm = louvain_visit_order(n, static_cast<std::uint64_t>(1000 + it));
    Matrix mp(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) mp(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) = m(i, j);
    const std::vector<int> order = louvain_visit_order(n, static_cast<std::uint64_t>(it));
    std::vector<int> order_p(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) order_p[k] = perm[static_cast<std::size_t>(order[k])];
    const Partition a = louvain_ordered(m, order).partition;
    const Partition b = louvain_ordered(mp, order_p).partition;
    EXPECT_TRUE(same_grouping(a, b, perm)) << "graph " << it;
  }
}

TEST(Partition, FromLabelsIsDenseByFirstAppearance) {
  const Partition p = Partition::from_labels({7, 3, 7, 9});
  EXPECT_EQ(p.assignment, (std::vector<int>{0, 1, 0, 2}));
  EXPECT_TRUE(p.valid());
  EXPECT_EQ(p.size(), 3);
}
