#include <cmath>

#include <gtest/gtest.h>

#include "gkc/kernels.hpp"
#include "test_support.hpp"

using namespace gkc;
using namespace gkc::testing;

namespace {
const double kK3P3Normalized = 12.0 / std::sqrt(18.0 * 14.0);
}

TEST(WlRefine, TriangleSharesOneColor) {
    auto c = wl_refine(cycle(3), 1);
    const auto& it1 = c.colors_per_iteration[1];
    EXPECT_EQ(it1[0], it1[1]);
    EXPECT_EQ(it1[1], it1[2]);
}

TEST(WlRefine, PathCenterDiffersFromEnds) {
    auto c = wl_refine(path(3), 1);
    const auto& it1 = c.colors_per_iteration[1];
    EXPECT_EQ(it1[0], it1[2]);
    EXPECT_NE(it1[0], it1[1]);
}

TEST(WlRefine, IterationZeroIsLabelsAndRefinementNeverMerges) {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        auto g = random_graph(rng, 1 + uniform_index(rng, 12), 0.3, 3);
        auto c = wl_refine(g, 4);
        for (NodeId u = 0; u < g.num_nodes(); ++u)
            for (NodeId v = 0; v < g.num_nodes(); ++v) {
                ASSERT_EQ(c.colors_per_iteration[0][u] == c.colors_per_iteration[0][v], g.label(u) == g.label(v));
                for (std::size_t t = 0; t < 4; ++t)
                    if (c.colors_per_iteration[t][u] != c.colors_per_iteration[t][v]) {
                        ASSERT_NE(c.colors_per_iteration[t + 1][u], c.colors_per_iteration[t + 1][v]);
                    }
            }
    }
}

TEST(WlRefine, TwoTrianglesAndHexagonHaveIdenticalHistograms) {
    ColorTable table;
    auto a = wl_refine(two_triangles(), 5, table);
    auto b = wl_refine(cycle(6), 5, table);
    for (std::size_t t = 0; t <= 5; ++t) {
        auto ha = a.colors_per_iteration[t], hb = b.colors_per_iteration[t];
        std::sort(ha.begin(), ha.end());
        std::sort(hb.begin(), hb.end());
        EXPECT_EQ(ha, hb);
    }
}

TEST(WlKernel, HandComputedValues) {
    EXPECT_EQ(wl_subtree_kernel(path(2), path(2), 1), 8.0);
    EXPECT_EQ(wl_subtree_kernel(cycle(3), path(3), 1), 12.0);
    EXPECT_EQ(wl_subtree_kernel(cycle(3, 0), path(3, 1), 1), 0.0);
    EXPECT_EQ(wl_subtree_kernel(cycle(3), cycle(3), 1), 18.0);
    EXPECT_EQ(wl_subtree_kernel(path(3), path(3), 1), 14.0);
}

TEST(WlKernel, MatchesStringHistogramOracle) {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_graph(rng, 1 + uniform_index(rng, 8), 0.4, 1 + uniform_index(rng, 3));
        auto b = random_graph(rng, 1 + uniform_index(rng, 8), 0.4, 1 + uniform_index(rng, 3));
        std::size_t h = 1 + uniform_index(rng, 3);
        ASSERT_EQ(wl_subtree_kernel(a, b, h), wl_kernel_oracle(a, b, h));
    }
}

TEST(Graphlet3, Examples) {
    EXPECT_EQ(graphlet3_kernel(cycle(3), cycle(3)), 1.0);
    EXPECT_EQ(graphlet3_kernel(cycle(3), path(3)), 0.0);
    EXPECT_EQ(graphlet3_kernel(path(2), cycle(3)), 0.0);
    EXPECT_EQ(graphlet3_kernel(LabeledGraph({0}, {}), path(5)), 0.0);
}

TEST(Graphlet3, CountsMatchTripleEnumeration) {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = random_graph(rng, uniform_index(rng, 14), 0.35, 2);
        auto c = count_graphlets3(g);
        auto [tri, paths] = graphlet3_oracle(g);
        ASSERT_EQ(static_cast<long>(c.triangles), tri);
        ASSERT_EQ(static_cast<long>(c.paths), paths);
    }
}

TEST(KernelEval, Normalization) {
    KernelConfig wl{KernelKind::wl_subtree, 1, true};
    EXPECT_NEAR(kernel_eval(wl, cycle(3), path(3)), kK3P3Normalized, 1e-15);
    EXPECT_NEAR(kernel_eval(wl, cycle(5), cycle(5)), 1.0, 1e-12);
    KernelConfig gl{KernelKind::graphlet3, 0, true};
    EXPECT_NEAR(kernel_eval(gl, cycle(4), cycle(4)), 1.0, 1e-12);
    // no 3-node subgraphs: self-kernel 0 so the normalised value is 0
    EXPECT_EQ(kernel_eval(gl, path(2), cycle(3)), 0.0);
    EXPECT_EQ(kernel_eval(wl, LabeledGraph(), cycle(3)), 0.0);
}

TEST(KernelEval, SymmetricPermutationInvariantBounded) {
    Rng rng(17);
    for (auto kind : {KernelKind::wl_subtree, KernelKind::graphlet3})
        for (bool normalized : {false, true}) {
            KernelConfig cfg{kind, 3, normalized};
            for (int trial = 0; trial < 40; ++trial) {
                auto n = 1 + uniform_index(rng, 10);
                auto a = random_graph(rng, n, 0.35, 3);
                auto b = random_graph(rng, 1 + uniform_index(rng, 10), 0.35, 3);
                double ab = kernel_eval(cfg, a, b);
                ASSERT_EQ(ab, kernel_eval(cfg, b, a));
                ASSERT_EQ(ab, kernel_eval(cfg, permute(a, random_permutation(rng, n)), b));
                ASSERT_GE(ab, 0.0);
                if (normalized) {
                    ASSERT_LE(ab, 1.0 + 1e-12);
                }
            }
        }
}

TEST(KernelEval, GramMatrixIsPositiveSemidefinite) {
    Rng rng(23);
    std::vector<LabeledGraph> graphs;
    for (int i = 0; i < 10; ++i) graphs.push_back(random_graph(rng, 2 + uniform_index(rng, 8), 0.4, 3));
    for (auto kind : {KernelKind::wl_subtree, KernelKind::graphlet3}) {
        auto gram = gram_matrix({kind, 3, true}, graphs);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
    }
}

TEST(WlIndistinguishable, Examples) {
    EXPECT_TRUE(wl_indistinguishable(two_triangles(), cycle(6)));
    EXPECT_FALSE(wl_indistinguishable(cycle(3), path(3)));
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        auto g = random_graph(rng, 1 + uniform_index(rng, 10), 0.3, 2);
        EXPECT_TRUE(wl_indistinguishable(g, g));
        EXPECT_TRUE(wl_indistinguishable(g, permute(g, random_permutation(rng, g.num_nodes()))));
    }
}
