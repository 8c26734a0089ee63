#include <gtest/gtest.h>

#include "gkc/quantizer.hpp"

using namespace gkc;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> xs) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) m(i++, 0) = x;
    return m;
}

Eigen::MatrixXd random_points(Rng& rng, Eigen::Index n, Eigen::Index dim) {
    Eigen::MatrixXd m(n, dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = uniform01(rng);
    return m;
}

} // namespace

TEST(Quantizer, SeparatedClustersFindBothCentres) {
    Codebook cb(2);
    auto rng = make_rng(0, "kmeans");
    fit_update(cb, column({0, 0, 0, 10, 10, 10}), rng);
    ASSERT_TRUE(cb.initialized);
    std::vector<double> c{cb.centroids(0, 0), cb.centroids(1, 0)};
    std::sort(c.begin(), c.end());
    EXPECT_DOUBLE_EQ(c[0], 0.0);
    EXPECT_DOUBLE_EQ(c[1], 10.0);
    EXPECT_FALSE(cb.degenerate);
}

TEST(Quantizer, IdenticalSecondBatchDoesNotMove) {
    Codebook cb(3);
    auto rng = make_rng(1, "kmeans");
    const auto x = random_points(rng, 40, 2);
    fit_update(cb, x, rng);
    fit_update(cb, x, rng);
    EXPECT_EQ(cb.last_displacement, 0.0);
}

TEST(Quantizer, SingleClusterIsTheMean) {
    Codebook cb(1);
    auto rng = make_rng(2, "kmeans");
    const auto x = random_points(rng, 17, 3);
    fit_update(cb, x, rng);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    EXPECT_LT((cb.centroids.row(0) - mean).norm(), 1e-12);
}

TEST(Quantizer, FirstBatchSmallerThanKIsRejected) {
    Codebook cb(4);
    auto rng = make_rng(0, "kmeans");
    EXPECT_THROW(fit_update(cb, column({1, 2, 3}), rng), InputError);
    EXPECT_THROW(Codebook(0), InputError);
}

TEST(Quantizer, AssignExamples) {
    Codebook cb(3);
    cb.centroids = column({0, 2, 4});
    cb.initialized = true;
    EXPECT_EQ(assign(cb, column({4})), std::vector<Label>{2});
    EXPECT_EQ(assign(cb, column({1})), std::vector<Label>{0}); // tie between 0 and 1
    EXPECT_TRUE(assign(cb, Eigen::MatrixXd(0, 1)).empty());
    EXPECT_THROW(assign(Codebook(2), column({1})), StateError);
    EXPECT_THROW(assign(cb, Eigen::MatrixXd::Zero(1, 2)), InputError);
}

TEST(Quantizer, InertiaNeverIncreasesAcrossLloydIterations) {
    auto rng = make_rng(99, "kmeans");
    for (int trial = 0; trial < 30; ++trial) {
        Codebook cb(5);
        const auto x = random_points(rng, 80, 2);
        std::vector<double> trace;
        fit_update(cb, x, rng, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
        const auto y = random_points(rng, 25, 2);
        trace.clear();
        fit_update(cb, y, rng, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
    }
}

TEST(Quantizer, KStaysFixedAndClustersStayPopulated) {
    // duplicated points force empty clusters at seeding; they are re-seeded
    Codebook cb(3);
    auto rng = make_rng(4, "kmeans");
    fit_update(cb, column({0, 0, 0, 0, 5, 9}), rng);
    EXPECT_EQ(cb.centroids.rows(), 3);
    const auto labels = assign(cb, column({0, 0, 0, 0, 5, 9}));
    std::vector<int> used(3, 0);
    for (auto l : labels) used[l] = 1;
    EXPECT_EQ(used, (std::vector<int>{1, 1, 1}));
}

TEST(Quantizer, WarmStartKeepsClusterIdentity) {
    Codebook cb(2);
    auto rng = make_rng(5, "kmeans");
    fit_update(cb, column({0, 0.1, 10, 10.1}), rng);
    const auto before = assign(cb, column({0, 10}));
    fit_update(cb, column({0.2, 9.9}), rng);
    EXPECT_EQ(assign(cb, column({0, 10})), before);
    EXPECT_GT(cb.last_displacement, 0.0);
    EXPECT_LT(cb.last_displacement, 0.05);
}

TEST(Quantizer, DimensionMismatchOnLaterBatch) {
    Codebook cb(2);
    auto rng = make_rng(6, "kmeans");
    fit_update(cb, column({0, 1, 2}), rng);
    EXPECT_THROW(fit_update(cb, Eigen::MatrixXd::Zero(3, 2), rng), InputError);
}

TEST(Quantizer, DeterministicForSeed) {
    auto run = [] {
        Codebook cb(4);
        auto rng = make_rng(7, "kmeans");
        auto data_rng = make_rng(7, "synth");
        fit_update(cb, random_points(data_rng, 50, 3), rng);
        fit_update(cb, random_points(data_rng, 50, 3), rng);
        return cb.centroids;
    };
    EXPECT_EQ(run(), run());
}
