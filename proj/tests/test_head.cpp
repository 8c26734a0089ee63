#include <cmath>

#include <gtest/gtest.h>

#include "gkc/head.hpp"
#include "test_support.hpp"

using namespace gkc;
using gkc::testing::head_gradient_error;
using gkc::testing::random_head_instance;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

MlpParams zero_mlp(std::size_t in, std::size_t hidden, std::size_t classes) {
    auto rng = make_rng(0, "mlp");
    auto p = MlpParams::init(in, hidden, classes, Activation::relu, rng);
    p.w1.setZero();
    p.w2.setZero();
    return p;
}

} // namespace

TEST(Pooling, Examples) {
    NodeFeatures one(1, 3);
    one << 1, 2, 3;
    EXPECT_EQ(pool_sum(one), vec({1, 2, 3}));
    NodeFeatures twice(2, 2);
    twice << 1.5, -2, 1.5, -2;
    EXPECT_EQ(pool_sum(twice), vec({3, -4}));
    NodeFeatures a(3, 2), b(3, 2);
    a << 1, 2, 3, 4, 5, 6;
    b << 5, 6, 1, 2, 3, 4;
    EXPECT_EQ(pool_sum(a), pool_sum(b));
    EXPECT_THROW(pool_sum(NodeFeatures(0, 2)), InputError);
}

TEST(Mlp, ForwardExamples) {
    auto p = zero_mlp(3, 4, 2);
    EXPECT_EQ(mlp_forward(p, vec({1, 2, 3})), Eigen::VectorXd::Zero(2));

    auto id = zero_mlp(2, 2, 2);
    id.w1.setIdentity();
    id.w2.setIdentity();
    EXPECT_EQ(mlp_forward(id, vec({0.5, 3})), vec({0.5, 3}));

    const auto s = softmax(vec({0.7, 0.7}));
    EXPECT_DOUBLE_EQ(s(0), 0.5);
    EXPECT_DOUBLE_EQ(s(1), 0.5);
    EXPECT_THROW(mlp_forward(p, vec({1, 2})), InputError);
}

TEST(Mlp, SigmoidActivation) {
    auto p = zero_mlp(1, 1, 1);
    p.activation = Activation::sigmoid;
    p.w2.setOnes();
    EXPECT_DOUBLE_EQ(mlp_forward(p, vec({5}))(0), 0.5);
    EXPECT_EQ(parse_activation("sigmoid"), Activation::sigmoid);
    EXPECT_THROW(parse_activation("tanh"), InputError);
}

TEST(CrossEntropy, Examples) {
    EXPECT_NEAR(cross_entropy(vec({0, 0}), 0), std::log(2.0), 1e-15);
    EXPECT_NEAR(cross_entropy(vec({1000, -1000}), 0), 0.0, 1e-12);
    EXPECT_NEAR(cross_entropy(vec({1000, -1000}), 1), 2000.0, 1e-9);
    EXPECT_THROW(cross_entropy(vec({0, 0}), 2), InputError);
    auto rng = make_rng(3, "synth");
    for (int t = 0; t < 100; ++t) {
        const auto z = vec({uniform01(rng) * 20 - 10, uniform01(rng) * 20 - 10, uniform01(rng) * 20 - 10});
        EXPECT_GE(cross_entropy(z, uniform_index(rng, 3)), 0.0);
    }
}

TEST(Predict, EqualLogitsPickClassZero) {
    EXPECT_EQ(predict(vec({1, 1})), 0u);
    EXPECT_EQ(predict(vec({0, 2, 2})), 1u);
    EXPECT_EQ(predict(vec({-1, 3, 2})), 1u);
}

TEST(Jsd, Examples) {
    NodeFeatures same(2, 2);
    same << 1, 1, 1, 1;
    EXPECT_NEAR(jsd_loss(same), std::log(2.0), 1e-15);
    NodeFeatures disjoint(2, 2);
    disjoint << 1, 0, 0, 1;
    EXPECT_NEAR(jsd_loss(disjoint), -std::log(2.0), 1e-15);
    NodeFeatures single(4, 1);
    single << 0.1, 0.7, 0.3, 2;
    EXPECT_NEAR(jsd_loss(single), 0.0, 1e-15);
}

TEST(Jsd, ZeroColumnIsUniform) {
    NodeFeatures x(2, 2);
    x << 0, 3, 0, 3;
    EXPECT_NEAR(jsd_loss(x), std::log(2.0), 1e-15);
    const auto g = jsd_gradient(x);
    EXPECT_EQ(g.col(0), Eigen::VectorXd::Zero(2));
}

TEST(Jsd, DuplicatingColumnsNeverDecreasesLoss) {
    auto rng = make_rng(11, "synth");
    for (int trial = 0; trial < 100; ++trial) {
        NodeFeatures x(10, 4);
        for (Eigen::Index v = 0; v < 10; ++v)
            for (Eigen::Index i = 0; i < 4; ++i) x(v, i) = uniform01(rng);
        const auto i = static_cast<Eigen::Index>(uniform_index(rng, 4));
        auto j = static_cast<Eigen::Index>(uniform_index(rng, 3));
        if (j >= i) ++j;
        const double base = jsd_loss(x);
        // both columns become the mean of their node distributions: the
        // mixture is unchanged and entropy is concave
        NodeFeatures dup = x;
        dup.col(i) = dup.col(j) = 0.5 * (x.col(i) / x.col(i).sum() + x.col(j) / x.col(j).sum());
        EXPECT_GE(jsd_loss(dup), base - 1e-12);
    }
}

TEST(Backward, MatchesFiniteDifferences) {
    auto rng = make_rng(5, "synth");
    for (int t = 0; t < 20; ++t) {
        const auto act = t % 2 ? Activation::sigmoid : Activation::relu;
        const auto inst = random_head_instance(rng, act);
        EXPECT_LT(head_gradient_error(inst, 0.0), 1e-4) << "instance " << t;
        EXPECT_LT(head_gradient_error(inst, 1e-4), 1e-4) << "instance " << t;
        EXPECT_LT(head_gradient_error(inst, 0.5), 1e-4) << "instance " << t;
    }
}

TEST(Backward, ZeroOutputWeightsStopTheSignal) {
    auto rng = make_rng(6, "synth");
    auto inst = random_head_instance(rng, Activation::relu);
    inst.mlp.w2.setZero();
    const auto r = backward(inst.mlp, inst.batch(), inst.blocks, 0.0);
    for (const auto& g : r.feature_grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.mlp.w1.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, DuplicatedColumnsGetIdenticalGradients) {
    auto rng = make_rng(7, "synth");
    auto inst = random_head_instance(rng, Activation::relu);
    NodeFeatures x(4, 3);
    x << 0.2, 0.5, 0.2, 0.9, 0.1, 0.9, 0.4, 0.4, 0.4, 0.3, 0.8, 0.3;
    inst.mlp = MlpParams::init(3, 4, 2, Activation::relu, rng);
    inst.mlp.w1.col(2) = inst.mlp.w1.col(0);
    inst.features = {x};
    inst.labels = {1};
    inst.blocks = {{0, 3}};
    const auto r = backward(inst.mlp, inst.batch(), inst.blocks, 0.3);
    EXPECT_LT((r.feature_grads[0].col(0) - r.feature_grads[0].col(2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, TotalIsCrossEntropyPlusWeightedJsd) {
    auto rng = make_rng(8, "synth");
    const auto inst = random_head_instance(rng, Activation::relu);
    const auto r = backward(inst.mlp, inst.batch(), inst.blocks, 1e-2);
    EXPECT_EQ(r.loss.total, r.loss.cross_entropy + 1e-2 * r.loss.jsd);
    EXPECT_GE(r.loss.cross_entropy, 0.0);
}

TEST(Backward, PermutingNodesPermutesGradients) {
    auto rng = make_rng(9, "synth");
    auto inst = random_head_instance(rng, Activation::relu);
    inst.features.resize(1);
    inst.labels.resize(1);
    const auto r = backward(inst.mlp, inst.batch(), inst.blocks, 1e-4);
    const auto n = inst.features[0].rows();
    Eigen::VectorXi perm(n);
    for (Eigen::Index i = 0; i < n; ++i) perm(i) = static_cast<int>((i + 1) % n);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(perm);
    auto permuted = inst;
    permuted.features[0] = p * inst.features[0];
    const auto q = backward(permuted.mlp, permuted.batch(), permuted.blocks, 1e-4);
    EXPECT_NEAR(q.loss.total, r.loss.total, 1e-12);
    EXPECT_LT((q.feature_grads[0] - p * r.feature_grads[0]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Eigen::VectorXd w = vec({1, -2, 3});
    AdamState s;
    s.apply(w, Eigen::VectorXd::Zero(3), AdamHyper{});
    EXPECT_EQ(w, vec({1, -2, 3}));
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
    Eigen::VectorXd w = vec({0, 0});
    AdamState s;
    const AdamHyper h{0.001};
    s.apply(w, vec({0.37, -42}), h);
    // bias-corrected moments are g and g^2, so the step is lr * g / (|g| + eps)
    EXPECT_NEAR(w(0), -0.001 * 0.37 / (0.37 + 1e-8), 1e-15);
    EXPECT_NEAR(w(1), 0.001 * 42 / (42 + 1e-8), 1e-15);
}

TEST(Adam, RepeatedGradientStepApproachesLearningRate) {
    Eigen::VectorXd w = vec({0});
    AdamState s;
    const AdamHyper h{0.01};
    double prev = 0.0, step = 0.0;
    for (int i = 0; i < 500; ++i) {
        s.apply(w, vec({2.5}), h);
        step = prev - w(0);
        prev = w(0);
    }
    EXPECT_NEAR(step, 0.01, 1e-8);
}

TEST(MlpUpdate, ShapeMismatchIsRejected) {
    auto p = zero_mlp(3, 2, 2);
    auto g = MlpGradients::zeros_like(zero_mlp(4, 2, 2));
    EXPECT_THROW(mlp_update(p, g, AdamHyper{}), InputError);
    const auto before = p.w1;
    mlp_update(p, MlpGradients::zeros_like(p), AdamHyper{});
    EXPECT_EQ(p.w1, before);
}
