#ifndef GKC_HEAD_HPP
#define GKC_HEAD_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gkc/adam.hpp"
#include "gkc/error.hpp"
#include "gkc/rng.hpp"

namespace gkc {

/// Per-node kernel responses of one graph: row v holds x(v).
using NodeFeatures = Eigen::MatrixXd;

enum class Activation { relu, sigmoid };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "sigmoid"; }

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw InputError("unknown activation '" + s + "'");
}

/// Two-layer classifier: logits = W2 act(W1 z + b1) + b2.
struct MlpParams {
    Eigen::MatrixXd w1; // hidden x input
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2; // classes x hidden
    Eigen::VectorXd b2;
    Activation activation = Activation::relu;
    AdamState adam_w1, adam_b1, adam_w2, adam_b2;

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t num_classes() const { return static_cast<std::size_t>(w2.rows()); }

    /// Glorot-uniform weights, zero biases.
    static MlpParams init(std::size_t input, std::size_t hidden, std::size_t classes, Activation act, Rng& rng) {
        MlpParams p;
        p.activation = act;
        auto fill = [&](Eigen::MatrixXd& w, std::size_t rows, std::size_t cols) {
            w.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = (2.0 * uniform01(rng) - 1.0) * a;
        };
        fill(p.w1, hidden, input);
        fill(p.w2, classes, hidden);
        p.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden));
        p.b2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes));
        return p;
    }
};

struct MlpGradients {
    Eigen::MatrixXd w1, w2;
    Eigen::VectorXd b1, b2;

    static MlpGradients zeros_like(const MlpParams& p) {
        return {Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols()), Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols()),
                Eigen::VectorXd::Zero(p.b1.size()), Eigen::VectorXd::Zero(p.b2.size())};
    }
};

struct LossReport {
    double cross_entropy = 0.0;
    double jsd = 0.0;
    double total = 0.0;
    double jsd_weight = 0.0;
};

/// Column-wise sum over nodes.
inline Eigen::VectorXd pool_sum(const NodeFeatures& x) {
    if (x.rows() == 0) throw InputError("pool_sum: graph has no nodes");
    return x.colwise().sum().transpose();
}

namespace detail {

inline Eigen::VectorXd activate(const Eigen::VectorXd& pre, Activation a) {
    if (a == Activation::relu) return pre.cwiseMax(0.0);
    return pre.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
}

inline Eigen::VectorXd activation_slope(const Eigen::VectorXd& pre, const Eigen::VectorXd& post, Activation a) {
    if (a == Activation::relu) return pre.unaryExpr([](double z) { return z > 0.0 ? 1.0 : 0.0; });
    return post.array() * (1.0 - post.array());
}

} // namespace detail

struct MlpTrace {
    Eigen::VectorXd pre;    // W1 z + b1
    Eigen::VectorXd hidden; // act(pre)
    Eigen::VectorXd logits;
};

inline MlpTrace mlp_trace(const MlpParams& p, const Eigen::VectorXd& pooled) {
    if (static_cast<std::size_t>(pooled.size()) != p.input_dim())
        throw InputError("mlp_forward: input has " + std::to_string(pooled.size()) + " entries, expected " +
                         std::to_string(p.input_dim()));
    MlpTrace t;
    t.pre = p.w1 * pooled + p.b1;
    t.hidden = detail::activate(t.pre, p.activation);
    t.logits = p.w2 * t.hidden + p.b2;
    return t;
}

inline Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& pooled) {
    return mlp_trace(p, pooled).logits;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

/// -log softmax(logits)[y] via log-sum-exp.
inline double cross_entropy(const Eigen::VectorXd& logits, std::size_t y) {
    if (y >= static_cast<std::size_t>(logits.size()))
        throw InputError("cross_entropy: class " + std::to_string(y) + " out of range");
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return lse - logits(static_cast<Eigen::Index>(y));
}

/// Index of the largest logit; equal logits resolve to the lower class.
inline std::size_t predict(const Eigen::VectorXd& logits) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits(i) > logits(best)) best = i;
    return static_cast<std::size_t>(best);
}

namespace detail {

inline constexpr double kLogFloor = 1e-12;

/// Column i normalised to a distribution over nodes; all-zero -> uniform.
inline Eigen::MatrixXd node_distributions(const NodeFeatures& x, Eigen::VectorXd* sums = nullptr) {
    Eigen::MatrixXd p(x.rows(), x.cols());
    if (sums) sums->resize(x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        const double s = x.col(i).sum();
        if (sums) (*sums)(i) = s;
        if (s > 0.0) p.col(i) = x.col(i) / s;
        else p.col(i).setConstant(1.0 / static_cast<double>(x.rows()));
    }
    return p;
}

inline double entropy(const Eigen::Ref<const Eigen::VectorXd>& p) {
    double h = 0.0;
    for (Eigen::Index v = 0; v < p.size(); ++v)
        if (p(v) > 0.0) h -= p(v) * std::log(p(v));
    return h;
}

} // namespace detail

/// -H(mean_i P_i) + sum_i H(P_i) with P_i the i-th response column normalised
/// over the nodes. Lower is more diverse.
inline double jsd_loss(const NodeFeatures& x) {
    if (x.rows() == 0 || x.cols() == 0) return 0.0;
    const auto p = detail::node_distributions(x);
    const Eigen::VectorXd mixture = p.rowwise().mean();
    double loss = -detail::entropy(mixture);
    for (Eigen::Index i = 0; i < p.cols(); ++i) loss += detail::entropy(p.col(i));
    return loss;
}

/// d jsd_loss / d x. All-zero columns get zero gradient (the uniform
/// substitute is constant); log terms are floored at 1e-12.
inline Eigen::MatrixXd jsd_gradient(const NodeFeatures& x) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    if (x.rows() == 0 || x.cols() == 0) return g;
    Eigen::VectorXd sums;
    const auto p = detail::node_distributions(x, &sums);
    const Eigen::VectorXd mixture = p.rowwise().mean();
    const Eigen::VectorXd log_q = mixture.array().max(detail::kLogFloor).log();
    const auto m = static_cast<double>(x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        if (sums(i) <= 0.0) continue;
        const Eigen::VectorXd log_p = p.col(i).array().max(detail::kLogFloor).log();
        const double h = detail::entropy(p.col(i));
        const double mean_log_q = p.col(i).dot(log_q);
        g.col(i) = ((-log_p.array() - h) + (log_q.array() - mean_log_q) / m) / sums(i);
    }
    return g;
}

/// One training example as seen by the head: node features (all layers
/// concatenated), the column blocks over which the JSD term is computed, and
/// the class.
struct HeadExample {
    const NodeFeatures* features = nullptr;
    std::size_t label = 0;
};

using ColumnBlocks = std::vector<std::pair<Eigen::Index, Eigen::Index>>; // (offset, width)

struct BackwardResult {
    MlpGradients mlp;
    std::vector<NodeFeatures> feature_grads; // d total / d x, one per example
    LossReport loss;
    std::vector<Eigen::VectorXd> logits;
};

/// Mean over the batch of CE + w * sum_blocks JSD, with exact gradients with
/// respect to all MLP parameters and every node feature.
inline BackwardResult backward(const MlpParams& p, std::span<const HeadExample> batch, const ColumnBlocks& blocks,
                               double jsd_weight) {
    BackwardResult out;
    out.mlp = MlpGradients::zeros_like(p);
    out.loss.jsd_weight = jsd_weight;
    if (batch.empty()) return out;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        const NodeFeatures& x = *ex.features;
        const Eigen::VectorXd pooled = pool_sum(x);
        const auto t = mlp_trace(p, pooled);
        const double ce = cross_entropy(t.logits, ex.label);
        Eigen::VectorXd d_logits = softmax(t.logits);
        d_logits(static_cast<Eigen::Index>(ex.label)) -= 1.0;
        d_logits *= scale;
        out.mlp.w2 += d_logits * t.hidden.transpose();
        out.mlp.b2 += d_logits;
        const Eigen::VectorXd d_hidden = p.w2.transpose() * d_logits;
        const Eigen::VectorXd d_pre =
            d_hidden.cwiseProduct(detail::activation_slope(t.pre, t.hidden, p.activation));
        out.mlp.w1 += d_pre * pooled.transpose();
        out.mlp.b1 += d_pre;
        const Eigen::VectorXd d_pooled = p.w1.transpose() * d_pre;

        // sum pooling broadcasts the pooled gradient to every node
        NodeFeatures dx = d_pooled.transpose().replicate(x.rows(), 1);
        double jsd = 0.0;
        for (auto [off, width] : blocks) {
            const NodeFeatures block = x.middleCols(off, width);
            jsd += jsd_loss(block);
            if (jsd_weight != 0.0) dx.middleCols(off, width) += (jsd_weight * scale) * jsd_gradient(block);
        }
        out.loss.cross_entropy += scale * ce;
        out.loss.jsd += scale * jsd;
        out.feature_grads.push_back(std::move(dx));
        out.logits.push_back(t.logits);
    }
    out.loss.total = out.loss.cross_entropy + jsd_weight * out.loss.jsd;
    return out;
}

/// One Adam step on every MLP tensor.
inline void mlp_update(MlpParams& p, const MlpGradients& g, const AdamHyper& hyper) {
    if (g.w1.rows() != p.w1.rows() || g.w1.cols() != p.w1.cols() || g.w2.rows() != p.w2.rows() ||
        g.w2.cols() != p.w2.cols())
        throw InputError("mlp_update: gradient shape mismatch");
    p.adam_w1.apply(p.w1, g.w1, hyper);
    p.adam_b1.apply(p.b1, g.b1, hyper);
    p.adam_w2.apply(p.w2, g.w2, hyper);
    p.adam_b2.apply(p.b2, g.b2, hyper);
}

} // namespace gkc

#endif // GKC_HEAD_HPP
