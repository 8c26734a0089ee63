#ifndef GKC_QUANTIZER_HPP
#define GKC_QUANTIZER_HPP

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "gkc/error.hpp"
#include "gkc/graph.hpp"
#include "gkc/rng.hpp"

namespace gkc {

/// k-means codebook used to discretise node features between layers. The
/// centroids persist across mini-batches: each update warm-starts Lloyd
/// iterations from the previous centroids so cluster ids keep their meaning.
struct Codebook {
    std::size_t k = 0;
    Eigen::MatrixXd centroids; // k x m
    bool initialized = false;
    /// Mean centroid movement of the latest update divided by the mean
    /// pairwise centroid distance.
    double last_displacement = 0.0;
    /// Set when two centroids coincide after an update.
    bool degenerate = false;

    static constexpr double kTolerance = 1e-6;
    static constexpr int kMaxIterations = 100;

    Codebook() = default;
    explicit Codebook(std::size_t clusters) : k(clusters) {
        if (clusters == 0) throw InputError("codebook needs k >= 1");
    }

    std::size_t dimension() const { return static_cast<std::size_t>(centroids.cols()); }
};

namespace detail {

inline double mean_pairwise_distance(const Eigen::MatrixXd& c) {
    const auto k = c.rows();
    if (k < 2) return 0.0;
    double s = 0.0;
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i + 1; j < k; ++j) s += (c.row(i) - c.row(j)).norm();
    return s / static_cast<double>(k * (k - 1) / 2);
}

inline std::vector<Label> nearest(const Eigen::MatrixXd& centroids, const Eigen::MatrixXd& x,
                                  std::vector<double>* sq_dist = nullptr) {
    std::vector<Label> out(static_cast<std::size_t>(x.rows()));
    if (sq_dist) sq_dist->assign(out.size(), 0.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        Label arg = 0;
        for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
            double d = (x.row(i) - centroids.row(c)).squaredNorm();
            if (d < best) { // strict: ties keep the smaller index
                best = d;
                arg = static_cast<Label>(c);
            }
        }
        out[static_cast<std::size_t>(i)] = arg;
        if (sq_dist) (*sq_dist)[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

inline Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& x, std::size_t k, Rng& rng) {
    const auto n = x.rows();
    Eigen::MatrixXd c(static_cast<Eigen::Index>(k), x.cols());
    c.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (x.row(i) - c.row(0)).squaredNorm();
    for (std::size_t j = 1; j < k; ++j) {
        double total = 0.0;
        for (double d : d2) total += d;
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        } else {
            double r = uniform01(rng) * total, acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[static_cast<std::size_t>(i)];
                if (acc > r) {
                    pick = i;
                    break;
                }
            }
        }
        c.row(static_cast<Eigen::Index>(j)) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[static_cast<std::size_t>(i)] =
                std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - c.row(static_cast<Eigen::Index>(j))).squaredNorm());
    }
    return c;
}

} // namespace detail

/// Within-batch sum of squared distances to the nearest centroid.
inline double kmeans_inertia(const Eigen::MatrixXd& centroids, const Eigen::MatrixXd& x) {
    std::vector<double> d;
    detail::nearest(centroids, x, &d);
    double s = 0.0;
    for (double v : d) s += v;
    return s;
}

/// Lloyd iterations on one batch (rows of `features`). The first call seeds
/// with k-means++; later calls warm-start from the current centroids.
/// `inertia_trace`, when given, receives the inertia after every assignment.
inline void fit_update(Codebook& cb, const Eigen::MatrixXd& features, Rng& rng,
                       std::vector<double>* inertia_trace = nullptr) {
    const auto n = features.rows();
    if (!cb.initialized) {
        if (static_cast<std::size_t>(n) < cb.k)
            throw InputError("fit_update: first batch has " + std::to_string(n) + " vectors, need at least k=" +
                             std::to_string(cb.k));
        cb.centroids = detail::kmeans_plus_plus(features, cb.k, rng);
    } else if (features.cols() != cb.centroids.cols()) {
        throw InputError("fit_update: feature dimension does not match codebook");
    }
    if (n == 0) {
        cb.last_displacement = 0.0;
        return;
    }
    const Eigen::MatrixXd start = cb.centroids;
    const auto k = static_cast<Eigen::Index>(cb.k);
    std::vector<double> d2;
    for (int iter = 0; iter < Codebook::kMaxIterations; ++iter) {
        auto assign = detail::nearest(cb.centroids, features, &d2);
        if (inertia_trace) {
            double s = 0.0;
            for (double v : d2) s += v;
            inertia_trace->push_back(s);
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, features.cols());
        std::vector<std::size_t> counts(cb.k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += features.row(i);
            ++counts[assign[static_cast<std::size_t>(i)]];
        }
        Eigen::MatrixXd next = cb.centroids;
        std::vector<bool> taken(static_cast<std::size_t>(n), false);
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // empty cluster: move it onto the point farthest from its centroid
            Eigen::Index far = -1;
            double best = -1.0;
            for (Eigen::Index i = 0; i < n; ++i)
                if (!taken[static_cast<std::size_t>(i)] && d2[static_cast<std::size_t>(i)] > best &&
                    counts[assign[static_cast<std::size_t>(i)]] > 1) {
                    best = d2[static_cast<std::size_t>(i)];
                    far = i;
                }
            if (far < 0) continue; // nothing left to steal
            taken[static_cast<std::size_t>(far)] = true;
            --counts[assign[static_cast<std::size_t>(far)]];
            next.row(c) = features.row(far);
            counts[static_cast<std::size_t>(c)] = 1;
        }
        double scale = std::max(detail::mean_pairwise_distance(next), 1e-12);
        double moved = (next - cb.centroids).rowwise().norm().maxCoeff();
        cb.centroids = std::move(next);
        if (moved / scale < Codebook::kTolerance) break;
    }
    cb.initialized = true;
    const double spread = detail::mean_pairwise_distance(cb.centroids);
    const double mean_move = (cb.centroids - start).rowwise().norm().mean();
    cb.last_displacement = spread > 0.0 ? mean_move / spread : 0.0;
    cb.degenerate = false;
    for (Eigen::Index i = 0; i < k && !cb.degenerate; ++i)
        for (Eigen::Index j = i + 1; j < k; ++j)
            if ((cb.centroids.row(i) - cb.centroids.row(j)).squaredNorm() == 0.0) {
                cb.degenerate = true;
                break;
            }
}

/// Nearest-centroid label per row; ties go to the smaller centroid index.
inline std::vector<Label> assign(const Codebook& cb, const Eigen::MatrixXd& features) {
    if (!cb.initialized) throw StateError("assign: codebook is not initialized");
    if (features.rows() == 0) return {};
    if (features.cols() != cb.centroids.cols()) throw InputError("assign: feature dimension mismatch");
    return detail::nearest(cb.centroids, features);
}

} // namespace gkc

#endif // GKC_QUANTIZER_HPP
