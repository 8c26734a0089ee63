#ifndef GKC_ADAM_HPP
#define GKC_ADAM_HPP

#include <cmath>

#include <Eigen/Dense>

namespace gkc {

struct AdamHyper {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment accumulators for one parameter tensor (stored flat, column-major).
struct AdamState {
    Eigen::ArrayXd m;
    Eigen::ArrayXd v;
    long step = 0;

    void resize(Eigen::Index n) {
        m = Eigen::ArrayXd::Zero(n);
        v = Eigen::ArrayXd::Zero(n);
        step = 0;
    }

    /// One bias-corrected Adam update of a dense matrix or vector.
    template <class Param, class Grad>
    void apply(Param& param, const Grad& grad, const AdamHyper& h) {
        const Eigen::Index n = param.size();
        if (m.size() != n) resize(n);
        ++step;
        const Eigen::ArrayXd g = grad.reshaped().array();
        m = h.beta1 * m + (1.0 - h.beta1) * g;
        v = h.beta2 * v + (1.0 - h.beta2) * g.square();
        const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
        param.reshaped().array() -= h.lr * (m / c1) / ((v / c2).sqrt() + h.eps);
    }
};

} // namespace gkc

#endif // GKC_ADAM_HPP
