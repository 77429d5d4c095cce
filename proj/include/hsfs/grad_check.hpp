#pragma once

#include <algorithm>
#include <cmath>

#include "hsfs/loss.hpp"
#include "hsfs/network.hpp"

namespace hsfs {

struct GradCheckReport {
    double max_rel_error = 0.0;
    Eigen::Index worst_param = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    Eigen::Index params_checked = 0;

    bool pass(double tolerance) const { return max_rel_error < tolerance; }
};

namespace detail {

// relative error floored at unit scale, so near-zero gradient pairs compare
// absolutely instead of blowing up
inline double rel_error(double a, double n) {
    return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

}  // namespace detail

/// Compares analytic parameter gradients against central finite differences
/// of the loss. The whole computation runs at the network's scalar type; call
/// with a double network (or cast via the float overload below) so the
/// difference quotient is not drowned by rounding. Dropout masks are replayed
/// by restoring the rng before every evaluation.
template <typename S>
GradCheckReport grad_check(NetworkT<S> net, const TensorT<S>& batch, LossKind kind,
                           const TensorT<S>& target, bool training = false, double step = 1e-3) {
    if (num_params(net) > 10000)
        throw std::invalid_argument("grad_check is meant for small nets (<= 10k params)");

    const Rng rng_snapshot = net.rng;
    auto eval_loss = [&](NetworkT<S>& n) -> double {
        n.rng = rng_snapshot;
        auto tape = forward(n, batch, training);
        const TensorT<S>& out = tape.outputs.empty() ? batch : tape.outputs.back();
        return static_cast<double>(loss(kind, out, target).value);
    };

    // analytic gradients
    net.rng = rng_snapshot;
    auto tape = forward(net, batch, training);
    const TensorT<S>& out = tape.outputs.empty() ? batch : tape.outputs.back();
    auto lr = loss(kind, out, target);
    auto grads = backward(net, tape, lr.grad);

    auto params = param_blocks(net);
    auto gblocks = grad_blocks(grads);

    GradCheckReport report;
    Eigen::Index flat = 0;
    for (std::size_t bi = 0; bi < params.size(); ++bi) {
        for (Eigen::Index i = 0; i < params[bi].size; ++i, ++flat) {
            S& theta = params[bi].data[i];
            const S saved = theta;
            theta = saved + S(step);
            const double lp = eval_loss(net);
            theta = saved - S(step);
            const double lm = eval_loss(net);
            theta = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double analytic = static_cast<double>(gblocks[bi].data[i]);
            const double err = detail::rel_error(analytic, numeric);
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_param = flat;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    report.params_checked = flat;
    return report;
}

/// Float networks are promoted to double before checking; the analytic
/// gradient code is the same template either way.
inline GradCheckReport grad_check(const Network& net, const Tensor& batch, LossKind kind,
                                  const Tensor& target, bool training = false, double step = 1e-3) {
    return grad_check(network_cast<double>(net), batch.cast<double>(), kind,
                      target.cast<double>(), training, step);
}

}  // namespace hsfs
