#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hsfs/tensor.hpp"

namespace hsfs {

enum class LossKind { cross_entropy, mse };

template <typename S>
struct LossResult {
    S value = S(0);
    TensorT<S> grad;  // dL/dprediction, same shape as the prediction
};

/// Mean squared error over every element.
template <typename S>
LossResult<S> loss_mse(const TensorT<S>& pred, const TensorT<S>& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("mse shape mismatch: " + shape_str(pred.shape()) + " vs " +
                                    shape_str(target.shape()));
    LossResult<S> res;
    const S inv_n = S(1) / S(pred.size());
    ArrX<S> diff = pred.array() - target.array();
    res.value = (diff * diff).sum() * inv_n;
    res.grad = TensorT<S>(pred.shape(), S(2) * inv_n * diff);
    return res;
}

/// Mean negative log-likelihood of the target class. `probs` are post-softmax
/// probabilities (n x classes); log arguments are clamped at 1e-7.
template <typename S>
LossResult<S> loss_cross_entropy(const TensorT<S>& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2)
        throw std::invalid_argument("cross-entropy expects rank-2 probabilities");
    const Eigen::Index n = probs.dim(0);
    const Eigen::Index classes = probs.dim(1);
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw std::invalid_argument("cross-entropy label count mismatch");
    constexpr S clamp = S(1e-7);
    LossResult<S> res;
    res.grad = TensorT<S>(probs.shape());
    auto pm = probs.matrix();
    auto gm = res.grad.matrix();
    S total = S(0);
    const S inv_n = S(1) / S(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= classes)
            throw std::invalid_argument("cross-entropy label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(classes) + ")");
        const S p = pm(r, y);
        if (p < clamp) {
            total -= std::log(clamp);
            // clamp active: loss is flat in p here
        } else {
            total -= std::log(p);
            gm(r, y) = -inv_n / p;
        }
    }
    res.value = total * inv_n;
    return res;
}

/// Convenience dispatcher matching the (kind, prediction, target) contract;
/// cross-entropy reads class indices from the target tensor.
template <typename S>
LossResult<S> loss(LossKind kind, const TensorT<S>& pred, const TensorT<S>& target) {
    if (kind == LossKind::mse) return loss_mse(pred, target);
    std::vector<int> labels(static_cast<std::size_t>(target.size()));
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        const S v = target[i];
        const int y = static_cast<int>(v);
        if (S(y) != v)
            throw std::invalid_argument("cross-entropy target is not an integer class index");
        labels[static_cast<std::size_t>(i)] = y;
    }
    return loss_cross_entropy(pred, labels);
}

}  // namespace hsfs
