#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>
#include <vector>

#include "hsfs/network.hpp"

namespace hsfs {

enum class OptimizerKind { adam, adadelta };

inline const char* optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "adadelta";
}

/// Adam with bias-corrected moment estimates.
template <typename S>
struct AdamStateT {
    S alpha = S(1e-3);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
    long step_count = 0;
    std::vector<ArrX<S>> m;  // first moments, one block per parameter tensor
    std::vector<ArrX<S>> v;  // second moments
};

/// Adadelta: unit-free steps from running grad^2 and update^2 averages.
template <typename S>
struct AdadeltaStateT {
    S rho = S(0.95);
    S eps = S(1e-6);
    std::vector<ArrX<S>> acc_grad_sq;
    std::vector<ArrX<S>> acc_update_sq;
};

template <typename S>
using OptimizerStateT = std::variant<AdamStateT<S>, AdadeltaStateT<S>>;

using OptimizerState = OptimizerStateT<float>;

template <typename S>
OptimizerStateT<S> make_optimizer(OptimizerKind kind, NetworkT<S>& net) {
    auto blocks = param_blocks(net);
    if (kind == OptimizerKind::adam) {
        AdamStateT<S> st;
        for (auto b : blocks) {
            st.m.emplace_back(ArrX<S>::Zero(b.size));
            st.v.emplace_back(ArrX<S>::Zero(b.size));
        }
        return st;
    }
    AdadeltaStateT<S> st;
    for (auto b : blocks) {
        st.acc_grad_sq.emplace_back(ArrX<S>::Zero(b.size));
        st.acc_update_sq.emplace_back(ArrX<S>::Zero(b.size));
    }
    return st;
}

namespace detail {

template <typename S>
void check_blocks(std::size_t state_blocks, const std::vector<ParamBlock<S>>& params,
                  const std::vector<ParamBlock<const S>>& grads) {
    if (params.size() != grads.size() || params.size() != state_blocks)
        throw std::invalid_argument("optimizer state does not match network parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].size != grads[i].size)
            throw std::invalid_argument("gradient shape does not mirror parameter shape");
}

}  // namespace detail

template <typename S>
void optimizer_step(OptimizerStateT<S>& state, NetworkT<S>& net, const GradientsT<S>& grads) {
    auto params = param_blocks(net);
    auto gblocks = grad_blocks(grads);
    std::visit(
        [&](auto& st) {
            using T = std::decay_t<decltype(st)>;
            if constexpr (std::is_same_v<T, AdamStateT<S>>) {
                detail::check_blocks(st.m.size(), params, gblocks);
                st.step_count += 1;
                const S bc1 = S(1) - std::pow(st.beta1, S(st.step_count));
                const S bc2 = S(1) - std::pow(st.beta2, S(st.step_count));
                for (std::size_t i = 0; i < params.size(); ++i) {
                    Eigen::Map<ArrX<S>> p(params[i].data, params[i].size);
                    Eigen::Map<const ArrX<S>> g(gblocks[i].data, gblocks[i].size);
                    st.m[i] = st.beta1 * st.m[i] + (S(1) - st.beta1) * g;
                    st.v[i] = st.beta2 * st.v[i] + (S(1) - st.beta2) * g.square();
                    p -= st.alpha * (st.m[i] / bc1) / ((st.v[i] / bc2).sqrt() + st.eps);
                    if (!p.allFinite()) throw NumericsError("non-finite adam update");
                }
            } else {
                detail::check_blocks(st.acc_grad_sq.size(), params, gblocks);
                for (std::size_t i = 0; i < params.size(); ++i) {
                    Eigen::Map<ArrX<S>> p(params[i].data, params[i].size);
                    Eigen::Map<const ArrX<S>> g(gblocks[i].data, gblocks[i].size);
                    auto& eg2 = st.acc_grad_sq[i];
                    auto& ex2 = st.acc_update_sq[i];
                    eg2 = st.rho * eg2 + (S(1) - st.rho) * g.square();
                    ArrX<S> update = -((ex2 + st.eps).sqrt() / (eg2 + st.eps).sqrt()) * g;
                    ex2 = st.rho * ex2 + (S(1) - st.rho) * update.square();
                    p += update;
                    if (!p.allFinite()) throw NumericsError("non-finite adadelta update");
                }
            }
        },
        state);
}

}  // namespace hsfs
