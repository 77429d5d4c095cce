#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "hsfs/layers.hpp"
#include "hsfs/rng.hpp"
#include "hsfs/tensor.hpp"

namespace hsfs {

/// Ordered layer stack. The rng drives dropout masks in training mode, so a
/// network is deterministic given (seed, inputs) but not safe for concurrent
/// mutation; evaluation-only copies may be shared across threads.
template <typename S>
struct NetworkT {
    std::vector<LayerT<S>> layers;
    std::uint64_t seed = 0;
    Rng rng{0};
};

using Network = NetworkT<float>;

template <typename S>
struct ForwardTapeT {
    TensorT<S> input;
    std::vector<TensorT<S>> outputs;     // one per layer
    std::vector<LayerCacheT<S>> caches;  // one per layer
    bool training = false;
};

template <typename S>
struct LayerGradsT {
    RowMat<S> dweights;  // dense: out x in; conv: (9*in_ch) x out_ch
    VecX<S> dbias;
    bool has_params = false;
};

template <typename S>
struct GradientsT {
    std::vector<LayerGradsT<S>> layers;
    TensorT<S> input;  // dL/dinput
};

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

template <typename S>
ForwardTapeT<S> forward(NetworkT<S>& net, const TensorT<S>& batch, bool training) {
    if (!batch.all_finite()) throw NumericsError("non-finite values in network input");
    ForwardTapeT<S> tape;
    tape.input = batch;
    tape.training = training;
    tape.outputs.reserve(net.layers.size());
    tape.caches.resize(net.layers.size());
    const TensorT<S>* x = &tape.input;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        TensorT<S> y = std::visit(
            [&](auto& layer) -> TensorT<S> {
                using L = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<L, DenseLayerT<S>>) {
                    return dense_forward(layer, *x);
                } else if constexpr (std::is_same_v<L, Conv2dLayerT<S>>) {
                    ConvCacheT<S> cache;
                    TensorT<S> out = conv2d_forward(layer, *x, cache);
                    tape.caches[li] = std::move(cache);
                    return out;
                } else if constexpr (std::is_same_v<L, ReluLayer>) {
                    return relu_forward(*x);
                } else if constexpr (std::is_same_v<L, DropoutLayer>) {
                    DropoutCacheT<S> cache;
                    TensorT<S> out = dropout_forward(layer, *x, training, net.rng, cache);
                    tape.caches[li] = std::move(cache);
                    return out;
                } else if constexpr (std::is_same_v<L, MaxPool2Layer>) {
                    MaxPoolCache cache;
                    TensorT<S> out = maxpool2_forward(*x, cache);
                    tape.caches[li] = std::move(cache);
                    return out;
                } else if constexpr (std::is_same_v<L, Upsample2Layer>) {
                    return upsample2_forward(*x);
                } else {
                    return softmax_forward(*x);
                }
            },
            net.layers[li]);
        if (!y.all_finite())
            throw NumericsError("non-finite activation after layer " + std::to_string(li));
        tape.outputs.push_back(std::move(y));
        x = &tape.outputs.back();
    }
    return tape;
}

template <typename S>
GradientsT<S> backward(const NetworkT<S>& net, const ForwardTapeT<S>& tape,
                       const TensorT<S>& loss_grad) {
    if (tape.outputs.size() != net.layers.size())
        throw std::invalid_argument("activation tape does not match network layer count");
    if (!net.layers.empty() && !loss_grad.same_shape(tape.outputs.back()))
        throw std::invalid_argument("loss gradient shape " + shape_str(loss_grad.shape()) +
                                    " does not match network output " +
                                    shape_str(tape.outputs.back().shape()));
    GradientsT<S> grads;
    grads.layers.resize(net.layers.size());
    TensorT<S> dy = loss_grad;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const TensorT<S>& x = (i == 0) ? tape.input : tape.outputs[i - 1];
        LayerGradsT<S>& lg = grads.layers[i];
        dy = std::visit(
            [&](const auto& layer) -> TensorT<S> {
                using L = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<L, DenseLayerT<S>>) {
                    lg.has_params = true;
                    return dense_backward(layer, x, dy, lg.dweights, lg.dbias);
                } else if constexpr (std::is_same_v<L, Conv2dLayerT<S>>) {
                    lg.has_params = true;
                    const auto* cache = std::get_if<ConvCacheT<S>>(&tape.caches[i]);
                    if (!cache) throw std::invalid_argument("stale activation tape: missing conv cache");
                    return conv2d_backward(layer, x, dy, *cache, lg.dweights, lg.dbias);
                } else if constexpr (std::is_same_v<L, ReluLayer>) {
                    return relu_backward(x, dy);
                } else if constexpr (std::is_same_v<L, DropoutLayer>) {
                    if (!tape.training || layer.rate == 0.0) return dy;
                    const auto* cache = std::get_if<DropoutCacheT<S>>(&tape.caches[i]);
                    if (!cache) throw std::invalid_argument("stale activation tape: missing dropout mask");
                    return dropout_backward(dy, *cache);
                } else if constexpr (std::is_same_v<L, MaxPool2Layer>) {
                    const auto* cache = std::get_if<MaxPoolCache>(&tape.caches[i]);
                    if (!cache) throw std::invalid_argument("stale activation tape: missing pool cache");
                    return maxpool2_backward(x, dy, *cache);
                } else if constexpr (std::is_same_v<L, Upsample2Layer>) {
                    return upsample2_backward(x, dy);
                } else {
                    return softmax_backward(tape.outputs[i], dy);
                }
            },
            net.layers[i]);
    }
    grads.input = std::move(dy);
    return grads;
}

// ---------------------------------------------------------------------------
// parameter traversal (fixed order; also the checkpoint blob order)
// ---------------------------------------------------------------------------

template <typename S>
struct ParamBlock {
    S* data;
    Eigen::Index size;
};

template <typename S>
std::vector<ParamBlock<S>> param_blocks(NetworkT<S>& net) {
    std::vector<ParamBlock<S>> blocks;
    for (auto& layer : net.layers) {
        std::visit(
            [&](auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayerT<S>> ||
                              std::is_same_v<L, Conv2dLayerT<S>>) {
                    RowMat<S>& w = [&]() -> RowMat<S>& {
                        if constexpr (std::is_same_v<L, DenseLayerT<S>>) return l.weights;
                        else return l.kernels;
                    }();
                    blocks.push_back({w.data(), w.size()});
                    blocks.push_back({l.bias.data(), l.bias.size()});
                }
            },
            layer);
    }
    return blocks;
}

template <typename S>
std::vector<ParamBlock<const S>> grad_blocks(const GradientsT<S>& grads) {
    std::vector<ParamBlock<const S>> blocks;
    for (const auto& lg : grads.layers) {
        if (!lg.has_params) continue;
        blocks.push_back({lg.dweights.data(), lg.dweights.size()});
        blocks.push_back({lg.dbias.data(), lg.dbias.size()});
    }
    return blocks;
}

template <typename S>
Eigen::Index num_params(const NetworkT<S>& net) {
    Eigen::Index n = 0;
    for (const auto& layer : net.layers)
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayerT<S>>)
                    n += l.weights.size() + l.bias.size();
                else if constexpr (std::is_same_v<L, Conv2dLayerT<S>>)
                    n += l.kernels.size() + l.bias.size();
            },
            layer);
    return n;
}

template <typename S>
std::vector<ArrX<S>> snapshot_params(NetworkT<S>& net) {
    std::vector<ArrX<S>> out;
    for (auto b : param_blocks(net)) out.emplace_back(Eigen::Map<const ArrX<S>>(b.data, b.size));
    return out;
}

template <typename S>
void restore_params(NetworkT<S>& net, const std::vector<ArrX<S>>& snap) {
    auto blocks = param_blocks(net);
    if (blocks.size() != snap.size())
        throw std::invalid_argument("parameter snapshot does not match network");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].size != snap[i].size())
            throw std::invalid_argument("parameter snapshot block size mismatch");
        Eigen::Map<ArrX<S>>(blocks[i].data, blocks[i].size) = snap[i];
    }
}

// ---------------------------------------------------------------------------
// initialisation
// ---------------------------------------------------------------------------

/// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero bias. Conv fans count the
/// 3x3 receptive field.
template <typename S>
void init_params(NetworkT<S>& net, std::uint64_t seed) {
    net.seed = seed;
    net.rng = Rng(seed);
    Rng init_rng(Rng::derive(seed, 0x1717));
    for (auto& layer : net.layers) {
        std::visit(
            [&](auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayerT<S>>) {
                    const double bound = std::sqrt(6.0 / double(l.in_dim() + l.out_dim()));
                    for (Eigen::Index i = 0; i < l.weights.size(); ++i)
                        l.weights.data()[i] = S(init_rng.uniform(-bound, bound));
                    l.bias.setZero();
                } else if constexpr (std::is_same_v<L, Conv2dLayerT<S>>) {
                    const double bound = std::sqrt(6.0 / double(9 * l.in_ch + 9 * l.out_ch));
                    for (Eigen::Index i = 0; i < l.kernels.size(); ++i)
                        l.kernels.data()[i] = S(init_rng.uniform(-bound, bound));
                    l.bias.setZero();
                }
            },
            layer);
    }
}

// ---------------------------------------------------------------------------
// shape inference
// ---------------------------------------------------------------------------

/// Composes layer output shapes for a given input shape, throwing on any
/// mismatch. Used as the build-time shape check.
template <typename S>
std::vector<Shape> infer_shapes(const NetworkT<S>& net, const Shape& input) {
    std::vector<Shape> shapes;
    Shape cur = input;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                auto fail = [&](const std::string& why) {
                    throw std::invalid_argument("layer " + std::to_string(i) + ": " + why +
                                                " (input " + shape_str(cur) + ")");
                };
                if constexpr (std::is_same_v<L, DenseLayerT<S>>) {
                    if (cur.size() != 2 || cur[1] != l.in_dim()) fail("dense in_dim mismatch");
                    cur = {cur[0], l.out_dim()};
                } else if constexpr (std::is_same_v<L, Conv2dLayerT<S>>) {
                    if (cur.size() != 4 || cur[3] != l.in_ch) fail("conv in_ch mismatch");
                    cur = {cur[0], cur[1], cur[2], l.out_ch};
                } else if constexpr (std::is_same_v<L, MaxPool2Layer>) {
                    if (cur.size() != 4) fail("maxpool2 needs rank-4 input");
                    if (cur[1] % 2 != 0 || cur[2] % 2 != 0) fail("maxpool2 needs even spatial dims");
                    cur = {cur[0], cur[1] / 2, cur[2] / 2, cur[3]};
                } else if constexpr (std::is_same_v<L, Upsample2Layer>) {
                    if (cur.size() != 4) fail("upsample2 needs rank-4 input");
                    cur = {cur[0], 2 * cur[1], 2 * cur[2], cur[3]};
                } else if constexpr (std::is_same_v<L, SoftmaxLayer>) {
                    if (cur.size() != 2) fail("softmax needs rank-2 input");
                }
                // relu / dropout keep the shape
            },
            net.layers[i]);
        shapes.push_back(cur);
    }
    return shapes;
}

// ---------------------------------------------------------------------------
// architecture descriptor (mirrors the checkpoint header)
// ---------------------------------------------------------------------------

enum class LayerKind { dense, conv2d, relu, dropout, maxpool2, upsample2, softmax };

struct LayerSpec {
    LayerKind kind;
    Eigen::Index a = 0;  // dense: in, conv: in_ch
    Eigen::Index b = 0;  // dense: out, conv: out_ch
    double rate = 0.0;   // dropout
};

template <typename S>
std::vector<LayerSpec> describe(const NetworkT<S>& net) {
    std::vector<LayerSpec> spec;
    for (const auto& layer : net.layers)
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayerT<S>>)
                    spec.push_back({LayerKind::dense, l.in_dim(), l.out_dim(), 0.0});
                else if constexpr (std::is_same_v<L, Conv2dLayerT<S>>)
                    spec.push_back({LayerKind::conv2d, l.in_ch, l.out_ch, 0.0});
                else if constexpr (std::is_same_v<L, ReluLayer>)
                    spec.push_back({LayerKind::relu, 0, 0, 0.0});
                else if constexpr (std::is_same_v<L, DropoutLayer>)
                    spec.push_back({LayerKind::dropout, 0, 0, l.rate});
                else if constexpr (std::is_same_v<L, MaxPool2Layer>)
                    spec.push_back({LayerKind::maxpool2, 0, 0, 0.0});
                else if constexpr (std::is_same_v<L, Upsample2Layer>)
                    spec.push_back({LayerKind::upsample2, 0, 0, 0.0});
                else
                    spec.push_back({LayerKind::softmax, 0, 0, 0.0});
            },
            layer);
    return spec;
}

template <typename S>
NetworkT<S> build_network(const std::vector<LayerSpec>& spec, std::uint64_t seed) {
    NetworkT<S> net;
    for (const auto& ls : spec) {
        switch (ls.kind) {
            case LayerKind::dense: {
                DenseLayerT<S> l;
                if (ls.a <= 0 || ls.b <= 0) throw std::invalid_argument("dense dims must be positive");
                l.weights.setZero(ls.b, ls.a);
                l.bias.setZero(ls.b);
                net.layers.emplace_back(std::move(l));
                break;
            }
            case LayerKind::conv2d: {
                Conv2dLayerT<S> l;
                if (ls.a <= 0 || ls.b <= 0) throw std::invalid_argument("conv dims must be positive");
                l.in_ch = ls.a;
                l.out_ch = ls.b;
                l.kernels.setZero(9 * ls.a, ls.b);
                l.bias.setZero(ls.b);
                net.layers.emplace_back(std::move(l));
                break;
            }
            case LayerKind::relu: net.layers.emplace_back(ReluLayer{}); break;
            case LayerKind::dropout: {
                if (ls.rate < 0.0 || ls.rate >= 1.0)
                    throw std::invalid_argument("dropout rate must be in [0,1)");
                net.layers.emplace_back(DropoutLayer{ls.rate});
                break;
            }
            case LayerKind::maxpool2: net.layers.emplace_back(MaxPool2Layer{}); break;
            case LayerKind::upsample2: net.layers.emplace_back(Upsample2Layer{}); break;
            case LayerKind::softmax: net.layers.emplace_back(SoftmaxLayer{}); break;
        }
    }
    init_params(net, seed);
    return net;
}

template <typename T, typename S>
NetworkT<T> network_cast(const NetworkT<S>& net) {
    NetworkT<T> out;
    out.seed = net.seed;
    out.rng = net.rng;
    for (const auto& layer : net.layers)
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayerT<S>>) {
                    DenseLayerT<T> nl;
                    nl.weights = l.weights.template cast<T>();
                    nl.bias = l.bias.template cast<T>();
                    out.layers.emplace_back(std::move(nl));
                } else if constexpr (std::is_same_v<L, Conv2dLayerT<S>>) {
                    Conv2dLayerT<T> nl;
                    nl.in_ch = l.in_ch;
                    nl.out_ch = l.out_ch;
                    nl.kernels = l.kernels.template cast<T>();
                    nl.bias = l.bias.template cast<T>();
                    out.layers.emplace_back(std::move(nl));
                } else {
                    out.layers.emplace_back(l);
                }
            },
            layer);
    return out;
}

}  // namespace hsfs
