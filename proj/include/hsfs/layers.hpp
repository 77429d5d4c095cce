#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <variant>
#include <vector>

#include "hsfs/rng.hpp"
#include "hsfs/tensor.hpp"

namespace hsfs {

struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// layer types
// ---------------------------------------------------------------------------

/// Fully connected layer, weights stored out x in.
template <typename S>
struct DenseLayerT {
    RowMat<S> weights;
    VecX<S> bias;

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }
};

/// 3x3 convolution, stride 1, zero "same" padding. Kernels are stored as a
/// (9 * in_ch) x out_ch matrix whose rows run (kh, kw, ci) row-major, the
/// same layout an im2col patch row uses.
template <typename S>
struct Conv2dLayerT {
    Eigen::Index in_ch = 0;
    Eigen::Index out_ch = 0;
    RowMat<S> kernels;  // (9*in_ch) x out_ch
    VecX<S> bias;       // out_ch
};

struct ReluLayer {};

struct DropoutLayer {
    double rate = 0.5;
};

struct MaxPool2Layer {};

struct Upsample2Layer {};

struct SoftmaxLayer {};

template <typename S>
using LayerT = std::variant<DenseLayerT<S>, Conv2dLayerT<S>, ReluLayer, DropoutLayer,
                            MaxPool2Layer, Upsample2Layer, SoftmaxLayer>;

// ---------------------------------------------------------------------------
// per-layer caches captured on the forward pass
// ---------------------------------------------------------------------------

template <typename S>
struct DropoutCacheT {
    TensorT<S> mask;  // 0 or 1/(1-rate), already scaled
};

struct MaxPoolCache {
    std::vector<Eigen::Index> argmax;  // input linear index per output element
};

template <typename S>
struct ConvCacheT {
    RowMat<S> patches;  // im2col matrix, (n*h*w) x (9*in_ch)
};

template <typename S>
using LayerCacheT = std::variant<std::monostate, DropoutCacheT<S>, MaxPoolCache, ConvCacheT<S>>;

// ---------------------------------------------------------------------------
// dense kernel
// ---------------------------------------------------------------------------

/// y(n,o) = sum_i x(n,i) * W(o,i), accumulated strictly in ascending i from a
/// +0.0 accumulator, bias added last. The pruner's column-drop equivalence
/// depends on this exact order: a zeroed weight column contributes +-0.0 to a
/// running sum that is never -0.0, so removing the column leaves every output
/// bit unchanged. Do not replace with a GEMM; blocked summation breaks the
/// guarantee when in_dim changes.
template <typename S>
void dense_forward_kernel(const RowMat<S>& w, const VecX<S>& b, const S* x, Eigen::Index rows,
                          S* y) {
    const Eigen::Index in = w.cols();
    const Eigen::Index out = w.rows();
    const S* wd = w.data();
    for (Eigen::Index n = 0; n < rows; ++n) {
        const S* xr = x + n * in;
        S* yr = y + n * out;
        Eigen::Index o = 0;
        for (; o + 4 <= out; o += 4) {
            const S* w0 = wd + (o + 0) * in;
            const S* w1 = wd + (o + 1) * in;
            const S* w2 = wd + (o + 2) * in;
            const S* w3 = wd + (o + 3) * in;
            S a0 = S(0), a1 = S(0), a2 = S(0), a3 = S(0);
            for (Eigen::Index i = 0; i < in; ++i) {
                const S xi = xr[i];
                a0 += xi * w0[i];
                a1 += xi * w1[i];
                a2 += xi * w2[i];
                a3 += xi * w3[i];
            }
            yr[o + 0] = a0 + b[o + 0];
            yr[o + 1] = a1 + b[o + 1];
            yr[o + 2] = a2 + b[o + 2];
            yr[o + 3] = a3 + b[o + 3];
        }
        for (; o < out; ++o) {
            const S* wo = wd + o * in;
            S a = S(0);
            for (Eigen::Index i = 0; i < in; ++i) a += xr[i] * wo[i];
            yr[o] = a + b[o];
        }
    }
}

template <typename S>
TensorT<S> dense_forward(const DenseLayerT<S>& layer, const TensorT<S>& x) {
    if (x.rank() != 2 || x.dim(1) != layer.in_dim())
        throw std::invalid_argument("dense layer expects (n, " + std::to_string(layer.in_dim()) +
                                    ") input, got " + shape_str(x.shape()));
    TensorT<S> y({x.dim(0), layer.out_dim()});
    dense_forward_kernel(layer.weights, layer.bias, x.data(), x.dim(0), y.data());
    return y;
}

template <typename S>
TensorT<S> dense_backward(const DenseLayerT<S>& layer, const TensorT<S>& x, const TensorT<S>& dy,
                          RowMat<S>& dw, VecX<S>& db) {
    const auto xm = x.matrix();
    const auto dym = dy.matrix();
    dw.noalias() = dym.transpose() * xm;   // out x in
    db.noalias() = dym.colwise().sum().transpose();
    TensorT<S> dx({x.dim(0), x.dim(1)});
    dx.matrix().noalias() = dym * layer.weights;
    return dx;
}

// ---------------------------------------------------------------------------
// 3x3 same-padding convolution via im2col
// ---------------------------------------------------------------------------

template <typename S>
void im2col_3x3(const S* x, Eigen::Index n, Eigen::Index h, Eigen::Index w, Eigen::Index c,
                RowMat<S>& patches) {
    patches.setZero(n * h * w, 9 * c);
    for (Eigen::Index img = 0; img < n; ++img) {
        const S* xi = x + img * h * w * c;
        for (Eigen::Index oh = 0; oh < h; ++oh) {
            for (Eigen::Index ow = 0; ow < w; ++ow) {
                S* row = patches.data() + ((img * h + oh) * w + ow) * 9 * c;
                for (Eigen::Index kh = 0; kh < 3; ++kh) {
                    const Eigen::Index ih = oh + kh - 1;
                    if (ih < 0 || ih >= h) continue;
                    for (Eigen::Index kw = 0; kw < 3; ++kw) {
                        const Eigen::Index iw = ow + kw - 1;
                        if (iw < 0 || iw >= w) continue;
                        const S* src = xi + (ih * w + iw) * c;
                        S* dst = row + (kh * 3 + kw) * c;
                        for (Eigen::Index ch = 0; ch < c; ++ch) dst[ch] = src[ch];
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_3x3(const RowMat<S>& dpatches, Eigen::Index n, Eigen::Index h, Eigen::Index w,
                Eigen::Index c, S* dx) {
    for (Eigen::Index img = 0; img < n; ++img) {
        S* dxi = dx + img * h * w * c;
        for (Eigen::Index oh = 0; oh < h; ++oh) {
            for (Eigen::Index ow = 0; ow < w; ++ow) {
                const S* row = dpatches.data() + ((img * h + oh) * w + ow) * 9 * c;
                for (Eigen::Index kh = 0; kh < 3; ++kh) {
                    const Eigen::Index ih = oh + kh - 1;
                    if (ih < 0 || ih >= h) continue;
                    for (Eigen::Index kw = 0; kw < 3; ++kw) {
                        const Eigen::Index iw = ow + kw - 1;
                        if (iw < 0 || iw >= w) continue;
                        S* dst = dxi + (ih * w + iw) * c;
                        const S* src = row + (kh * 3 + kw) * c;
                        for (Eigen::Index ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                    }
                }
            }
        }
    }
}

template <typename S>
TensorT<S> conv2d_forward(const Conv2dLayerT<S>& layer, const TensorT<S>& x, ConvCacheT<S>& cache) {
    if (x.rank() != 4 || x.dim(3) != layer.in_ch)
        throw std::invalid_argument("conv2d expects (n, h, w, " + std::to_string(layer.in_ch) +
                                    ") input, got " + shape_str(x.shape()));
    const Eigen::Index n = x.dim(0), h = x.dim(1), w = x.dim(2);
    im2col_3x3(x.data(), n, h, w, layer.in_ch, cache.patches);
    TensorT<S> y({n, h, w, layer.out_ch});
    auto ym = y.reshaped(n * h * w, layer.out_ch);
    ym.noalias() = cache.patches * layer.kernels;
    ym.rowwise() += layer.bias.transpose();
    return y;
}

template <typename S>
TensorT<S> conv2d_backward(const Conv2dLayerT<S>& layer, const TensorT<S>& x, const TensorT<S>& dy,
                           const ConvCacheT<S>& cache, RowMat<S>& dk, VecX<S>& db) {
    const Eigen::Index n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto dym = dy.reshaped(n * h * w, layer.out_ch);
    dk.noalias() = cache.patches.transpose() * dym;
    db.noalias() = dym.colwise().sum().transpose();
    RowMat<S> dpatches = dym * layer.kernels.transpose();
    TensorT<S> dx(x.shape());
    col2im_3x3(dpatches, n, h, w, layer.in_ch, dx.data());
    return dx;
}

// ---------------------------------------------------------------------------
// relu / dropout / pooling / upsample / softmax
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> relu_forward(const TensorT<S>& x) {
    return TensorT<S>(x.shape(), x.array().max(S(0)));
}

template <typename S>
TensorT<S> relu_backward(const TensorT<S>& x, const TensorT<S>& dy) {
    return TensorT<S>(x.shape(), (x.array() > S(0)).select(dy.array(), S(0)));
}

template <typename S>
TensorT<S> dropout_forward(const DropoutLayer& layer, const TensorT<S>& x, bool training, Rng& rng,
                           DropoutCacheT<S>& cache) {
    if (!training || layer.rate == 0.0) {
        cache.mask = TensorT<S>();  // identity; no cache needed
        return x;
    }
    const S inv_keep = S(1) / S(1.0 - layer.rate);
    cache.mask = TensorT<S>(x.shape());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        cache.mask[i] = rng.u01() < layer.rate ? S(0) : inv_keep;
    return TensorT<S>(x.shape(), x.array() * cache.mask.array());
}

template <typename S>
TensorT<S> dropout_backward(const TensorT<S>& dy, const DropoutCacheT<S>& cache) {
    if (cache.mask.size() == 0) return dy;  // was identity
    return TensorT<S>(dy.shape(), dy.array() * cache.mask.array());
}

template <typename S>
TensorT<S> maxpool2_forward(const TensorT<S>& x, MaxPoolCache& cache) {
    if (x.rank() != 4)
        throw std::invalid_argument("maxpool2 expects rank-4 input, got " + shape_str(x.shape()));
    const Eigen::Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("maxpool2 requires even spatial dims, got " +
                                    shape_str(x.shape()));
    TensorT<S> y({n, h / 2, w / 2, c});
    cache.argmax.assign(static_cast<std::size_t>(y.size()), 0);
    const S* xd = x.data();
    S* yd = y.data();
    Eigen::Index oi = 0;
    for (Eigen::Index img = 0; img < n; ++img) {
        for (Eigen::Index oh = 0; oh < h / 2; ++oh) {
            for (Eigen::Index ow = 0; ow < w / 2; ++ow) {
                for (Eigen::Index ch = 0; ch < c; ++ch, ++oi) {
                    S best = std::numeric_limits<S>::lowest();
                    Eigen::Index best_idx = 0;
                    for (Eigen::Index dh = 0; dh < 2; ++dh) {
                        for (Eigen::Index dw = 0; dw < 2; ++dw) {
                            const Eigen::Index idx =
                                ((img * h + 2 * oh + dh) * w + 2 * ow + dw) * c + ch;
                            if (xd[idx] > best) {  // ties keep the first scan position
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    yd[oi] = best;
                    cache.argmax[static_cast<std::size_t>(oi)] = best_idx;
                }
            }
        }
    }
    return y;
}

template <typename S>
TensorT<S> maxpool2_backward(const TensorT<S>& x, const TensorT<S>& dy, const MaxPoolCache& cache) {
    TensorT<S> dx(x.shape());
    const S* dyd = dy.data();
    S* dxd = dx.data();
    for (Eigen::Index i = 0; i < dy.size(); ++i)
        dxd[cache.argmax[static_cast<std::size_t>(i)]] += dyd[i];
    return dx;
}

template <typename S>
TensorT<S> upsample2_forward(const TensorT<S>& x) {
    if (x.rank() != 4)
        throw std::invalid_argument("upsample2 expects rank-4 input, got " + shape_str(x.shape()));
    const Eigen::Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    TensorT<S> y({n, 2 * h, 2 * w, c});
    const S* xd = x.data();
    S* yd = y.data();
    for (Eigen::Index img = 0; img < n; ++img)
        for (Eigen::Index oh = 0; oh < 2 * h; ++oh)
            for (Eigen::Index ow = 0; ow < 2 * w; ++ow) {
                const S* src = xd + ((img * h + oh / 2) * w + ow / 2) * c;
                S* dst = yd + ((img * 2 * h + oh) * 2 * w + ow) * c;
                for (Eigen::Index ch = 0; ch < c; ++ch) dst[ch] = src[ch];
            }
    return y;
}

// nearest-neighbour upsample backward: each input cell collects the sum of
// its 2x2 replica block
template <typename S>
TensorT<S> upsample2_backward(const TensorT<S>& x, const TensorT<S>& dy) {
    const Eigen::Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    TensorT<S> dx(x.shape());
    const S* dyd = dy.data();
    S* dxd = dx.data();
    for (Eigen::Index img = 0; img < n; ++img)
        for (Eigen::Index oh = 0; oh < 2 * h; ++oh)
            for (Eigen::Index ow = 0; ow < 2 * w; ++ow) {
                const S* src = dyd + ((img * 2 * h + oh) * 2 * w + ow) * c;
                S* dst = dxd + ((img * h + oh / 2) * w + ow / 2) * c;
                for (Eigen::Index ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
    return dx;
}

template <typename S>
TensorT<S> softmax_forward(const TensorT<S>& x) {
    if (x.rank() != 2)
        throw std::invalid_argument("softmax expects rank-2 input, got " + shape_str(x.shape()));
    TensorT<S> y(x.shape());
    auto xm = x.matrix();
    auto ym = y.matrix();
    for (Eigen::Index r = 0; r < xm.rows(); ++r) {
        const S m = xm.row(r).maxCoeff();
        ym.row(r) = (xm.row(r).array() - m).exp();
        ym.row(r) /= ym.row(r).sum();
    }
    return y;
}

template <typename S>
TensorT<S> softmax_backward(const TensorT<S>& y, const TensorT<S>& dy) {
    TensorT<S> dx(y.shape());
    auto ym = y.matrix();
    auto dym = dy.matrix();
    auto dxm = dx.matrix();
    for (Eigen::Index r = 0; r < ym.rows(); ++r) {
        const S dot = (dym.row(r).array() * ym.row(r).array()).sum();
        dxm.row(r) = ym.row(r).array() * (dym.row(r).array() - dot);
    }
    return dx;
}

}  // namespace hsfs
