#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "hsfs/grad_check.hpp"
#include "hsfs/loss.hpp"
#include "hsfs/network.hpp"
#include "hsfs/optimizer.hpp"

using namespace hsfs;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

Network make_mlp(Eigen::Index in, std::vector<Eigen::Index> hidden, Eigen::Index out,
                 std::uint64_t seed, double dropout = 0.0) {
    std::vector<LayerSpec> spec;
    Eigen::Index prev = in;
    for (Eigen::Index h : hidden) {
        spec.push_back({LayerKind::dense, prev, h, 0.0});
        spec.push_back({LayerKind::relu, 0, 0, 0.0});
        if (dropout > 0.0) spec.push_back({LayerKind::dropout, 0, 0, dropout});
        prev = h;
    }
    spec.push_back({LayerKind::dense, prev, out, 0.0});
    spec.push_back({LayerKind::softmax, 0, 0, 0.0});
    return build_network<float>(spec, seed);
}

Tensor labels_tensor(const std::vector<int>& labels) {
    Tensor t({static_cast<Eigen::Index>(labels.size())});
    for (std::size_t i = 0; i < labels.size(); ++i) t[static_cast<Eigen::Index>(i)] = float(labels[i]);
    return t;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    Tensor x({1, 3});
    auto y = softmax_forward(x);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("softmax rows form a probability simplex") {
    Rng rng(11);
    auto x = random_tensor({17, 5}, rng, -8.0, 8.0);
    auto y = softmax_forward(x);
    auto m = y.matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        CHECK(m.row(r).minCoeff() >= 0.0f);
        CHECK(std::abs(m.row(r).sum() - 1.0f) < 1e-6f);
    }
}

TEST_CASE("relu clamps negatives") {
    Tensor x({1, 2});
    x[0] = -1.0f;
    x[1] = 2.0f;
    auto y = relu_forward(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 2.0f);
}

TEST_CASE("dropout with rate zero is the identity map") {
    Rng rng(3);
    auto x = random_tensor({4, 6}, rng);
    DropoutLayer layer{0.0};
    DropoutCacheT<float> cache;
    Rng net_rng(9);
    auto y = dropout_forward(layer, x, /*training=*/true, net_rng, cache);
    for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dropout in eval mode is the identity map") {
    Rng rng(4);
    auto x = random_tensor({4, 6}, rng);
    DropoutLayer layer{0.5};
    DropoutCacheT<float> cache;
    Rng net_rng(9);
    auto y = dropout_forward(layer, x, /*training=*/false, net_rng, cache);
    for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("inverted dropout: zero fraction near rate, survivors scaled by 1/(1-r)") {
    const double rate = 0.3;
    DropoutLayer layer{rate};
    Rng net_rng(123);
    Tensor x({1, 100});
    x.array().setConstant(2.0f);
    const float scaled = 2.0f / (1.0f - float(rate));
    long zeros = 0, total = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        DropoutCacheT<float> cache;
        auto y = dropout_forward(layer, x, true, net_rng, cache);
        for (Eigen::Index i = 0; i < y.size(); ++i, ++total) {
            if (y[i] == 0.0f)
                ++zeros;
            else
                CHECK(y[i] == scaled);
        }
    }
    const double frac = double(zeros) / double(total);
    CHECK(frac == doctest::Approx(rate).epsilon(0.07));  // rate +- 0.02 absolute
    CHECK(std::abs(frac - rate) < 0.02);
}

TEST_CASE("maxpool 2x2 picks the max and routes gradient to its argmax") {
    Tensor x({1, 2, 2, 1});
    x[0] = 1.0f; x[1] = 2.0f; x[2] = 3.0f; x[3] = 4.0f;
    MaxPoolCache cache;
    auto y = maxpool2_forward(x, cache);
    REQUIRE(y.size() == 1);
    CHECK(y[0] == 4.0f);
    Tensor dy({1, 1, 1, 1});
    dy[0] = 5.0f;
    auto dx = maxpool2_backward(x, dy, cache);
    CHECK(dx[0] == 0.0f);
    CHECK(dx[1] == 0.0f);
    CHECK(dx[2] == 0.0f);
    CHECK(dx[3] == 5.0f);
}

TEST_CASE("maxpool rejects odd spatial dims") {
    Tensor x({1, 3, 4, 1});
    MaxPoolCache cache;
    CHECK_THROWS_AS(maxpool2_forward(x, cache), std::invalid_argument);
}

TEST_CASE("upsample2 doubles dims and its backward sums each 2x2 block") {
    Tensor x({1, 1, 2, 1});
    x[0] = 3.0f;
    x[1] = -1.0f;
    auto y = upsample2_forward(x);
    REQUIRE(y.shape() == Shape{1, 2, 4, 1});
    CHECK(y[0] == 3.0f);
    CHECK(y[1] == 3.0f);
    CHECK(y[2] == -1.0f);
    CHECK(y[3] == -1.0f);
    Tensor dy({1, 2, 4, 1});
    for (Eigen::Index i = 0; i < dy.size(); ++i) dy[i] = float(i + 1);
    auto dx = upsample2_backward(x, dy);
    // block for x[0]: dy positions (0,0),(0,1),(1,0),(1,1) -> 1+2+5+6
    CHECK(dx[0] == 14.0f);
    CHECK(dx[1] == 3.0f + 4.0f + 7.0f + 8.0f);
}

TEST_CASE("conv2d same padding preserves spatial dims") {
    Rng rng(5);
    std::vector<LayerSpec> spec{{LayerKind::conv2d, 3, 4, 0.0}};
    auto net = build_network<float>(spec, 7);
    auto x = random_tensor({2, 6, 6, 3}, rng);
    auto tape = forward(net, x, false);
    CHECK(tape.outputs.back().shape() == Shape{2, 6, 6, 4});
}

TEST_CASE("losses match their closed forms") {
    Tensor a({1, 1});
    a[0] = 0.5f;
    Tensor b({1, 1});
    b[0] = 1.0f;
    CHECK(loss_mse(a, b).value == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(loss_mse(a, a).value == 0.0f);

    Tensor probs({1, 3});
    probs.array().setConstant(1.0f / 3.0f);
    for (int y = 0; y < 3; ++y)
        CHECK(loss_cross_entropy(probs, {y}).value ==
              doctest::Approx(std::log(3.0)).epsilon(1e-5));
    CHECK_THROWS_AS(loss_cross_entropy(probs, {7}), std::invalid_argument);
}

TEST_CASE("zero loss gradient backpropagates to zero parameter gradients") {
    auto net = make_mlp(5, {4}, 3, 21);
    Rng rng(2);
    auto x = random_tensor({3, 5}, rng);
    auto tape = forward(net, x, false);
    Tensor zero_grad(tape.outputs.back().shape());
    auto grads = backward(net, tape, zero_grad);
    for (auto b : grad_blocks(grads))
        for (Eigen::Index i = 0; i < b.size; ++i) CHECK(b.data[i] == 0.0f);
}

TEST_CASE("dense kernel agrees with an independent GEMM") {
    Rng rng(31);
    DenseLayerT<float> layer;
    layer.weights = RowMat<float>::Zero(7, 13);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
        layer.weights.data()[i] = float(rng.uniform(-1, 1));
    layer.bias = VecX<float>::Zero(7);
    for (Eigen::Index i = 0; i < 7; ++i) layer.bias[i] = float(rng.uniform(-1, 1));
    auto x = random_tensor({9, 13}, rng);
    auto y = dense_forward(layer, x);
    RowMat<float> expect = (x.matrix() * layer.weights.transpose()).rowwise() + layer.bias.transpose();
    for (Eigen::Index r = 0; r < 9; ++r)
        for (Eigen::Index c = 0; c < 7; ++c)
            CHECK(y.matrix()(r, c) == doctest::Approx(expect(r, c)).epsilon(1e-5));
}

TEST_CASE("dropping an input column is bitwise equal to zeroing it") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        auto net = make_mlp(9, {6}, 3, 1000 + trial);
        auto x = random_tensor({8, 9}, rng);
        const Eigen::Index drop = static_cast<Eigen::Index>(rng.index(9));

        // route 1: zero the column
        auto zeroed = net;
        std::get<DenseLayerT<float>>(zeroed.layers[0]).weights.col(drop).setZero();
        auto tz = forward(zeroed, x, false);

        // route 2: remove the column and the input slot
        auto reduced = net;
        auto& dense = std::get<DenseLayerT<float>>(reduced.layers[0]);
        RowMat<float> w(dense.weights.rows(), dense.weights.cols() - 1);
        Tensor xr({8, 8});
        for (Eigen::Index c = 0, o = 0; c < 9; ++c) {
            if (c == drop) continue;
            w.col(o) = dense.weights.col(c);
            for (Eigen::Index r = 0; r < 8; ++r) xr.matrix()(r, o) = x.matrix()(r, c);
            ++o;
        }
        dense.weights = std::move(w);
        auto tr = forward(reduced, xr, false);

        const auto& a = tz.outputs.back();
        const auto& b = tr.outputs.back();
        REQUIRE(a.size() == b.size());
        CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);
    }
}

TEST_CASE("gradients of a 2-layer dense net match central finite differences") {
    Rng rng(42);
    auto net = make_mlp(5, {7}, 3, 90);
    auto x = random_tensor({6, 5}, rng);
    auto report = grad_check(net, x, LossKind::cross_entropy, labels_tensor({0, 1, 2, 0, 1, 2}));
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("gradient check covers conv, pool and upsample with mse") {
    Rng rng(43);
    std::vector<LayerSpec> spec{
        {LayerKind::conv2d, 2, 3, 0.0}, {LayerKind::relu, 0, 0, 0.0},
        {LayerKind::maxpool2, 0, 0, 0.0}, {LayerKind::conv2d, 3, 2, 0.0},
        {LayerKind::upsample2, 0, 0, 0.0}, {LayerKind::conv2d, 2, 1, 0.0},
    };
    auto net = build_network<float>(spec, 17);
    auto x = random_tensor({2, 8, 8, 2}, rng);
    auto target = random_tensor({2, 8, 8, 1}, rng);
    // step 1e-4: the larger default occasionally straddles a relu kink or
    // flips a pool argmax, which is a property of the difference quotient,
    // not of the gradients
    auto report = grad_check(net, x, LossKind::mse, target, false, 1e-4);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("gradient check replays dropout masks in training mode") {
    Rng rng(44);
    auto net = make_mlp(6, {8}, 3, 91, /*dropout=*/0.4);
    auto x = random_tensor({5, 6}, rng);
    auto report = grad_check(net, x, LossKind::cross_entropy, labels_tensor({0, 1, 2, 1, 0}),
                             /*training=*/true, 1e-4);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("identity network grad-checks with zero error") {
    Network net;  // no layers: output == input, no parameters
    Rng rng(45);
    auto x = random_tensor({3, 4}, rng);
    auto report = grad_check(net, x, LossKind::mse, random_tensor({3, 4}, rng));
    CHECK(report.max_rel_error == 0.0);
    CHECK(report.params_checked == 0);
}

TEST_CASE("optimizers leave parameters unchanged for zero gradients") {
    for (auto kind : {OptimizerKind::adam, OptimizerKind::adadelta}) {
        auto net = make_mlp(4, {5}, 2, 55);
        auto before = snapshot_params(net);
        auto state = make_optimizer(kind, net);
        GradientsT<float> grads;
        grads.layers.resize(net.layers.size());
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (auto* d = std::get_if<DenseLayerT<float>>(&net.layers[i])) {
                grads.layers[i].has_params = true;
                grads.layers[i].dweights = RowMat<float>::Zero(d->out_dim(), d->in_dim());
                grads.layers[i].dbias = VecX<float>::Zero(d->out_dim());
            }
        }
        optimizer_step(state, net, grads);
        auto after = snapshot_params(net);
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK((before[i] == after[i]).all());
    }
}

TEST_CASE("adam first step matches the hand-computed bias-corrected update") {
    // fresh state: m_hat = g, v_hat = g^2, step = -alpha * g / (|g| + eps)
    std::vector<LayerSpec> spec{{LayerKind::dense, 2, 1, 0.0}};
    auto net = build_network<float>(spec, 3);
    auto& dense = std::get<DenseLayerT<float>>(net.layers[0]);
    dense.weights(0, 0) = 0.5f;
    dense.weights(0, 1) = -0.25f;
    dense.bias[0] = 0.1f;

    AdamStateT<float> adam;
    adam.alpha = 0.001f;
    OptimizerStateT<float> state = make_optimizer(OptimizerKind::adam, net);
    GradientsT<float> grads;
    grads.layers.resize(1);
    grads.layers[0].has_params = true;
    grads.layers[0].dweights = RowMat<float>::Zero(1, 2);
    grads.layers[0].dweights(0, 0) = 0.3f;
    grads.layers[0].dweights(0, 1) = -2.0f;
    grads.layers[0].dbias = VecX<float>::Zero(1);
    grads.layers[0].dbias[0] = 0.0f;
    optimizer_step(state, net, grads);

    auto expected = [](float theta, float g) {
        const float m_hat = g;               // m/(1-beta1) after one step
        const float v_hat = g * g;           // v/(1-beta2)
        return theta - 0.001f * m_hat / (std::sqrt(v_hat) + 1e-8f);
    };
    CHECK(dense.weights(0, 0) == doctest::Approx(expected(0.5f, 0.3f)).epsilon(1e-6));
    CHECK(dense.weights(0, 1) == doctest::Approx(expected(-0.25f, -2.0f)).epsilon(1e-6));
    CHECK(dense.bias[0] == 0.1f);  // zero gradient: unchanged
}

TEST_CASE("adadelta with rho=0 reduces to the RMS-ratio step") {
    std::vector<LayerSpec> spec{{LayerKind::dense, 1, 1, 0.0}};
    auto net = build_network<float>(spec, 3);
    auto& dense = std::get<DenseLayerT<float>>(net.layers[0]);
    dense.weights(0, 0) = 1.0f;
    dense.bias[0] = 0.0f;

    OptimizerStateT<float> state = make_optimizer(OptimizerKind::adadelta, net);
    std::get<AdadeltaStateT<float>>(state).rho = 0.0f;
    const float eps = std::get<AdadeltaStateT<float>>(state).eps;

    GradientsT<float> grads;
    grads.layers.resize(1);
    grads.layers[0].has_params = true;
    grads.layers[0].dweights = RowMat<float>::Zero(1, 1);
    grads.layers[0].dweights(0, 0) = 0.5f;
    grads.layers[0].dbias = VecX<float>::Zero(1);
    optimizer_step(state, net, grads);

    // rho=0: E[g^2]=g^2, E[dx^2] fresh=0 -> dx = -sqrt(eps)/sqrt(g^2+eps) * g
    const float g = 0.5f;
    const float dx = -std::sqrt(eps) / std::sqrt(g * g + eps) * g;
    CHECK(dense.weights(0, 0) == doctest::Approx(1.0f + dx).epsilon(1e-6));
}

TEST_CASE("same seed gives identical init and logits") {
    Rng rng(8);
    auto x = random_tensor({4, 6}, rng);
    auto a = make_mlp(6, {5}, 3, 777);
    auto b = make_mlp(6, {5}, 3, 777);
    auto ta = forward(a, x, false);
    auto tb = forward(b, x, false);
    CHECK(std::memcmp(ta.outputs.back().data(), tb.outputs.back().data(),
                      sizeof(float) * ta.outputs.back().size()) == 0);
}

TEST_CASE("non-finite input is rejected") {
    auto net = make_mlp(3, {4}, 2, 5);
    Tensor x({1, 3});
    x[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(forward(net, x, false), NumericsError);
}

TEST_CASE("dense layer rejects mismatched input width") {
    auto net = make_mlp(3, {4}, 2, 5);
    Tensor x({1, 7});
    CHECK_THROWS_AS(forward(net, x, false), std::invalid_argument);
}

TEST_CASE("finite-difference agreement holds across 20 random seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed * 13);
        auto net = make_mlp(4, {5}, 3, seed);
        auto x = random_tensor({4, 4}, rng);
        std::vector<int> labels;
        for (int i = 0; i < 4; ++i) labels.push_back(int(rng.index(3)));
        auto report = grad_check(net, x, LossKind::cross_entropy, labels_tensor(labels));
        CHECK(report.max_rel_error < 1e-4);
    }
}
