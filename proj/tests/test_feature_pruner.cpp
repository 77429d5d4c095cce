#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "hsfs/feature_pruner.hpp"
#include "hsfs/synthgen.hpp"

using namespace hsfs;
namespace fs = std::filesystem;

namespace {

Network dense_net(Eigen::Index in, std::uint64_t seed) {
    MlpConfig cfg;
    cfg.input_dim = in;
    cfg.hidden = {6};
    cfg.dropout = 0.0;
    cfg.seed = seed;
    return build_mlp(cfg);
}

PruneState fresh_state(const Network& net, Eigen::Index in) {
    PruneState state;
    state.omega.resize(static_cast<std::size_t>(in));
    std::iota(state.omega.begin(), state.omega.end(), 0);
    state.gamma = worthiness(net);
    return state;
}

PixelDataset random_dataset(Eigen::Index n, Eigen::Index dims, std::uint64_t seed) {
    PixelDataset ds;
    ds.features.resize(n, dims);
    ds.labels.resize(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (Eigen::Index i = 0; i < ds.features.size(); ++i)
        ds.features.data()[i] = float(rng.uniform(-2, 2));
    for (auto& l : ds.labels) l = static_cast<std::uint8_t>(rng.index(3));
    return ds;
}

}  // namespace

TEST_CASE("worthiness sums absolute first-layer column weights") {
    std::vector<LayerSpec> spec{{LayerKind::dense, 2, 3, 0.0}, {LayerKind::softmax, 0, 0, 0.0}};
    auto net = build_network<float>(spec, 1);
    auto& w = std::get<DenseLayerT<float>>(net.layers[0]).weights;
    w.col(0) << 1.0f, -2.0f, 3.0f;
    w.col(1).setZero();
    auto gamma = worthiness(net);
    CHECK(gamma[0] == 6.0f);
    CHECK(gamma[1] == 0.0f);
}

TEST_CASE("worthiness equals a naive double-loop oracle exactly") {
    auto net = dense_net(13, 5);
    const auto& w = std::get<DenseLayerT<float>>(net.layers[0]).weights;
    std::vector<float> oracle(13, 0.0f);
    for (Eigen::Index i = 0; i < w.rows(); ++i)       // swapped nesting vs the
        for (Eigen::Index j = 0; j < w.cols(); ++j)   // implementation
            oracle[size_t(j)] += std::abs(w(i, j));
    // same ascending-i accumulation order per column, so bitwise equal
    auto gamma = worthiness(net);
    for (std::size_t j = 0; j < 13; ++j) CHECK(gamma[j] == oracle[j]);
}

TEST_CASE("worthiness requires a dense first layer") {
    Network net;
    net.layers.emplace_back(ReluLayer{});
    CHECK_THROWS_AS(worthiness(net), std::invalid_argument);
}

TEST_CASE("remove_min breaks gamma ties toward the lowest original index") {
    auto net = dense_net(3, 2);
    auto& w = std::get<DenseLayerT<float>>(net.layers[0]).weights;
    w.setZero();
    w.row(0) << 5.0f, 5.0f, 9.0f;
    PruneState state = fresh_state(net, 3);
    const int removed = remove_min(state, net);
    CHECK(removed == 0);
    CHECK(state.omega == std::vector<int>{1, 2});
}

TEST_CASE("dropping a feature is bitwise-identical to zeroing its column") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        auto net = dense_net(11, seed);
        Rng rng(seed * 31);
        const auto drop = static_cast<Eigen::Index>(rng.index(11));

        auto zeroed = net;
        std::get<DenseLayerT<float>>(zeroed.layers[0]).weights.col(drop).setZero();

        auto reduced = net;
        PruneState state = fresh_state(reduced, 11);
        state.gamma.assign(11, 1.0f);
        state.gamma[static_cast<std::size_t>(drop)] = 0.0f;  // force this removal
        remove_min(state, reduced);

        for (int trial = 0; trial < 100; ++trial) {
            Tensor x({1, 11});
            for (Eigen::Index i = 0; i < 11; ++i) x[i] = float(rng.uniform(-3, 3));
            Tensor xr({1, 10});
            for (Eigen::Index i = 0, o = 0; i < 11; ++i)
                if (i != drop) xr[o++] = x[i];
            auto tz = forward(zeroed, x, false);
            auto tr = forward(reduced, xr, false);
            REQUIRE(std::memcmp(tz.outputs.back().data(), tr.outputs.back().data(),
                                sizeof(float) * size_t(tz.outputs.back().size())) == 0);
        }
    }
}

TEST_CASE("removing an all-zero column leaves logits exactly unchanged") {
    auto net = dense_net(5, 9);
    std::get<DenseLayerT<float>>(net.layers[0]).weights.col(2).setZero();
    auto reduced = net;
    PruneState state = fresh_state(reduced, 5);
    CHECK(remove_min(state, reduced) == 2);  // zero column has minimal gamma

    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x({1, 5});
        for (Eigen::Index i = 0; i < 5; ++i) x[i] = float(rng.uniform(-2, 2));
        Tensor xr({1, 4});
        for (Eigen::Index i = 0, o = 0; i < 5; ++i)
            if (i != 2) xr[o++] = x[i];
        auto a = forward(net, x, false);
        auto b = forward(reduced, xr, false);
        REQUIRE(std::memcmp(a.outputs.back().data(), b.outputs.back().data(),
                            sizeof(float) * size_t(a.outputs.back().size())) == 0);
    }
}

TEST_CASE("restricting the dataset equals zero-filling removed channels") {
    auto net = dense_net(9, 12);
    auto ds = random_dataset(120, 9, 3);
    const std::vector<int> omega{0, 2, 3, 5, 6, 8};  // drop 1, 4, 7

    // route 1: reduced net on restricted features
    auto reduced = net;
    PruneState state = fresh_state(reduced, 9);
    for (int gone : {7, 4, 1}) {
        state.gamma.assign(state.omega.size(), 1.0f);
        for (std::size_t p = 0; p < state.omega.size(); ++p)
            if (state.omega[p] == gone) state.gamma[p] = 0.0f;
        remove_min(state, reduced);
    }
    CHECK(state.omega == omega);
    auto restricted = select_features(ds, omega);
    const double acc_restricted = eval_without_retrain(reduced, restricted);

    // route 2: original net on zero-filled features
    auto filled = ds;
    for (int gone : {1, 4, 7}) filled.features.col(gone).setZero();
    const double acc_filled = accuracy(net, filled);
    CHECK(acc_restricted == acc_filled);
}

TEST_CASE("eval_without_retrain with nothing removed reproduces the baseline") {
    auto net = dense_net(7, 21);
    auto ds = random_dataset(60, 7, 8);
    CHECK(eval_without_retrain(net, ds) == accuracy(net, ds));
}

TEST_CASE("tau = 1.0 reduces the pruner to greedy argsort of the initial gamma") {
    const Eigen::Index dims = 14;
    auto train_ds = random_dataset(80, dims, 31);
    auto val_ds = random_dataset(30, dims, 32);

    PruneConfig cfg;
    cfg.tau = 1.0;  // a drop can never exceed 1.0
    cfg.max_retrains = 20;
    cfg.min_features = 1;
    cfg.initial_template.input_dim = dims;
    cfg.initial_template.hidden = {6};
    cfg.initial_template.dropout = 0.0;
    cfg.initial_template.epochs = 0;  // score the freshly initialized network
    cfg.initial_template.seed = 77;
    cfg.retrain_template = cfg.initial_template;
    auto res = run_prune(train_ds, val_ds, cfg);

    CHECK(res.state.retrain_count == 0);
    CHECK(res.halt == PruneHalt::min_features);
    REQUIRE(res.state.history.size() == dims - 1);

    // independent oracle: stable argsort of the initial scores
    MlpConfig same = cfg.initial_template;
    auto net = build_mlp(same);
    const auto& w = std::get<DenseLayerT<float>>(net.layers[0]).weights;
    std::vector<float> gamma(dims, 0.0f);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) gamma[size_t(j)] += std::abs(w(i, j));
    std::vector<int> order(dims);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return gamma[size_t(a)] < gamma[size_t(b)]; });
    for (std::size_t k = 0; k < res.state.history.size(); ++k)
        CHECK(res.state.history[k].removed_original_index == order[k]);
}

TEST_CASE("prune history accounting stays consistent") {
    const Eigen::Index dims = 10;
    auto train_ds = random_dataset(100, dims, 41);
    auto val_ds = random_dataset(40, dims, 42);
    PruneConfig cfg;
    cfg.tau = 0.02;
    cfg.max_retrains = 3;
    cfg.min_features = 2;
    cfg.initial_template.input_dim = dims;
    cfg.initial_template.hidden = {8};
    cfg.initial_template.epochs = 4;
    cfg.initial_template.batch_size = 32;
    cfg.initial_template.seed = 5;
    cfg.retrain_template = cfg.initial_template;
    cfg.retrain_template.epochs = 3;
    cfg.retrain_template.optimizer = OptimizerKind::adadelta;
    cfg.rescale_floor = 4;
    auto res = run_prune(train_ds, val_ds, cfg);

    // removals + |omega_final| = B
    CHECK(res.state.history.size() + res.state.omega.size() == size_t(dims));
    // each step removes exactly one feature, never twice
    std::set<int> removed;
    for (std::size_t k = 0; k < res.state.history.size(); ++k) {
        CHECK(res.state.history[k].step == int(k));
        CHECK(removed.insert(res.state.history[k].removed_original_index).second);
    }
    // retrain flags equal the recorded count and respect the budget
    int flagged = 0;
    for (const auto& ev : res.state.history) flagged += ev.retrained ? 1 : 0;
    CHECK(flagged == res.state.retrain_count);
    CHECK(res.state.retrain_count <= cfg.max_retrains);
    // survivors and removals partition the original features
    for (int idx : res.state.omega) CHECK(!removed.count(idx));
    // removal-order map inverts back to omega
    auto order_map = removal_order_map(res.state.history, int(dims));
    std::vector<int> reconstructed;
    for (int j = 0; j < dims; ++j)
        if (order_map[size_t(j)] == dims) reconstructed.push_back(j);
    CHECK(reconstructed == res.state.omega);
}

TEST_CASE("a generated run yields a monotone curve and honors the tau dip rule") {
    auto spec = default_spec(16, 4);
    spec.height = 40;
    spec.width = 40;
    spec.cell_count = 10;
    spec.radius_min = 1.5;
    spec.radius_max = 3.0;
    spec.seed = 29;
    auto scene = render_scene(spec);
    auto bal = undersample_uniform(pixelize(scene.cube, scene.mask), 6);
    auto parts = split(bal, {0.8, 0.1, 0.1, 7});
    auto stats = normalize_fit(parts.train);
    auto tr = normalize_apply(stats, parts.train);
    auto va = normalize_apply(stats, parts.val);

    PruneConfig cfg;
    cfg.tau = 0.01;
    cfg.max_retrains = 5;
    cfg.min_features = 2;
    cfg.initial_template.input_dim = 16;
    cfg.initial_template.hidden = {16, 16};
    cfg.initial_template.epochs = 10;
    cfg.initial_template.seed = 21;
    cfg.retrain_template = cfg.initial_template;
    cfg.retrain_template.epochs = 8;
    cfg.retrain_template.optimizer = OptimizerKind::adadelta;
    cfg.rescale_floor = 4;
    auto res = run_prune(tr, va, cfg);
    REQUIRE(!res.state.history.empty());

    // between retrains the recorded accuracy never dips more than tau below
    // the baseline except at the step that triggered the retrain
    REQUIRE(res.state.baseline_trace.size() == res.state.history.size());
    for (std::size_t k = 0; k < res.state.history.size(); ++k) {
        const auto& ev = res.state.history[k];
        const double drop = res.state.baseline_trace[k] - ev.val_accuracy;
        if (!ev.retrained) CHECK(drop <= cfg.tau + 1e-12);
        else CHECK(drop > cfg.tau);
    }

    // the emitted curve has a strictly increasing removed_count column
    const fs::path dir = fs::temp_directory_path() / "hsfs_prune_report_test";
    fs::create_directories(dir);
    write_prune_report((dir / "curve.csv").string(), (dir / "order.txt").string(),
                       res.state.history, 16);
    std::ifstream curve(dir / "curve.csv");
    std::string line;
    std::getline(curve, line);  // header
    long prev = 0;
    long rows = 0;
    while (std::getline(curve, line)) {
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        const long removed_count = std::stol(line.substr(a + 1, b - a - 1));
        CHECK(removed_count == prev + 1);
        prev = removed_count;
        ++rows;
    }
    CHECK(rows == long(res.state.history.size()));
    fs::remove_all(dir);
}

TEST_CASE("removing the planted channels collapses N+/N- discrimination") {
    auto spec = default_spec(24, 4);
    spec.height = 40;
    spec.width = 40;
    spec.cell_count = 12;
    spec.radius_min = 1.5;
    spec.radius_max = 3.0;
    spec.seed = 23;
    auto scene = render_scene(spec);
    auto bal = undersample_uniform(pixelize(scene.cube, scene.mask), 6);
    auto parts = split(bal, {0.8, 0.1, 0.1, 7});
    auto stats = normalize_fit(parts.train);
    auto tr = normalize_apply(stats, parts.train);
    auto va = normalize_apply(stats, parts.val);

    MlpConfig cfg;
    cfg.input_dim = 24;
    cfg.epochs = 15;
    cfg.seed = 21;
    auto net = build_mlp(cfg);
    train(net, tr, va, cfg);
    const double full_acc = accuracy(net, va);
    CHECK(full_acc > 0.9);

    // strip every informative channel from both the net and the features
    std::set<int> informative(scene.informative.begin(), scene.informative.end());
    auto reduced = net;
    PruneState state;
    state.omega.resize(24);
    std::iota(state.omega.begin(), state.omega.end(), 0);
    state.gamma = worthiness(reduced);
    for (int gone : informative) {
        state.gamma.assign(state.omega.size(), 1.0f);
        for (std::size_t p = 0; p < state.omega.size(); ++p)
            if (state.omega[p] == gone) state.gamma[p] = 0.0f;
        remove_min(state, reduced);
    }
    auto kept = va;
    kept = select_features(kept, state.omega);
    const double stripped_acc = eval_without_retrain(reduced, kept);
    // ceiling without the planted signal: BG still separable, N+/N- is chance
    CHECK(stripped_acc < full_acc - 0.15);
}
