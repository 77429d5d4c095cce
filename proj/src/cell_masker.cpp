#include "hsfs/cell_masker.hpp"

#include <algorithm>
#include <cmath>

#include "hsfs/loss.hpp"

namespace hsfs {

Network build_cnn(const CnnConfig& cfg) {
    if (cfg.chip_size < 4 || cfg.chip_size % 4 != 0)
        throw std::invalid_argument("build_cnn: chip size must be a positive multiple of 4");
    if (cfg.bands < 1) throw std::invalid_argument("build_cnn: bands must be positive");
    for (Eigen::Index w : cfg.widths)
        if (w < 1) throw std::invalid_argument("build_cnn: widths must be positive");
    if (cfg.widths[4] != 1)
        throw std::invalid_argument("build_cnn: the regression head is single-channel");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw std::invalid_argument("build_cnn: dropout must lie in [0,1)");

    const auto& w = cfg.widths;
    std::vector<LayerSpec> spec{
        {LayerKind::conv2d, cfg.bands, w[0], 0.0},
        {LayerKind::relu, 0, 0, 0.0},
        {LayerKind::dropout, 0, 0, cfg.dropout},
        {LayerKind::maxpool2, 0, 0, 0.0},
        {LayerKind::conv2d, w[0], w[1], 0.0},
        {LayerKind::relu, 0, 0, 0.0},
        {LayerKind::maxpool2, 0, 0, 0.0},
        {LayerKind::conv2d, w[1], w[2], 0.0},
        {LayerKind::relu, 0, 0, 0.0},
        {LayerKind::upsample2, 0, 0, 0.0},
        {LayerKind::dropout, 0, 0, cfg.dropout},
        {LayerKind::conv2d, w[2], w[3], 0.0},
        {LayerKind::relu, 0, 0, 0.0},
        {LayerKind::upsample2, 0, 0, 0.0},
        {LayerKind::conv2d, w[3], w[4], 0.0},  // linear head
    };
    Network net = build_network<float>(spec, cfg.seed);

    // assert the hourglass: conv layers preserve, pools halve, upsamples double
    const auto shapes = infer_shapes(net, {1, cfg.chip_size, cfg.chip_size, cfg.bands});
    const Eigen::Index s = cfg.chip_size;
    const std::vector<std::pair<Eigen::Index, Eigen::Index>> expect{
        {s, s}, {s, s}, {s, s}, {s / 2, s / 2}, {s / 2, s / 2}, {s / 2, s / 2}, {s / 4, s / 4},
        {s / 4, s / 4}, {s / 4, s / 4}, {s / 2, s / 2}, {s / 2, s / 2}, {s / 2, s / 2},
        {s / 2, s / 2}, {s, s}, {s, s}};
    for (std::size_t i = 0; i < shapes.size(); ++i)
        if (shapes[i][1] != expect[i].first || shapes[i][2] != expect[i].second)
            throw std::logic_error("build_cnn: unexpected spatial dims at layer " +
                                   std::to_string(i));
    if (shapes.back()[3] != 1) throw std::logic_error("build_cnn: head is not single-channel");
    return net;
}

NormStats fit_chip_stats(const ChipSet& chips) {
    if (chips.chips.empty()) throw std::invalid_argument("fit_chip_stats: no chips");
    const Eigen::Index bands = chips.bands;
    NormStats stats;
    stats.mean.assign(static_cast<std::size_t>(bands), 0.0f);
    stats.stdev.assign(static_cast<std::size_t>(bands), 1.0f);
    std::vector<double> sum(bands, 0.0), sumsq(bands, 0.0);
    double count = 0.0;
    for (const Chip& chip : chips.chips) {
        const float* d = chip.cube.data();
        const Eigen::Index pixels = chips.size * chips.size;
        for (Eigen::Index p = 0; p < pixels; ++p)
            for (Eigen::Index b = 0; b < bands; ++b) sum[b] += double(d[p * bands + b]);
        count += double(pixels);
    }
    for (Eigen::Index b = 0; b < bands; ++b) sum[b] /= count;
    for (const Chip& chip : chips.chips) {
        const float* d = chip.cube.data();
        const Eigen::Index pixels = chips.size * chips.size;
        for (Eigen::Index p = 0; p < pixels; ++p)
            for (Eigen::Index b = 0; b < bands; ++b) {
                const double dv = double(d[p * bands + b]) - sum[b];
                sumsq[b] += dv * dv;
            }
    }
    for (Eigen::Index b = 0; b < bands; ++b) {
        const double sd = std::sqrt(sumsq[b] / count);
        if (sd < 1e-8) {
            stats.mean[static_cast<std::size_t>(b)] = 0.0f;
            stats.stdev[static_cast<std::size_t>(b)] = 1.0f;
        } else {
            stats.mean[static_cast<std::size_t>(b)] = static_cast<float>(sum[b]);
            stats.stdev[static_cast<std::size_t>(b)] = static_cast<float>(sd);
        }
    }
    return stats;
}

ChipSet normalize_chips(const NormStats& stats, ChipSet chips) {
    if (static_cast<Eigen::Index>(stats.dims()) != chips.bands)
        throw std::invalid_argument("normalize_chips: stats dims do not match bands");
    for (Chip& chip : chips.chips) {
        float* d = chip.cube.data();
        const Eigen::Index pixels = chips.size * chips.size;
        for (Eigen::Index p = 0; p < pixels; ++p)
            for (Eigen::Index b = 0; b < chips.bands; ++b)
                d[p * chips.bands + b] = (d[p * chips.bands + b] - stats.mean[b]) / stats.stdev[b];
    }
    return chips;
}

namespace {

Tensor chips_batch(const ChipSet& set, const std::vector<std::size_t>& order, std::size_t begin,
                   std::size_t end) {
    const Eigen::Index s = set.size, b = set.bands;
    Tensor batch({static_cast<Eigen::Index>(end - begin), s, s, b});
    for (std::size_t i = begin; i < end; ++i)
        std::copy(set.chips[order[i]].cube.data(), set.chips[order[i]].cube.data() + s * s * b,
                  batch.data() + (i - begin) * s * s * b);
    return batch;
}

Tensor chips_targets(const ChipSet& set, const std::vector<std::size_t>& order, std::size_t begin,
                     std::size_t end) {
    const Eigen::Index s = set.size;
    Tensor target({static_cast<Eigen::Index>(end - begin), s, s, 1});
    for (std::size_t i = begin; i < end; ++i) {
        const auto& mask = set.chips[order[i]].mask;
        float* dst = target.data() + (i - begin) * s * s;
        for (Eigen::Index p = 0; p < s * s; ++p) dst[p] = float(mask[static_cast<std::size_t>(p)]);
    }
    return target;
}

std::vector<std::size_t> iota_order(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

double mean_mse(Network& net, const ChipSet& set, Eigen::Index batch_size) {
    const auto order = iota_order(set.chips.size());
    double sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += std::size_t(batch_size)) {
        const std::size_t end = std::min(order.size(), begin + std::size_t(batch_size));
        Tensor batch = chips_batch(set, order, begin, end);
        Tensor target = chips_targets(set, order, begin, end);
        auto tape = forward(net, batch, false);
        sum += double(loss_mse(tape.outputs.back(), target).value) * double(end - begin);
    }
    return sum / double(order.size());
}

}  // namespace

MaskerTrainResult train_masker(Network& net, const ChipSet& chips, double val_frac,
                               const CnnConfig& cfg) {
    if (chips.chips.size() < 2) throw std::invalid_argument("train_masker: need at least 2 chips");
    if (val_frac <= 0.0 || val_frac >= 1.0)
        throw std::invalid_argument("train_masker: val_frac must lie in (0,1)");

    // seeded shuffle, then the tail becomes the held-out fraction
    Rng rng(Rng::derive(cfg.seed, 3));
    auto order = rng.permutation(chips.chips.size());
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(val_frac * double(chips.chips.size()))));
    const std::size_t n_train = chips.chips.size() - n_val;
    if (n_train == 0) throw std::invalid_argument("train_masker: no training chips left");

    ChipSet train_set{chips.size, chips.bands, {}};
    ChipSet val_set{chips.size, chips.bands, {}};
    for (std::size_t i = 0; i < n_train; ++i) train_set.chips.push_back(chips.chips[order[i]]);
    for (std::size_t i = n_train; i < chips.chips.size(); ++i)
        val_set.chips.push_back(chips.chips[order[i]]);

    MaskerTrainResult result;
    result.stats = fit_chip_stats(train_set);
    train_set = normalize_chips(result.stats, std::move(train_set));
    val_set = normalize_chips(result.stats, std::move(val_set));

    auto opt = make_optimizer(OptimizerKind::adadelta, net);
    auto& ada = std::get<AdadeltaStateT<float>>(opt);
    ada.rho = static_cast<float>(cfg.adadelta_rho);
    ada.eps = static_cast<float>(cfg.adadelta_eps);

    Rng order_rng(Rng::derive(cfg.seed, 4));
    auto best = snapshot_params(net);
    result.best_val_mse = mean_mse(net, val_set, cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto perm = order_rng.permutation(train_set.chips.size());
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < perm.size(); begin += std::size_t(cfg.batch_size)) {
            const std::size_t end = std::min(perm.size(), begin + std::size_t(cfg.batch_size));
            Tensor batch = chips_batch(train_set, perm, begin, end);
            Tensor target = chips_targets(train_set, perm, begin, end);
            auto tape = forward(net, batch, true);
            auto lr = loss_mse(tape.outputs.back(), target);
            if (!std::isfinite(lr.value))
                throw NumericsError("masker training diverged at epoch " + std::to_string(epoch));
            loss_sum += double(lr.value) * double(end - begin);
            auto grads = backward(net, tape, lr.grad);
            optimizer_step(opt, net, grads);
        }
        MaskEpochStats stats;
        stats.epoch = epoch;
        stats.train_mse = loss_sum / double(train_set.chips.size());
        stats.val_mse = mean_mse(net, val_set, cfg.batch_size);
        result.history.push_back(stats);
        if (stats.val_mse < result.best_val_mse || result.best_epoch < 0) {
            result.best_val_mse = stats.val_mse;
            result.best_epoch = epoch;
            best = snapshot_params(net);
        }
    }
    restore_params(net, best);
    return result;
}

MaskPrediction predict_mask(Network& net, const Tensor& chip) {
    if (chip.rank() != 3)
        throw std::invalid_argument("predict_mask: expected a (s, s, bands) chip");
    Tensor batch({1, chip.dim(0), chip.dim(1), chip.dim(2)});
    std::copy(chip.data(), chip.data() + chip.size(), batch.data());
    auto tape = forward(net, batch, false);
    const Tensor& out = tape.outputs.back();
    if (out.dim(1) != chip.dim(0) || out.dim(2) != chip.dim(1))
        throw std::invalid_argument("predict_mask: network output dims do not match the chip");
    MaskPrediction pred;
    pred.size = chip.dim(0);
    pred.values.assign(out.data(), out.data() + out.size());
    pred.rounded.resize(pred.values.size());
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const float r = std::round(pred.values[i]);
        pred.rounded[i] = static_cast<std::uint8_t>(std::clamp(r, 0.0f, 2.0f));
    }
    return pred;
}

double eval_l1(Network& net, const ChipSet& chips) {
    if (chips.chips.empty()) throw std::invalid_argument("eval_l1: no chips");
    const auto order = iota_order(chips.chips.size());
    double sum = 0.0;
    long pixels = 0;
    constexpr Eigen::Index kBatch = 32;
    for (std::size_t begin = 0; begin < order.size(); begin += std::size_t(kBatch)) {
        const std::size_t end = std::min(order.size(), begin + std::size_t(kBatch));
        Tensor batch = chips_batch(chips, order, begin, end);
        Tensor target = chips_targets(chips, order, begin, end);
        auto tape = forward(net, batch, false);
        const auto& out = tape.outputs.back();
        sum += double((out.array() - target.array()).abs().sum());
        pixels += out.size();
    }
    return sum / double(pixels);
}

}  // namespace hsfs
