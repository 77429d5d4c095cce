#include "hsfs/pixel_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "hsfs/loss.hpp"

namespace hsfs {

Network build_mlp(const MlpConfig& cfg) {
    if (cfg.input_dim < 1) throw std::invalid_argument("build_mlp: input_dim must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw std::invalid_argument("build_mlp: dropout must lie in [0,1)");
    std::vector<LayerSpec> spec;
    Eigen::Index prev = cfg.input_dim;
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
        const Eigen::Index h = cfg.hidden[i];
        if (h < 1) throw std::invalid_argument("build_mlp: hidden sizes must be positive");
        spec.push_back({LayerKind::dense, prev, h, 0.0});
        spec.push_back({LayerKind::relu, 0, 0, 0.0});
        if (i == 0 && cfg.dropout > 0.0) spec.push_back({LayerKind::dropout, 0, 0, cfg.dropout});
        prev = h;
    }
    spec.push_back({LayerKind::dense, prev, kNumClasses, 0.0});
    spec.push_back({LayerKind::softmax, 0, 0, 0.0});
    return build_network<float>(spec, cfg.seed);
}

namespace {

Eigen::Index net_input_dim(const Network& net) {
    if (net.layers.empty()) throw std::invalid_argument("empty network");
    const auto* dense = std::get_if<DenseLayerT<float>>(&net.layers.front());
    if (!dense) throw std::invalid_argument("network does not start with a dense layer");
    return dense->in_dim();
}

Tensor rows_tensor(const RowMat<float>& features, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
    Tensor batch({static_cast<Eigen::Index>(end - begin), features.cols()});
    auto bm = batch.matrix();
    for (std::size_t i = begin; i < end; ++i)
        bm.row(static_cast<Eigen::Index>(i - begin)) =
            features.row(static_cast<Eigen::Index>(order[i]));
    return batch;
}

}  // namespace

TrainResult train(Network& net, const PixelDataset& train_ds, const PixelDataset& val_ds,
                  const MlpConfig& cfg) {
    const Eigen::Index in_dim = net_input_dim(net);
    if (train_ds.dims() != in_dim || val_ds.dims() != in_dim)
        throw std::invalid_argument("train: dataset dims do not match network input");
    if (train_ds.n() == 0 || val_ds.n() == 0)
        throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
    for (std::uint8_t l : train_ds.labels)
        if (l > 2) throw std::invalid_argument("train: label outside {0,1,2}");

    auto opt = make_optimizer(cfg.optimizer, net);
    if (auto* adam = std::get_if<AdamStateT<float>>(&opt))
        adam->alpha = static_cast<float>(cfg.learning_rate);

    Rng order_rng(Rng::derive(cfg.seed, 2));
    TrainResult result;
    auto best = snapshot_params(net);
    result.best_val_accuracy = accuracy(net, val_ds);
    result.best_epoch = -1;  // untrained parameters may win for epochs == 0

    const auto n = static_cast<std::size_t>(train_ds.n());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = order_rng.permutation(n);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
            Tensor batch = rows_tensor(train_ds.features, order, begin, end);
            std::vector<int> labels(end - begin);
            for (std::size_t i = begin; i < end; ++i)
                labels[i - begin] = train_ds.labels[order[i]];

            auto tape = forward(net, batch, true);
            auto lr = loss_cross_entropy(tape.outputs.back(), labels);
            if (!std::isfinite(lr.value))
                throw NumericsError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch));
            loss_sum += double(lr.value) * double(end - begin);
            auto grads = backward(net, tape, lr.grad);
            optimizer_step(opt, net, grads);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / double(n);
        stats.val_accuracy = accuracy(net, val_ds);
        result.history.push_back(stats);
        if (stats.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = stats.val_accuracy;
            result.best_epoch = epoch;
            best = snapshot_params(net);
        }
    }
    restore_params(net, best);
    return result;
}

namespace {

void predict_range(Network& net, const RowMat<float>& features, Eigen::Index row0,
                   Eigen::Index row1, std::vector<std::uint8_t>& out) {
    const Eigen::Index in_dim = features.cols();
    constexpr Eigen::Index kBatch = 512;
    for (Eigen::Index begin = row0; begin < row1; begin += kBatch) {
        const Eigen::Index end = std::min(row1, begin + kBatch);
        Tensor batch({end - begin, in_dim});
        batch.matrix() = features.middleRows(begin, end - begin);
        auto tape = forward(net, batch, false);
        auto probs = tape.outputs.back().matrix();
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            Eigen::Index arg = 0;
            for (Eigen::Index c = 1; c < probs.cols(); ++c)
                if (probs(r, c) > probs(r, arg)) arg = c;  // ties keep the lowest class
            out[static_cast<std::size_t>(begin + r)] = static_cast<std::uint8_t>(arg);
        }
    }
}

}  // namespace

std::vector<std::uint8_t> predict(Network& net, const RowMat<float>& features, int threads) {
    const Eigen::Index in_dim = net_input_dim(net);
    if (features.cols() != in_dim)
        throw std::invalid_argument("predict: feature dims do not match network input");
    if (threads < 1) throw std::invalid_argument("predict: threads must be at least 1");
    const Eigen::Index rows = features.rows();
    std::vector<std::uint8_t> out(static_cast<std::size_t>(rows));
    const auto workers = static_cast<Eigen::Index>(
        std::min<long>(threads, std::max<long>(1, rows / 256)));
    if (workers <= 1) {
        predict_range(net, features, 0, rows, out);
        return out;
    }
    // per-row outputs are independent, so sharding cannot change the result
    std::vector<Network> copies(static_cast<std::size_t>(workers), net);
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (rows + workers - 1) / workers;
    for (Eigen::Index w = 0; w < workers; ++w) {
        const Eigen::Index row0 = w * chunk;
        const Eigen::Index row1 = std::min(rows, row0 + chunk);
        if (row0 >= row1) break;
        pool.emplace_back([&, w, row0, row1] {
            predict_range(copies[static_cast<std::size_t>(w)], features, row0, row1, out);
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

double accuracy(Network& net, const PixelDataset& ds) {
    if (ds.n() == 0) throw std::invalid_argument("accuracy: empty dataset");
    auto pred = predict(net, ds.features);
    long hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == ds.labels[i]) ++hits;
    return double(hits) / double(pred.size());
}

EvalReport report_from_predictions(const std::vector<std::uint8_t>& truth,
                                   const std::vector<std::uint8_t>& predicted) {
    if (truth.size() != predicted.size() || truth.empty())
        throw std::invalid_argument("report: prediction list must match a non-empty truth list");
    EvalReport rep;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] > 2 || predicted[i] > 2)
            throw std::invalid_argument("report: label outside {0,1,2}");
        rep.confusion[truth[i]][predicted[i]] += 1;
    }
    rep.total = static_cast<long>(truth.size());
    long diag = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        long row_sum = 0, col_sum = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            row_sum += rep.confusion[c][k];
            col_sum += rep.confusion[k][c];
        }
        const long tp = rep.confusion[c][c];
        diag += tp;
        if (col_sum == 0 || row_sum == 0) rep.empty_class_warning = true;
        rep.precision[c] = col_sum == 0 ? 0.0 : double(tp) / double(col_sum);
        rep.recall[c] = row_sum == 0 ? 0.0 : double(tp) / double(row_sum);
        const double pr = rep.precision[c] + rep.recall[c];
        rep.f1[c] = pr == 0.0 ? 0.0 : 2.0 * rep.precision[c] * rep.recall[c] / pr;
    }
    rep.accuracy = double(diag) / double(rep.total);
    // unweighted mean over the three classes (the Table-I "Average" row)
    for (int c = 0; c < kNumClasses; ++c) {
        rep.macro_precision += rep.precision[c] / kNumClasses;
        rep.macro_recall += rep.recall[c] / kNumClasses;
        rep.macro_f1 += rep.f1[c] / kNumClasses;
    }
    return rep;
}

EvalReport evaluate(Network& net, const PixelDataset& ds, int threads) {
    if (ds.n() == 0) throw std::invalid_argument("evaluate: empty dataset");
    return report_from_predictions(ds.labels, predict(net, ds.features, threads));
}

EvalReport majority_baseline(const PixelDataset& ds) {
    if (ds.n() == 0) throw std::invalid_argument("majority_baseline: empty dataset");
    auto counts = class_histogram(ds);
    std::uint8_t mode = 0;
    for (std::uint8_t c = 1; c < kNumClasses; ++c)
        if (counts[c] > counts[mode]) mode = c;
    std::vector<std::uint8_t> pred(ds.labels.size(), mode);
    return report_from_predictions(ds.labels, pred);
}

LabelMask classify_cube(Network& net, const HyperCube& cube, int threads) {
    const Eigen::Index in_dim = net_input_dim(net);
    if (cube.bands != in_dim)
        throw std::invalid_argument("classify_cube: cube bands (" + std::to_string(cube.bands) +
                                    ") do not match network input (" + std::to_string(in_dim) +
                                    ")");
    // shares the per-pixel path with evaluate(): label(r,c) equals the
    // prediction for pixelize(cube) record r*W+c
    RowMat<float> spectra = cube.spectra();
    LabelMask mask;
    mask.height = cube.height;
    mask.width = cube.width;
    mask.labels = predict(net, spectra, threads);
    return mask;
}

std::vector<std::uint8_t> overlay_rgb(const LabelMask& mask) {
    std::vector<std::uint8_t> rgb(mask.labels.size() * 3, 0);
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        switch (mask.labels[i]) {
            case kLabelNPlus:  // orange
                rgb[3 * i] = 255;
                rgb[3 * i + 1] = 165;
                rgb[3 * i + 2] = 0;
                break;
            case kLabelNMinus:  // yellow
                rgb[3 * i] = 255;
                rgb[3 * i + 1] = 255;
                rgb[3 * i + 2] = 0;
                break;
            default: break;  // BG stays black
        }
    }
    return rgb;
}

namespace {

const char* kClassNames[kNumClasses] = {"BG", "N+", "N-"};

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

void write_eval_report_text(const std::string& path, const EvalReport& rep) {
    std::ostringstream out;
    out << "samples " << rep.total << "\n";
    out << "accuracy " << fmt6(rep.accuracy) << "\n\n";
    out << "confusion matrix (rows = truth, cols = predicted)\n";
    out << "          BG      N+      N-\n";
    for (int r = 0; r < kNumClasses; ++r) {
        out << kClassNames[r];
        for (int c = 0; c < kNumClasses; ++c) {
            char cell[16];
            std::snprintf(cell, sizeof cell, "%8ld", rep.confusion[r][c]);
            out << cell;
        }
        out << "\n";
    }
    out << "\nclass     precision  recall  f1\n";
    for (int c = 0; c < kNumClasses; ++c)
        out << kClassNames[c] << "        " << fmt6(rep.precision[c]) << "  " << fmt6(rep.recall[c])
            << "  " << fmt6(rep.f1[c]) << "\n";
    out << "average   " << fmt6(rep.macro_precision) << "  " << fmt6(rep.macro_recall) << "  "
        << fmt6(rep.macro_f1) << "\n";
    if (rep.empty_class_warning)
        out << "\nwarning: a class had no samples or predictions; its metrics default to 0\n";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(IoErrc::io_failure, "cannot open " + path + " for writing");
    f << out.str();
    if (!f) throw IoError(IoErrc::io_failure, "short write to " + path);
}

void write_eval_report_csv(const std::string& path, const EvalReport& rep) {
    std::ostringstream out;
    out << "class,precision,recall,f1,support\n";
    for (int c = 0; c < kNumClasses; ++c) {
        long support = 0;
        for (int k = 0; k < kNumClasses; ++k) support += rep.confusion[c][k];
        out << kClassNames[c] << "," << fmt6(rep.precision[c]) << "," << fmt6(rep.recall[c]) << ","
            << fmt6(rep.f1[c]) << "," << support << "\n";
    }
    out << "average," << fmt6(rep.macro_precision) << "," << fmt6(rep.macro_recall) << ","
        << fmt6(rep.macro_f1) << "," << rep.total << "\n";
    out << "accuracy," << fmt6(rep.accuracy) << ",,," << rep.total << "\n";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(IoErrc::io_failure, "cannot open " + path + " for writing");
    f << out.str();
    if (!f) throw IoError(IoErrc::io_failure, "short write to " + path);
}

}  // namespace hsfs
