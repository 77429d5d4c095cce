#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hsfs/dataio.hpp"
#include "hsfs/network.hpp"
#include "hsfs/optimizer.hpp"
#include "hsfs/pipeline.hpp"

namespace hsfs {

struct MlpConfig {
    Eigen::Index input_dim = 512;
    std::vector<Eigen::Index> hidden = {128, 256};
    double dropout = 0.5;
    int epochs = 30;
    Eigen::Index batch_size = 128;
    double learning_rate = 1e-3;  // adam alpha; adadelta ignores it
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
};

/// Dense(in->h0) ReLU Dropout Dense(h0->h1) ReLU ... Dense(->3) Softmax.
Network build_mlp(const MlpConfig& cfg);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    double best_val_accuracy = 0.0;
    int best_epoch = -1;
};

/// Minibatch cross-entropy training; parameters from the best-validation
/// epoch are restored before returning. Expects normalized features.
TrainResult train(Network& net, const PixelDataset& train_ds, const PixelDataset& val_ds,
                  const MlpConfig& cfg);

/// Eval-mode argmax labels (ties break to the lowest class index). With
/// threads > 1 the rows are sharded across workers that each own a read-only
/// parameter copy; per-row outputs are independent, so the result is
/// identical at any thread count.
std::vector<std::uint8_t> predict(Network& net, const RowMat<float>& features, int threads = 1);

double accuracy(Network& net, const PixelDataset& ds);

struct EvalReport {
    // rows = true class, cols = predicted class
    std::array<std::array<long, kNumClasses>, kNumClasses> confusion{};
    std::array<double, kNumClasses> precision{}, recall{}, f1{};
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double accuracy = 0.0;
    long total = 0;
    bool empty_class_warning = false;  // some precision/recall fell back to 0
};

EvalReport report_from_predictions(const std::vector<std::uint8_t>& truth,
                                   const std::vector<std::uint8_t>& predicted);

EvalReport evaluate(Network& net, const PixelDataset& ds, int threads = 1);

/// Predicts the most frequent class of `ds` everywhere; the trivial floor the
/// trained network has to clear.
EvalReport majority_baseline(const PixelDataset& ds);

/// Per-pixel argmax over the cube's spectra. The cube must already carry
/// exactly the features the network expects (selected and normalized).
LabelMask classify_cube(Network& net, const HyperCube& cube, int threads = 1);

/// N+ orange, N- yellow, BG black (stands in for transparency in PPM).
std::vector<std::uint8_t> overlay_rgb(const LabelMask& mask);

void write_eval_report_text(const std::string& path, const EvalReport& report);
void write_eval_report_csv(const std::string& path, const EvalReport& report);

}  // namespace hsfs
