#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hsfs/network.hpp"
#include "hsfs/optimizer.hpp"
#include "hsfs/pipeline.hpp"

namespace hsfs {

struct CnnConfig {
    Eigen::Index chip_size = 16;  // must be divisible by 4 (two 2x2 pools)
    Eigen::Index bands = 16;
    std::array<Eigen::Index, 5> widths = {8, 8, 4, 4, 1};  // paper scale: 128,128,64,64,1
    double dropout = 0.25;
    int epochs = 30;
    Eigen::Index batch_size = 32;
    double adadelta_rho = 0.95;
    double adadelta_eps = 1e-6;
    std::uint64_t seed = 0;
};

/// Conv-Dropout-Pool / Conv-Pool / Conv-Up-Dropout / Conv-Up / Conv(->1)
/// encoder-decoder with 3x3 kernels and a linear single-channel head. Spatial
/// dims follow S -> S/2 -> S/4 -> S/2 -> S, asserted at build time.
Network build_cnn(const CnnConfig& cfg);

struct MaskEpochStats {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct MaskerTrainResult {
    std::vector<MaskEpochStats> history;
    double best_val_mse = 0.0;
    int best_epoch = -1;
    NormStats stats;  // per-band stats fitted on the training fraction
};

/// Regresses the coded mask (BG 0, N+ 1, N- 2) with mse + adadelta. The last
/// ceil(val_frac * n) chips are held out after a seeded shuffle; per-band
/// normalization is fitted on the training fraction and applied to both.
MaskerTrainResult train_masker(Network& net, const ChipSet& chips, double val_frac,
                               const CnnConfig& cfg);

NormStats fit_chip_stats(const ChipSet& chips);
ChipSet normalize_chips(const NormStats& stats, ChipSet chips);

struct MaskPrediction {
    Eigen::Index size = 0;
    std::vector<float> values;          // continuous codes, size*size
    std::vector<std::uint8_t> rounded;  // clamped to {0,1,2}
};

/// Forward pass on one normalized chip.
MaskPrediction predict_mask(Network& net, const Tensor& chip);

/// Mean |prediction - coded target| over every pixel of every chip; chips
/// must already be normalized.
double eval_l1(Network& net, const ChipSet& chips);

}  // namespace hsfs
