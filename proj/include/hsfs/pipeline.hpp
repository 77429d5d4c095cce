#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsfs/dataio.hpp"
#include "hsfs/tensor.hpp"

namespace hsfs {

// ---------------------------------------------------------------------------
// pixel datasets
// ---------------------------------------------------------------------------

/// One record per pixel, row-major over the image; record i carries the
/// spectrum of pixel i and its mask label.
PixelDataset pixelize(const HyperCube& cube, const LabelMask& mask);

/// Downsamples every class, without replacement, to the minimum class count.
/// Relative record order is preserved (selected indices stay ascending).
PixelDataset undersample_uniform(const PixelDataset& ds, std::uint64_t seed);

std::vector<Eigen::Index> class_histogram(const PixelDataset& ds);

struct SplitSpec {
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t seed = 0;
};

struct SplitResult {
    PixelDataset train;
    PixelDataset val;
    PixelDataset test;
};

/// Disjoint, exhaustive partition; part sizes are floor(n * frac) with the
/// remainder going to train.
SplitResult split(const PixelDataset& ds, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// z-score normalization (training statistics only)
// ---------------------------------------------------------------------------

struct NormStats {
    std::vector<float> mean;
    std::vector<float> stdev;

    std::size_t dims() const { return mean.size(); }
};

/// Per-channel mean/std; channels with std below 1e-8 get (mean 0, std 1) so
/// constant channels pass through untouched.
NormStats normalize_fit(const PixelDataset& train);

PixelDataset normalize_apply(const NormStats& stats, PixelDataset ds);

/// Keeps only the listed original feature columns (sorted, unique).
PixelDataset select_features(const PixelDataset& ds, const std::vector<int>& omega);

NormStats select_stats(const NormStats& stats, const std::vector<int>& omega);

// ---------------------------------------------------------------------------
// chips (masker training data)
// ---------------------------------------------------------------------------

enum class ChipTransform { none, flip_h, flip_v, rot90, rot180, rot270 };

const char* transform_name(ChipTransform t);
ChipTransform transform_from_name(const std::string& name);

/// output(r, c) = input(source coordinates under the transform); rotations
/// are counterclockwise multiples of 90 degrees
void transform_coords(ChipTransform t, Eigen::Index size, Eigen::Index r, Eigen::Index c,
                      Eigen::Index& src_r, Eigen::Index& src_c);

struct Chip {
    Tensor cube;                     // size x size x bands
    std::vector<std::uint8_t> mask;  // size*size
    Eigen::Index src_row = 0;        // top-left crop offset in the source
    Eigen::Index src_col = 0;
    ChipTransform transform = ChipTransform::none;

    bool nontrivial() const;  // any non-background pixel
};

struct ChipSet {
    Eigen::Index size = 0;
    Eigen::Index bands = 0;
    std::vector<Chip> chips;
};

/// Rejection-samples random crops + transforms until `count` chips exist with
/// at least ceil(min_nontrivial_frac * count) containing a cell pixel; gives
/// up (infeasible) after 100 * count attempts.
ChipSet make_chips(const HyperCube& cube, const LabelMask& mask, Eigen::Index size,
                   Eigen::Index count, double min_nontrivial_frac, std::uint64_t seed);

/// Chips serialize as paired HSC1/MSK1 files next to a JSON manifest.
void save_chipset(const std::string& manifest_path, const ChipSet& set);
ChipSet load_chipset(const std::string& manifest_path);

}  // namespace hsfs
