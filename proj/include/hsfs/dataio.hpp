#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsfs/network.hpp"
#include "hsfs/tensor.hpp"

namespace hsfs {

// ---------------------------------------------------------------------------
// error taxonomy: readers distinguish these so callers (and the CLI exit
// codes) can react per category
// ---------------------------------------------------------------------------

enum class IoErrc {
    bad_magic,     // wrong 4-byte magic
    truncated,     // file ends before the declared payload
    bad_value,     // payload value outside its domain (labels, non-finite)
    inconsistent,  // declared sizes disagree with each other or the payload
    io_failure,    // OS-level read/write trouble
};

class IoError : public std::runtime_error {
public:
    IoError(IoErrc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
    IoErrc code() const { return code_; }

private:
    IoErrc code_;
};

/// A request no amount of retrying can satisfy: cells that cannot be placed,
/// chip quotas no sampler can meet. Distinct from plain validation errors so
/// the CLI can exit with its own code.
struct InfeasibleError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// domain containers
// ---------------------------------------------------------------------------

/// H x W x B stack of per-pixel spectra, (row, col, band) order.
struct HyperCube {
    Eigen::Index height = 0;
    Eigen::Index width = 0;
    Eigen::Index bands = 0;
    std::vector<float> values;  // height*width*bands

    float& at(Eigen::Index r, Eigen::Index c, Eigen::Index band) {
        return values[static_cast<std::size_t>((r * width + c) * bands + band)];
    }
    float at(Eigen::Index r, Eigen::Index c, Eigen::Index band) const {
        return values[static_cast<std::size_t>((r * width + c) * bands + band)];
    }
    Eigen::Index pixels() const { return height * width; }

    // (h*w) x bands view: row i is the spectrum of pixel i in row-major order
    Eigen::Map<const RowMat<float>> spectra() const {
        return {values.data(), pixels(), bands};
    }
};

/// Per-pixel labels: 0 = BG, 1 = N+, 2 = N-.
struct LabelMask {
    Eigen::Index height = 0;
    Eigen::Index width = 0;
    std::vector<std::uint8_t> labels;  // height*width, row-major

    std::uint8_t at(Eigen::Index r, Eigen::Index c) const {
        return labels[static_cast<std::size_t>(r * width + c)];
    }
};

constexpr int kNumClasses = 3;
constexpr std::uint8_t kLabelBg = 0;
constexpr std::uint8_t kLabelNPlus = 1;
constexpr std::uint8_t kLabelNMinus = 2;

/// N labeled spectra; the unit the dense classifier trains on.
struct PixelDataset {
    RowMat<float> features;            // n x dims
    std::vector<std::uint8_t> labels;  // n

    Eigen::Index n() const { return static_cast<Eigen::Index>(labels.size()); }
    Eigen::Index dims() const { return features.cols(); }
};

/// Everything needed to reconstruct a trained network and feed it raw cubes:
/// architecture, per-retained-channel normalization, the retained-feature
/// list omega, and the raw parameter blob.
struct Checkpoint {
    std::string kind;  // single token, e.g. "pixel_mlp" or "cell_masker"
    std::vector<LayerSpec> arch;
    Eigen::Index original_dim = 0;  // feature count before any pruning
    std::vector<int> omega;         // retained original indices, sorted unique
    std::vector<float> norm_mean;   // one per retained channel
    std::vector<float> norm_std;
    std::vector<float> params;      // blob in param_blocks order

    Network to_network(std::uint64_t seed = 0) const;
};

Checkpoint checkpoint_from_network(Network& net, std::string kind, Eigen::Index original_dim,
                                   std::vector<int> omega, std::vector<float> norm_mean,
                                   std::vector<float> norm_std);

// ---------------------------------------------------------------------------
// binary formats (all little-endian, 4-byte ASCII magics)
// ---------------------------------------------------------------------------

void write_cube(const std::string& path, const HyperCube& cube);
HyperCube read_cube(const std::string& path);

void write_mask(const std::string& path, const LabelMask& mask);
LabelMask read_mask(const std::string& path);

void write_pixels(const std::string& path, const PixelDataset& ds);
PixelDataset read_pixels(const std::string& path);

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// prune reports (the Fig. 4 analogues)
// ---------------------------------------------------------------------------

/// One pruning step: feature `removed_original_index` left the retained set.
struct PruneEvent {
    int step = 0;  // 0-based removal counter
    int removed_original_index = -1;
    double val_accuracy = 0.0;  // after the removal, before any retrain
    bool retrained = false;     // a retrain followed this step
};

/// Entry j = step at which original feature j was removed; survivors carry
/// the sentinel value B.
std::vector<int> removal_order_map(const std::vector<PruneEvent>& history, int original_dim);

void write_prune_curve(const std::string& path, const std::vector<PruneEvent>& history);
void write_removal_order(const std::string& path, const std::vector<int>& order);

/// Convenience: curve CSV plus removal-order file.
void write_prune_report(const std::string& curve_path, const std::string& order_path,
                        const std::vector<PruneEvent>& history, int original_dim);

// binary P6 image, used for classification overlays
void write_ppm(const std::string& path, Eigen::Index height, Eigen::Index width,
               const std::vector<std::uint8_t>& rgb);

}  // namespace hsfs
