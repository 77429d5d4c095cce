#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsfs/dataio.hpp"

namespace hsfs {

struct GaussianPeak {
    double center = 0.0;     // channel units
    double width = 1.0;      // gaussian sigma, channel units
    double amplitude = 0.0;  // >= 0
};

/// Emission model for one pixel class: a low baseline plus gaussian bands.
struct ClassSpectrum {
    std::uint8_t label = kLabelBg;
    double baseline = 0.0;
    std::vector<GaussianPeak> peaks;

    double value(double channel) const;
};

struct SceneSpec {
    Eigen::Index height = 64;
    Eigen::Index width = 64;
    Eigen::Index bands = 64;

    Eigen::Index cell_count = 36;
    double radius_min = 2.0;
    double radius_max = 3.8;
    double edge_intensity = 0.25;  // falloff floor at the cell boundary
    double frac_n_plus = 0.5;      // class mixture among placed cells

    ClassSpectrum background;
    ClassSpectrum n_plus;
    ClassSpectrum n_minus;
    double noise_std = 0.08;

    std::uint64_t seed = 7;

    /// Channels where the class spectra genuinely differ: |N+ - N-| > 3 sigma.
    std::vector<int> informative_channels() const;
};

struct PlacedCell {
    double row = 0.0, col = 0.0;  // center
    double radius_a = 0.0, radius_b = 0.0;
    double angle = 0.0;
    std::uint8_t label = kLabelNPlus;
    Eigen::Index area = 0;  // rasterized pixel count
};

struct Scene {
    HyperCube cube;
    LabelMask mask;
    std::vector<int> informative;  // copy of spec.informative_channels()
    std::vector<PlacedCell> cells;
};

/// Elliptical cells with smooth intensity falloff, placed without overlap;
/// pixel spectrum = class spectrum x intensity + gaussian noise, clamped at 0.
Scene render_scene(const SceneSpec& spec);

/// Shared multi-peak cell spectra where N+ and N- differ only in
/// n_informative single channels by at least 5x the noise std. The planted
/// bumps scale with noise_std so the separation rule holds at any noise.
SceneSpec default_spec(Eigen::Index bands, Eigen::Index n_informative, double noise_std = 0.08);

/// Sidecar listing the planted informative channels.
void write_scene_info(const std::string& path, const SceneSpec& spec);

}  // namespace hsfs
