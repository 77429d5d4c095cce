#include "hsfs/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hsfs/rng.hpp"

namespace hsfs {

double ClassSpectrum::value(double channel) const {
    double v = baseline;
    for (const auto& p : peaks) {
        const double z = (channel - p.center) / p.width;
        v += p.amplitude * std::exp(-0.5 * z * z);
    }
    return v;
}

std::vector<int> SceneSpec::informative_channels() const {
    std::vector<int> out;
    for (Eigen::Index ch = 0; ch < bands; ++ch) {
        const double diff = std::abs(n_plus.value(double(ch)) - n_minus.value(double(ch)));
        if (diff > 3.0 * noise_std) out.push_back(static_cast<int>(ch));
    }
    return out;
}

SceneSpec default_spec(Eigen::Index bands, Eigen::Index n_informative, double noise_std) {
    if (bands < 2) throw std::invalid_argument("default_spec: need at least 2 bands");
    if (n_informative < 0 || n_informative >= bands)
        throw std::invalid_argument("default_spec: n_informative must lie in [0, bands)");
    if (n_informative > 0 && bands / n_informative < 3)
        throw std::invalid_argument("default_spec: informative channels would overlap");
    if (noise_std < 0.0) throw std::invalid_argument("default_spec: negative noise std");
    if (n_informative > 0 && noise_std == 0.0)
        throw std::invalid_argument(
            "default_spec: informative channels need a positive noise std to scale against");

    SceneSpec spec;
    spec.bands = bands;
    spec.noise_std = noise_std;

    spec.background.label = kLabelBg;
    spec.background.baseline = 0.05;

    // shared emission bands for both cell classes
    ClassSpectrum cell;
    cell.baseline = 0.15;
    cell.peaks = {
        {0.20 * double(bands), 0.08 * double(bands), 0.9},
        {0.50 * double(bands), 0.08 * double(bands), 1.2},
        {0.80 * double(bands), 0.08 * double(bands), 0.8},
    };
    spec.n_plus = cell;
    spec.n_plus.label = kLabelNPlus;
    spec.n_minus = cell;
    spec.n_minus.label = kLabelNMinus;

    // narrow single-channel bumps that only one class carries; 6x noise std
    // clears the 5x separation floor while the 0.5-channel width keeps the
    // neighbours below the 3-sigma informative threshold
    const double bump = 6.0 * spec.noise_std;
    for (Eigen::Index i = 0; i < n_informative; ++i) {
        const auto ch = double(bands * (2 * i + 1) / (2 * n_informative));
        GaussianPeak peak{ch, 0.5, bump};
        if (i % 2 == 0)
            spec.n_plus.peaks.push_back(peak);
        else
            spec.n_minus.peaks.push_back(peak);
    }

    const auto planted = spec.informative_channels();
    if (static_cast<Eigen::Index>(planted.size()) != n_informative)
        throw std::logic_error("default_spec: planted channel count mismatch");
    return spec;
}

namespace {

struct Ellipse {
    double row, col, ra, rb, cos_t, sin_t;

    // squared normalized elliptical distance; <= 1 is inside
    double rho2(double r, double c) const {
        const double dr = r - row;
        const double dc = c - col;
        const double u = (dc * cos_t + dr * sin_t) / ra;
        const double v = (-dc * sin_t + dr * cos_t) / rb;
        return u * u + v * v;
    }
};

}  // namespace

Scene render_scene(const SceneSpec& spec) {
    if (spec.height < 1 || spec.width < 1 || spec.bands < 1)
        throw std::invalid_argument("render_scene: dims must be positive");
    if (spec.radius_min > spec.radius_max || spec.radius_min <= 0.0)
        throw std::invalid_argument("render_scene: bad radius range");
    if (spec.cell_count > 0 &&
        (2.0 * spec.radius_max + 2.0 > double(std::min(spec.height, spec.width))))
        throw std::invalid_argument("render_scene: cells do not fit in the frame");
    if (spec.noise_std < 0.0) throw std::invalid_argument("render_scene: negative noise std");

    Rng rng(spec.seed);
    Scene scene;
    scene.informative = spec.informative_channels();

    // place non-overlapping cells (conservative bounding-circle test)
    std::vector<Ellipse> ellipses;
    std::vector<PlacedCell> cells;
    const Eigen::Index max_attempts = 200 * std::max<Eigen::Index>(spec.cell_count, 1);
    Eigen::Index attempts = 0;
    while (static_cast<Eigen::Index>(cells.size()) < spec.cell_count) {
        if (attempts++ >= max_attempts)
            throw InfeasibleError(
                "render_scene: could not place the requested cells without overlap");
        const double ra = rng.uniform(spec.radius_min, spec.radius_max);
        const double rb = rng.uniform(spec.radius_min, spec.radius_max);
        const double margin = std::max(ra, rb) + 1.0;
        const double row = rng.uniform(margin, double(spec.height) - margin);
        const double col = rng.uniform(margin, double(spec.width) - margin);
        const double angle = rng.uniform(0.0, 3.141592653589793);
        bool overlaps = false;
        for (std::size_t i = 0; i < ellipses.size(); ++i) {
            const double dr = row - ellipses[i].row;
            const double dc = col - ellipses[i].col;
            const double reach = std::max(ra, rb) + std::max(ellipses[i].ra, ellipses[i].rb) + 1.0;
            if (dr * dr + dc * dc < reach * reach) {
                overlaps = true;
                break;
            }
        }
        if (overlaps) continue;
        ellipses.push_back({row, col, ra, rb, std::cos(angle), std::sin(angle)});
        PlacedCell cell;
        cell.row = row;
        cell.col = col;
        cell.radius_a = ra;
        cell.radius_b = rb;
        cell.angle = angle;
        cell.label = rng.u01() < spec.frac_n_plus ? kLabelNPlus : kLabelNMinus;
        cells.push_back(cell);
    }

    // rasterize supports and the smooth intensity falloff
    scene.mask.height = spec.height;
    scene.mask.width = spec.width;
    scene.mask.labels.assign(static_cast<std::size_t>(spec.height * spec.width), kLabelBg);
    std::vector<float> intensity(scene.mask.labels.size(), 0.0f);
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const Ellipse& e = ellipses[ci];
        const double reach = std::max(e.ra, e.rb);
        const auto r0 = static_cast<Eigen::Index>(std::floor(e.row - reach));
        const auto r1 = static_cast<Eigen::Index>(std::ceil(e.row + reach));
        const auto c0 = static_cast<Eigen::Index>(std::floor(e.col - reach));
        const auto c1 = static_cast<Eigen::Index>(std::ceil(e.col + reach));
        for (Eigen::Index r = std::max<Eigen::Index>(0, r0);
             r <= std::min(spec.height - 1, r1); ++r) {
            for (Eigen::Index c = std::max<Eigen::Index>(0, c0);
                 c <= std::min(spec.width - 1, c1); ++c) {
                const double rho2 = e.rho2(double(r), double(c));
                if (rho2 > 1.0) continue;
                const std::size_t px = static_cast<std::size_t>(r * spec.width + c);
                scene.mask.labels[px] = cells[ci].label;
                intensity[px] = static_cast<float>(
                    spec.edge_intensity + (1.0 - spec.edge_intensity) * (1.0 - rho2));
                cells[ci].area += 1;
            }
        }
    }

    // spectra: class emission scaled by the cell's falloff, plus noise
    scene.cube.height = spec.height;
    scene.cube.width = spec.width;
    scene.cube.bands = spec.bands;
    scene.cube.values.resize(static_cast<std::size_t>(spec.height * spec.width * spec.bands));
    std::vector<double> bg_spec(spec.bands), np_spec(spec.bands), nm_spec(spec.bands);
    for (Eigen::Index ch = 0; ch < spec.bands; ++ch) {
        bg_spec[ch] = spec.background.value(double(ch));
        np_spec[ch] = spec.n_plus.value(double(ch));
        nm_spec[ch] = spec.n_minus.value(double(ch));
    }
    for (Eigen::Index px = 0; px < spec.height * spec.width; ++px) {
        const std::uint8_t label = scene.mask.labels[static_cast<std::size_t>(px)];
        const double scale = label == kLabelBg ? 1.0 : double(intensity[static_cast<std::size_t>(px)]);
        const std::vector<double>& base =
            label == kLabelBg ? bg_spec : (label == kLabelNPlus ? np_spec : nm_spec);
        float* dst = scene.cube.values.data() + px * spec.bands;
        for (Eigen::Index ch = 0; ch < spec.bands; ++ch) {
            const double v = base[ch] * scale + spec.noise_std * rng.normal();
            dst[ch] = static_cast<float>(std::max(0.0, v));
        }
    }

    scene.cells = std::move(cells);
    return scene;
}

void write_scene_info(const std::string& path, const SceneSpec& spec) {
    std::ostringstream out;
    out << "bands " << spec.bands << "\n";
    out << "noise_std " << spec.noise_std << "\n";
    const auto informative = spec.informative_channels();
    out << "informative_channels";
    for (int ch : informative) out << " " << ch;
    out << "\n";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(IoErrc::io_failure, "cannot open " + path + " for writing");
    f << out.str();
    if (!f) throw IoError(IoErrc::io_failure, "short write to " + path);
}

}  // namespace hsfs
