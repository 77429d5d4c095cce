#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hsfs/pipeline.hpp"
#include "hsfs/synthgen.hpp"

using namespace hsfs;

TEST_CASE("default_spec plants exactly the requested informative channels") {
    auto spec = default_spec(64, 8);
    auto informative = spec.informative_channels();
    CHECK(informative.size() == 8);
    // each planted channel separates the classes by at least 5x the noise std
    for (int ch : informative) {
        const double diff = std::abs(spec.n_plus.value(ch) - spec.n_minus.value(ch));
        CHECK(diff >= 5.0 * spec.noise_std);
    }
    CHECK_THROWS_AS(default_spec(64, 64), std::invalid_argument);
}

TEST_CASE("n_informative = 0 leaves the class spectra identical") {
    auto spec = default_spec(32, 0);
    CHECK(spec.informative_channels().empty());
    for (Eigen::Index ch = 0; ch < 32; ++ch)
        CHECK(spec.n_plus.value(double(ch)) == spec.n_minus.value(double(ch)));
}

TEST_CASE("render_scene is bitwise deterministic under the seed") {
    auto spec = default_spec(16, 4);
    spec.height = 32;
    spec.width = 32;
    spec.cell_count = 6;
    spec.radius_min = 1.5;
    spec.radius_max = 2.5;
    auto a = render_scene(spec);
    auto b = render_scene(spec);
    CHECK(a.mask.labels == b.mask.labels);
    CHECK(std::memcmp(a.cube.values.data(), b.cube.values.data(),
                      sizeof(float) * a.cube.values.size()) == 0);
    spec.seed += 1;
    auto c = render_scene(spec);
    CHECK(a.mask.labels != c.mask.labels);
}

TEST_CASE("zero cells give an all-background scene of baseline plus noise") {
    auto spec = default_spec(12, 3);
    spec.height = 20;
    spec.width = 20;
    spec.cell_count = 0;
    auto scene = render_scene(spec);
    CHECK(std::all_of(scene.mask.labels.begin(), scene.mask.labels.end(),
                      [](std::uint8_t l) { return l == kLabelBg; }));
    // mean over pixels should sit near the background spectrum
    for (Eigen::Index ch = 0; ch < spec.bands; ++ch) {
        double mean = 0.0;
        for (Eigen::Index px = 0; px < 400; ++px)
            mean += scene.cube.values[static_cast<std::size_t>(px * spec.bands + ch)];
        mean /= 400.0;
        CHECK(std::abs(mean - spec.background.value(double(ch))) < 0.05);
    }
}

TEST_CASE("with zero noise every in-cell spectrum is proportional to its class spectrum") {
    auto spec = default_spec(16, 4);
    spec.height = 24;
    spec.width = 24;
    spec.cell_count = 1;
    spec.noise_std = 0.0;
    auto scene = render_scene(spec);
    REQUIRE(scene.cells.size() == 1);
    const auto label = scene.cells[0].label;
    const ClassSpectrum& cls = label == kLabelNPlus ? spec.n_plus : spec.n_minus;
    for (Eigen::Index r = 0; r < 24; ++r)
        for (Eigen::Index c = 0; c < 24; ++c) {
            if (scene.mask.at(r, c) == kLabelBg) continue;
            // recover the per-pixel intensity from channel 0, then check each
            // channel scales by the same factor
            const double scale = scene.cube.at(r, c, 0) / cls.value(0.0);
            CHECK(scale > 0.0);
            for (Eigen::Index ch = 1; ch < spec.bands; ++ch)
                CHECK(scene.cube.at(r, c, ch) ==
                      doctest::Approx(cls.value(double(ch)) * scale).epsilon(1e-4));
        }
}

TEST_CASE("mask histogram matches placed cell areas exactly") {
    auto spec = default_spec(16, 4);
    spec.height = 48;
    spec.width = 48;
    spec.cell_count = 8;
    auto scene = render_scene(spec);
    std::vector<long> by_class(3, 0);
    for (const auto& cell : scene.cells) {
        CHECK(cell.area > 0);
        by_class[cell.label] += cell.area;
    }
    std::vector<long> mask_counts(3, 0);
    for (auto l : scene.mask.labels) mask_counts[l] += 1;
    CHECK(by_class[1] == mask_counts[1]);
    CHECK(by_class[2] == mask_counts[2]);
}

TEST_CASE("infeasible cell placement errors out") {
    auto spec = default_spec(8, 2);
    spec.height = 24;
    spec.width = 24;
    spec.cell_count = 50;  // cannot fit without overlap
    CHECK_THROWS_AS(render_scene(spec), std::invalid_argument);
}

TEST_CASE("rendered median cell spectrum tracks the analytic multi-peak curve") {
    auto spec = default_spec(64, 8);
    spec.height = 48;
    spec.width = 48;
    spec.cell_count = 10;
    auto scene = render_scene(spec);

    // median over N+ pixels per channel
    std::vector<float> median_spec(64);
    std::vector<float> tmp;
    for (Eigen::Index ch = 0; ch < 64; ++ch) {
        tmp.clear();
        for (Eigen::Index px = 0; px < 48 * 48; ++px)
            if (scene.mask.labels[static_cast<std::size_t>(px)] == kLabelNPlus)
                tmp.push_back(scene.cube.values[static_cast<std::size_t>(px * 64 + ch)]);
        REQUIRE(!tmp.empty());
        std::nth_element(tmp.begin(), tmp.begin() + tmp.size() / 2, tmp.end());
        median_spec[static_cast<std::size_t>(ch)] = tmp[tmp.size() / 2];
    }
    // strong linear association with the analytic spectrum
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (Eigen::Index ch = 0; ch < 64; ++ch) {
        const double x = spec.n_plus.value(double(ch));
        const double y = median_spec[static_cast<std::size_t>(ch)];
        sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
    }
    const double n = 64.0;
    const double corr = (n * sxy - sx * sy) /
                        std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    CHECK(corr > 0.97);
}
