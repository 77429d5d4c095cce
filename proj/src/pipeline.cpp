#include "hsfs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "hsfs/rng.hpp"
#include "json.hpp"

namespace hsfs {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// pixelize / undersample / split
// ---------------------------------------------------------------------------

PixelDataset pixelize(const HyperCube& cube, const LabelMask& mask) {
    if (cube.height != mask.height || cube.width != mask.width)
        throw std::invalid_argument("pixelize: cube and mask dims differ");
    PixelDataset ds;
    ds.features = cube.spectra();
    ds.labels = mask.labels;
    return ds;
}

std::vector<Eigen::Index> class_histogram(const PixelDataset& ds) {
    std::vector<Eigen::Index> counts(kNumClasses, 0);
    for (std::uint8_t l : ds.labels) counts[l] += 1;
    return counts;
}

namespace {

PixelDataset gather_rows(const PixelDataset& ds, const std::vector<std::size_t>& rows) {
    PixelDataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dims());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) =
            ds.features.row(static_cast<Eigen::Index>(rows[i]));
        out.labels[i] = ds.labels[rows[i]];
    }
    return out;
}

}  // namespace

PixelDataset undersample_uniform(const PixelDataset& ds, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(kNumClasses);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) by_class[ds.labels[i]].push_back(i);
    std::size_t min_count = std::string::npos;
    for (const auto& idx : by_class) min_count = std::min(min_count, idx.size());
    if (min_count == 0)
        throw std::invalid_argument("undersample: a class has zero samples");

    Rng rng(seed);
    std::vector<std::size_t> keep;
    keep.reserve(min_count * kNumClasses);
    for (auto& idx : by_class) {
        rng.shuffle(idx);
        idx.resize(min_count);
        std::sort(idx.begin(), idx.end());  // restores within-class order
        keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::sort(keep.begin(), keep.end());
    return gather_rows(ds, keep);
}

SplitResult split(const PixelDataset& ds, const SplitSpec& spec) {
    auto in_range = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_range(spec.train_frac) || !in_range(spec.val_frac) || !in_range(spec.test_frac))
        throw std::invalid_argument("split fractions must lie in (0,1)");
    if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");
    const std::size_t n = ds.labels.size();
    if (n < 10) throw std::invalid_argument("split needs at least 10 records");

    const auto n_val = static_cast<std::size_t>(double(n) * spec.val_frac);
    const auto n_test = static_cast<std::size_t>(double(n) * spec.test_frac);
    std::size_t n_train = static_cast<std::size_t>(double(n) * spec.train_frac);
    n_train += n - (n_train + n_val + n_test);  // remainder goes to train

    Rng rng(spec.seed);
    auto perm = rng.permutation(n);
    SplitResult res;
    res.train = gather_rows(ds, {perm.begin(), perm.begin() + n_train});
    res.val = gather_rows(ds, {perm.begin() + n_train, perm.begin() + n_train + n_val});
    res.test = gather_rows(ds, {perm.begin() + n_train + n_val, perm.end()});
    return res;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

NormStats normalize_fit(const PixelDataset& train) {
    if (train.n() == 0) throw std::invalid_argument("normalize_fit: empty dataset");
    const Eigen::Index d = train.dims();
    NormStats stats;
    stats.mean.resize(static_cast<std::size_t>(d));
    stats.stdev.resize(static_cast<std::size_t>(d));
    const double inv_n = 1.0 / double(train.n());
    for (Eigen::Index c = 0; c < d; ++c) {
        double sum = 0.0;
        for (Eigen::Index r = 0; r < train.n(); ++r) sum += double(train.features(r, c));
        const double mean = sum * inv_n;
        double var = 0.0;
        for (Eigen::Index r = 0; r < train.n(); ++r) {
            const double dv = double(train.features(r, c)) - mean;
            var += dv * dv;
        }
        const double sd = std::sqrt(var * inv_n);
        if (sd < 1e-8) {  // constant channel passes through untouched
            stats.mean[static_cast<std::size_t>(c)] = 0.0f;
            stats.stdev[static_cast<std::size_t>(c)] = 1.0f;
        } else {
            stats.mean[static_cast<std::size_t>(c)] = static_cast<float>(mean);
            stats.stdev[static_cast<std::size_t>(c)] = static_cast<float>(sd);
        }
    }
    return stats;
}

PixelDataset normalize_apply(const NormStats& stats, PixelDataset ds) {
    if (static_cast<Eigen::Index>(stats.dims()) != ds.dims())
        throw std::invalid_argument("normalize_apply: stats dims do not match dataset");
    for (Eigen::Index c = 0; c < ds.dims(); ++c) {
        const float m = stats.mean[static_cast<std::size_t>(c)];
        const float s = stats.stdev[static_cast<std::size_t>(c)];
        ds.features.col(c) = (ds.features.col(c).array() - m) / s;
    }
    return ds;
}

PixelDataset select_features(const PixelDataset& ds, const std::vector<int>& omega) {
    for (int idx : omega)
        if (idx < 0 || idx >= ds.dims())
            throw std::invalid_argument("select_features: index outside dataset dims");
    PixelDataset out;
    out.labels = ds.labels;
    out.features.resize(ds.n(), static_cast<Eigen::Index>(omega.size()));
    for (std::size_t j = 0; j < omega.size(); ++j)
        out.features.col(static_cast<Eigen::Index>(j)) = ds.features.col(omega[j]);
    return out;
}

NormStats select_stats(const NormStats& stats, const std::vector<int>& omega) {
    NormStats out;
    for (int idx : omega) {
        if (idx < 0 || idx >= static_cast<int>(stats.dims()))
            throw std::invalid_argument("select_stats: index outside stats dims");
        out.mean.push_back(stats.mean[static_cast<std::size_t>(idx)]);
        out.stdev.push_back(stats.stdev[static_cast<std::size_t>(idx)]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// chips
// ---------------------------------------------------------------------------

const char* transform_name(ChipTransform t) {
    switch (t) {
        case ChipTransform::none: return "none";
        case ChipTransform::flip_h: return "flip_h";
        case ChipTransform::flip_v: return "flip_v";
        case ChipTransform::rot90: return "rot90";
        case ChipTransform::rot180: return "rot180";
        case ChipTransform::rot270: return "rot270";
    }
    return "?";
}

ChipTransform transform_from_name(const std::string& name) {
    for (auto t : {ChipTransform::none, ChipTransform::flip_h, ChipTransform::flip_v,
                   ChipTransform::rot90, ChipTransform::rot180, ChipTransform::rot270})
        if (name == transform_name(t)) return t;
    throw std::invalid_argument("unknown chip transform '" + name + "'");
}

void transform_coords(ChipTransform t, Eigen::Index size, Eigen::Index r, Eigen::Index c,
                      Eigen::Index& src_r, Eigen::Index& src_c) {
    const Eigen::Index last = size - 1;
    switch (t) {
        case ChipTransform::none: src_r = r; src_c = c; break;
        case ChipTransform::flip_h: src_r = r; src_c = last - c; break;
        case ChipTransform::flip_v: src_r = last - r; src_c = c; break;
        case ChipTransform::rot90: src_r = c; src_c = last - r; break;
        case ChipTransform::rot180: src_r = last - r; src_c = last - c; break;
        case ChipTransform::rot270: src_r = last - c; src_c = r; break;
    }
}

bool Chip::nontrivial() const {
    for (std::uint8_t l : mask)
        if (l != kLabelBg) return true;
    return false;
}

namespace {

Chip cut_chip(const HyperCube& cube, const LabelMask& mask, Eigen::Index size, Eigen::Index row,
              Eigen::Index col, ChipTransform t) {
    Chip chip;
    chip.src_row = row;
    chip.src_col = col;
    chip.transform = t;
    chip.cube = Tensor({size, size, cube.bands});
    chip.mask.resize(static_cast<std::size_t>(size * size));
    for (Eigen::Index r = 0; r < size; ++r) {
        for (Eigen::Index c = 0; c < size; ++c) {
            Eigen::Index sr, sc;
            transform_coords(t, size, r, c, sr, sc);
            chip.mask[static_cast<std::size_t>(r * size + c)] = mask.at(row + sr, col + sc);
            float* dst = chip.cube.data() + (r * size + c) * cube.bands;
            for (Eigen::Index band = 0; band < cube.bands; ++band)
                dst[band] = cube.at(row + sr, col + sc, band);
        }
    }
    return chip;
}

}  // namespace

ChipSet make_chips(const HyperCube& cube, const LabelMask& mask, Eigen::Index size,
                   Eigen::Index count, double min_nontrivial_frac, std::uint64_t seed) {
    if (cube.height != mask.height || cube.width != mask.width)
        throw std::invalid_argument("make_chips: cube and mask dims differ");
    if (size % 2 != 0) throw std::invalid_argument("make_chips: chip size must be even");
    if (size > cube.height || size > cube.width)
        throw std::invalid_argument("make_chips: cube is smaller than the chip size");
    if (count <= 0) throw std::invalid_argument("make_chips: count must be positive");
    if (min_nontrivial_frac < 0.0 || min_nontrivial_frac > 1.0)
        throw std::invalid_argument("make_chips: min_nontrivial_frac must lie in [0,1]");

    const auto target_nontrivial =
        static_cast<Eigen::Index>(std::ceil(min_nontrivial_frac * double(count)));
    const bool mask_has_cells =
        std::any_of(mask.labels.begin(), mask.labels.end(), [](std::uint8_t l) { return l != 0; });
    if (target_nontrivial > 0 && !mask_has_cells)
        throw InfeasibleError(
            "make_chips: mask has no cell pixels but a non-trivial fraction is required");

    Rng rng(seed);
    ChipSet set;
    set.size = size;
    set.bands = cube.bands;
    Eigen::Index nontrivial = 0;
    const Eigen::Index cap = 100 * count;
    Eigen::Index attempts = 0;
    while (static_cast<Eigen::Index>(set.chips.size()) < count) {
        if (attempts++ >= cap)
            throw InfeasibleError("make_chips: non-trivial quota infeasible for this mask");
        const auto row = static_cast<Eigen::Index>(rng.index(cube.height - size + 1));
        const auto col = static_cast<Eigen::Index>(rng.index(cube.width - size + 1));
        const auto t = static_cast<ChipTransform>(rng.index(6));
        Chip chip = cut_chip(cube, mask, size, row, col, t);
        const Eigen::Index remaining = count - static_cast<Eigen::Index>(set.chips.size());
        const Eigen::Index still_needed = std::max<Eigen::Index>(0, target_nontrivial - nontrivial);
        const bool is_nontrivial = chip.nontrivial();
        if (!is_nontrivial && still_needed == remaining) continue;  // quota forces a cell chip
        nontrivial += is_nontrivial ? 1 : 0;
        set.chips.push_back(std::move(chip));
    }
    return set;
}

// ---------------------------------------------------------------------------
// chip serialization
// ---------------------------------------------------------------------------

void save_chipset(const std::string& manifest_path, const ChipSet& set) {
    const fs::path dir = fs::path(manifest_path).parent_path();
    json manifest;
    manifest["chip_size"] = set.size;
    manifest["bands"] = set.bands;
    manifest["count"] = set.chips.size();
    manifest["chips"] = json::array();
    char name[64];
    for (std::size_t i = 0; i < set.chips.size(); ++i) {
        const Chip& chip = set.chips[i];
        std::snprintf(name, sizeof name, "chip_%05zu", i);
        const std::string cube_file = std::string(name) + ".hsc";
        const std::string mask_file = std::string(name) + ".msk";

        HyperCube cube{set.size, set.size, set.bands,
                       {chip.cube.data(), chip.cube.data() + chip.cube.size()}};
        write_cube((dir / cube_file).string(), cube);
        LabelMask mask{set.size, set.size, chip.mask};
        write_mask((dir / mask_file).string(), mask);

        manifest["chips"].push_back({{"cube", cube_file},
                                     {"mask", mask_file},
                                     {"src_row", chip.src_row},
                                     {"src_col", chip.src_col},
                                     {"transform", transform_name(chip.transform)}});
    }
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError(IoErrc::io_failure, "cannot open " + manifest_path + " for writing");
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError(IoErrc::io_failure, "short write to " + manifest_path);
}

ChipSet load_chipset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError(IoErrc::io_failure, "cannot open " + manifest_path);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError(IoErrc::inconsistent, manifest_path + ": bad manifest: " + e.what());
    }
    const fs::path dir = fs::path(manifest_path).parent_path();
    ChipSet set;
    try {
        set.size = manifest.at("chip_size").get<Eigen::Index>();
        set.bands = manifest.at("bands").get<Eigen::Index>();
        for (const auto& entry : manifest.at("chips")) {
            Chip chip;
            HyperCube cube = read_cube((dir / entry.at("cube").get<std::string>()).string());
            LabelMask mask = read_mask((dir / entry.at("mask").get<std::string>()).string());
            if (cube.height != set.size || cube.width != set.size || cube.bands != set.bands ||
                mask.height != set.size || mask.width != set.size)
                throw IoError(IoErrc::inconsistent,
                              manifest_path + ": chip dims disagree with manifest");
            chip.cube = Tensor({set.size, set.size, set.bands});
            std::copy(cube.values.begin(), cube.values.end(), chip.cube.data());
            chip.mask = std::move(mask.labels);
            chip.src_row = entry.at("src_row").get<Eigen::Index>();
            chip.src_col = entry.at("src_col").get<Eigen::Index>();
            chip.transform = transform_from_name(entry.at("transform").get<std::string>());
            set.chips.push_back(std::move(chip));
        }
    } catch (const json::exception& e) {
        throw IoError(IoErrc::inconsistent, manifest_path + ": bad manifest: " + e.what());
    }
    if (manifest.at("count").get<std::size_t>() != set.chips.size())
        throw IoError(IoErrc::inconsistent, manifest_path + ": manifest count mismatch");
    return set;
}

}  // namespace hsfs
