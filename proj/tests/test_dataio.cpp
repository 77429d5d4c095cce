#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "hsfs/dataio.hpp"
#include "hsfs/rng.hpp"

using namespace hsfs;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    TmpDir() {
        path = fs::temp_directory_path() / ("hsfs_dataio_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

HyperCube random_cube(Eigen::Index h, Eigen::Index w, Eigen::Index b, Rng& rng) {
    HyperCube cube{h, w, b, {}};
    cube.values.resize(static_cast<std::size_t>(h * w * b));
    for (auto& v : cube.values) v = static_cast<float>(rng.uniform(0.0, 10.0));
    return cube;
}

LabelMask random_mask(Eigen::Index h, Eigen::Index w, Rng& rng) {
    LabelMask mask{h, w, {}};
    mask.labels.resize(static_cast<std::size_t>(h * w));
    for (auto& l : mask.labels) l = static_cast<std::uint8_t>(rng.index(3));
    return mask;
}

PixelDataset random_pixels(Eigen::Index n, Eigen::Index d, Rng& rng) {
    PixelDataset ds;
    ds.features.resize(n, d);
    ds.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < ds.features.size(); ++i)
        ds.features.data()[i] = static_cast<float>(rng.uniform(-5.0, 5.0));
    for (auto& l : ds.labels) l = static_cast<std::uint8_t>(rng.index(3));
    return ds;
}

Checkpoint random_checkpoint(Rng& rng) {
    const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng.index(8));
    const Eigen::Index hid = 1 + static_cast<Eigen::Index>(rng.index(8));
    const Eigen::Index original = in + static_cast<Eigen::Index>(rng.index(4));
    std::vector<LayerSpec> arch{{LayerKind::dense, in, hid, 0.0},
                                {LayerKind::relu, 0, 0, 0.0},
                                {LayerKind::dropout, 0, 0, rng.u01() * 0.9},
                                {LayerKind::dense, hid, 3, 0.0},
                                {LayerKind::softmax, 0, 0, 0.0}};
    Network net = build_network<float>(arch, rng.index(1000));
    std::vector<int> omega;
    for (Eigen::Index i = 0; i < original && static_cast<Eigen::Index>(omega.size()) < in; ++i)
        if (rng.u01() < 0.7 || original - i <= in - static_cast<Eigen::Index>(omega.size()))
            omega.push_back(static_cast<int>(i));
    std::vector<float> mean(omega.size()), sd(omega.size());
    for (auto& v : mean) v = static_cast<float>(rng.uniform(-3, 3));
    for (auto& v : sd) v = static_cast<float>(rng.uniform(0.01, 3));
    return checkpoint_from_network(net, "pixel_mlp", original, omega, mean, sd);
}

}  // namespace

TEST_CASE("1x1x1 cube round-trips bit-exactly") {
    TmpDir tmp;
    HyperCube cube{1, 1, 1, {0.0f}};
    write_cube(tmp.file("a.hsc"), cube);
    auto back = read_cube(tmp.file("a.hsc"));
    CHECK(back.height == 1);
    CHECK(back.width == 1);
    CHECK(back.bands == 1);
    CHECK(std::memcmp(back.values.data(), cube.values.data(), 4) == 0);
}

TEST_CASE("random 8x8x16 cube round-trips bit-exactly") {
    TmpDir tmp;
    Rng rng(99);
    auto cube = random_cube(8, 8, 16, rng);
    write_cube(tmp.file("a.hsc"), cube);
    auto back = read_cube(tmp.file("a.hsc"));
    REQUIRE(back.values.size() == cube.values.size());
    CHECK(std::memcmp(back.values.data(), cube.values.data(), 4 * cube.values.size()) == 0);
    // and the file itself is stable under rewrite
    write_cube(tmp.file("b.hsc"), back);
    CHECK(slurp(tmp.file("a.hsc")) == slurp(tmp.file("b.hsc")));
}

TEST_CASE("wrong magic raises bad_magic for every reader") {
    TmpDir tmp;
    spit(tmp.file("x.bin"), std::string("XXXX") + std::string(64, '\0'));
    for (auto reader : {+[](const std::string& p) { (void)read_cube(p); },
                        +[](const std::string& p) { (void)read_mask(p); },
                        +[](const std::string& p) { (void)read_pixels(p); },
                        +[](const std::string& p) { (void)read_checkpoint(p); }}) {
        try {
            reader(tmp.file("x.bin"));
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::bad_magic);
        }
    }
}

TEST_CASE("truncated payload raises truncated") {
    TmpDir tmp;
    Rng rng(4);
    auto cube = random_cube(4, 4, 4, rng);
    write_cube(tmp.file("a.hsc"), cube);
    auto bytes = slurp(tmp.file("a.hsc"));
    spit(tmp.file("short.hsc"), bytes.substr(0, bytes.size() - 7));
    try {
        read_cube(tmp.file("short.hsc"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoErrc::truncated);
    }
}

TEST_CASE("trailing bytes raise inconsistent") {
    TmpDir tmp;
    Rng rng(4);
    auto mask = random_mask(3, 5, rng);
    write_mask(tmp.file("a.msk"), mask);
    spit(tmp.file("long.msk"), slurp(tmp.file("a.msk")) + "zz");
    try {
        read_mask(tmp.file("long.msk"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoErrc::inconsistent);
    }
}

TEST_CASE("mask label 3 raises bad_value") {
    TmpDir tmp;
    Rng rng(4);
    auto mask = random_mask(2, 2, rng);
    write_mask(tmp.file("a.msk"), mask);
    auto bytes = slurp(tmp.file("a.msk"));
    bytes[bytes.size() - 1] = 3;
    spit(tmp.file("bad.msk"), bytes);
    try {
        read_mask(tmp.file("bad.msk"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoErrc::bad_value);
    }
}

TEST_CASE("empty pixel dataset round-trips") {
    TmpDir tmp;
    PixelDataset ds;
    ds.features.resize(0, 7);
    write_pixels(tmp.file("e.pxd"), ds);
    auto back = read_pixels(tmp.file("e.pxd"));
    CHECK(back.n() == 0);
    CHECK(back.dims() == 7);
}

TEST_CASE("checkpoint with mismatched blob raises inconsistent") {
    TmpDir tmp;
    Rng rng(8);
    auto ckpt = random_checkpoint(rng);
    write_checkpoint(tmp.file("a.nnw"), ckpt);
    auto bytes = slurp(tmp.file("a.nnw"));
    spit(tmp.file("bad.nnw"), bytes.substr(0, bytes.size() - 4));  // lose one f32
    try {
        read_checkpoint(tmp.file("bad.nnw"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoErrc::truncated);
    }
    // blob/architecture mismatch inside the struct itself
    auto broken = ckpt;
    broken.params.pop_back();
    CHECK_THROWS_AS(write_checkpoint(tmp.file("b.nnw"), broken), IoError);
}

TEST_CASE("checkpoint reload reproduces logits exactly on 100 random inputs") {
    TmpDir tmp;
    Rng rng(15);
    auto ckpt = random_checkpoint(rng);
    write_checkpoint(tmp.file("m.nnw"), ckpt);
    auto back = read_checkpoint(tmp.file("m.nnw"));
    CHECK(back.kind == ckpt.kind);
    CHECK(back.omega == ckpt.omega);
    CHECK(std::memcmp(back.norm_mean.data(), ckpt.norm_mean.data(),
                      4 * ckpt.norm_mean.size()) == 0);

    Network a = ckpt.to_network();
    Network b = back.to_network();
    const Eigen::Index in = std::get<DenseLayerT<float>>(a.layers[0]).in_dim();
    for (int trial = 0; trial < 100; ++trial) {
        Tensor x({1, in});
        for (Eigen::Index i = 0; i < in; ++i) x[i] = static_cast<float>(rng.uniform(-2, 2));
        auto ta = forward(a, x, false);
        auto tb = forward(b, x, false);
        REQUIRE(std::memcmp(ta.outputs.back().data(), tb.outputs.back().data(),
                            4 * ta.outputs.back().size()) == 0);
    }
}

TEST_CASE("all four binary formats round-trip random instances bit-exactly") {
    TmpDir tmp;
    Rng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        auto cube = random_cube(1 + rng.index(6), 1 + rng.index(6), 1 + rng.index(9), rng);
        write_cube(tmp.file("c.hsc"), cube);
        auto c2 = read_cube(tmp.file("c.hsc"));
        write_cube(tmp.file("c2.hsc"), c2);
        CHECK(slurp(tmp.file("c.hsc")) == slurp(tmp.file("c2.hsc")));

        auto mask = random_mask(1 + rng.index(9), 1 + rng.index(9), rng);
        write_mask(tmp.file("m.msk"), mask);
        auto m2 = read_mask(tmp.file("m.msk"));
        write_mask(tmp.file("m2.msk"), m2);
        CHECK(slurp(tmp.file("m.msk")) == slurp(tmp.file("m2.msk")));

        auto ds = random_pixels(rng.index(20), 1 + rng.index(12), rng);
        write_pixels(tmp.file("p.pxd"), ds);
        auto p2 = read_pixels(tmp.file("p.pxd"));
        write_pixels(tmp.file("p2.pxd"), p2);
        CHECK(slurp(tmp.file("p.pxd")) == slurp(tmp.file("p2.pxd")));

        auto ckpt = random_checkpoint(rng);
        write_checkpoint(tmp.file("k.nnw"), ckpt);
        auto k2 = read_checkpoint(tmp.file("k.nnw"));
        write_checkpoint(tmp.file("k2.nnw"), k2);
        CHECK(slurp(tmp.file("k.nnw")) == slurp(tmp.file("k2.nnw")));
    }
}

TEST_CASE("removal order map encodes history directly") {
    CHECK(removal_order_map({}, 8) == std::vector<int>(8, 8));
    std::vector<PruneEvent> history{{0, 3, 0.9, false}, {1, 7, 0.88, true}};
    CHECK(removal_order_map(history, 8) == std::vector<int>{8, 8, 8, 0, 8, 8, 8, 1});
}

TEST_CASE("prune report files: empty history gives header-only curve and sentinels") {
    TmpDir tmp;
    write_prune_report(tmp.file("curve.csv"), tmp.file("order.txt"), {}, 4);
    CHECK(slurp(tmp.file("curve.csv")) ==
          "step,removed_count,removed_feature_index,val_accuracy,retrained\n");
    CHECK(slurp(tmp.file("order.txt")) == "4\n4\n4\n4\n");
}

TEST_CASE("prune curve rows carry step, count, index, accuracy and retrain flag") {
    TmpDir tmp;
    std::vector<PruneEvent> history{{0, 2, 0.953, false}, {1, 0, 0.91, true}};
    write_prune_curve(tmp.file("curve.csv"), history);
    CHECK(slurp(tmp.file("curve.csv")) ==
          "step,removed_count,removed_feature_index,val_accuracy,retrained\n"
          "0,1,2,0.953000,0\n"
          "1,2,0,0.910000,1\n");
}
