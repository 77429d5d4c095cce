#include "hsfs/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hsfs {

namespace {

constexpr std::uint64_t kMaxElements = 1ULL << 28;  // 1 GiB of f32 payload

// -- little-endian primitives over an in-memory buffer --------------------

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& buf, float f) { put_u32(buf, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError(IoErrc::io_failure, "cannot open " + path + " for reading");
    }

    void expect_magic(const char* magic) {
        char got[4];
        if (!in_.read(got, 4))
            throw IoError(IoErrc::truncated, path_ + ": file shorter than its magic");
        if (std::memcmp(got, magic, 4) != 0)
            throw IoError(IoErrc::bad_magic, path_ + ": expected magic " + magic);
    }

    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        if (!in_.read(reinterpret_cast<char*>(b), 4))
            throw IoError(IoErrc::truncated, path_ + ": truncated while reading " + what);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    }

    void bytes(void* dst, std::size_t n, const char* what) {
        if (!in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n)))
            throw IoError(IoErrc::truncated, path_ + ": truncated while reading " + what);
    }

    void f32s(float* dst, std::size_t count, const char* what) {
        std::vector<unsigned char> raw(count * 4);
        bytes(raw.data(), raw.size(), what);
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t u = std::uint32_t(raw[4 * i]) | (std::uint32_t(raw[4 * i + 1]) << 8) |
                                    (std::uint32_t(raw[4 * i + 2]) << 16) |
                                    (std::uint32_t(raw[4 * i + 3]) << 24);
            dst[i] = std::bit_cast<float>(u);
        }
    }

    void expect_eof() {
        char c;
        if (in_.read(&c, 1))
            throw IoError(IoErrc::inconsistent, path_ + ": trailing bytes after declared payload");
    }

private:
    std::string path_;
    std::ifstream in_;
};

void write_file(const std::string& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrc::io_failure, "cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError(IoErrc::io_failure, "short write to " + path);
}

void check_element_budget(const std::string& path, std::uint64_t n) {
    if (n > kMaxElements)
        throw IoError(IoErrc::inconsistent,
                      path + ": declared dimensions overflow the sanity cap");
}

void check_finite(const std::string& path, const float* v, std::size_t n, const char* what) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(v[i]))
            throw IoError(IoErrc::bad_value, path + ": non-finite " + what);
}

std::string hex_float(float f) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%a", static_cast<double>(f));
    return buf;
}

float parse_hex_float(const std::string& tok, const std::string& path) {
    errno = 0;
    char* end = nullptr;
    const float v = std::strtof(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw IoError(IoErrc::inconsistent, path + ": malformed float literal '" + tok + "'");
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// HSC1
// ---------------------------------------------------------------------------

void write_cube(const std::string& path, const HyperCube& cube) {
    const std::uint64_t n =
        std::uint64_t(cube.height) * std::uint64_t(cube.width) * std::uint64_t(cube.bands);
    if (cube.values.size() != n)
        throw IoError(IoErrc::inconsistent, path + ": cube value count does not match dims");
    check_element_budget(path, n);
    std::string buf;
    buf.reserve(16 + 4 * n);
    buf += "HSC1";
    put_u32(buf, static_cast<std::uint32_t>(cube.height));
    put_u32(buf, static_cast<std::uint32_t>(cube.width));
    put_u32(buf, static_cast<std::uint32_t>(cube.bands));
    for (float v : cube.values) put_f32(buf, v);
    write_file(path, buf);
}

HyperCube read_cube(const std::string& path) {
    Reader r(path);
    r.expect_magic("HSC1");
    HyperCube cube;
    cube.height = r.u32("height");
    cube.width = r.u32("width");
    cube.bands = r.u32("bands");
    if (cube.height < 1 || cube.width < 1 || cube.bands < 1)
        throw IoError(IoErrc::inconsistent, path + ": cube dims must be positive");
    const std::uint64_t n =
        std::uint64_t(cube.height) * std::uint64_t(cube.width) * std::uint64_t(cube.bands);
    check_element_budget(path, n);
    cube.values.resize(n);
    r.f32s(cube.values.data(), n, "cube payload");
    r.expect_eof();
    check_finite(path, cube.values.data(), cube.values.size(), "cube value");
    for (float v : cube.values)
        if (v < 0.0f)
            throw IoError(IoErrc::bad_value, path + ": negative intensity in cube");
    return cube;
}

// ---------------------------------------------------------------------------
// MSK1
// ---------------------------------------------------------------------------

void write_mask(const std::string& path, const LabelMask& mask) {
    const std::uint64_t n = std::uint64_t(mask.height) * std::uint64_t(mask.width);
    if (mask.labels.size() != n)
        throw IoError(IoErrc::inconsistent, path + ": mask label count does not match dims");
    check_element_budget(path, n);
    for (std::uint8_t l : mask.labels)
        if (l > 2) throw IoError(IoErrc::bad_value, path + ": mask label outside {0,1,2}");
    std::string buf;
    buf.reserve(12 + n);
    buf += "MSK1";
    put_u32(buf, static_cast<std::uint32_t>(mask.height));
    put_u32(buf, static_cast<std::uint32_t>(mask.width));
    buf.append(reinterpret_cast<const char*>(mask.labels.data()), mask.labels.size());
    write_file(path, buf);
}

LabelMask read_mask(const std::string& path) {
    Reader r(path);
    r.expect_magic("MSK1");
    LabelMask mask;
    mask.height = r.u32("height");
    mask.width = r.u32("width");
    const std::uint64_t n = std::uint64_t(mask.height) * std::uint64_t(mask.width);
    check_element_budget(path, n);
    mask.labels.resize(n);
    if (n) r.bytes(mask.labels.data(), n, "mask payload");
    r.expect_eof();
    for (std::uint8_t l : mask.labels)
        if (l > 2) throw IoError(IoErrc::bad_value, path + ": mask label outside {0,1,2}");
    return mask;
}

// ---------------------------------------------------------------------------
// PXD1
// ---------------------------------------------------------------------------

void write_pixels(const std::string& path, const PixelDataset& ds) {
    const std::uint64_t n = std::uint64_t(ds.n());
    const std::uint64_t d = std::uint64_t(ds.dims());
    if (ds.features.rows() != ds.n())
        throw IoError(IoErrc::inconsistent, path + ": feature rows do not match label count");
    check_element_budget(path, n * d);
    for (std::uint8_t l : ds.labels)
        if (l > 2) throw IoError(IoErrc::bad_value, path + ": label outside {0,1,2}");
    std::string buf;
    buf.reserve(12 + n * (1 + 4 * d));
    buf += "PXD1";
    put_u32(buf, static_cast<std::uint32_t>(n));
    put_u32(buf, static_cast<std::uint32_t>(d));
    for (std::uint64_t i = 0; i < n; ++i) {
        buf.push_back(static_cast<char>(ds.labels[i]));
        const float* row = ds.features.data() + i * d;
        for (std::uint64_t j = 0; j < d; ++j) put_f32(buf, row[j]);
    }
    write_file(path, buf);
}

PixelDataset read_pixels(const std::string& path) {
    Reader r(path);
    r.expect_magic("PXD1");
    const std::uint32_t n = r.u32("record count");
    const std::uint32_t d = r.u32("dims");
    check_element_budget(path, std::uint64_t(n) * std::uint64_t(d));
    PixelDataset ds;
    ds.features.resize(n, d);
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint8_t label;
        r.bytes(&label, 1, "record label");
        if (label > 2) throw IoError(IoErrc::bad_value, path + ": label outside {0,1,2}");
        ds.labels[i] = label;
        r.f32s(ds.features.data() + std::size_t(i) * d, d, "record features");
    }
    r.expect_eof();
    check_finite(path, ds.features.data(), std::size_t(n) * d, "feature");
    return ds;
}

// ---------------------------------------------------------------------------
// NNW1
// ---------------------------------------------------------------------------

namespace {

const char* layer_kind_token(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::dropout: return "dropout";
        case LayerKind::maxpool2: return "maxpool2";
        case LayerKind::upsample2: return "upsample2";
        case LayerKind::softmax: return "softmax";
    }
    return "?";
}

Eigen::Index spec_param_count(const std::vector<LayerSpec>& arch) {
    Eigen::Index n = 0;
    for (const auto& ls : arch) {
        if (ls.kind == LayerKind::dense) n += ls.a * ls.b + ls.b;
        if (ls.kind == LayerKind::conv2d) n += 9 * ls.a * ls.b + ls.b;
    }
    return n;
}

}  // namespace

Network Checkpoint::to_network(std::uint64_t seed) const {
    if (static_cast<Eigen::Index>(params.size()) != spec_param_count(arch))
        throw IoError(IoErrc::inconsistent, "checkpoint blob does not match architecture");
    Network net = build_network<float>(arch, seed);
    std::size_t offset = 0;
    for (auto b : param_blocks(net)) {
        std::memcpy(b.data, params.data() + offset, sizeof(float) * b.size);
        offset += static_cast<std::size_t>(b.size);
    }
    return net;
}

Checkpoint checkpoint_from_network(Network& net, std::string kind, Eigen::Index original_dim,
                                   std::vector<int> omega, std::vector<float> norm_mean,
                                   std::vector<float> norm_std) {
    Checkpoint ckpt;
    ckpt.kind = std::move(kind);
    ckpt.arch = describe(net);
    ckpt.original_dim = original_dim;
    ckpt.omega = std::move(omega);
    ckpt.norm_mean = std::move(norm_mean);
    ckpt.norm_std = std::move(norm_std);
    for (auto b : param_blocks(net))
        ckpt.params.insert(ckpt.params.end(), b.data, b.data + b.size);
    return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    if (ckpt.kind.empty() || ckpt.kind.find_first_of(" \t\n") != std::string::npos)
        throw IoError(IoErrc::bad_value, path + ": checkpoint kind must be a single token");
    if (static_cast<Eigen::Index>(ckpt.params.size()) != spec_param_count(ckpt.arch))
        throw IoError(IoErrc::inconsistent, path + ": parameter blob does not match architecture");
    if (ckpt.omega.size() != ckpt.norm_mean.size() || ckpt.omega.size() != ckpt.norm_std.size())
        throw IoError(IoErrc::inconsistent, path + ": normalization stats do not match omega");
    if (!std::is_sorted(ckpt.omega.begin(), ckpt.omega.end()) ||
        std::adjacent_find(ckpt.omega.begin(), ckpt.omega.end()) != ckpt.omega.end())
        throw IoError(IoErrc::bad_value, path + ": omega must be sorted and unique");
    for (int idx : ckpt.omega)
        if (idx < 0 || idx >= ckpt.original_dim)
            throw IoError(IoErrc::bad_value, path + ": omega index outside [0, original_dim)");

    std::ostringstream header;
    header << "kind " << ckpt.kind << "\n";
    header << "original_dim " << ckpt.original_dim << "\n";
    header << "layers " << ckpt.arch.size() << "\n";
    for (const auto& ls : ckpt.arch) {
        header << "layer " << layer_kind_token(ls.kind);
        if (ls.kind == LayerKind::dense || ls.kind == LayerKind::conv2d)
            header << " " << ls.a << " " << ls.b;
        if (ls.kind == LayerKind::dropout) header << " " << hex_float(float(ls.rate));
        header << "\n";
    }
    header << "omega " << ckpt.omega.size();
    for (int idx : ckpt.omega) header << " " << idx;
    header << "\n";
    header << "norm_mean";
    for (float v : ckpt.norm_mean) header << " " << hex_float(v);
    header << "\n";
    header << "norm_std";
    for (float v : ckpt.norm_std) header << " " << hex_float(v);
    header << "\n";
    header << "param_count " << ckpt.params.size() << "\n";
    const std::string htext = header.str();

    std::string buf;
    buf.reserve(8 + htext.size() + 4 * ckpt.params.size());
    buf += "NNW1";
    put_u32(buf, static_cast<std::uint32_t>(htext.size()));
    buf += htext;
    for (float v : ckpt.params) put_f32(buf, v);
    write_file(path, buf);
}

Checkpoint read_checkpoint(const std::string& path) {
    Reader r(path);
    r.expect_magic("NNW1");
    const std::uint32_t hlen = r.u32("header length");
    check_element_budget(path, hlen);
    std::string htext(hlen, '\0');
    if (hlen) r.bytes(htext.data(), hlen, "header");

    Checkpoint ckpt;
    std::istringstream in(htext);
    std::string line;
    std::size_t declared_layers = 0;
    long declared_params = -1;
    bool saw_mean = false, saw_std = false, saw_omega = false;
    auto malformed = [&](const std::string& why) -> IoError {
        return IoError(IoErrc::inconsistent, path + ": malformed header: " + why);
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "kind") {
            if (!(ls >> ckpt.kind)) throw malformed("missing kind");
        } else if (key == "original_dim") {
            if (!(ls >> ckpt.original_dim)) throw malformed("missing original_dim");
        } else if (key == "layers") {
            if (!(ls >> declared_layers)) throw malformed("missing layer count");
        } else if (key == "layer") {
            std::string kind;
            if (!(ls >> kind)) throw malformed("missing layer kind");
            LayerSpec spec{};
            if (kind == "dense" || kind == "conv2d") {
                spec.kind = kind == "dense" ? LayerKind::dense : LayerKind::conv2d;
                if (!(ls >> spec.a >> spec.b)) throw malformed("missing layer dims");
            } else if (kind == "dropout") {
                spec.kind = LayerKind::dropout;
                std::string tok;
                if (!(ls >> tok)) throw malformed("missing dropout rate");
                spec.rate = parse_hex_float(tok, path);
            } else if (kind == "relu") {
                spec.kind = LayerKind::relu;
            } else if (kind == "maxpool2") {
                spec.kind = LayerKind::maxpool2;
            } else if (kind == "upsample2") {
                spec.kind = LayerKind::upsample2;
            } else if (kind == "softmax") {
                spec.kind = LayerKind::softmax;
            } else {
                throw malformed("unknown layer kind '" + kind + "'");
            }
            ckpt.arch.push_back(spec);
        } else if (key == "omega") {
            std::size_t count = 0;
            if (!(ls >> count)) throw malformed("missing omega count");
            ckpt.omega.resize(count);
            for (std::size_t i = 0; i < count; ++i)
                if (!(ls >> ckpt.omega[i])) throw malformed("short omega list");
            saw_omega = true;
        } else if (key == "norm_mean" || key == "norm_std") {
            auto& dst = key == "norm_mean" ? ckpt.norm_mean : ckpt.norm_std;
            (key == "norm_mean" ? saw_mean : saw_std) = true;
            std::string tok;
            while (ls >> tok) dst.push_back(parse_hex_float(tok, path));
        } else if (key == "param_count") {
            if (!(ls >> declared_params)) throw malformed("missing param count");
        } else {
            throw malformed("unknown key '" + key + "'");
        }
    }
    if (ckpt.kind.empty() || !saw_omega || !saw_mean || !saw_std || declared_params < 0)
        throw malformed("missing required field");
    if (ckpt.arch.size() != declared_layers) throw malformed("layer count mismatch");
    if (declared_params != static_cast<long>(spec_param_count(ckpt.arch)))
        throw IoError(IoErrc::inconsistent,
                      path + ": declared param_count does not match architecture");
    if (ckpt.omega.size() != ckpt.norm_mean.size() || ckpt.omega.size() != ckpt.norm_std.size())
        throw IoError(IoErrc::inconsistent, path + ": normalization stats do not match omega");
    if (!std::is_sorted(ckpt.omega.begin(), ckpt.omega.end()) ||
        std::adjacent_find(ckpt.omega.begin(), ckpt.omega.end()) != ckpt.omega.end())
        throw IoError(IoErrc::bad_value, path + ": omega must be sorted and unique");
    for (int idx : ckpt.omega)
        if (idx < 0 || idx >= ckpt.original_dim)
            throw IoError(IoErrc::bad_value, path + ": omega index outside [0, original_dim)");

    ckpt.params.resize(static_cast<std::size_t>(declared_params));
    r.f32s(ckpt.params.data(), ckpt.params.size(), "parameter blob");
    r.expect_eof();
    check_finite(path, ckpt.params.data(), ckpt.params.size(), "parameter");
    return ckpt;
}

// ---------------------------------------------------------------------------
// prune reports
// ---------------------------------------------------------------------------

std::vector<int> removal_order_map(const std::vector<PruneEvent>& history, int original_dim) {
    std::vector<int> order(static_cast<std::size_t>(original_dim), original_dim);
    for (const auto& ev : history) {
        if (ev.removed_original_index < 0 || ev.removed_original_index >= original_dim)
            throw std::invalid_argument("prune history references feature outside [0, B)");
        order[static_cast<std::size_t>(ev.removed_original_index)] = ev.step;
    }
    return order;
}

void write_prune_curve(const std::string& path, const std::vector<PruneEvent>& history) {
    std::ostringstream out;
    out << "step,removed_count,removed_feature_index,val_accuracy,retrained\n";
    char acc[32];
    for (const auto& ev : history) {
        std::snprintf(acc, sizeof acc, "%.6f", ev.val_accuracy);
        out << ev.step << "," << (ev.step + 1) << "," << ev.removed_original_index << "," << acc
            << "," << (ev.retrained ? 1 : 0) << "\n";
    }
    write_file(path, out.str());
}

void write_removal_order(const std::string& path, const std::vector<int>& order) {
    std::ostringstream out;
    for (int v : order) out << v << "\n";
    write_file(path, out.str());
}

void write_prune_report(const std::string& curve_path, const std::string& order_path,
                        const std::vector<PruneEvent>& history, int original_dim) {
    write_prune_curve(curve_path, history);
    write_removal_order(order_path, removal_order_map(history, original_dim));
}

// ---------------------------------------------------------------------------
// PPM overlay
// ---------------------------------------------------------------------------

void write_ppm(const std::string& path, Eigen::Index height, Eigen::Index width,
               const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(height * width * 3))
        throw IoError(IoErrc::inconsistent, path + ": rgb buffer does not match dims");
    std::string buf = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    buf.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    write_file(path, buf);
}

}  // namespace hsfs
