// hsfs: synthetic hyperspectral scenes, per-pixel classification, iterative
// spectral feature pruning and convolutional cell masking, end to end from
// the shell. Every subcommand is deterministic given its resolved config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hsfs/cell_masker.hpp"
#include "hsfs/dataio.hpp"
#include "hsfs/feature_pruner.hpp"
#include "hsfs/pipeline.hpp"
#include "hsfs/pixel_classifier.hpp"
#include "hsfs/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hsfs;

namespace {

// exit codes, one per failure category (documented in the README)
constexpr int kExitOk = 0;
constexpr int kExitFormat = 65;      // bad magic / truncated / bad payload
constexpr int kExitMissingInput = 66;
constexpr int kExitInfeasible = 69;  // unsatisfiable generation/chip request
constexpr int kExitInternal = 70;    // validation or logic failure
constexpr int kExitWrite = 74;
constexpr int kExitDiverged = 75;

struct CommandContext {
    std::string config_path;
    json config;  // parsed --config file, empty object otherwise

    std::uint64_t seed = 0;
    bool seed_from_cli = false;

    void load() {
        config = json::object();
        if (config_path.empty()) return;
        std::ifstream in(config_path);
        if (!in) throw IoError(IoErrc::io_failure, "cannot open config " + config_path);
        try {
            in >> config;
        } catch (const json::exception& e) {
            throw IoError(IoErrc::inconsistent, config_path + ": bad config: " + e.what());
        }
    }

    // precedence: flag > config file > HSFS_SEED > built-in default
    std::uint64_t resolve_seed(const char* section) {
        if (seed_from_cli) return seed;
        if (config.contains(section) && config[section].contains("seed"))
            return config[section]["seed"].get<std::uint64_t>();
        if (config.contains("seed")) return config["seed"].get<std::uint64_t>();
        if (const char* env = std::getenv("HSFS_SEED")) return std::strtoull(env, nullptr, 10);
        return seed;
    }

    template <typename T>
    void from_config(const CLI::Option* opt, const char* section, const char* key, T& var) const {
        if (opt->count() > 0) return;  // explicit flag wins
        if (config.contains(section) && config[section].contains(key))
            var = config[section][key].get<T>();
    }
};

void add_common(CLI::App* cmd, CommandContext& ctx) {
    cmd->add_option("--config", ctx.config_path, "JSON config file; flags override its values");
    cmd->add_option("--seed", ctx.seed, "run seed (fallback: config, then HSFS_SEED)")
        ->each([&ctx](const std::string&) { ctx.seed_from_cli = true; });
}

void require_input(const std::string& path) {
    if (!fs::exists(path))
        throw IoError(IoErrc::io_failure, "missing input file: " + path);
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(IoErrc::io_failure, "cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError(IoErrc::io_failure, "short write to " + path);
}

// every run leaves its fully-resolved parameters next to its outputs
void emit_run_files(const std::string& base, const json& resolved, const json& summary) {
    write_json(base + ".resolved.json", resolved);
    write_json(base + ".summary.json", summary);
}

json mlp_json(const MlpConfig& cfg) {
    return {{"input_dim", cfg.input_dim},    {"hidden", cfg.hidden},
            {"dropout", cfg.dropout},        {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},  {"learning_rate", cfg.learning_rate},
            {"optimizer", optimizer_name(cfg.optimizer)}, {"seed", cfg.seed}};
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "adadelta") return OptimizerKind::adadelta;
    throw std::invalid_argument("unknown optimizer '" + name + "' (adam|adadelta)");
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(IoErrc::io_failure, "cannot open " + path + " for writing");
    out << "epoch,train_loss,val_accuracy\n";
    char buf[80];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", row.epoch, row.train_loss,
                      row.val_accuracy);
        out << buf;
    }
}

// checkpoint-aware feature handling: accept either original-width or
// omega-width inputs, then normalize with the stored stats
PixelDataset restrict_for_checkpoint(const Checkpoint& ckpt, PixelDataset ds) {
    if (ds.dims() == static_cast<Eigen::Index>(ckpt.omega.size())) {
        // already restricted
    } else if (ds.dims() == ckpt.original_dim) {
        ds = select_features(ds, ckpt.omega);
    } else {
        throw std::invalid_argument(
            "feature count " + std::to_string(ds.dims()) + " matches neither original_dim " +
            std::to_string(ckpt.original_dim) + " nor the checkpoint's retained set (" +
            std::to_string(ckpt.omega.size()) + ")");
    }
    NormStats stats{ckpt.norm_mean, ckpt.norm_std};
    return normalize_apply(stats, std::move(ds));
}

HyperCube restrict_cube_for_checkpoint(const Checkpoint& ckpt, const HyperCube& cube) {
    const auto omega_width = static_cast<Eigen::Index>(ckpt.omega.size());
    if (cube.bands != omega_width && cube.bands != ckpt.original_dim)
        throw std::invalid_argument("cube bands " + std::to_string(cube.bands) +
                                    " match neither original_dim nor the retained set");
    HyperCube out{cube.height, cube.width, omega_width, {}};
    out.values.resize(static_cast<std::size_t>(cube.pixels() * omega_width));
    for (Eigen::Index px = 0; px < cube.pixels(); ++px)
        for (Eigen::Index j = 0; j < omega_width; ++j) {
            const Eigen::Index src =
                cube.bands == omega_width ? j : static_cast<Eigen::Index>(ckpt.omega[std::size_t(j)]);
            const float raw = cube.values[static_cast<std::size_t>(px * cube.bands + src)];
            out.values[static_cast<std::size_t>(px * omega_width + j)] =
                (raw - ckpt.norm_mean[std::size_t(j)]) / ckpt.norm_std[std::size_t(j)];
        }
    return out;
}

std::vector<int> full_omega(Eigen::Index dims) {
    std::vector<int> omega(static_cast<std::size_t>(dims));
    for (Eigen::Index i = 0; i < dims; ++i) omega[static_cast<std::size_t>(i)] = int(i);
    return omega;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

struct GenArgs {
    CommandContext ctx;
    std::string out;
    SceneSpec spec;  // CLI fields resolved into this
    Eigen::Index informative = 8;
    CLI::Option *o_height, *o_width, *o_bands, *o_informative, *o_cells, *o_rmin, *o_rmax,
        *o_noise, *o_edge, *o_frac;
};

int run_gen(GenArgs& a) {
    a.ctx.load();
    auto& c = a.ctx;
    c.from_config(a.o_bands, "scene", "bands", a.spec.bands);
    c.from_config(a.o_informative, "scene", "informative", a.informative);
    double noise = a.spec.noise_std;  // already holds the flag value when given
    c.from_config(a.o_noise, "scene", "noise_std", noise);

    SceneSpec spec = default_spec(a.spec.bands, a.informative, noise);
    spec.height = a.spec.height;
    spec.width = a.spec.width;
    spec.cell_count = a.spec.cell_count;
    spec.radius_min = a.spec.radius_min;
    spec.radius_max = a.spec.radius_max;
    spec.edge_intensity = a.spec.edge_intensity;
    spec.frac_n_plus = a.spec.frac_n_plus;
    c.from_config(a.o_height, "scene", "height", spec.height);
    c.from_config(a.o_width, "scene", "width", spec.width);
    c.from_config(a.o_cells, "scene", "cells", spec.cell_count);
    c.from_config(a.o_rmin, "scene", "radius_min", spec.radius_min);
    c.from_config(a.o_rmax, "scene", "radius_max", spec.radius_max);
    c.from_config(a.o_edge, "scene", "edge_intensity", spec.edge_intensity);
    c.from_config(a.o_frac, "scene", "frac_n_plus", spec.frac_n_plus);
    spec.seed = c.resolve_seed("scene");

    Scene scene = render_scene(spec);
    write_cube(a.out + ".hsc", scene.cube);
    write_mask(a.out + ".msk", scene.mask);
    write_scene_info(a.out + ".info", spec);

    std::vector<long> hist(3, 0);
    for (auto l : scene.mask.labels) hist[l] += 1;
    json resolved{{"command", "gen"},
                  {"scene",
                   {{"height", spec.height},
                    {"width", spec.width},
                    {"bands", spec.bands},
                    {"informative", a.informative},
                    {"cells", spec.cell_count},
                    {"radius_min", spec.radius_min},
                    {"radius_max", spec.radius_max},
                    {"noise_std", spec.noise_std},
                    {"edge_intensity", spec.edge_intensity},
                    {"frac_n_plus", spec.frac_n_plus},
                    {"seed", spec.seed}}}};
    json summary{{"outputs", {a.out + ".hsc", a.out + ".msk", a.out + ".info"}},
                 {"histogram", {{"BG", hist[0]}, {"N+", hist[1]}, {"N-", hist[2]}}},
                 {"cells_placed", scene.cells.size()},
                 {"informative_channels", scene.informative}};
    emit_run_files(a.out, resolved, summary);
    return kExitOk;
}

int run_pixelize(const std::string& cube_path, const std::string& mask_path,
                 const std::string& out) {
    require_input(cube_path);
    require_input(mask_path);
    auto ds = pixelize(read_cube(cube_path), read_mask(mask_path));
    write_pixels(out, ds);
    auto hist = class_histogram(ds);
    emit_run_files(out, json{{"command", "pixelize"}, {"cube", cube_path}, {"mask", mask_path}},
                   json{{"records", ds.n()},
                        {"dims", ds.dims()},
                        {"histogram", {{"BG", hist[0]}, {"N+", hist[1]}, {"N-", hist[2]}}}});
    return kExitOk;
}

int run_balance(CommandContext& ctx, const std::string& in, const std::string& out) {
    ctx.load();
    const auto seed = ctx.resolve_seed("balance");
    require_input(in);
    auto ds = undersample_uniform(read_pixels(in), seed);
    write_pixels(out, ds);
    auto hist = class_histogram(ds);
    emit_run_files(out, json{{"command", "balance"}, {"in", in}, {"seed", seed}},
                   json{{"records", ds.n()},
                        {"histogram", {{"BG", hist[0]}, {"N+", hist[1]}, {"N-", hist[2]}}}});
    return kExitOk;
}

int run_split(CommandContext& ctx, const std::string& in, const std::string& prefix,
              SplitSpec spec) {
    ctx.load();
    spec.seed = ctx.resolve_seed("split");
    require_input(in);
    auto parts = split(read_pixels(in), spec);
    write_pixels(prefix + ".train.pxd", parts.train);
    write_pixels(prefix + ".val.pxd", parts.val);
    write_pixels(prefix + ".test.pxd", parts.test);
    emit_run_files(prefix,
                   json{{"command", "split"},
                        {"in", in},
                        {"train_frac", spec.train_frac},
                        {"val_frac", spec.val_frac},
                        {"test_frac", spec.test_frac},
                        {"seed", spec.seed}},
                   json{{"train", parts.train.n()}, {"val", parts.val.n()}, {"test", parts.test.n()}});
    return kExitOk;
}

struct TrainPixelArgs {
    CommandContext ctx;
    std::string train_path, val_path, out;
    MlpConfig cfg;
    std::string optimizer = "adam";
    CLI::Option *o_hidden, *o_dropout, *o_epochs, *o_batch, *o_lr, *o_opt;
};

int run_train_pixel(TrainPixelArgs& a) {
    a.ctx.load();
    a.ctx.from_config(a.o_hidden, "mlp", "hidden", a.cfg.hidden);
    a.ctx.from_config(a.o_dropout, "mlp", "dropout", a.cfg.dropout);
    a.ctx.from_config(a.o_epochs, "mlp", "epochs", a.cfg.epochs);
    a.ctx.from_config(a.o_batch, "mlp", "batch_size", a.cfg.batch_size);
    a.ctx.from_config(a.o_lr, "mlp", "learning_rate", a.cfg.learning_rate);
    a.ctx.from_config(a.o_opt, "mlp", "optimizer", a.optimizer);
    a.cfg.optimizer = parse_optimizer(a.optimizer);
    a.cfg.seed = a.ctx.resolve_seed("mlp");

    require_input(a.train_path);
    require_input(a.val_path);
    auto train_ds = read_pixels(a.train_path);
    auto val_ds = read_pixels(a.val_path);
    a.cfg.input_dim = train_ds.dims();

    auto stats = normalize_fit(train_ds);
    auto tr = normalize_apply(stats, std::move(train_ds));
    auto va = normalize_apply(stats, std::move(val_ds));

    auto net = build_mlp(a.cfg);
    auto result = train(net, tr, va, a.cfg);
    auto ckpt = checkpoint_from_network(net, "pixel_mlp", a.cfg.input_dim,
                                        full_omega(a.cfg.input_dim), stats.mean, stats.stdev);
    write_checkpoint(a.out, ckpt);
    write_history_csv(a.out + ".history.csv", result.history);

    emit_run_files(a.out,
                   json{{"command", "train-pixel"},
                        {"train", a.train_path},
                        {"val", a.val_path},
                        {"mlp", mlp_json(a.cfg)}},
                   json{{"model", a.out},
                        {"best_val_accuracy", result.best_val_accuracy},
                        {"best_epoch", result.best_epoch},
                        {"epochs_run", result.history.size()}});
    return kExitOk;
}

int run_eval_pixel(const std::string& model, const std::string& data, const std::string& out,
                   int threads) {
    require_input(model);
    require_input(data);
    auto ckpt = read_checkpoint(model);
    auto net = ckpt.to_network();
    auto ds = restrict_for_checkpoint(ckpt, read_pixels(data));
    auto report = evaluate(net, ds, threads);
    auto baseline = majority_baseline(ds);
    write_eval_report_text(out + ".txt", report);
    write_eval_report_csv(out + ".csv", report);
    emit_run_files(out,
                   json{{"command", "eval-pixel"}, {"model", model}, {"data", data},
                        {"threads", threads}},
                   json{{"accuracy", report.accuracy},
                        {"macro_f1", report.macro_f1},
                        {"majority_baseline_accuracy", baseline.accuracy},
                        {"samples", report.total},
                        {"empty_class_warning", report.empty_class_warning}});
    return kExitOk;
}

int run_classify_cube(const std::string& model, const std::string& cube_path,
                      const std::string& out_mask, const std::string& out_overlay, int threads) {
    require_input(model);
    require_input(cube_path);
    auto ckpt = read_checkpoint(model);
    auto net = ckpt.to_network();
    auto cube = restrict_cube_for_checkpoint(ckpt, read_cube(cube_path));
    auto mask = classify_cube(net, cube, threads);
    write_mask(out_mask, mask);
    if (!out_overlay.empty())
        write_ppm(out_overlay, mask.height, mask.width, overlay_rgb(mask));
    std::vector<long> hist(3, 0);
    for (auto l : mask.labels) hist[l] += 1;
    emit_run_files(out_mask,
                   json{{"command", "classify-cube"}, {"model", model}, {"cube", cube_path},
                        {"threads", threads}},
                   json{{"mask", out_mask},
                        {"overlay", out_overlay},
                        {"histogram", {{"BG", hist[0]}, {"N+", hist[1]}, {"N-", hist[2]}}}});
    return kExitOk;
}

struct PruneArgs {
    CommandContext ctx;
    std::string train_path, val_path, out_dir;
    PruneConfig cfg;
    int initial_epochs = 30;
    int retrain_epochs = 30;
    std::string retrain_optimizer = "adadelta";
    double dropout = 0.5;
    CLI::Option *o_tau, *o_retrains, *o_min_features, *o_epochs, *o_retrain_epochs, *o_ropt,
        *o_dropout, *o_no_rescale;
    bool no_rescale = false;
};

int run_prune_cmd(PruneArgs& a) {
    a.ctx.load();
    a.ctx.from_config(a.o_tau, "prune", "tau", a.cfg.tau);
    a.ctx.from_config(a.o_retrains, "prune", "max_retrains", a.cfg.max_retrains);
    a.ctx.from_config(a.o_min_features, "prune", "min_features", a.cfg.min_features);
    a.ctx.from_config(a.o_epochs, "prune", "initial_epochs", a.initial_epochs);
    a.ctx.from_config(a.o_retrain_epochs, "prune", "retrain_epochs", a.retrain_epochs);
    a.ctx.from_config(a.o_ropt, "prune", "retrain_optimizer", a.retrain_optimizer);
    a.ctx.from_config(a.o_dropout, "prune", "dropout", a.dropout);
    a.ctx.from_config(a.o_no_rescale, "prune", "no_rescale_hidden", a.no_rescale);
    const auto seed = a.ctx.resolve_seed("prune");

    require_input(a.train_path);
    require_input(a.val_path);
    auto train_ds = read_pixels(a.train_path);
    auto val_ds = read_pixels(a.val_path);
    const Eigen::Index dims = train_ds.dims();

    auto stats = normalize_fit(train_ds);
    auto tr = normalize_apply(stats, std::move(train_ds));
    auto va = normalize_apply(stats, std::move(val_ds));

    a.cfg.initial_template.input_dim = dims;
    a.cfg.initial_template.epochs = a.initial_epochs;
    a.cfg.initial_template.dropout = a.dropout;
    a.cfg.initial_template.seed = seed;
    a.cfg.retrain_template = a.cfg.initial_template;
    a.cfg.retrain_template.epochs = a.retrain_epochs;
    a.cfg.retrain_template.optimizer = parse_optimizer(a.retrain_optimizer);
    a.cfg.rescale_hidden = !a.no_rescale;

    fs::create_directories(a.out_dir);
    auto result = run_prune(tr, va, a.cfg);

    const fs::path dir(a.out_dir);
    write_prune_report((dir / "prune_curve.csv").string(), (dir / "removal_order.txt").string(),
                       result.state.history, int(dims));
    auto sub_stats = select_stats(stats, result.state.omega);
    auto ckpt = checkpoint_from_network(result.net, "pixel_mlp", dims, result.state.omega,
                                        sub_stats.mean, sub_stats.stdev);
    write_checkpoint((dir / "model.nnw").string(), ckpt);

    emit_run_files((dir / "prune").string(),
                   json{{"command", "prune"},
                        {"train", a.train_path},
                        {"val", a.val_path},
                        {"prune",
                         {{"tau", a.cfg.tau},
                          {"max_retrains", a.cfg.max_retrains},
                          {"min_features", a.cfg.min_features},
                          {"initial_epochs", a.initial_epochs},
                          {"retrain_epochs", a.retrain_epochs},
                          {"retrain_optimizer", a.retrain_optimizer},
                          {"dropout", a.dropout},
                          {"rescale_hidden", a.cfg.rescale_hidden},
                          {"seed", seed}}}},
                   json{{"removed", result.state.history.size()},
                        {"retained", result.state.omega},
                        {"retrains", result.state.retrain_count},
                        {"initial_val_accuracy", result.initial_val_accuracy},
                        {"final_val_accuracy", result.final_val_accuracy},
                        {"halt",
                         result.halt == PruneHalt::retrain_budget ? "retrain_budget"
                                                                  : "min_features"}});
    return kExitOk;
}

int run_chips(CommandContext& ctx, const std::string& cube_path, const std::string& mask_path,
              const std::string& out_dir, Eigen::Index size, Eigen::Index count,
              double min_nontrivial) {
    ctx.load();
    const auto seed = ctx.resolve_seed("chips");
    require_input(cube_path);
    require_input(mask_path);
    auto set = make_chips(read_cube(cube_path), read_mask(mask_path), size, count, min_nontrivial,
                          seed);
    fs::create_directories(out_dir);
    const std::string manifest = (fs::path(out_dir) / "manifest.json").string();
    save_chipset(manifest, set);
    long nontrivial = 0;
    for (const auto& chip : set.chips) nontrivial += chip.nontrivial() ? 1 : 0;
    emit_run_files((fs::path(out_dir) / "chips").string(),
                   json{{"command", "chips"},
                        {"cube", cube_path},
                        {"mask", mask_path},
                        {"size", size},
                        {"count", count},
                        {"min_nontrivial", min_nontrivial},
                        {"seed", seed}},
                   json{{"manifest", manifest}, {"chips", set.chips.size()},
                        {"nontrivial", nontrivial}});
    return kExitOk;
}

struct TrainMaskArgs {
    CommandContext ctx;
    std::string chips_path, out;
    CnnConfig cfg;
    double val_frac = 0.05;
    std::vector<Eigen::Index> widths;
    CLI::Option *o_epochs, *o_batch, *o_dropout, *o_widths, *o_val_frac;
};

int run_train_mask(TrainMaskArgs& a) {
    a.ctx.load();
    a.ctx.from_config(a.o_epochs, "cnn", "epochs", a.cfg.epochs);
    a.ctx.from_config(a.o_batch, "cnn", "batch_size", a.cfg.batch_size);
    a.ctx.from_config(a.o_dropout, "cnn", "dropout", a.cfg.dropout);
    a.ctx.from_config(a.o_val_frac, "cnn", "val_frac", a.val_frac);
    a.ctx.from_config(a.o_widths, "cnn", "widths", a.widths);
    a.cfg.seed = a.ctx.resolve_seed("cnn");

    require_input(a.chips_path);
    auto chips = load_chipset(a.chips_path);
    a.cfg.chip_size = chips.size;
    a.cfg.bands = chips.bands;
    if (!a.widths.empty()) {
        if (a.widths.size() != 5)
            throw std::invalid_argument("--widths expects exactly 5 values");
        for (std::size_t i = 0; i < 5; ++i) a.cfg.widths[i] = a.widths[i];
    }

    auto net = build_cnn(a.cfg);
    auto result = train_masker(net, chips, a.val_frac, a.cfg);
    auto ckpt = checkpoint_from_network(net, "cell_masker", a.cfg.bands, full_omega(a.cfg.bands),
                                        result.stats.mean, result.stats.stdev);
    write_checkpoint(a.out, ckpt);

    std::ofstream hist(a.out + ".history.csv", std::ios::trunc);
    hist << "epoch,train_mse,val_mse\n";
    char buf[80];
    for (const auto& row : result.history) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", row.epoch, row.train_mse, row.val_mse);
        hist << buf;
    }

    emit_run_files(a.out,
                   json{{"command", "train-mask"},
                        {"chips", a.chips_path},
                        {"cnn",
                         {{"chip_size", a.cfg.chip_size},
                          {"bands", a.cfg.bands},
                          {"widths", a.cfg.widths},
                          {"dropout", a.cfg.dropout},
                          {"epochs", a.cfg.epochs},
                          {"batch_size", a.cfg.batch_size},
                          {"val_frac", a.val_frac},
                          {"seed", a.cfg.seed}}}},
                   json{{"model", a.out},
                        {"best_val_mse", result.best_val_mse},
                        {"best_epoch", result.best_epoch}});
    return kExitOk;
}

int run_eval_mask(const std::string& model, const std::string& chips_path, const std::string& out,
                  const std::string& predictions_dir) {
    require_input(model);
    require_input(chips_path);
    auto ckpt = read_checkpoint(model);
    if (ckpt.kind != "cell_masker")
        throw std::invalid_argument("checkpoint kind '" + ckpt.kind + "' is not a cell_masker");
    auto net = ckpt.to_network();
    auto chips = load_chipset(chips_path);
    NormStats stats{ckpt.norm_mean, ckpt.norm_std};
    auto normalized = normalize_chips(stats, chips);
    const double l1 = eval_l1(net, normalized);

    if (!predictions_dir.empty()) {
        fs::create_directories(predictions_dir);
        char name[64];
        for (std::size_t i = 0; i < normalized.chips.size(); ++i) {
            auto pred = predict_mask(net, normalized.chips[i].cube);
            std::snprintf(name, sizeof name, "pred_%05zu", i);
            LabelMask rounded{normalized.size, normalized.size, pred.rounded};
            write_mask((fs::path(predictions_dir) / (std::string(name) + ".msk")).string(),
                       rounded);
            // continuous codes go out as a single-band cube
            HyperCube float_map{normalized.size, normalized.size, 1, {}};
            float_map.values.resize(pred.values.size());
            for (std::size_t p = 0; p < pred.values.size(); ++p)
                float_map.values[p] = std::max(0.0f, pred.values[p]);
            write_cube((fs::path(predictions_dir) / (std::string(name) + ".hsc")).string(),
                       float_map);
        }
    }

    std::ofstream report(out + ".txt", std::ios::trunc);
    char line[96];
    std::snprintf(line, sizeof line, "chips %zu\nmean_per_pixel_l1 %.6f\n",
                  normalized.chips.size(), l1);
    report << line;
    report.close();
    emit_run_files(out, json{{"command", "eval-mask"}, {"model", model}, {"chips", chips_path}},
                   json{{"mean_per_pixel_l1", l1}, {"chips", normalized.chips.size()},
                        {"predictions_dir", predictions_dir}});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperspectral feature sampling toolkit"};
    app.require_subcommand(1);

    // gen
    GenArgs gen;
    auto* cmd_gen = app.add_subcommand("gen", "render a synthetic scene (cube + mask + sidecar)");
    cmd_gen->add_option("--out", gen.out, "output base path")->required();
    gen.o_height = cmd_gen->add_option("--height", gen.spec.height);
    gen.o_width = cmd_gen->add_option("--width", gen.spec.width);
    gen.o_bands = cmd_gen->add_option("--bands", gen.spec.bands);
    gen.o_informative = cmd_gen->add_option("--informative", gen.informative);
    gen.o_cells = cmd_gen->add_option("--cells", gen.spec.cell_count);
    gen.o_rmin = cmd_gen->add_option("--radius-min", gen.spec.radius_min);
    gen.o_rmax = cmd_gen->add_option("--radius-max", gen.spec.radius_max);
    gen.o_noise = cmd_gen->add_option("--noise", gen.spec.noise_std);
    gen.o_edge = cmd_gen->add_option("--edge", gen.spec.edge_intensity);
    gen.o_frac = cmd_gen->add_option("--frac-nplus", gen.spec.frac_n_plus);
    add_common(cmd_gen, gen.ctx);

    // pixelize
    std::string px_cube, px_mask, px_out;
    auto* cmd_px = app.add_subcommand("pixelize", "split a cube + mask into labeled spectra");
    cmd_px->add_option("--cube", px_cube)->required();
    cmd_px->add_option("--mask", px_mask)->required();
    cmd_px->add_option("--out", px_out)->required();

    // balance
    CommandContext bal_ctx;
    std::string bal_in, bal_out;
    auto* cmd_bal = app.add_subcommand("balance", "uniform random undersampling to equal counts");
    cmd_bal->add_option("--in", bal_in)->required();
    cmd_bal->add_option("--out", bal_out)->required();
    add_common(cmd_bal, bal_ctx);

    // split
    CommandContext split_ctx;
    std::string split_in, split_prefix;
    SplitSpec split_spec;
    auto* cmd_split = app.add_subcommand("split", "train/val/test partition");
    cmd_split->add_option("--in", split_in)->required();
    cmd_split->add_option("--out-prefix", split_prefix)->required();
    cmd_split->add_option("--train", split_spec.train_frac);
    cmd_split->add_option("--val", split_spec.val_frac);
    cmd_split->add_option("--test", split_spec.test_frac);
    add_common(cmd_split, split_ctx);

    // train-pixel
    TrainPixelArgs tp;
    auto* cmd_tp = app.add_subcommand("train-pixel", "train the dense pixel classifier");
    cmd_tp->add_option("--train", tp.train_path)->required();
    cmd_tp->add_option("--val", tp.val_path)->required();
    cmd_tp->add_option("--out", tp.out)->required();
    tp.o_hidden = cmd_tp->add_option("--hidden", tp.cfg.hidden, "hidden layer sizes");
    tp.o_dropout = cmd_tp->add_option("--dropout", tp.cfg.dropout);
    tp.o_epochs = cmd_tp->add_option("--epochs", tp.cfg.epochs);
    tp.o_batch = cmd_tp->add_option("--batch", tp.cfg.batch_size);
    tp.o_lr = cmd_tp->add_option("--lr", tp.cfg.learning_rate);
    tp.o_opt = cmd_tp->add_option("--optimizer", tp.optimizer, "adam|adadelta");
    add_common(cmd_tp, tp.ctx);

    // eval-pixel
    std::string ep_model, ep_data, ep_out;
    int ep_threads = 1;
    auto* cmd_ep = app.add_subcommand("eval-pixel", "confusion matrix and per-class metrics");
    cmd_ep->add_option("--model", ep_model)->required();
    cmd_ep->add_option("--data", ep_data)->required();
    cmd_ep->add_option("--out", ep_out)->required();
    cmd_ep->add_option("--threads", ep_threads, "evaluation worker threads");

    // classify-cube
    std::string cc_model, cc_cube, cc_mask, cc_overlay;
    int cc_threads = 1;
    auto* cmd_cc = app.add_subcommand("classify-cube", "per-pixel classification of a whole cube");
    cmd_cc->add_option("--model", cc_model)->required();
    cmd_cc->add_option("--cube", cc_cube)->required();
    cmd_cc->add_option("--out-mask", cc_mask)->required();
    cmd_cc->add_option("--out-overlay", cc_overlay);
    cmd_cc->add_option("--threads", cc_threads, "evaluation worker threads");

    // prune
    PruneArgs pr;
    auto* cmd_pr = app.add_subcommand("prune", "iterative data-driven spectral feature pruning");
    cmd_pr->add_option("--train", pr.train_path)->required();
    cmd_pr->add_option("--val", pr.val_path)->required();
    cmd_pr->add_option("--out-dir", pr.out_dir)->required();
    pr.o_tau = cmd_pr->add_option("--tau", pr.cfg.tau, "accuracy drop that triggers a retrain");
    pr.o_retrains = cmd_pr->add_option("--max-retrains", pr.cfg.max_retrains);
    pr.o_min_features = cmd_pr->add_option("--min-features", pr.cfg.min_features);
    pr.o_epochs = cmd_pr->add_option("--epochs", pr.initial_epochs, "initial training epochs");
    pr.o_retrain_epochs = cmd_pr->add_option("--retrain-epochs", pr.retrain_epochs);
    pr.o_ropt = cmd_pr->add_option("--retrain-optimizer", pr.retrain_optimizer, "adam|adadelta");
    pr.o_dropout = cmd_pr->add_option("--dropout", pr.dropout);
    pr.o_no_rescale = cmd_pr->add_flag("--no-rescale-hidden", pr.no_rescale,
                                       "retrain at the original hidden widths");
    add_common(cmd_pr, pr.ctx);

    // chips
    CommandContext ch_ctx;
    std::string ch_cube, ch_mask, ch_dir;
    Eigen::Index ch_size = 16, ch_count = 1000;
    double ch_frac = 0.9;
    auto* cmd_ch = app.add_subcommand("chips", "cut augmented training chips from a scene");
    cmd_ch->add_option("--cube", ch_cube)->required();
    cmd_ch->add_option("--mask", ch_mask)->required();
    cmd_ch->add_option("--out-dir", ch_dir)->required();
    cmd_ch->add_option("--size", ch_size);
    cmd_ch->add_option("--count", ch_count);
    cmd_ch->add_option("--min-nontrivial", ch_frac);
    add_common(cmd_ch, ch_ctx);

    // train-mask
    TrainMaskArgs tm;
    auto* cmd_tm = app.add_subcommand("train-mask", "train the convolutional cell masker");
    cmd_tm->add_option("--chips", tm.chips_path, "chip manifest")->required();
    cmd_tm->add_option("--out", tm.out)->required();
    tm.o_epochs = cmd_tm->add_option("--epochs", tm.cfg.epochs);
    tm.o_batch = cmd_tm->add_option("--batch", tm.cfg.batch_size);
    tm.o_dropout = cmd_tm->add_option("--dropout", tm.cfg.dropout);
    tm.o_widths = cmd_tm->add_option("--widths", tm.widths, "five stage widths");
    tm.o_val_frac = cmd_tm->add_option("--val-frac", tm.val_frac);
    add_common(cmd_tm, tm.ctx);

    // eval-mask
    std::string em_model, em_chips, em_out, em_preds;
    auto* cmd_em = app.add_subcommand("eval-mask", "mean per-pixel L1 on a chip set");
    cmd_em->add_option("--model", em_model)->required();
    cmd_em->add_option("--chips", em_chips)->required();
    cmd_em->add_option("--out", em_out)->required();
    cmd_em->add_option("--write-predictions", em_preds, "directory for predicted masks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_px->parsed()) return run_pixelize(px_cube, px_mask, px_out);
        if (cmd_bal->parsed()) return run_balance(bal_ctx, bal_in, bal_out);
        if (cmd_split->parsed()) return run_split(split_ctx, split_in, split_prefix, split_spec);
        if (cmd_tp->parsed()) return run_train_pixel(tp);
        if (cmd_ep->parsed()) return run_eval_pixel(ep_model, ep_data, ep_out, ep_threads);
        if (cmd_cc->parsed()) return run_classify_cube(cc_model, cc_cube, cc_mask, cc_overlay, cc_threads);
        if (cmd_pr->parsed()) return run_prune_cmd(pr);
        if (cmd_ch->parsed()) return run_chips(ch_ctx, ch_cube, ch_mask, ch_dir, ch_size, ch_count, ch_frac);
        if (cmd_tm->parsed()) return run_train_mask(tm);
        if (cmd_em->parsed()) return run_eval_mask(em_model, em_chips, em_out, em_preds);
    } catch (const InfeasibleError& e) {
        std::cerr << "error (infeasible): " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const IoError& e) {
        std::cerr << "error (io): " << e.what() << "\n";
        if (e.code() == IoErrc::io_failure)
            return std::string(e.what()).find("missing input") != std::string::npos ? kExitMissingInput
                                                                                    : kExitWrite;
        return kExitFormat;
    } catch (const NumericsError& e) {
        std::cerr << "error (numerics): " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitOk;
}
