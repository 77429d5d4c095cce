#include "hsfs/feature_pruner.hpp"

#include <algorithm>
#include <cmath>

namespace hsfs {

namespace {

DenseLayerT<float>& first_dense(Network& net) {
    if (net.layers.empty()) throw std::invalid_argument("worthiness: empty network");
    auto* dense = std::get_if<DenseLayerT<float>>(&net.layers.front());
    if (!dense) throw std::invalid_argument("worthiness: first layer is not dense");
    return *dense;
}

void drop_feature_column(PixelDataset& ds, Eigen::Index pos) {
    RowMat<float> next(ds.n(), ds.dims() - 1);
    for (Eigen::Index c = 0, o = 0; c < ds.dims(); ++c) {
        if (c == pos) continue;
        next.col(o++) = ds.features.col(c);
    }
    ds.features = std::move(next);
}

}  // namespace

std::vector<float> worthiness(const Network& net) {
    const auto& dense = first_dense(const_cast<Network&>(net));
    const Eigen::Index in = dense.in_dim();
    const Eigen::Index out = dense.out_dim();
    std::vector<float> gamma(static_cast<std::size_t>(in), 0.0f);
    // explicit ascending-i accumulation per column; the test oracle walks the
    // same order with swapped loop nesting and must match bit for bit
    for (Eigen::Index j = 0; j < in; ++j) {
        float sum = 0.0f;
        for (Eigen::Index i = 0; i < out; ++i) sum += std::abs(dense.weights(i, j));
        gamma[static_cast<std::size_t>(j)] = sum;
    }
    return gamma;
}

int remove_min(PruneState& state, Network& net) {
    auto& dense = first_dense(net);
    if (state.gamma.size() != static_cast<std::size_t>(dense.in_dim()) ||
        state.omega.size() != state.gamma.size())
        throw std::invalid_argument("remove_min: state does not match network input width");
    if (state.omega.empty()) throw std::invalid_argument("remove_min: nothing left to remove");

    std::size_t min_pos = 0;
    for (std::size_t j = 1; j < state.gamma.size(); ++j)
        if (state.gamma[j] < state.gamma[min_pos]) min_pos = j;  // ties keep the lowest index

    const auto pos = static_cast<Eigen::Index>(min_pos);
    RowMat<float> next(dense.out_dim(), dense.in_dim() - 1);
    for (Eigen::Index c = 0, o = 0; c < dense.in_dim(); ++c) {
        if (c == pos) continue;
        next.col(o++) = dense.weights.col(c);
    }
    dense.weights = std::move(next);

    const int removed = state.omega[min_pos];
    state.omega.erase(state.omega.begin() + static_cast<std::ptrdiff_t>(min_pos));
    state.gamma.erase(state.gamma.begin() + static_cast<std::ptrdiff_t>(min_pos));
    return removed;
}

double eval_without_retrain(Network& net, const PixelDataset& val_restricted) {
    return accuracy(net, val_restricted);
}

namespace {

MlpConfig retrain_config(const PruneConfig& cfg, Eigen::Index input_dim, Eigen::Index original_dim,
                         int retrain_index) {
    MlpConfig mlp = cfg.retrain_template;
    mlp.input_dim = input_dim;
    if (cfg.rescale_hidden) {
        for (auto& h : mlp.hidden) {
            const double scaled = std::round(double(h) * double(input_dim) / double(original_dim));
            h = std::max<Eigen::Index>(cfg.rescale_floor,
                                       static_cast<Eigen::Index>(scaled));
        }
    }
    mlp.seed = Rng::derive(cfg.retrain_template.seed, 0x5000 + std::uint64_t(retrain_index));
    return mlp;
}

}  // namespace

PruneResult run_prune(const PixelDataset& train_ds, const PixelDataset& val_ds,
                      const PruneConfig& cfg) {
    if (cfg.tau <= 0.0) throw std::invalid_argument("run_prune: tau must be positive");
    if (cfg.min_features < 1)
        throw std::invalid_argument("run_prune: min_features must be at least 1");
    if (cfg.max_retrains < 0)
        throw std::invalid_argument("run_prune: max_retrains must be non-negative");
    if (train_ds.dims() != val_ds.dims())
        throw std::invalid_argument("run_prune: train/val dims differ");
    const Eigen::Index original_dim = train_ds.dims();
    if (original_dim < cfg.min_features)
        throw std::invalid_argument("run_prune: fewer features than min_features");

    // step 1: train the initial classifier on all features
    MlpConfig initial = cfg.initial_template;
    initial.input_dim = original_dim;
    PruneResult result;
    result.net = build_mlp(initial);
    train(result.net, train_ds, val_ds, initial);

    PruneState& state = result.state;
    state.omega.resize(static_cast<std::size_t>(original_dim));
    for (Eigen::Index i = 0; i < original_dim; ++i) state.omega[static_cast<std::size_t>(i)] = int(i);
    state.baseline_acc = accuracy(result.net, val_ds);
    result.initial_val_accuracy = state.baseline_acc;

    PixelDataset train_cur = train_ds;
    PixelDataset val_cur = val_ds;
    int step = 0;
    result.halt = PruneHalt::min_features;

    while (static_cast<Eigen::Index>(state.omega.size()) > cfg.min_features) {
        // step 2: score; step 3: remove the minimum and re-evaluate
        state.gamma = worthiness(result.net);
        const std::size_t min_pos =
            static_cast<std::size_t>(std::min_element(state.gamma.begin(), state.gamma.end()) -
                                     state.gamma.begin());
        Network candidate = result.net;
        PruneState cand_state = state;
        const int removed = remove_min(cand_state, candidate);

        PixelDataset train_next = train_cur;
        PixelDataset val_next = val_cur;
        drop_feature_column(train_next, static_cast<Eigen::Index>(min_pos));
        drop_feature_column(val_next, static_cast<Eigen::Index>(min_pos));

        const double acc = eval_without_retrain(candidate, val_next);
        bool retrained = false;

        // step 4: retrain when the drop exceeds tau; halting condition is the
        // retrain budget
        if (state.baseline_acc - acc > cfg.tau) {
            if (state.retrain_count >= cfg.max_retrains) {
                result.halt = PruneHalt::retrain_budget;
                break;  // roll back: the candidate removal is not committed
            }
            MlpConfig rcfg = retrain_config(cfg, static_cast<Eigen::Index>(cand_state.omega.size()),
                                            original_dim, state.retrain_count);
            candidate = build_mlp(rcfg);
            train(candidate, train_next, val_next, rcfg);
            cand_state.gamma = worthiness(candidate);
            state.retrain_count += 1;
            retrained = true;
        }

        result.net = std::move(candidate);
        const int keep_retrains = state.retrain_count;
        const double baseline_at_step = state.baseline_acc;
        state = std::move(cand_state);
        state.retrain_count = keep_retrains;
        state.baseline_acc = baseline_at_step;
        state.history.push_back({step, removed, acc, retrained});
        state.baseline_trace.push_back(baseline_at_step);
        if (retrained) state.baseline_acc = accuracy(result.net, val_next);
        train_cur = std::move(train_next);
        val_cur = std::move(val_next);
        ++step;
    }

    result.final_val_accuracy = accuracy(result.net, val_cur);
    return result;
}

}  // namespace hsfs
