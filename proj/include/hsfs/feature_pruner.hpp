#pragma once

#include <cstdint>
#include <vector>

#include "hsfs/dataio.hpp"
#include "hsfs/pixel_classifier.hpp"

namespace hsfs {

struct PruneConfig {
    double tau = 0.005;        // validation-accuracy drop that triggers a retrain
    int max_retrains = 20;     // budget; the run halts when the next retrain would exceed it
    Eigen::Index min_features = 4;

    MlpConfig initial_template;  // first training (adam by default)
    MlpConfig retrain_template;  // retrains (adadelta by default)

    // retrained hidden widths scale as max(floor, round(original * |omega| / B))
    bool rescale_hidden = true;
    Eigen::Index rescale_floor = 16;
};

struct PruneState {
    std::vector<int> omega;          // retained original feature indices, sorted
    std::vector<float> gamma;        // worthiness per retained feature
    double baseline_acc = 0.0;       // val accuracy right after the latest (re)training
    int retrain_count = 0;
    std::vector<PruneEvent> history;
    std::vector<double> baseline_trace;  // baseline in effect at each history step
};

enum class PruneHalt { min_features, retrain_budget };

struct PruneResult {
    PruneState state;
    Network net;  // the final (possibly retrained) classifier on omega
    double initial_val_accuracy = 0.0;
    double final_val_accuracy = 0.0;
    PruneHalt halt = PruneHalt::min_features;
};

/// gamma(x_j) = sum_i |w_ij| over the first dense layer's column j; the
/// worthiness score of retained feature j.
std::vector<float> worthiness(const Network& net);

/// Removes the retained feature with minimal gamma (ties: lowest original
/// index), dropping both the first-layer weight column and the input slot.
/// Returns the removed original index.
int remove_min(PruneState& state, Network& net);

/// Eval-mode validation accuracy on a dataset already restricted to omega.
double eval_without_retrain(Network& net, const PixelDataset& val_restricted);

/// The four-step loop: score, remove the minimum, re-evaluate, retrain when
/// the drop against the post-training baseline exceeds tau. Halts at the
/// min_features floor or when the retrain budget is exhausted (the removal
/// that would have needed the unaffordable retrain is rolled back).
PruneResult run_prune(const PixelDataset& train, const PixelDataset& val, const PruneConfig& cfg);

}  // namespace hsfs
