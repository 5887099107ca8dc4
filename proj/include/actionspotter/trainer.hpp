// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "actionspotter/dataset.hpp"
#include "actionspotter/env.hpp"
#include "actionspotter/metric.hpp"
#include "actionspotter/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace actionspotter {

struct HyperParams {
    double gamma = 1.0;
    double rho = 0.0;             // initial entropy temperature
    double rho_lr = 1e-3;         // step size of the temperature update
    double target_entropy = -1.0; // negative: half of the maximum joint entropy
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double learning_rate = 1e-4;
    int batch_size = 32;
    int pretrain_epochs = 5;
    int epochs = 100;
    int patience = 10;
    double sigma = 0.0; // spots with likelihood below sigma are dropped from evaluated predictions
    std::uint64_t seed = 0;
    int hidden = 64;
    bool use_memory = true;
    int bptt_window = 0;    // 0: full backpropagation through time
    int uniform_stride = 0; // > 0 replaces the learned browser by a fixed stride

    /// Resolved target entropy for an action set.
    double target_entropy_for(const BrowseActionSet &actions) const;
    void validate() const;

    friend bool operator==(const HyperParams &, const HyperParams &) = default;
};

std::string hyperparams_to_json(const HyperParams &hp);
/// Reads the fields present in a JSON object over the given defaults.
HyperParams hyperparams_from_json(const std::string &json_text, HyperParams defaults = {});

/// Frozen per-step critic targets and advantages, used to hold the surrogate fixed when the
/// parameters are perturbed.
struct ReturnTargets {
    std::vector<double> targets;
    std::vector<double> advantages;
};

/// Inclusive discounted return-to-go as critic target; advantage = target - critic value.
ReturnTargets return_targets(const EpisodeTrace &trace, double gamma);

/// Mean cross-entropy of the classifier against the per-frame label of every visited frame
/// (background is class index C). Adds scale * dL/dlogits into `grads` when given.
double loss_cls(const EpisodeTrace &trace, const VideoAnnotation &annotation, int num_classes,
                OutputGrads *grads = nullptr, double scale = 1.0);

/// Mean of 0.5 * (value - target)^2.
double loss_critic(const EpisodeTrace &trace, const std::vector<double> &targets, OutputGrads *grads = nullptr,
                   double scale = 1.0);

/// sum_n (log pi_browse + log pi_keep) * A_n with constant advantages. Adds scale * dJ/dlogits.
/// A bypassed browser contributes no log-probability.
double actor_surrogate(const EpisodeTrace &trace, const std::vector<double> &advantages,
                       OutputGrads *grads = nullptr, double scale = 1.0);

/// rho - rho_lr * (mean_entropy - target), clamped at zero.
double temperature_update(double rho, double mean_entropy, double target_entropy, double rho_lr);

struct LossTerms {
    double cls = 0.0;
    double critic = 0.0;
    double surrogate = 0.0;
    double spot = 0.0;  // supervised spot-selector cross-entropy (pretraining only)
    double total = 0.0; // cls + lambda1 * critic - lambda2 * surrogate, or cls + spot when supervised
};

/// Global loss of one recorded episode and its output gradients scaled by `scale`.
/// `frozen` overrides the targets computed from the trace's rewards.
LossTerms episode_loss(const EpisodeTrace &trace, const VideoAnnotation &annotation, const HyperParams &hp,
                       int num_classes, const ReturnTargets *frozen = nullptr, OutputGrads *grads = nullptr,
                       double scale = 1.0);

/// Supervised targets: classifier on frame labels, spot selector on `row_targets` (1 = keep),
/// indexed by feature row.
LossTerms supervised_loss(const EpisodeTrace &trace, const VideoAnnotation &annotation,
                          const std::vector<int> &row_targets, int num_classes, OutputGrads *grads = nullptr,
                          double scale = 1.0);

struct BatchReport {
    LossTerms loss;        // averaged over episodes
    double entropy = 0.0;  // mean joint entropy over all steps
    double skip_ratio = 0.0;
    double final_map = 0.0;
    double rho = 0.0;      // after the update
};

/// One reinforcement update: train-mode rollouts of `videos`, backward pass of the batch-averaged
/// global loss, one Adam step, then the temperature update. Episode i is seeded from `seeds[i]`.
BatchReport combined_step(Model &model, OptState &opt, const Dataset &data, const std::vector<int> &videos,
                          const std::vector<std::uint64_t> &seeds, const HyperParams &hp,
                          const BrowseActionSet &actions, double &rho);

/// One supervised update (browser held at displacement 1).
BatchReport supervised_step(Model &model, OptState &opt, const Dataset &data, const std::vector<int> &videos,
                            const HyperParams &hp);

struct EvalResult {
    double map = 0.0;
    double skip_ratio = 0.0; // mean over videos
    MapReport report;
    PredictionSet predictions;
};

/// Test-mode rollouts of every video, pooled spotting mAP and mean skip ratio.
/// `fixed_stride` > 0 bypasses the browser.
EvalResult evaluate(const Model &model, const Dataset &data, const BrowseActionSet &actions, int fixed_stride = 0,
                    double sigma = 0.0);

/// Evaluation for any policy (oracle, uniform...).
EvalResult evaluate_policy(Policy &policy, const Dataset &data, double sigma = 0.0);

/// Same as evaluate() for a stored checkpoint; CheckpointError when shapes do not fit the data.
EvalResult evaluate_checkpoint(const Checkpoint &ckpt, const Dataset &data);

struct EpochRow {
    int epoch = 0;
    std::string phase; // "pretrain" or "rl"
    LossTerms loss;
    double val_map = 0.0;
    double val_skip_ratio = 0.0;
    double train_entropy = 0.0;
    double rho = 0.0;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    std::string csv() const;
};

struct TrainResult {
    Checkpoint checkpoint; // best-validation parameters
    TrainReport report;
    int best_epoch = -1;
    double best_map = 0.0;
    double best_skip_ratio = 0.0;
    PredictionSet val_predictions; // predictions of the best epoch
};

Model make_model(const Dataset &data, const HyperParams &hp, const BrowseActionSet &actions);

/// Supervised warm start: `epochs` passes of supervised_step over the training set.
/// When `val` is given, each epoch is validated (stride 1). `on_epoch` sees every row and can
/// stop early by returning false.
void pretrain(Model &model, OptState &opt, const Dataset &train, const HyperParams &hp, int epochs,
              const Dataset *val = nullptr, const std::function<bool(const EpochRow &)> &on_epoch = {});

/// Pretraining followed by reinforcement epochs with early stopping on validation mAP.
TrainResult train(const Dataset &train, const Dataset &val, const HyperParams &hp, const BrowseActionSet &actions,
                  const std::function<void(const EpochRow &)> &progress = {});

} // namespace actionspotter
