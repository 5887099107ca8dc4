// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "actionspotter/env.hpp"
#include "actionspotter/rng.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace actionspotter {

enum class Head : int { Spot = 0, Class = 1, Browse = 2, Critic = 3 };
inline constexpr int kNumHeads = 4;

struct ModelConfig {
    int input_dim = 16;
    int hidden = 64;
    int num_classes = 4;
    int num_actions = 3;
    bool use_memory = true; // false: heads read the raw feature instead of the GRU state

    int head_input() const { return use_memory ? hidden : input_dim; }
    int head_outputs(Head h) const;
    void validate() const;

    friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

/// A dense tensor inside the flat parameter vector (column-major).
struct Tensor {
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index size() const { return rows * cols; }
};

/// Where each weight lives in the flat vector. GRU gates are stacked [z; r; candidate]; the four
/// heads' first layers are stacked in Head order so they run as a single product.
struct ParamLayout {
    Tensor gru_W, gru_U, gru_b;
    Tensor head_W1, head_b1;
    std::array<Tensor, kNumHeads> W2, b2, W3, b3;
    Eigen::Index total = 0;

    explicit ParamLayout(const ModelConfig &cfg);
};

inline Eigen::Map<const Eigen::MatrixXd> view(const Eigen::VectorXd &v, const Tensor &t) {
    return {v.data() + t.offset, t.rows, t.cols};
}
inline Eigen::Map<Eigen::MatrixXd> view(Eigen::VectorXd &v, const Tensor &t) {
    return {v.data() + t.offset, t.rows, t.cols};
}

class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig &config() const { return cfg_; }
    const ParamLayout &layout() const { return layout_; }
    Eigen::VectorXd &params() { return params_; }
    const Eigen::VectorXd &params() const { return params_; }
    Eigen::Index size() const { return layout_.total; }

    /// Weights uniform in +-1/sqrt(fan_in), biases zero.
    void init(Rng &rng);

private:
    ModelConfig cfg_;
    ParamLayout layout_;
    Eigen::VectorXd params_;
};

struct GruStep {
    Eigen::VectorXd z, r, candidate, h;
};

/// One GRU cell update: z = sig(Wz f + Uz h + bz), r likewise,
/// c = tanh(Wc f + Uc (r*h) + bc), h' = (1-z)*h + z*c.
GruStep gru_forward(const Model &model, const Eigen::VectorXd &f, const Eigen::VectorXd &h_prev);

/// affine -> relu -> affine -> relu -> affine on the head input.
Eigen::VectorXd head_forward(const Model &model, Head head, const Eigen::VectorXd &input);

/// Per-episode forward intermediates, one column per step.
struct EpisodeCache {
    int steps = 0;
    Eigen::MatrixXd F, Hprev, Z, R, C, RH, Hout;
    Eigen::MatrixXd A1; // stacked first-layer activations of all heads
    std::array<Eigen::MatrixXd, kNumHeads> A2, Out;

    void reset(const ModelConfig &cfg, int capacity);
    Eigen::VectorXd output(Head h, int step) const { return Out[static_cast<int>(h)].col(step); }
};

/// Runs the GRU and all heads for the next step and appends the intermediates to `cache`.
void forward_step(const Model &model, EpisodeCache &cache, const Eigen::Ref<const Eigen::VectorXd> &f);

/// Loss gradients with respect to every head output, one column per step.
struct OutputGrads {
    std::array<Eigen::MatrixXd, kNumHeads> d;

    OutputGrads() = default;
    OutputGrads(const ModelConfig &cfg, int steps);
    Eigen::MatrixXd &operator[](Head h) { return d[static_cast<int>(h)]; }
    const Eigen::MatrixXd &operator[](Head h) const { return d[static_cast<int>(h)]; }
};

/// Reverse-mode pass through the heads and back through time; adds into `grad`.
/// `bptt_window` > 0 cuts the recurrent gradient every that many steps.
void backward(const Model &model, const EpisodeCache &cache, const OutputGrads &dout, Eigen::VectorXd &grad,
              int bptt_window = 0);

struct Categorical {
    int index = 0;
    double log_prob = 0.0;
    double entropy = 0.0;
    Eigen::VectorXd probs;
};

Eigen::VectorXd softmax(const Eigen::VectorXd &logits);

/// Samples from softmax(logits) when `rng` is given, otherwise takes the argmax.
Categorical categorical(const Eigen::VectorXd &logits, Rng *rng);

struct FdReport {
    double max_rel_error = 0.0;
    Eigen::Index worst_index = -1;
    Eigen::Index checked = 0;
};

/// Central differences on a random subset of at least `min_coords` coordinates (all of them if
/// fewer). Relative error uses max(|a|, |b|, 1e-8) as denominator.
FdReport fd_check(const Eigen::VectorXd &params, const std::function<double(const Eigen::VectorXd &)> &loss,
                  const Eigen::VectorXd &analytic, Rng &rng, Eigen::Index min_coords = 200, double h = 1e-5);

struct OptState {
    std::int64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Eigen::VectorXd m, v;

    friend bool operator==(const OptState &, const OptState &) = default;
};

OptState make_opt_state(Eigen::Index size, double lr);
void adam_step(Eigen::VectorXd &params, const Eigen::VectorXd &grad, OptState &opt);

struct Checkpoint {
    ModelConfig model;
    BrowseActionSet actions;
    std::string hyper_json = "{}";
    Eigen::VectorXd params;
    OptState opt;
};

// "ASCK", u16 version, then little-endian fields; see model.cpp for the exact order.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t> &bytes);
void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path);
Checkpoint load_checkpoint(const std::filesystem::path &path);

/// The network acting as a browsing policy. SF's softmax index 1 is "keep" and its probability
/// is the spot likelihood; the spot label is the argmax over action classes (background excluded).
/// With `fixed_stride` > 0 the browser is bypassed and the cursor always moves by that stride.
class ModelPolicy : public Policy {
public:
    ModelPolicy(const Model &model, BrowseActionSet actions, int fixed_stride = 0);

    const BrowseActionSet &actions() const override { return actions_; }
    void begin(const FeatureSequence &features, const VideoAnnotation *annotation) override;
    Decision decide(int row, Rng *rng) override;

    /// Makes later episodes repeat the browse and keep choices recorded in `trace` (null to stop);
    /// probabilities still come from the current parameters.
    void replay(const EpisodeTrace *trace) { replay_ = trace; }

    bool learned_browser() const { return fixed_stride_ == 0; }
    const EpisodeCache &cache() const { return cache_; }

private:
    const Model &model_;
    BrowseActionSet actions_;
    int fixed_stride_;
    const FeatureSequence *features_ = nullptr;
    const EpisodeTrace *replay_ = nullptr;
    EpisodeCache cache_;
};

} // namespace actionspotter
