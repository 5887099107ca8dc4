// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "actionspotter/dataset.hpp"
#include "actionspotter/metric.hpp"
#include "actionspotter/rng.hpp"

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace actionspotter {

/// Ordered cursor displacements the browser can choose from.
struct BrowseActionSet {
    std::vector<int> displacements{1, 2, 4};

    int size() const { return static_cast<int>(displacements.size()); }
    int operator[](int i) const { return displacements.at(i); }
    /// Index of `displacement`, or -1.
    int index_of(int displacement) const;
    void validate() const;

    friend bool operator==(const BrowseActionSet &, const BrowseActionSet &) = default;
};

struct EpisodeState {
    int cursor = 0; // row of the feature sequence
    int steps = 0;
    bool terminal = false;
    Eigen::VectorXd memory;
    PredictionSet spots;
    double map = 0.0; // per-video mAP of `spots`; stays 0 without an annotation
};

/// The browsing state machine over one video. The cursor moves by the chosen displacement; a
/// move past the last row is clamped so the last row is still visited, and stepping from the
/// last row ends the episode.
class BrowseEnv {
public:
    /// `annotation` may be null for inference-only episodes.
    BrowseEnv(const FeatureSequence &features, const VideoAnnotation *annotation, int num_classes,
              BrowseActionSet actions = {});

    const EpisodeState &reset();
    const EpisodeState &step(int displacement, bool keep_spot, double likelihood, int label,
                             const Eigen::VectorXd &memory);

    const EpisodeState &state() const { return state_; }
    bool has_reward() const { return annotation_ != nullptr; }
    /// Current per-video mAP; RewardUnavailable without an annotation.
    double current_map() const;
    const BrowseActionSet &actions() const { return actions_; }
    const FeatureSequence &features() const { return features_; }

private:
    const FeatureSequence &features_;
    const VideoAnnotation *annotation_;
    int num_classes_;
    BrowseActionSet actions_;
    EpisodeState state_;
    std::optional<MapAccumulator> acc_;
};

/// gamma * map_new - map_prev + rho * entropy
double reward(double map_prev, double map_new, double entropy, double gamma, double rho);

struct DiscountedReturns {
    double total = 0.0;              // R_N = sum_k gamma^k r_k, k = 1..N
    std::vector<double> cumulative;  // R_n for n = 1..N
    std::vector<double> to_go;       // R_N - R_{n-1}: rewards from step n onwards, step n included
    std::vector<double> after;       // R_N - R_n: rewards strictly after step n
};

DiscountedReturns discounted_return(const std::vector<double> &rewards, double gamma);

/// 1 - steps / frames
double skip_ratio(int steps, int frames);

/// One visited row of an episode.
struct StepRecord {
    int row = 0;
    int timestamp = 0;
    int browse_index = 0;
    int displacement = 1;
    double browse_log_prob = 0.0;
    std::vector<double> browse_probs; // empty when the browser is bypassed
    bool keep = false;
    double keep_log_prob = 0.0;
    double entropy = 0.0; // browse + keep
    std::vector<double> class_probs;
    double likelihood = 0.0;
    int label = 0;
    double value = 0.0; // critic output
    double reward = 0.0;
    double map_after = 0.0;
};

enum class RolloutMode { Train, Test };

struct EpisodeTrace {
    std::string video_id;
    int frames = 0;
    RolloutMode mode = RolloutMode::Test;
    bool has_rewards = false;
    std::vector<StepRecord> steps;
    PredictionSet spots;
    double final_map = 0.0;

    std::vector<double> rewards() const;
    double skip_ratio() const { return actionspotter::skip_ratio(static_cast<int>(steps.size()), frames); }
    double mean_entropy() const;
};

/// JSON document used by the report command to draw browsing timelines.
std::string trace_json(const EpisodeTrace &trace);

/// What a policy outputs on one visited row.
struct Decision {
    int browse_index = 0;
    double browse_log_prob = 0.0;
    std::vector<double> browse_probs;
    double browse_entropy = 0.0;
    bool keep = false;
    double keep_log_prob = 0.0;
    double keep_entropy = 0.0;
    double likelihood = 0.0;
    int label = 0;
    std::vector<double> class_probs;
    double value = 0.0;
    Eigen::VectorXd memory;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual const BrowseActionSet &actions() const = 0;
    virtual void begin(const FeatureSequence &features, const VideoAnnotation *annotation) = 0;
    /// Null rng means greedy (test mode).
    virtual Decision decide(int row, Rng *rng) = 0;
};

struct RolloutOptions {
    double gamma = 1.0;
    double rho = 0.0;
    int num_classes = 0;
};

/// Runs one episode. Train mode samples actions and records rewards (annotation required);
/// test mode acts greedily and inserts every visited row as a spot with its likelihood.
EpisodeTrace rollout(Policy &policy, const FeatureSequence &features, const VideoAnnotation *annotation,
                     RolloutMode mode, Rng *rng, const RolloutOptions &opts);

} // namespace actionspotter
