// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/env.hpp"

#include "actionspotter/errors.hpp"

#include <json.hpp>

#include <cmath>

namespace actionspotter {

int BrowseActionSet::index_of(int displacement) const {
    for (int i = 0; i < size(); ++i)
        if (displacements[i] == displacement)
            return i;
    return -1;
}

void BrowseActionSet::validate() const {
    if (displacements.empty())
        throw ConfigError("action set must not be empty");
    for (int d : displacements)
        if (d < 1)
            throw ConfigError("action set displacements must be >= 1, got " + std::to_string(d));
}

BrowseEnv::BrowseEnv(const FeatureSequence &features, const VideoAnnotation *annotation, int num_classes,
                     BrowseActionSet actions)
    : features_(features), annotation_(annotation), num_classes_(num_classes), actions_(std::move(actions)) {
    actions_.validate();
    if (features_.frames() < 1)
        throw ValidationError("episode on empty feature sequence '" + features_.video_id + "'");
}

const EpisodeState &BrowseEnv::reset() {
    state_ = EpisodeState{};
    acc_.reset();
    if (annotation_) {
        AnnotationSet one;
        one.num_classes = num_classes_;
        one.videos.push_back(*annotation_);
        acc_.emplace(std::move(one));
    }
    return state_;
}

const EpisodeState &BrowseEnv::step(int displacement, bool keep_spot, double likelihood, int label,
                                    const Eigen::VectorXd &memory) {
    if (state_.terminal)
        throw ContractViolation("step on a finished episode of '" + features_.video_id + "'");
    if (actions_.index_of(displacement) < 0)
        throw ContractViolation("displacement " + std::to_string(displacement) + " is not in the action set");
    if (keep_spot) {
        SpotPrediction spot{features_.video_id, features_.timestamp_of(state_.cursor), likelihood, label};
        state_.spots.push_back(spot);
        if (acc_) {
            acc_->insert(spot);
            state_.map = acc_->map();
        }
    }
    state_.memory = memory;
    ++state_.steps;
    const int last = features_.frames() - 1;
    if (state_.cursor == last)
        state_.terminal = true;
    else
        state_.cursor = std::min(state_.cursor + displacement, last);
    return state_;
}

double BrowseEnv::current_map() const {
    if (!annotation_)
        throw RewardUnavailable("episode of '" + features_.video_id + "' has no annotation, reward unavailable");
    return state_.map;
}

double reward(double map_prev, double map_new, double entropy, double gamma, double rho) {
    return gamma * map_new - map_prev + rho * entropy;
}

DiscountedReturns discounted_return(const std::vector<double> &rewards, double gamma) {
    DiscountedReturns out;
    const std::size_t n = rewards.size();
    out.cumulative.resize(n);
    double acc = 0.0;
    double discount = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        discount *= gamma;
        acc += discount * rewards[i];
        out.cumulative[i] = acc;
    }
    out.total = acc;
    // suffix sums rather than R_N - R_n so the tail stays exact when early rewards are large
    out.to_go.assign(n, 0.0);
    out.after.assign(n, 0.0);
    double tail = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        out.after[i] = tail;
        tail += std::pow(gamma, static_cast<double>(i + 1)) * rewards[i];
        out.to_go[i] = tail;
    }
    return out;
}

double skip_ratio(int steps, int frames) {
    if (frames < 1 || steps < 1 || steps > frames)
        throw RangeError("skip_ratio needs 1 <= steps <= frames, got steps=" + std::to_string(steps) +
                         " frames=" + std::to_string(frames));
    return 1.0 - static_cast<double>(steps) / static_cast<double>(frames);
}

std::vector<double> EpisodeTrace::rewards() const {
    std::vector<double> r;
    r.reserve(steps.size());
    for (const auto &s : steps)
        r.push_back(s.reward);
    return r;
}

double EpisodeTrace::mean_entropy() const {
    if (steps.empty())
        return 0.0;
    double sum = 0.0;
    for (const auto &s : steps)
        sum += s.entropy;
    return sum / static_cast<double>(steps.size());
}

std::string trace_json(const EpisodeTrace &trace) {
    nlohmann::json j;
    j["video"] = trace.video_id;
    j["frames"] = trace.frames;
    j["mode"] = trace.mode == RolloutMode::Train ? "train" : "test";
    j["skip_ratio"] = trace.steps.empty() ? 0.0 : trace.skip_ratio();
    auto &steps = j["steps"] = nlohmann::json::array();
    for (const auto &s : trace.steps)
        steps.push_back({{"row", s.row},
                         {"t", s.timestamp},
                         {"displacement", s.displacement},
                         {"keep", s.keep},
                         {"likelihood", s.likelihood},
                         {"label", s.label},
                         {"entropy", s.entropy},
                         {"reward", s.reward},
                         {"map", s.map_after}});
    auto &spots = j["spots"] = nlohmann::json::array();
    for (const auto &p : trace.spots)
        spots.push_back({{"t", p.timestamp}, {"score", p.likelihood}, {"label", p.label}});
    if (trace.has_rewards)
        j["final_map"] = trace.final_map;
    return j.dump() + "\n";
}

EpisodeTrace rollout(Policy &policy, const FeatureSequence &features, const VideoAnnotation *annotation,
                     RolloutMode mode, Rng *rng, const RolloutOptions &opts) {
    const bool train = mode == RolloutMode::Train;
    if (train && !annotation)
        throw RewardUnavailable("train rollout of '" + features.video_id + "' needs an annotation");
    if (train && !rng)
        throw ContractViolation("train rollout needs an rng");

    BrowseEnv env(features, train ? annotation : nullptr, opts.num_classes, policy.actions());
    env.reset();
    policy.begin(features, annotation);

    EpisodeTrace trace;
    trace.video_id = features.video_id;
    trace.frames = features.frames();
    trace.mode = mode;
    trace.has_rewards = train;
    trace.steps.reserve(features.frames());

    while (!env.state().terminal) {
        const int row = env.state().cursor;
        Decision d = policy.decide(row, train ? rng : nullptr);
        StepRecord rec;
        rec.row = row;
        rec.timestamp = features.timestamp_of(row);
        rec.browse_index = d.browse_index;
        rec.displacement = policy.actions()[d.browse_index];
        rec.browse_log_prob = d.browse_log_prob;
        rec.browse_probs = std::move(d.browse_probs);
        rec.keep = train ? d.keep : true;
        rec.keep_log_prob = d.keep_log_prob;
        rec.entropy = d.browse_entropy + d.keep_entropy;
        rec.likelihood = d.likelihood;
        rec.label = d.label;
        rec.value = d.value;
        rec.class_probs = std::move(d.class_probs);

        const double map_prev = env.state().map;
        env.step(rec.displacement, rec.keep, rec.likelihood, rec.label, d.memory);
        rec.map_after = env.state().map;
        if (train)
            rec.reward = reward(map_prev, rec.map_after, rec.entropy, opts.gamma, opts.rho);
        trace.steps.push_back(std::move(rec));
    }
    trace.spots = env.state().spots;
    trace.final_map = env.state().map;
    return trace;
}

} // namespace actionspotter
