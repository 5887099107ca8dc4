// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/trainer.hpp"

#include "actionspotter/baselines.hpp"
#include "actionspotter/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace actionspotter {

using Eigen::VectorXd;
using nlohmann::json;

double HyperParams::target_entropy_for(const BrowseActionSet &actions) const {
    if (target_entropy >= 0.0)
        return target_entropy;
    return 0.5 * (std::log(static_cast<double>(actions.size())) + std::log(2.0));
}

void HyperParams::validate() const {
    auto need = [](bool ok, const char *msg) {
        if (!ok)
            throw ConfigError(std::string("hyperparameters: ") + msg);
    };
    need(std::isfinite(gamma) && gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    need(std::isfinite(rho) && rho >= 0.0, "rho must be >= 0");
    need(std::isfinite(rho_lr) && rho_lr >= 0.0, "rho_lr must be >= 0");
    need(std::isfinite(target_entropy), "target_entropy must be finite");
    need(std::isfinite(lambda1) && std::isfinite(lambda2), "lambda1 and lambda2 must be finite");
    need(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(pretrain_epochs >= 0 && epochs >= 0, "epoch counts must be >= 0");
    need(patience >= 1, "patience must be >= 1");
    need(std::isfinite(sigma) && sigma >= 0.0 && sigma <= 1.0, "sigma must be in [0, 1]");
    need(hidden >= 1, "hidden must be >= 1");
    need(bptt_window >= 0, "bptt_window must be >= 0");
    need(uniform_stride >= 0, "uniform_stride must be >= 0");
}

std::string hyperparams_to_json(const HyperParams &hp) {
    const json j{{"gamma", hp.gamma},
                 {"rho", hp.rho},
                 {"rho_lr", hp.rho_lr},
                 {"target_entropy", hp.target_entropy},
                 {"lambda1", hp.lambda1},
                 {"lambda2", hp.lambda2},
                 {"learning_rate", hp.learning_rate},
                 {"batch_size", hp.batch_size},
                 {"pretrain_epochs", hp.pretrain_epochs},
                 {"epochs", hp.epochs},
                 {"patience", hp.patience},
                 {"sigma", hp.sigma},
                 {"seed", hp.seed},
                 {"hidden", hp.hidden},
                 {"use_memory", hp.use_memory},
                 {"bptt_window", hp.bptt_window},
                 {"uniform_stride", hp.uniform_stride}};
    return j.dump(2) + "\n";
}

HyperParams hyperparams_from_json(const std::string &json_text, HyperParams hp) {
    static const std::set<std::string> known{"gamma",      "rho",           "rho_lr",      "target_entropy",
                                             "lambda1",    "lambda2",       "learning_rate", "batch_size",
                                             "pretrain_epochs", "epochs",   "patience",    "sigma",
                                             "seed",       "hidden",        "use_memory",  "bptt_window",
                                             "uniform_stride", "dataset",   "actions",     "name",
                                             "method"};
    try {
        const json j = json::parse(json_text);
        if (!j.is_object())
            throw ConfigError("config must be a JSON object");
        for (const auto &[key, _] : j.items())
            if (!known.count(key))
                throw ConfigError("unknown config field '" + key + "'");
        hp.gamma = j.value("gamma", hp.gamma);
        hp.rho = j.value("rho", hp.rho);
        hp.rho_lr = j.value("rho_lr", hp.rho_lr);
        hp.target_entropy = j.value("target_entropy", hp.target_entropy);
        hp.lambda1 = j.value("lambda1", hp.lambda1);
        hp.lambda2 = j.value("lambda2", hp.lambda2);
        hp.learning_rate = j.value("learning_rate", hp.learning_rate);
        hp.batch_size = j.value("batch_size", hp.batch_size);
        hp.pretrain_epochs = j.value("pretrain_epochs", hp.pretrain_epochs);
        hp.epochs = j.value("epochs", hp.epochs);
        hp.patience = j.value("patience", hp.patience);
        hp.sigma = j.value("sigma", hp.sigma);
        hp.seed = j.value("seed", hp.seed);
        hp.hidden = j.value("hidden", hp.hidden);
        hp.use_memory = j.value("use_memory", hp.use_memory);
        hp.bptt_window = j.value("bptt_window", hp.bptt_window);
        hp.uniform_stride = j.value("uniform_stride", hp.uniform_stride);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    hp.validate();
    return hp;
}

namespace {

int row_label(const StepRecord &step, const VideoAnnotation &ann, int num_classes) {
    const int label = frame_label(ann, std::min(step.timestamp, ann.num_frames - 1));
    return label == kBackground ? num_classes : label;
}

void check_grads(const OutputGrads *g, const EpisodeTrace &trace) {
    if (g && g->d[0].cols() != static_cast<Eigen::Index>(trace.steps.size()))
        throw ContractViolation("output gradients sized for a different episode");
}

} // namespace

ReturnTargets return_targets(const EpisodeTrace &trace, double gamma) {
    const auto ret = discounted_return(trace.rewards(), gamma);
    ReturnTargets out;
    out.targets = ret.to_go;
    out.advantages.resize(trace.steps.size());
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
        out.advantages[i] = out.targets[i] - trace.steps[i].value;
    return out;
}

double loss_cls(const EpisodeTrace &trace, const VideoAnnotation &annotation, int num_classes, OutputGrads *grads,
                double scale) {
    check_grads(grads, trace);
    const auto n = static_cast<double>(trace.steps.size());
    if (trace.steps.empty())
        return 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const auto &s = trace.steps[i];
        const int y = row_label(s, annotation, num_classes);
        loss -= std::log(std::max(s.class_probs[y], 1e-300));
        if (grads) {
            auto col = (*grads)[Head::Class].col(static_cast<Eigen::Index>(i));
            for (std::size_t c = 0; c < s.class_probs.size(); ++c)
                col[static_cast<Eigen::Index>(c)] += scale * (s.class_probs[c] - (static_cast<int>(c) == y)) / n;
        }
    }
    return loss / n;
}

double loss_critic(const EpisodeTrace &trace, const std::vector<double> &targets, OutputGrads *grads, double scale) {
    check_grads(grads, trace);
    if (targets.size() != trace.steps.size())
        throw ContractViolation("loss_critic: one target per step required");
    if (trace.steps.empty())
        return 0.0;
    const auto n = static_cast<double>(trace.steps.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const double diff = trace.steps[i].value - targets[i];
        loss += 0.5 * diff * diff;
        if (grads)
            (*grads)[Head::Critic](0, static_cast<Eigen::Index>(i)) += scale * diff / n;
    }
    return loss / n;
}

double actor_surrogate(const EpisodeTrace &trace, const std::vector<double> &advantages, OutputGrads *grads,
                       double scale) {
    check_grads(grads, trace);
    if (advantages.size() != trace.steps.size())
        throw ContractViolation("actor_surrogate: one advantage per step required");
    double j = 0.0;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const auto &s = trace.steps[i];
        const double a = advantages[i];
        const bool browser = !s.browse_probs.empty();
        j += ((browser ? s.browse_log_prob : 0.0) + s.keep_log_prob) * a;
        if (!grads)
            continue;
        const auto col = static_cast<Eigen::Index>(i);
        // d log softmax_k / d logits = onehot_k - probs
        const double q[2] = {1.0 - s.likelihood, s.likelihood};
        const int k = s.keep ? 1 : 0;
        for (int c = 0; c < 2; ++c)
            (*grads)[Head::Spot](c, col) += scale * a * ((c == k) - q[c]);
        if (browser)
            for (std::size_t c = 0; c < s.browse_probs.size(); ++c)
                (*grads)[Head::Browse](static_cast<Eigen::Index>(c), col) +=
                    scale * a * ((static_cast<int>(c) == s.browse_index) - s.browse_probs[c]);
    }
    return j;
}

double temperature_update(double rho, double mean_entropy, double target_entropy, double rho_lr) {
    return std::max(0.0, rho - rho_lr * (mean_entropy - target_entropy));
}

LossTerms episode_loss(const EpisodeTrace &trace, const VideoAnnotation &annotation, const HyperParams &hp,
                       int num_classes, const ReturnTargets *frozen, OutputGrads *grads, double scale) {
    ReturnTargets own;
    if (!frozen) {
        own = return_targets(trace, hp.gamma);
        frozen = &own;
    }
    LossTerms t;
    t.cls = loss_cls(trace, annotation, num_classes, grads, scale);
    t.critic = loss_critic(trace, frozen->targets, grads, scale * hp.lambda1);
    t.surrogate = actor_surrogate(trace, frozen->advantages, grads, -scale * hp.lambda2);
    t.total = t.cls + hp.lambda1 * t.critic - hp.lambda2 * t.surrogate;
    return t;
}

LossTerms supervised_loss(const EpisodeTrace &trace, const VideoAnnotation &annotation,
                          const std::vector<int> &row_targets, int num_classes, OutputGrads *grads, double scale) {
    check_grads(grads, trace);
    LossTerms t;
    t.cls = loss_cls(trace, annotation, num_classes, grads, scale);
    if (!trace.steps.empty()) {
        const auto n = static_cast<double>(trace.steps.size());
        double loss = 0.0;
        for (std::size_t i = 0; i < trace.steps.size(); ++i) {
            const auto &s = trace.steps[i];
            const int y = row_targets.at(static_cast<std::size_t>(s.row));
            const double q[2] = {1.0 - s.likelihood, s.likelihood};
            loss -= std::log(std::max(q[y], 1e-300));
            if (grads)
                for (int c = 0; c < 2; ++c)
                    (*grads)[Head::Spot](c, static_cast<Eigen::Index>(i)) += scale * (q[c] - (c == y)) / n;
        }
        t.spot = loss / n;
    }
    t.total = t.cls + t.spot;
    return t;
}

namespace {

const VideoAnnotation &annotation_of(const Dataset &data, int video) {
    return data.annotations.videos.at(static_cast<std::size_t>(video));
}

void add_terms(LossTerms &acc, const LossTerms &t, double w) {
    acc.cls += w * t.cls;
    acc.critic += w * t.critic;
    acc.surrogate += w * t.surrogate;
    acc.spot += w * t.spot;
    acc.total += w * t.total;
}

} // namespace

BatchReport combined_step(Model &model, OptState &opt, const Dataset &data, const std::vector<int> &videos,
                          const std::vector<std::uint64_t> &seeds, const HyperParams &hp,
                          const BrowseActionSet &actions, double &rho) {
    if (videos.size() != seeds.size() || videos.empty())
        throw ContractViolation("combined_step: need one seed per video and a non-empty batch");
    const int C = data.annotations.num_classes;
    ModelPolicy policy(model, actions, hp.uniform_stride);
    VectorXd grad = VectorXd::Zero(model.size());
    const double scale = 1.0 / static_cast<double>(videos.size());
    BatchReport rep;
    double entropy_sum = 0.0;
    std::size_t step_count = 0;
    const RolloutOptions opts{hp.gamma, rho, C};
    for (std::size_t i = 0; i < videos.size(); ++i) {
        const auto &features = data.features.at(static_cast<std::size_t>(videos[i]));
        const auto &ann = annotation_of(data, videos[i]);
        Rng rng(seeds[i]);
        const auto trace = rollout(policy, features, &ann, RolloutMode::Train, &rng, opts);
        OutputGrads g(model.config(), static_cast<int>(trace.steps.size()));
        add_terms(rep.loss, episode_loss(trace, ann, hp, C, nullptr, &g, scale), scale);
        backward(model, policy.cache(), g, grad, hp.bptt_window);
        for (const auto &s : trace.steps)
            entropy_sum += s.entropy;
        step_count += trace.steps.size();
        rep.skip_ratio += scale * trace.skip_ratio();
        rep.final_map += scale * trace.final_map;
    }
    adam_step(model.params(), grad, opt);
    rep.entropy = step_count ? entropy_sum / static_cast<double>(step_count) : 0.0;
    rho = temperature_update(rho, rep.entropy, hp.target_entropy_for(policy.actions()), hp.rho_lr);
    rep.rho = rho;
    return rep;
}

BatchReport supervised_step(Model &model, OptState &opt, const Dataset &data, const std::vector<int> &videos,
                            const HyperParams &hp) {
    if (videos.empty())
        throw ContractViolation("supervised_step: empty batch");
    const int C = data.annotations.num_classes;
    ModelPolicy policy(model, BrowseActionSet{}, 1);
    VectorXd grad = VectorXd::Zero(model.size());
    const double scale = 1.0 / static_cast<double>(videos.size());
    BatchReport rep;
    double entropy_sum = 0.0;
    std::size_t step_count = 0;
    for (int v : videos) {
        const auto &features = data.features.at(static_cast<std::size_t>(v));
        const auto &ann = annotation_of(data, v);
        const auto trace = rollout(policy, features, &ann, RolloutMode::Test, nullptr, RolloutOptions{1.0, 0.0, C});
        const auto targets = row_center_targets(ann, features.frames(), features.chunk_span);
        OutputGrads g(model.config(), static_cast<int>(trace.steps.size()));
        add_terms(rep.loss, supervised_loss(trace, ann, targets, C, &g, scale), scale);
        backward(model, policy.cache(), g, grad, hp.bptt_window);
        for (const auto &s : trace.steps)
            entropy_sum += s.entropy;
        step_count += trace.steps.size();
    }
    adam_step(model.params(), grad, opt);
    rep.entropy = step_count ? entropy_sum / static_cast<double>(step_count) : 0.0;
    return rep;
}

EvalResult evaluate_policy(Policy &policy, const Dataset &data, double sigma) {
    EvalResult out;
    const int C = data.annotations.num_classes;
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        const auto &features = data.features[i];
        const auto &ann = data.annotations.videos[i];
        const auto trace = rollout(policy, features, &ann, RolloutMode::Test, nullptr, RolloutOptions{1.0, 0.0, C});
        for (auto spot : trace.spots) {
            if (spot.likelihood < sigma)
                continue;
            spot.timestamp = std::min(spot.timestamp, ann.num_frames - 1);
            out.predictions.push_back(std::move(spot));
        }
        out.skip_ratio += trace.skip_ratio();
    }
    if (!data.features.empty())
        out.skip_ratio /= static_cast<double>(data.features.size());
    out.report = spotting_map_report(out.predictions, data.annotations);
    out.map = out.report.map;
    return out;
}

EvalResult evaluate(const Model &model, const Dataset &data, const BrowseActionSet &actions, int fixed_stride,
                    double sigma) {
    ModelPolicy policy(model, actions, fixed_stride);
    return evaluate_policy(policy, data, sigma);
}

EvalResult evaluate_checkpoint(const Checkpoint &ckpt, const Dataset &data) {
    if (data.features.empty())
        throw ValidationError("evaluate: dataset has no videos");
    if (ckpt.model.input_dim != data.feature_dim())
        throw CheckpointError("checkpoint expects feature dimension " + std::to_string(ckpt.model.input_dim) +
                              ", dataset has " + std::to_string(data.feature_dim()));
    if (ckpt.model.num_classes != data.annotations.num_classes)
        throw CheckpointError("checkpoint expects " + std::to_string(ckpt.model.num_classes) +
                              " classes, dataset has " + std::to_string(data.annotations.num_classes));
    HyperParams hp;
    try {
        hp = hyperparams_from_json(ckpt.hyper_json);
    } catch (const ConfigError &e) {
        throw CheckpointError(std::string("checkpoint hyperparameters: ") + e.what());
    }
    Model model(ckpt.model);
    if (ckpt.params.size() != model.size())
        throw CheckpointError("checkpoint parameter count does not match its model header");
    model.params() = ckpt.params;
    return evaluate(model, data, ckpt.actions, hp.uniform_stride, hp.sigma);
}

std::string TrainReport::csv() const {
    std::string out = "epoch,phase,loss_total,loss_cls,loss_critic,surrogate,loss_spot,val_map,val_skip_ratio,"
                      "train_entropy,rho\n";
    char buf[512];
    for (const auto &r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f\n", r.epoch,
                      r.phase.c_str(), r.loss.total, r.loss.cls, r.loss.critic, r.loss.surrogate, r.loss.spot,
                      r.val_map, r.val_skip_ratio, r.train_entropy, r.rho);
        out += buf;
    }
    return out;
}

Model make_model(const Dataset &data, const HyperParams &hp, const BrowseActionSet &actions) {
    if (data.features.empty())
        throw ValidationError("training set has no videos");
    ModelConfig cfg;
    cfg.input_dim = data.feature_dim();
    cfg.hidden = hp.hidden;
    cfg.num_classes = data.annotations.num_classes;
    cfg.num_actions = actions.size();
    cfg.use_memory = hp.use_memory;
    Model model(cfg);
    Rng rng(derive_seed(hp.seed, {0}));
    model.init(rng);
    return model;
}

namespace {

// Stream tags for derive_seed so the phases never share random draws.
constexpr std::uint64_t kPretrainStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kEpisodeStream = 3;

std::vector<std::vector<int>> epoch_batches(std::size_t videos, int batch_size, std::uint64_t seed) {
    std::vector<int> order(videos);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<int>> batches;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size))
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(
                                                 std::min(order.size(), i + static_cast<std::size_t>(batch_size))));
    return batches;
}

} // namespace

void pretrain(Model &model, OptState &opt, const Dataset &train, const HyperParams &hp, int epochs,
              const Dataset *val, const std::function<bool(const EpochRow &)> &on_epoch) {
    for (int epoch = 0; epoch < epochs; ++epoch) {
        EpochRow row;
        row.epoch = epoch;
        row.phase = "pretrain";
        double weight_sum = 0.0;
        for (const auto &batch :
             epoch_batches(train.features.size(), hp.batch_size, derive_seed(hp.seed, {kPretrainStream, std::uint64_t(epoch)}))) {
            const auto rep = supervised_step(model, opt, train, batch, hp);
            const auto w = static_cast<double>(batch.size());
            add_terms(row.loss, rep.loss, w);
            row.train_entropy += w * rep.entropy;
            weight_sum += w;
        }
        if (weight_sum > 0.0) {
            LossTerms scaled;
            add_terms(scaled, row.loss, 1.0 / weight_sum);
            row.loss = scaled;
            row.train_entropy /= weight_sum;
        }
        if (val) {
            const auto ev = evaluate(model, *val, BrowseActionSet{}, 1, hp.sigma);
            row.val_map = ev.map;
            row.val_skip_ratio = ev.skip_ratio;
        }
        if (on_epoch && !on_epoch(row))
            break;
    }
}

TrainResult train(const Dataset &train_set, const Dataset &val, const HyperParams &hp,
                  const BrowseActionSet &actions, const std::function<void(const EpochRow &)> &progress) {
    hp.validate();
    actions.validate();
    train_set.validate();
    val.validate();
    if (val.feature_dim() != train_set.feature_dim() || val.annotations.num_classes != train_set.annotations.num_classes)
        throw ValidationError("validation set does not match the training set's feature dimension or classes");

    Model model = make_model(train_set, hp, actions);
    OptState opt = make_opt_state(model.size(), hp.learning_rate);
    TrainResult result;
    auto record = [&](const EpochRow &row) {
        result.report.rows.push_back(row);
        if (progress)
            progress(row);
        return true;
    };
    pretrain(model, opt, train_set, hp, hp.pretrain_epochs, &val, record);

    double rho = hp.rho;
    VectorXd best_params = model.params();
    int since_best = 0;
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        EpochRow row;
        row.epoch = hp.pretrain_epochs + epoch;
        row.phase = "rl";
        double weight_sum = 0.0;
        for (const auto &batch : epoch_batches(train_set.features.size(), hp.batch_size,
                                               derive_seed(hp.seed, {kShuffleStream, std::uint64_t(epoch)}))) {
            std::vector<std::uint64_t> seeds;
            for (int v : batch)
                seeds.push_back(derive_seed(hp.seed, {kEpisodeStream, std::uint64_t(epoch), std::uint64_t(v)}));
            const auto rep = combined_step(model, opt, train_set, batch, seeds, hp, actions, rho);
            const auto w = static_cast<double>(batch.size());
            add_terms(row.loss, rep.loss, w);
            row.train_entropy += w * rep.entropy;
            weight_sum += w;
        }
        LossTerms scaled;
        add_terms(scaled, row.loss, 1.0 / weight_sum);
        row.loss = scaled;
        row.train_entropy /= weight_sum;
        row.rho = rho;
        auto ev = evaluate(model, val, actions, hp.uniform_stride, hp.sigma);
        row.val_map = ev.map;
        row.val_skip_ratio = ev.skip_ratio;
        record(row);
        if (result.best_epoch < 0 || ev.map > result.best_map) {
            result.best_epoch = row.epoch;
            result.best_map = ev.map;
            result.best_skip_ratio = ev.skip_ratio;
            result.val_predictions = std::move(ev.predictions);
            best_params = model.params();
            since_best = 0;
        } else if (++since_best >= hp.patience) {
            break;
        }
    }
    if (result.best_epoch < 0) {
        // no reinforcement epochs: the pretrained network is the result
        auto ev = evaluate(model, val, actions, hp.uniform_stride, hp.sigma);
        result.best_epoch = hp.pretrain_epochs - 1;
        result.best_map = ev.map;
        result.best_skip_ratio = ev.skip_ratio;
        result.val_predictions = std::move(ev.predictions);
        best_params = model.params();
    }
    result.checkpoint.model = model.config();
    result.checkpoint.actions = actions;
    result.checkpoint.hyper_json = hyperparams_to_json(hp);
    result.checkpoint.params = best_params;
    result.checkpoint.opt = opt;
    return result;
}

} // namespace actionspotter
