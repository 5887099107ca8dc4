// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/baselines.hpp"
#include "actionspotter/errors.hpp"
#include "actionspotter/synth.hpp"
#include "actionspotter/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace as = actionspotter;

namespace {

as::SynthSplits small_synth(std::uint64_t seed = 0, int train = 8, int val = 4) {
    as::SynthConfig cfg;
    cfg.num_classes = 3;
    cfg.train_videos = train;
    cfg.val_videos = val;
    cfg.frames = 40;
    cfg.max_segments = 3;
    cfg.max_segment_length = 8;
    cfg.feature_dim = 5;
    cfg.seed = seed;
    return as::synth_generate(cfg);
}

as::HyperParams small_hp() {
    as::HyperParams hp;
    hp.hidden = 6;
    hp.batch_size = 4;
    hp.pretrain_epochs = 2;
    hp.epochs = 3;
    hp.learning_rate = 1e-2;
    return hp;
}

/// Trace with hand-set fields; one step per entry.
as::EpisodeTrace trace_of(int steps, int num_classes) {
    as::EpisodeTrace t;
    t.video_id = "v";
    t.frames = steps;
    for (int n = 0; n < steps; ++n) {
        as::StepRecord s;
        s.row = n;
        s.timestamp = n;
        s.class_probs.assign(num_classes + 1, 1.0 / (num_classes + 1));
        s.likelihood = 0.5;
        s.browse_probs = {0.5, 0.5};
        s.browse_log_prob = std::log(0.5);
        s.keep_log_prob = std::log(0.5);
        t.steps.push_back(s);
    }
    return t;
}

/// Model with non-zero biases so every parameter influences the losses.
as::Model perturbed_model(const as::Dataset &data, const as::HyperParams &hp, const as::BrowseActionSet &actions) {
    auto m = as::make_model(data, hp, actions);
    as::Rng rng(17);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        if (m.params()[i] == 0.0)
            m.params()[i] = 0.2 * as::gaussian(rng);
    return m;
}

} // namespace

TEST(HyperParams, JsonRoundTripAndErrors) {
    as::HyperParams hp;
    hp.gamma = 0.95;
    hp.seed = 123456789012345ull;
    hp.use_memory = false;
    EXPECT_EQ(as::hyperparams_from_json(as::hyperparams_to_json(hp)), hp);
    EXPECT_THROW(as::hyperparams_from_json(R"({"gama": 0.9})"), as::ConfigError);
    EXPECT_THROW(as::hyperparams_from_json(R"({"gamma": 0})"), as::ConfigError);
    EXPECT_THROW(as::hyperparams_from_json(R"({"gamma": 1.5})"), as::ConfigError);
    EXPECT_THROW(as::hyperparams_from_json(R"({"sigma": 2})"), as::ConfigError);
    EXPECT_THROW(as::hyperparams_from_json(R"({"epochs": "many"})"), as::ConfigError);
    EXPECT_THROW(as::hyperparams_from_json("[1]"), as::ConfigError);
    EXPECT_NO_THROW(as::hyperparams_from_json(R"({"dataset": {}, "actions": [1, 2, 4], "name": "x"})"));
}

TEST(HyperParams, DefaultTargetEntropyIsHalfTheMaximum) {
    as::HyperParams hp;
    EXPECT_NEAR(hp.target_entropy_for(as::BrowseActionSet{}), 0.5 * (std::log(3.0) + std::numbers::ln2), 1e-15);
    hp.target_entropy = 0.2;
    EXPECT_EQ(hp.target_entropy_for(as::BrowseActionSet{}), 0.2);
}

TEST(LossCls, Examples) {
    as::VideoAnnotation a{"v", 4, {{1, 1, 2}}};
    auto t = trace_of(4, 3);
    EXPECT_NEAR(as::loss_cls(t, a, 3), std::log(4.0), 1e-12);
    const int labels[4] = {3, 1, 1, 3}; // background is index C
    for (int n = 0; n < 4; ++n) {
        t.steps[n].class_probs.assign(4, 0.0);
        t.steps[n].class_probs[labels[n]] = 1.0;
    }
    EXPECT_NEAR(as::loss_cls(t, a, 3), 0.0, 1e-12);
}

TEST(LossCls, MatchesScalarRecomputationAndGradient) {
    as::Rng rng(3);
    as::VideoAnnotation a{"v", 6, {{0, 0, 1}, {2, 3, 4}}};
    auto t = trace_of(6, 3);
    std::vector<std::vector<double>> logits(6, std::vector<double>(4));
    for (int n = 0; n < 6; ++n) {
        Eigen::VectorXd l(4);
        for (int c = 0; c < 4; ++c)
            l[c] = logits[n][c] = as::gaussian(rng);
        const auto p = as::softmax(l);
        t.steps[n].class_probs.assign(p.data(), p.data() + 4);
    }
    const int labels[6] = {0, 0, 3, 2, 2, 3};
    double expected = 0.0;
    for (int n = 0; n < 6; ++n) {
        double z = 0.0;
        for (double v : logits[n])
            z += std::exp(v);
        expected += -(logits[n][labels[n]] - std::log(z)) / 6.0;
    }
    as::ModelConfig cfg{2, 2, 3, 2, true};
    as::OutputGrads g(cfg, 6);
    EXPECT_NEAR(as::loss_cls(t, a, 3, &g, 2.0), expected, 1e-12);
    for (int n = 0; n < 6; ++n)
        for (int c = 0; c < 4; ++c)
            EXPECT_NEAR(g[as::Head::Class](c, n), 2.0 * (t.steps[n].class_probs[c] - (c == labels[n])) / 6.0, 1e-15);
}

TEST(LossCritic, Examples) {
    auto t = trace_of(1, 1);
    t.steps[0].value = 0.3;
    EXPECT_NEAR(as::loss_critic(t, {0.5}), 0.02, 1e-15);
    EXPECT_EQ(as::loss_critic(t, {0.3}), 0.0);
    EXPECT_THROW(as::loss_critic(t, {0.3, 0.1}), as::ContractViolation);

    as::Rng rng(4);
    auto t5 = trace_of(5, 1);
    std::vector<double> targets;
    double expected = 0.0;
    for (auto &s : t5.steps) {
        s.value = as::gaussian(rng);
        targets.push_back(as::gaussian(rng));
        expected += 0.5 * std::pow(s.value - targets.back(), 2) / 5.0;
    }
    EXPECT_NEAR(as::loss_critic(t5, targets), expected, 1e-14);
}

TEST(ActorSurrogate, Examples) {
    auto t = trace_of(3, 1);
    as::ModelConfig cfg{2, 2, 1, 2, true};
    as::OutputGrads g(cfg, 3);
    EXPECT_EQ(as::actor_surrogate(t, {0.0, 0.0, 0.0}, &g), 0.0);
    for (const auto &d : g.d)
        EXPECT_EQ(d.cwiseAbs().maxCoeff(), 0.0);

    auto one = trace_of(1, 1);
    one.steps[0].browse_log_prob = -0.2;
    one.steps[0].keep_log_prob = -0.3;
    EXPECT_NEAR(as::actor_surrogate(one, {2.0}), -1.0, 1e-15);
    one.steps[0].browse_probs.clear(); // bypassed browser contributes nothing
    EXPECT_NEAR(as::actor_surrogate(one, {2.0}), -0.6, 1e-15);
}

TEST(ActorSurrogate, PerfectCriticZeroesAdvantages) {
    auto t = trace_of(4, 1);
    t.has_rewards = true;
    const double r[4] = {0.1, -0.2, 0.4, 0.05};
    for (int n = 0; n < 4; ++n)
        t.steps[n].reward = r[n];
    const auto R = as::discounted_return(t.rewards(), 0.9);
    for (int n = 0; n < 4; ++n)
        t.steps[n].value = R.to_go[n];
    const auto rt = as::return_targets(t, 0.9);
    for (double a : rt.advantages)
        EXPECT_NEAR(a, 0.0, 1e-15);
    EXPECT_NEAR(as::actor_surrogate(t, rt.advantages), 0.0, 1e-15);
}

TEST(Temperature, SignAndIteration) {
    EXPECT_EQ(as::temperature_update(0.5, 1.0, 1.0, 0.1), 0.5);
    EXPECT_LT(as::temperature_update(0.5, 1.2, 1.0, 0.1), 0.5);
    EXPECT_EQ(as::temperature_update(0.01, 3.0, 1.0, 0.1), 0.0);
    double rho = 0.0;
    for (int i = 1; i <= 20; ++i) {
        const double next = as::temperature_update(rho, 0.4, 0.9, 0.05);
        EXPECT_GT(next, rho);
        EXPECT_NEAR(next, i * 0.05 * 0.5, 1e-12);
        rho = next;
    }
}

TEST(EpisodeLoss, ZeroWeightsReduceToClassification) {
    const auto s = small_synth();
    auto hp = small_hp();
    hp.lambda1 = hp.lambda2 = 0.0;
    const as::BrowseActionSet actions;
    const auto m = perturbed_model(s.train, hp, actions);
    as::ModelPolicy policy(m, actions);
    as::Rng rng(1);
    const auto &ann = s.train.annotations.videos[0];
    const auto trace = as::rollout(policy, s.train.features[0], &ann, as::RolloutMode::Train, &rng, {1.0, 0.0, 3});
    as::OutputGrads g(m.config(), static_cast<int>(trace.steps.size()));
    const auto terms = as::episode_loss(trace, ann, hp, 3, nullptr, &g);
    EXPECT_DOUBLE_EQ(terms.total, terms.cls);
    EXPECT_EQ(g[as::Head::Critic].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g[as::Head::Browse].cwiseAbs().maxCoeff(), 0.0);
}

TEST(EpisodeLoss, FullGradientMatchesFiniteDifferences) {
    const auto s = small_synth(2);
    for (bool memory : {true, false})
        for (double gamma : {1.0, 0.9}) {
            auto hp = small_hp();
            hp.use_memory = memory;
            hp.gamma = gamma;
            const as::BrowseActionSet actions;
            const auto model = perturbed_model(s.train, hp, actions);
            const auto &ann = s.train.annotations.videos[1];
            const auto &features = s.train.features[1];

            as::ModelPolicy policy(model, actions);
            as::Rng rng(5);
            const auto trace = as::rollout(policy, features, &ann, as::RolloutMode::Train, &rng, {gamma, 0.0, 3});
            const auto frozen = as::return_targets(trace, gamma);
            as::OutputGrads g(model.config(), static_cast<int>(trace.steps.size()));
            as::episode_loss(trace, ann, hp, 3, &frozen, &g);
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.size());
            as::backward(model, policy.cache(), g, grad);

            auto loss_at = [&](const Eigen::VectorXd &p) {
                as::Model probe(model.config());
                probe.params() = p;
                as::ModelPolicy replay(probe, actions);
                replay.replay(&trace);
                as::Rng r(5);
                const auto t = as::rollout(replay, features, &ann, as::RolloutMode::Train, &r, {gamma, 0.0, 3});
                return as::episode_loss(t, ann, hp, 3, &frozen).total;
            };
            EXPECT_NEAR(loss_at(model.params()), as::episode_loss(trace, ann, hp, 3, &frozen).total, 1e-12);
            as::Rng pick(8);
            const auto rep = as::fd_check(model.params(), loss_at, grad, pick, 300);
            EXPECT_LT(rep.max_rel_error, 1e-4) << "memory=" << memory << " gamma=" << gamma;
        }
}

TEST(SupervisedLoss, GradientMatchesFiniteDifferences) {
    const auto s = small_synth(4);
    const auto hp = small_hp();
    const as::BrowseActionSet actions;
    const auto model = perturbed_model(s.train, hp, actions);
    const auto &ann = s.train.annotations.videos[0];
    const auto &features = s.train.features[0];
    const auto targets = as::row_center_targets(ann, features.frames(), features.chunk_span);
    auto run = [&](const as::Model &m, Eigen::VectorXd *grad) {
        as::ModelPolicy policy(m, actions, 1);
        const auto t = as::rollout(policy, features, &ann, as::RolloutMode::Test, nullptr, {1.0, 0.0, 3});
        as::OutputGrads g(m.config(), static_cast<int>(t.steps.size()));
        const double loss = as::supervised_loss(t, ann, targets, 3, grad ? &g : nullptr).total;
        if (grad)
            as::backward(m, policy.cache(), g, *grad);
        return loss;
    };
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.size());
    run(model, &grad);
    as::Rng pick(1);
    const auto rep = as::fd_check(
        model.params(),
        [&](const Eigen::VectorXd &p) {
            as::Model m(model.config());
            m.params() = p;
            return run(m, nullptr);
        },
        grad, pick, 300);
    EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(Pretrain, ZeroEpochsLeaveParametersUnchanged) {
    const auto s = small_synth();
    const auto hp = small_hp();
    auto m = as::make_model(s.train, hp, {});
    const Eigen::VectorXd before = m.params();
    auto opt = as::make_opt_state(m.size(), hp.learning_rate);
    as::pretrain(m, opt, s.train, hp, 0);
    EXPECT_EQ(m.params(), before);
}

TEST(Pretrain, NoiseFreeFramesAreClassified) {
    as::SynthConfig cfg;
    cfg.noise = 0.0;
    cfg.train_videos = 40;
    cfg.val_videos = 0;
    cfg.feature_dim = 8;
    const auto s = as::synth_generate(cfg);
    as::HyperParams hp;
    hp.hidden = 16;
    hp.learning_rate = 1e-2;
    hp.batch_size = 8;
    auto m = as::make_model(s.train, hp, {});
    auto opt = as::make_opt_state(m.size(), hp.learning_rate);
    as::pretrain(m, opt, s.train, hp, 8);

    long correct = 0, total = 0;
    for (std::size_t i = 0; i < s.train.size(); ++i) {
        as::ModelPolicy policy(m, {}, 1);
        const auto &ann = s.train.annotations.videos[i];
        const auto t = as::rollout(policy, s.train.features[i], nullptr, as::RolloutMode::Test, nullptr, {1.0, 0.0, 4});
        for (const auto &st : t.steps) {
            const int label = as::frame_label(ann, st.timestamp);
            const int y = label == as::kBackground ? cfg.num_classes : label;
            const auto best = std::max_element(st.class_probs.begin(), st.class_probs.end()) - st.class_probs.begin();
            correct += best == y;
            ++total;
        }
    }
    EXPECT_GT(static_cast<double>(correct) / static_cast<double>(total), 0.95);
}

TEST(Train, DeterministicForASeed) {
    const auto s = small_synth(5);
    const auto hp = small_hp();
    const auto a = as::train(s.train, s.val, hp, {});
    const auto b = as::train(s.train, s.val, hp, {});
    EXPECT_EQ(a.report.csv(), b.report.csv());
    EXPECT_EQ(as::dump_predictions(a.val_predictions), as::dump_predictions(b.val_predictions));
    EXPECT_EQ(a.checkpoint.params, b.checkpoint.params);
    auto other = hp;
    other.seed = 1;
    EXPECT_NE(as::train(s.train, s.val, other, {}).report.csv(), a.report.csv());
}

TEST(Train, ReportRowsAndBestEpochAgreement) {
    const auto s = small_synth(6);
    const auto hp = small_hp();
    const auto r = as::train(s.train, s.val, hp, {});
    ASSERT_EQ(r.report.rows.size(), static_cast<std::size_t>(hp.pretrain_epochs + hp.epochs));
    EXPECT_EQ(r.report.rows.front().phase, "pretrain");
    EXPECT_EQ(r.report.rows.back().phase, "rl");
    const auto &best = r.report.rows.at(static_cast<std::size_t>(r.best_epoch));
    EXPECT_EQ(best.val_map, r.best_map);
    EXPECT_EQ(as::spotting_map(r.val_predictions, s.val.annotations), r.best_map);
    const auto ev = as::evaluate_checkpoint(r.checkpoint, s.val);
    EXPECT_EQ(ev.map, r.best_map);
    EXPECT_EQ(ev.predictions, r.val_predictions);
    const auto csv = r.report.csv();
    EXPECT_EQ(csv.rfind("epoch,phase,loss_total", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), hp.pretrain_epochs + hp.epochs + 1);
}

TEST(Train, NoReinforcementEpochsKeepsThePretrainedModel) {
    const auto s = small_synth(7);
    auto hp = small_hp();
    hp.epochs = 0;
    const auto r = as::train(s.train, s.val, hp, {});
    EXPECT_EQ(r.best_epoch, hp.pretrain_epochs - 1);
    EXPECT_EQ(as::evaluate_checkpoint(r.checkpoint, s.val).map, r.best_map);
}

TEST(Train, RejectsMismatchedSplits) {
    const auto s = small_synth(8);
    auto other = small_synth(8);
    other.val.annotations.num_classes = 5;
    EXPECT_THROW(as::train(s.train, other.val, small_hp(), {}), as::ValidationError);
    auto hp = small_hp();
    hp.gamma = 0.0;
    EXPECT_THROW(as::train(s.train, s.val, hp, {}), as::ConfigError);
}

TEST(Evaluate, RepeatableAndCheckpointShapeChecked) {
    const auto s = small_synth(9);
    const auto hp = small_hp();
    const auto m = as::make_model(s.train, hp, {});
    const auto a = as::evaluate(m, s.val, {});
    const auto b = as::evaluate(m, s.val, {});
    EXPECT_EQ(a.map, b.map);
    EXPECT_EQ(a.predictions, b.predictions);

    as::Checkpoint ck{m.config(), {}, as::hyperparams_to_json(hp), m.params(), as::make_opt_state(m.size(), 1e-3)};
    auto wrong_dim = ck;
    wrong_dim.model.input_dim += 1;
    EXPECT_THROW(as::evaluate_checkpoint(wrong_dim, s.val), as::CheckpointError);
    auto wrong_classes = ck;
    wrong_classes.model.num_classes += 1;
    EXPECT_THROW(as::evaluate_checkpoint(wrong_classes, s.val), as::CheckpointError);
}

TEST(Evaluate, SigmaDropsLowLikelihoodSpots) {
    const auto s = small_synth(10);
    const auto m = as::make_model(s.train, small_hp(), {});
    const auto all = as::evaluate(m, s.val, {}, 0, 0.0);
    const auto none = as::evaluate(m, s.val, {}, 0, 1.0);
    EXPECT_FALSE(all.predictions.empty());
    EXPECT_TRUE(none.predictions.empty());
    EXPECT_EQ(none.map, 0.0);
}

TEST(Evaluate, UntrainedModelIsNearRandomGuessing) {
    // random policy: uniform displacement, uniform likelihood, uniform label
    const auto s = small_synth(11, 2, 30);
    struct RandomPolicy : as::Policy {
        as::BrowseActionSet a;
        as::Rng rng;
        explicit RandomPolicy(std::uint64_t seed) : rng(seed) {}
        const as::BrowseActionSet &actions() const override { return a; }
        void begin(const as::FeatureSequence &, const as::VideoAnnotation *) override {}
        as::Decision decide(int, as::Rng *) override {
            as::Decision d;
            d.browse_index = as::uniform_int(rng, 0, 2);
            d.likelihood = as::uniform01(rng);
            d.label = as::uniform_int(rng, 0, 2);
            d.class_probs.assign(4, 0.25);
            d.memory = Eigen::VectorXd::Zero(1);
            return d;
        }
    };
    double mean = 0.0;
    for (int i = 0; i < 100; ++i) {
        RandomPolicy p(i);
        mean += as::evaluate_policy(p, s.val).map / 100.0;
    }
    double untrained = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto hp = small_hp();
        hp.seed = seed;
        untrained += as::evaluate(as::make_model(s.train, hp, {}), s.val, {}).map / 5.0;
    }
    EXPECT_LT(std::abs(untrained - mean), 0.15) << "untrained " << untrained << " random " << mean;
}
