// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only when all pass.
//
//   acceptance [--quick] [--only 1,2,...] [--workdir DIR]
//
// --quick shrinks the training budget of criteria 5-7 for smoke runs; the verdicts of a quick
// run are not the acceptance verdicts.
#include "actionspotter/baselines.hpp"
#include "actionspotter/cli.hpp"
#include "actionspotter/env.hpp"
#include "actionspotter/experiment.hpp"
#include "actionspotter/metric.hpp"
#include "actionspotter/model.hpp"
#include "actionspotter/synth.hpp"
#include "actionspotter/trainer.hpp"

#include "../tests/oracles.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace as = actionspotter;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

// ---- fixed benchmark ------------------------------------------------------------------------

const std::array<std::uint64_t, 3> kSeeds = {1, 2, 3};

as::SynthConfig benchmark(std::uint64_t seed) {
    as::SynthConfig cfg; // C=4, D=16, T=120, 200/50 videos, 1-4 segments
    cfg.num_classes = 4;
    cfg.feature_dim = 16;
    cfg.frames = 120;
    cfg.train_videos = 200;
    cfg.val_videos = 50;
    cfg.min_segments = 1;
    cfg.max_segments = 4;
    cfg.min_segment_length = 2;
    cfg.max_segment_length = 20;
    cfg.separation = 5.0;
    cfg.noise = 0.5;
    cfg.seed = seed;
    return cfg;
}

as::HyperParams benchmark_hp(std::uint64_t seed, bool quick) {
    as::HyperParams hp;
    hp.hidden = 64;
    hp.learning_rate = 3e-4;
    hp.batch_size = 32;
    hp.pretrain_epochs = 5;
    hp.epochs = quick ? 8 : 150;
    hp.patience = quick ? 8 : 150;
    hp.target_entropy = 0.0;
    hp.seed = seed;
    return hp;
}

// ---- 1: metric vs brute force ---------------------------------------------------------------

Verdict criterion1() {
    as::Rng rng(as::derive_seed(2024, {1}));
    std::vector<oracle::Instance> inst;
    for (int i = 0; i < 1000; ++i)
        inst.push_back(oracle::random_instance(rng, 4, 3, 12));
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (const auto &in : inst)
        worst = std::max(worst, std::abs(as::spotting_map(in.preds, in.gts) - oracle::map(in.preds, in.gts)));
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << "1000 instances, max |diff| " << worst << ", " << secs << " s";
    return {worst <= 1e-9 && secs < 10.0, d.str()};
}

// ---- 2: incremental accumulator -------------------------------------------------------------

Verdict criterion2() {
    as::Rng rng(as::derive_seed(2024, {2}));
    double worst = 0.0;
    for (int trace = 0; trace < 100; ++trace) {
        const auto inst = oracle::random_instance(rng, 4, 3, 0);
        as::MapAccumulator acc(inst.gts);
        as::PredictionSet inserted;
        for (int i = 0; i < 200; ++i) {
            const auto &video = inst.gts.videos[as::uniform_int(rng, 0, static_cast<int>(inst.gts.videos.size()) - 1)];
            as::SpotPrediction p{video.video_id, as::uniform_int(rng, 0, video.num_frames - 1),
                                 as::uniform_int(rng, 0, 20) / 20.0, as::uniform_int(rng, 0, inst.gts.num_classes - 1)};
            acc.insert(p);
            inserted.push_back(p);
            worst = std::max(worst, std::abs(acc.map() - as::spotting_map(inserted, inst.gts)));
            worst = std::max(worst, std::abs(acc.map() - oracle::map(inserted, inst.gts)));
        }
    }
    std::ostringstream d;
    d << "100 traces x 200 insertions, max |diff| " << worst;
    return {worst <= 1e-12, d.str()};
}

// ---- 3: telescoping identity ----------------------------------------------------------------

Verdict criterion3() {
    auto cfg = benchmark(11);
    cfg.train_videos = 100;
    cfg.val_videos = 0;
    const auto data = as::synth_generate(cfg).train;
    const as::BrowseActionSet actions;
    as::HyperParams hp;
    hp.hidden = 16;
    const auto model = as::make_model(data, hp, actions);
    as::ModelPolicy policy(model, actions);
    double worst = 0.0;
    int episodes = 0;
    for (double gamma : {1.0, 0.99, 0.9, 0.5})
        for (std::size_t i = 0; i < data.size(); ++i) {
            as::Rng rng(as::derive_seed(2024, {3, static_cast<std::uint64_t>(i)}));
            const auto trace = as::rollout(policy, data.features[i], &data.annotations.videos[i],
                                           as::RolloutMode::Train, &rng, {gamma, 0.0, cfg.num_classes});
            const auto R = as::discounted_return(trace.rewards(), gamma);
            // independent sum over the recorded rewards
            double sum = 0.0, g = gamma;
            for (double r : trace.rewards()) {
                sum += g * r;
                g *= gamma;
            }
            const double N = static_cast<double>(trace.steps.size());
            const double target = std::pow(gamma, N + 1.0) * trace.final_map;
            worst = std::max({worst, std::abs(sum - target), std::abs(R.total - target)});
            ++episodes;
        }
    std::ostringstream d;
    d << episodes << " episodes (100 per gamma), max |sum - gamma^(N+1) mAP| " << worst;
    return {worst < 1e-9, d.str()};
}

// ---- 4: gradient check ----------------------------------------------------------------------

// Smooth loss over all four head outputs of an unrolled episode.
struct EpisodeProbe {
    as::ModelConfig cfg;
    Eigen::MatrixXd inputs;
    std::array<Eigen::MatrixXd, as::kNumHeads> weights;

    double run(const Eigen::VectorXd &params, Eigen::VectorXd *grad) const {
        as::Model m(cfg);
        m.params() = params;
        as::EpisodeCache cache;
        const int steps = static_cast<int>(inputs.cols());
        cache.reset(cfg, steps);
        for (int n = 0; n < steps; ++n)
            as::forward_step(m, cache, inputs.col(n));
        double loss = 0.0;
        as::OutputGrads dout(cfg, steps);
        for (int k = 0; k < as::kNumHeads; ++k) {
            const auto &out = cache.Out[k];
            loss += (weights[k].array() * out.array()).sum() + 0.5 * out.squaredNorm();
            dout.d[k] = weights[k] + out;
        }
        if (grad) {
            grad->setZero(params.size());
            as::backward(m, cache, dout, *grad, 0);
        }
        return loss;
    }
};

EpisodeProbe make_probe(const as::ModelConfig &cfg, int steps, as::Rng &rng) {
    EpisodeProbe p{cfg, Eigen::MatrixXd(cfg.input_dim, steps), {}};
    for (Eigen::Index i = 0; i < p.inputs.size(); ++i)
        p.inputs.data()[i] = as::gaussian(rng);
    for (int k = 0; k < as::kNumHeads; ++k) {
        p.weights[k].resize(cfg.head_outputs(static_cast<as::Head>(k)), steps);
        for (Eigen::Index i = 0; i < p.weights[k].size(); ++i)
            p.weights[k].data()[i] = as::gaussian(rng);
    }
    return p;
}

as::Model random_model(const as::ModelConfig &cfg, as::Rng &rng) {
    as::Model m(cfg);
    m.init(rng);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.params()[i] += 0.3 * as::gaussian(rng); // nonzero biases and larger weights
    return m;
}

Verdict criterion4() {
    as::Rng rng(as::derive_seed(2024, {4}));
    double worst = 0.0;
    int configs = 0, with_memory = 0;
    for (int trial = 0; trial < 12; ++trial) {
        as::ModelConfig cfg{as::uniform_int(rng, 2, 8), as::uniform_int(rng, 2, 8), as::uniform_int(rng, 1, 5),
                            as::uniform_int(rng, 1, 4), trial % 4 != 3};
        const auto m = random_model(cfg, rng);
        const auto probe = make_probe(cfg, 7, rng);
        Eigen::VectorXd grad;
        probe.run(m.params(), &grad);
        const auto rep = as::fd_check(
            m.params(), [&](const Eigen::VectorXd &p) { return probe.run(p, nullptr); }, grad, rng, m.size());
        worst = std::max(worst, rep.max_rel_error);
        ++configs;
        with_memory += cfg.use_memory;
    }
    // negative control: one corrupted recurrent-weight coordinate must be caught
    as::ModelConfig cfg{4, 5, 3, 3, true};
    const auto m = random_model(cfg, rng);
    const auto probe = make_probe(cfg, 7, rng);
    Eigen::VectorXd grad;
    probe.run(m.params(), &grad);
    grad[m.layout().gru_U.offset + 2] += 0.05;
    const auto neg = as::fd_check(
        m.params(), [&](const Eigen::VectorXd &p) { return probe.run(p, nullptr); }, grad, rng, m.size());
    const bool control_fails = neg.max_rel_error > 1e-4;
    std::ostringstream d;
    d << configs << " configs (" << with_memory << " with GRU, 4 heads, 7 steps), max rel err " << worst
      << "; corrupted gradient rel err " << neg.max_rel_error << (control_fails ? " (caught)" : " (NOT caught)");
    return {worst < 1e-4 && control_fails && configs >= 10, d.str()};
}

// ---- 5-7: training on the benchmark ---------------------------------------------------------

struct SeedResults {
    std::uint64_t seed = 0;
    double map_g1 = 0, skip_g1 = 0, secs_g1 = 0;
    double map_g95 = 0, skip_g95 = 0;
    double map_naive = 0;
    int uniform_stride = 0;
    double map_uniform = 0, skip_uniform = 0;
};

int stride_steps(int frames, int s) {
    // rows 0, s, 2s, ... with the last move clamped onto the final row
    const int last = frames - 1;
    return last / s + 1 + (last % s != 0 ? 1 : 0);
}

SeedResults run_seed(std::uint64_t seed, bool quick) {
    SeedResults r;
    r.seed = seed;
    const auto data = as::synth_generate(benchmark(seed));
    const as::BrowseActionSet actions;
    const auto log = [&](const std::string &what) {
        std::cerr << "  seed " << seed << ": " << what << std::endl;
    };

    auto hp = benchmark_hp(seed, quick);
    auto t0 = Clock::now();
    const auto g1 = as::train(data.train, data.val, hp, actions);
    r.secs_g1 = seconds_since(t0);
    r.map_g1 = g1.best_map;
    r.skip_g1 = g1.best_skip_ratio;
    log("gamma 1.00 map " + std::to_string(r.map_g1) + " skip " + std::to_string(r.skip_g1) + " (" +
        std::to_string(r.secs_g1) + " s)");

    auto hp95 = hp;
    hp95.gamma = 0.95;
    const auto g95 = as::train(data.train, data.val, hp95, actions);
    r.map_g95 = g95.best_map;
    r.skip_g95 = g95.best_skip_ratio;
    log("gamma 0.95 map " + std::to_string(r.map_g95) + " skip " + std::to_string(r.skip_g95));

    const auto naive = as::run_method("naive", data.train, data.val, hp, actions);
    r.map_naive = naive.map;
    log("naive map " + std::to_string(r.map_naive));

    // uniform stride whose skip ratio is nearest the learned browser's
    const int T = benchmark(seed).frames;
    double best_gap = 1e9;
    for (int s = 1; s <= 12; ++s) {
        const double gap = std::abs(as::skip_ratio(stride_steps(T, s), T) - r.skip_g1);
        if (gap < best_gap) {
            best_gap = gap;
            r.uniform_stride = s;
        }
    }
    const auto uni = as::train(data.train, data.val, as::uniform_variant(hp, r.uniform_stride), actions);
    r.map_uniform = uni.best_map;
    r.skip_uniform = uni.best_skip_ratio;
    log("uniform stride " + std::to_string(r.uniform_stride) + " map " + std::to_string(r.map_uniform) + " skip " +
        std::to_string(r.skip_uniform));
    return r;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return buf;
}

Verdict criterion5(const std::vector<SeedResults> &rs) {
    bool ok = true;
    std::ostringstream d;
    for (const auto &r : rs) {
        const bool seed_ok = r.map_g1 >= 0.85 && r.map_g1 - r.map_naive >= 0.10 && r.secs_g1 < 1800.0;
        ok = ok && seed_ok;
        d << "seed " << r.seed << ": mAP " << pct(r.map_g1) << " vs naive " << pct(r.map_naive) << ", "
          << static_cast<int>(r.secs_g1) << " s; ";
    }
    return {ok, d.str()};
}

Verdict criterion6(const std::vector<SeedResults> &rs) {
    double skip1 = 0, skip95 = 0, map1 = 0, map95 = 0;
    for (const auto &r : rs) {
        skip1 += r.skip_g1 / rs.size();
        skip95 += r.skip_g95 / rs.size();
        map1 += r.map_g1 / rs.size();
        map95 += r.map_g95 / rs.size();
    }
    std::ostringstream d;
    d << "mean skip " << pct(skip95) << "% (gamma .95) vs " << pct(skip1) << "% (gamma 1); mean mAP " << pct(map95)
      << " vs " << pct(map1);
    return {skip95 >= skip1 + 0.05 && map95 <= map1 + 0.01, d.str()};
}

Verdict criterion7(const std::vector<SeedResults> &rs) {
    bool ok = true;
    int strictly = 0;
    std::ostringstream d;
    for (const auto &r : rs) {
        ok = ok && r.map_g1 >= r.map_uniform - 0.01;
        strictly += r.map_g1 > r.map_uniform;
        d << "seed " << r.seed << ": browser " << pct(r.map_g1) << " @ skip " << pct(r.skip_g1) << "% vs stride "
          << r.uniform_stride << " " << pct(r.map_uniform) << " @ " << pct(r.skip_uniform) << "%; ";
    }
    return {ok && strictly >= 2, d.str()};
}

// ---- 8: redraw through the command line -----------------------------------------------------

int cli(const std::vector<std::string> &args, std::string *out_text = nullptr) {
    std::vector<std::string> full{"actionspotter"};
    full.insert(full.end(), args.begin(), args.end());
    std::ostringstream out, err;
    const int code = as::cli::run(full, out, err);
    if (out_text)
        *out_text = out.str();
    if (code != 0)
        std::cerr << "  cli exit " << code << ": " << err.str();
    return code;
}

void write_file(const fs::path &p, const std::string &text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string read_file(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Verdict criterion8(const fs::path &work) {
    const auto dir = work / "redraw";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file(dir / "detections.json", R"({"detections": [
  {"video": "a", "label": 0, "start": 10, "end": 20, "score": 0.9},
  {"video": "a", "label": 0, "start": 11, "end": 20, "score": 0.8},
  {"video": "a", "label": 0, "start": 30, "end": 40, "score": 0.7}]}
)");
    write_file(dir / "annotations.json", R"({"num_classes": 1, "videos": [
  {"id": "a", "num_frames": 50, "segments": [{"label": 0, "start": 10, "end": 20}, {"label": 0, "start": 30, "end": 40}]}]}
)");
    const auto pred = (dir / "spots.jsonl").string();
    if (cli({"--out", pred, "redraw", "--detections", (dir / "detections.json").string()}) != 0)
        return {false, "redraw command failed"};
    const auto spots = as::read_predictions(pred);
    const as::PredictionSet expected{{"a", 15, 0.9, 0}, {"a", 15, 0.8, 0}, {"a", 35, 0.7, 0}};
    std::string report;
    if (cli({"eval", "--gt", (dir / "annotations.json").string(), "--pred", pred}, &report) != 0)
        return {false, "eval command failed"};
    const double m = nlohmann::json::parse(report).at("map").get<double>();
    std::ostringstream d;
    d << "centers " << (spots == expected ? "15,15,35 with scores kept" : "WRONG") << ", eval mAP " << m
      << " (expected 5/6)";
    return {spots == expected && std::abs(m - 5.0 / 6.0) < 1e-12, d.str()};
}

// ---- 9: determinism through the command line ------------------------------------------------

Verdict criterion9(const fs::path &work) {
    const auto dir = work / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file(dir / "synth.json", R"({"num_classes": 4, "feature_dim": 16, "frames": 120,
  "train_videos": 40, "val_videos": 12, "min_segments": 1, "max_segments": 4})");
    if (cli({"--seed", "5", "--out", (dir / "data").string(), "synth", "--config", (dir / "synth.json").string()}) != 0)
        return {false, "synth command failed"};
    write_file(dir / "train.json", R"({"dataset": {"train": "data/train", "val": "data/val"},
  "hidden": 16, "learning_rate": 0.001, "batch_size": 8, "pretrain_epochs": 2, "epochs": 6, "patience": 6})");
    std::vector<std::string> runs;
    for (int rep = 0; rep < 2; ++rep) {
        const auto out = (dir / ("run" + std::to_string(rep))).string();
        if (cli({"--seed", "9", "--out", out, "train", "--config", (dir / "train.json").string()}) != 0)
            return {false, "train command failed"};
        runs.push_back(out);
    }
    bool same = true;
    std::ostringstream d;
    for (const char *f : {"train_report.csv", "val_predictions.jsonl", "checkpoint.ckpt"}) {
        const auto a = read_file(fs::path(runs[0]) / f), b = read_file(fs::path(runs[1]) / f);
        const bool eq = !a.empty() && a == b;
        same = same && eq;
        d << f << (eq ? " identical" : " DIFFERENT") << " (" << a.size() << " bytes); ";
    }
    return {same, d.str()};
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Acceptance criteria runner"};
    bool quick = false;
    std::vector<int> only;
    std::string workdir = (fs::temp_directory_path() / "actionspotter_acceptance").string();
    app.add_flag("--quick", quick, "Small training budget (smoke run)");
    app.add_option("--only", only, "Criteria to run")->delimiter(',');
    app.add_option("--workdir", workdir, "Scratch directory");
    CLI11_PARSE(app, argc, argv);
    const std::set<int> selected(only.begin(), only.end());
    auto want = [&](int c) { return selected.empty() || selected.count(c); };
    const fs::path work(workdir);
    fs::create_directories(work);

    int failures = 0;
    auto report = [&](int c, const std::string &name, const Verdict &v) {
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c << " " << name << ": " << v.detail << std::endl;
        failures += !v.pass;
    };
    auto guarded = [&](int c, const std::string &name, const std::function<Verdict()> &fn) {
        if (!want(c))
            return;
        try {
            report(c, name, fn());
        } catch (const std::exception &e) {
            report(c, name, {false, std::string("exception: ") + e.what()});
        }
    };

    guarded(1, "metric matches brute force", criterion1);
    guarded(2, "incremental accumulator", criterion2);
    guarded(3, "telescoping identity", criterion3);
    guarded(4, "gradient correctness", criterion4);
    if (want(5) || want(6) || want(7)) {
        std::vector<SeedResults> rs;
        std::string error;
        try {
            for (auto seed : kSeeds)
                rs.push_back(run_seed(seed, quick));
        } catch (const std::exception &e) {
            error = e.what();
        }
        const std::string tag = quick ? " [quick budget]" : "";
        auto verdict = [&](const std::function<Verdict()> &fn) {
            return error.empty() ? fn() : Verdict{false, "exception: " + error};
        };
        if (want(5))
            report(5, "end-to-end learning" + tag, verdict([&] { return criterion5(rs); }));
        if (want(6))
            report(6, "gamma trade-off" + tag, verdict([&] { return criterion6(rs); }));
        if (want(7))
            report(7, "browsing vs uniform" + tag, verdict([&] { return criterion7(rs); }));
    }
    guarded(8, "redraw correctness", [&] { return criterion8(work); });
    guarded(9, "determinism", [&] { return criterion9(work); });
    return failures == 0 ? 0 : 1;
}
