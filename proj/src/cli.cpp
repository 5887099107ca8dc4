// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/cli.hpp"

#include "actionspotter/baselines.hpp"
#include "actionspotter/errors.hpp"
#include "actionspotter/experiment.hpp"
#include "actionspotter/synth.hpp"
#include "actionspotter/trainer.hpp"
#include "bytes.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>

namespace actionspotter::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
};

json parse_json_file(const fs::path &path, const char *what) {
    std::string text;
    try {
        text = detail::slurp(path);
    } catch (const LoadError &e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
    try {
        return json::parse(text);
    } catch (const json::exception &e) {
        throw ConfigError(std::string(what) + " " + path.string() + ": " + e.what());
    }
}

fs::path output_dir(const Globals &g) {
    if (g.out.empty())
        throw ConfigError("--out is required for this command");
    const fs::path dir(g.out);
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir))
            throw ConfigError("output path " + dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir) && !g.force)
            throw ConfigError("output directory " + dir.string() + " is not empty; pass --force to overwrite");
    }
    fs::create_directories(dir);
    return dir;
}

fs::path output_file(const std::string &path, bool force) {
    if (path.empty())
        throw ConfigError("--out is required for this command");
    const fs::path p(path);
    if (fs::exists(p) && !force)
        throw ConfigError("output file " + p.string() + " exists; pass --force to overwrite");
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    return p;
}

void write_text(const fs::path &path, const std::string &text) { detail::spit(path, text); }

fs::path resolve(const fs::path &base_dir, const std::string &p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

BrowseActionSet actions_from(const json &j) {
    BrowseActionSet actions;
    if (j.contains("actions")) {
        try {
            actions.displacements = j.at("actions").get<std::vector<int>>();
        } catch (const json::exception &e) {
            throw ConfigError(std::string("actions: ") + e.what());
        }
    }
    actions.validate();
    return actions;
}

std::string method_from(const json &j) {
    const std::string method = j.value("method", std::string("actionspotter"));
    if (!is_known_method(method))
        throw ConfigError("unknown method '" + method + "'");
    return method;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return buf;
}

void write_run_artifacts(const fs::path &dir, const RunOutcome &r, const HyperParams &hp,
                         const BrowseActionSet &actions) {
    if (!r.report_csv.empty())
        write_text(dir / "train_report.csv", r.report_csv);
    write_predictions(r.predictions, dir / "val_predictions.jsonl");
    if (r.checkpoint)
        save_checkpoint(*r.checkpoint, dir / "checkpoint.ckpt");
    json summary{{"method", r.method},
                 {"best_epoch", r.best_epoch},
                 {"val_map", r.map},
                 {"val_skip_ratio", r.skip_ratio},
                 {"seed", hp.seed},
                 {"actions", actions.displacements},
                 {"hyperparams", json::parse(hyperparams_to_json(hp))}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
}

// ---- synth ---------------------------------------------------------------------------------

int cmd_synth(const Globals &g, const std::string &config_path, std::ostream &out) {
    SynthConfig cfg;
    if (!config_path.empty())
        cfg = synth_config_from_json(parse_json_file(config_path, "synth config").dump());
    if (g.seed)
        cfg.seed = *g.seed;
    cfg.validate();
    const auto dir = output_dir(g);
    const auto splits = synth_generate(cfg);
    write_dataset(splits.train, dir / "train");
    write_dataset(splits.val, dir / "val");
    write_text(dir / "synth_config.json", synth_config_to_json(cfg));
    out << "wrote " << splits.train.size() << " train and " << splits.val.size() << " val videos to "
        << dir.string() << "\n";
    return kExitOk;
}

// ---- train ---------------------------------------------------------------------------------

int cmd_train(const Globals &g, const std::string &config_path, std::ostream &out, std::ostream &err) {
    const fs::path cfg_path(config_path);
    const json j = parse_json_file(cfg_path, "config");
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");
    if (!j.contains("dataset") || !j["dataset"].is_object() || !j["dataset"].contains("train") ||
        !j["dataset"].contains("val"))
        throw ConfigError("config needs dataset.train and dataset.val");
    HyperParams hp = hyperparams_from_json(j.dump());
    if (g.seed)
        hp.seed = *g.seed;
    const auto actions = actions_from(j);
    const auto method = method_from(j);
    const fs::path base = cfg_path.parent_path();
    const auto train_dir = resolve(base, j["dataset"]["train"].get<std::string>());
    const auto val_dir = resolve(base, j["dataset"]["val"].get<std::string>());
    const auto dir = output_dir(g);

    const Dataset train_set = read_dataset(train_dir);
    const Dataset val = read_dataset(val_dir);
    RunOutcome r;
    if (method == "actionspotter") {
        // same as run_method, with per-epoch progress on stderr
        const auto res = train(train_set, val, hp, actions, [&](const EpochRow &row) {
            err << "epoch " << row.epoch << " " << row.phase << " val_map " << fmt_double(row.val_map)
                << " skip " << fmt_double(row.val_skip_ratio) << "\n";
        });
        r.method = method;
        r.map = res.best_map;
        r.skip_ratio = res.best_skip_ratio;
        r.best_epoch = res.best_epoch;
        r.report_csv = res.report.csv();
        r.predictions = res.val_predictions;
        r.checkpoint = res.checkpoint;
    } else {
        r = run_method(method, train_set, val, hp, actions);
    }
    write_run_artifacts(dir, r, hp, actions);
    out << "best epoch " << r.best_epoch << " val_map " << fmt_double(r.map) << " skip_ratio "
        << fmt_double(r.skip_ratio) << "\n";
    return kExitOk;
}

// ---- eval ----------------------------------------------------------------------------------

AnnotationSet load_gt(const fs::path &gt) {
    return read_annotations(fs::is_directory(gt) ? gt / "annotations.json" : gt);
}

int cmd_eval(const Globals &g, const std::string &gt, const std::string &pred, const std::string &ckpt,
             std::ostream &out) {
    if (pred.empty() == ckpt.empty())
        throw ConfigError("eval needs exactly one of --pred or --ckpt");
    json report;
    if (!pred.empty()) {
        const auto gts = load_gt(gt);
        const auto preds = read_predictions(pred);
        report = json::parse(map_report_json(spotting_map_report(preds, gts)));
    } else {
        if (!fs::is_directory(gt))
            throw ConfigError("--ckpt needs --gt to be a dataset directory (annotations.json + features/)");
        const auto data = read_dataset(gt);
        const auto ev = evaluate_checkpoint(load_checkpoint(ckpt), data);
        report = json::parse(map_report_json(ev.report));
        report["skip_ratio"] = ev.skip_ratio;
    }
    const std::string text = report.dump(2) + "\n";
    out << text;
    if (!g.out.empty())
        write_text(output_file(g.out, g.force), text);
    return kExitOk;
}

// ---- redraw --------------------------------------------------------------------------------

int cmd_redraw(const Globals &g, const std::string &detections, std::ostream &out) {
    const auto spots = redraw_detections(read_detections(detections));
    const auto path = output_file(g.out, g.force);
    write_predictions(spots, path);
    out << "wrote " << spots.size() << " spots to " << path.string() << "\n";
    return kExitOk;
}

// ---- report --------------------------------------------------------------------------------

std::string dir_name(const std::string &label) {
    std::string s;
    for (char c : label)
        s += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
    return s.empty() ? "run" : s;
}

struct ReportRow {
    std::string label, method;
    std::uint64_t seed = 0;
    double gamma = 1.0;
    int uniform_stride = 0;
    bool use_memory = true;
    double map = 0.0, skip = 0.0;
    int best_epoch = -1;
};

int cmd_report(const Globals &g, const std::string &manifest_path, std::ostream &out, std::ostream &err) {
    const fs::path mpath(manifest_path);
    const json m = parse_json_file(mpath, "manifest");
    if (!m.is_object() || !m.contains("runs") || !m["runs"].is_array() || m["runs"].empty())
        throw ConfigError("manifest needs a non-empty \"runs\" list");
    const fs::path base = mpath.parent_path();
    Globals gl = g;
    if (gl.out.empty() && m.contains("output"))
        gl.out = resolve(base, m["output"].get<std::string>()).string();
    const auto dir = output_dir(gl);
    const std::string name = m.value("name", std::string("report"));
    const json base_overrides = m.value("base", json::object());
    const auto actions = actions_from(m);

    // dataset: fixed directories, or a synthetic benchmark regenerated per seed
    std::optional<std::pair<Dataset, Dataset>> fixed;
    std::optional<SynthConfig> synth;
    if (m.contains("dataset")) {
        const auto &d = m["dataset"];
        if (!d.contains("train") || !d.contains("val"))
            throw ConfigError("manifest dataset needs train and val");
        fixed.emplace(read_dataset(resolve(base, d["train"].get<std::string>())),
                      read_dataset(resolve(base, d["val"].get<std::string>())));
    } else if (m.contains("synth")) {
        synth = synth_config_from_json(m["synth"].dump());
    } else {
        throw ConfigError("manifest needs \"dataset\" or \"synth\"");
    }
    std::map<std::uint64_t, SynthSplits> synth_cache;
    auto data_for = [&](std::uint64_t seed) -> std::pair<const Dataset *, const Dataset *> {
        if (fixed)
            return {&fixed->first, &fixed->second};
        auto it = synth_cache.find(seed);
        if (it == synth_cache.end()) {
            auto cfg = *synth;
            cfg.seed = seed;
            it = synth_cache.emplace(seed, synth_generate(cfg)).first;
        }
        return {&it->second.train, &it->second.val};
    };

    std::vector<ReportRow> rows;
    for (const auto &run : m["runs"]) {
        const std::string label = run.value("label", std::string("run"));
        json overrides = base_overrides;
        overrides.update(run.value("overrides", json::object()));
        overrides["method"] = run.value("method", std::string("actionspotter"));
        const auto method = method_from(overrides);
        HyperParams hp = hyperparams_from_json(overrides.dump());
        std::vector<std::uint64_t> seeds = run.value("seeds", m.value("seeds", std::vector<std::uint64_t>{0}));
        if (g.seed)
            seeds = {*g.seed};
        for (auto seed : seeds) {
            hp.seed = seed;
            const auto [train_set, val] = data_for(seed);
            err << "[" << name << "] " << label << " seed " << seed << "\n";
            const auto r = run_method(method, *train_set, *val, hp, actions);
            const auto run_dir = dir / "runs" / dir_name(label) / ("seed_" + std::to_string(seed));
            fs::create_directories(run_dir);
            write_run_artifacts(run_dir, r, hp, actions);
            rows.push_back({label, method, seed, hp.gamma, hp.uniform_stride, hp.use_memory, r.map, r.skip_ratio,
                            r.best_epoch});
        }
    }

    std::string results = "label,method,seed,gamma,uniform_stride,use_memory,map,skip_ratio,viewed_fraction,best_epoch\n";
    for (const auto &r : rows)
        results += r.label + "," + r.method + "," + std::to_string(r.seed) + "," + fmt_double(r.gamma) + "," +
                   std::to_string(r.uniform_stride) + "," + (r.use_memory ? "1" : "0") + "," + fmt_double(r.map) +
                   "," + fmt_double(r.skip) + "," + fmt_double(1.0 - r.skip) + "," + std::to_string(r.best_epoch) +
                   "\n";
    write_text(dir / "results.csv", results);

    // per-label means, in manifest order
    struct Agg {
        ReportRow first;
        double map = 0.0, skip = 0.0;
        int n = 0;
    };
    std::vector<std::string> order;
    std::map<std::string, Agg> agg;
    for (const auto &r : rows) {
        auto [it, fresh] = agg.try_emplace(r.label);
        if (fresh) {
            order.push_back(r.label);
            it->second.first = r;
        }
        it->second.map += r.map;
        it->second.skip += r.skip;
        ++it->second.n;
    }
    std::string summary = "label,method,gamma,uniform_stride,use_memory,runs,mean_map,mean_skip_ratio,mean_viewed_fraction\n";
    std::map<std::string, Series> curves;
    std::vector<std::string> curve_order;
    for (const auto &label : order) {
        const auto &a = agg[label];
        const double mm = a.map / a.n, ms = a.skip / a.n;
        summary += label + "," + a.first.method + "," + fmt_double(a.first.gamma) + "," +
                   std::to_string(a.first.uniform_stride) + "," + (a.first.use_memory ? "1" : "0") + "," +
                   std::to_string(a.n) + "," + fmt_double(mm) + "," + fmt_double(ms) + "," + fmt_double(1.0 - ms) +
                   "\n";
        std::string series = a.first.method;
        if (a.first.method == "actionspotter")
            series = a.first.uniform_stride > 0 ? "uniform subsampling" : "learned browser";
        if (!a.first.use_memory)
            series += " (no memory)";
        if (!curves.count(series)) {
            curve_order.push_back(series);
            curves[series].name = series;
        }
        curves[series].points.emplace_back(1.0 - ms, mm);
    }
    write_text(dir / "summary.csv", summary);

    std::vector<Series> series;
    for (const auto &s : curve_order) {
        auto sr = curves[s];
        std::sort(sr.points.begin(), sr.points.end());
        series.push_back(std::move(sr));
    }
    write_text(dir / "curve.svg",
               svg_line_chart(name + ": mAP by viewed fraction", "viewed fraction (1 - skip ratio)",
                              "validation spotting mAP", series, 0.0, 1.0, 0.0, 1.0));
    out << summary;
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"ActionSpotter: action spotting with a learned video browser"};
    app.name(args.empty() ? "actionspotter" : args[0]);
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    auto *seed_opt = app.add_option("--seed", seed, "Override the seed of the run");
    app.add_option("--out", g.out, "Output directory (train, synth, report) or file (redraw, eval)");
    app.add_flag("--force", g.force, "Allow overwriting existing outputs");

    std::string train_config, synth_config, gt, pred, ckpt, detections, manifest;
    auto *train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
    train_cmd->add_option("--config", train_config, "Config JSON (hyperparameters, dataset paths, actions)")
        ->required();
    auto *eval_cmd = app.add_subcommand("eval", "Score predictions or a checkpoint against ground truth");
    eval_cmd->add_option("--gt", gt, "annotations.json or a dataset directory")->required();
    auto *pred_opt = eval_cmd->add_option("--pred", pred, "Predictions JSONL");
    auto *ckpt_opt = eval_cmd->add_option("--ckpt", ckpt, "Checkpoint; needs --gt to be a dataset directory");
    pred_opt->excludes(ckpt_opt);
    auto *redraw_cmd = app.add_subcommand("redraw", "Turn detection segments into spots at their centers");
    redraw_cmd->add_option("--detections", detections, "Detections JSON")->required();
    auto *synth_cmd = app.add_subcommand("synth", "Write a synthetic benchmark (train/ and val/ splits)");
    synth_cmd->add_option("--config", synth_config, "Synthetic benchmark config JSON (defaults if omitted)");
    auto *report_cmd = app.add_subcommand("report", "Run an experiment manifest and write tables and curves");
    report_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();
    for (auto *sub : {train_cmd, eval_cmd, redraw_cmd, synth_cmd, report_cmd})
        sub->fallthrough();

    std::vector<const char *> argv;
    for (const auto &a : args)
        argv.push_back(a.c_str());
    if (argv.empty())
        argv.push_back("actionspotter");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (seed_opt->count() > 0)
        g.seed = seed;

    try {
        if (train_cmd->parsed())
            return cmd_train(g, train_config, out, err);
        if (eval_cmd->parsed())
            return cmd_eval(g, gt, pred, ckpt, out);
        if (redraw_cmd->parsed())
            return cmd_redraw(g, detections, out);
        if (synth_cmd->parsed())
            return cmd_synth(g, synth_config, out);
        if (report_cmd->parsed())
            return cmd_report(g, manifest, out, err);
    } catch (const ConfigError &e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CheckpointError &e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const LoadError &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ValidationError &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const CrossReferenceError &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const RangeError &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace actionspotter::cli
