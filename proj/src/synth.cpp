// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/synth.hpp"

#include "actionspotter/errors.hpp"
#include "actionspotter/rng.hpp"

#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <cstdio>

namespace actionspotter {

using nlohmann::json;

void SynthConfig::validate() const {
    auto need = [](bool ok, const char *msg) {
        if (!ok)
            throw ConfigError(std::string("synth config: ") + msg);
    };
    need(num_classes >= 1, "num_classes must be >= 1");
    need(train_videos >= 0 && val_videos >= 0, "video counts must be >= 0");
    need(frames >= 2, "frames must be >= 2");
    need(min_segments >= 0 && min_segments <= max_segments, "need 0 <= min_segments <= max_segments");
    need(min_segment_length >= 1 && min_segment_length <= max_segment_length,
         "need 1 <= min_segment_length <= max_segment_length");
    need(separation > 0.0 && noise >= 0.0, "separation must be > 0 and noise >= 0");
    const int prototypes = num_classes + 1 + (cued ? 1 : 0);
    need(feature_dim >= prototypes, "feature_dim too small to hold pairwise-separated prototypes");
    // worst case: every segment at max length, one-frame gaps, plus at least one background frame
    const long worst = static_cast<long>(max_segments) * max_segment_length + std::max(0, max_segments - 1) + 1;
    if (worst > frames)
        throw ConfigError("synth config: infeasible packing, " + std::to_string(max_segments) + " segments of up to " +
                          std::to_string(max_segment_length) + " frames do not fit in " + std::to_string(frames) +
                          " frames with background");
}

namespace {

VideoAnnotation place_segments(const SynthConfig &cfg, Rng &rng, std::string id) {
    VideoAnnotation ann;
    ann.video_id = std::move(id);
    ann.num_frames = cfg.frames;
    const int k = uniform_int(rng, cfg.min_segments, cfg.max_segments);
    std::vector<int> lengths(k);
    int total = 0;
    for (auto &len : lengths) {
        len = uniform_int(rng, cfg.min_segment_length, cfg.max_segment_length);
        total += len;
    }
    // mandatory frames: one gap frame between neighbours, one leading frame in cued mode
    const int lead = cfg.cued ? 1 : 0;
    const int mandatory = std::max(0, k - 1) + lead;
    const int free = cfg.frames - total - mandatory;
    std::vector<int> cuts(k);
    for (auto &c : cuts)
        c = uniform_int(rng, 0, free);
    std::sort(cuts.begin(), cuts.end());
    int cursor = 0;
    int prev_cut = 0;
    for (int i = 0; i < k; ++i) {
        cursor += cuts[i] - prev_cut + (i == 0 ? lead : 1);
        prev_cut = cuts[i];
        const int label = uniform_int(rng, 0, cfg.num_classes - 1);
        ann.segments.push_back({label, cursor, cursor + lengths[i] - 1});
        cursor += lengths[i];
    }
    return ann;
}

FeatureSequence render(const SynthConfig &cfg, const FeatureMatrix &protos, const VideoAnnotation &ann, Rng &rng) {
    const int background = cfg.num_classes;
    const int action = cfg.num_classes + 1;
    std::vector<int> row_proto(cfg.frames, background);
    for (const auto &s : ann.segments) {
        for (int t = s.start; t <= s.end; ++t)
            row_proto[t] = cfg.cued ? action : s.label;
        if (cfg.cued)
            row_proto[s.start - 1] = s.label;
    }
    FeatureSequence seq;
    seq.video_id = ann.video_id;
    seq.chunk_span = 1;
    seq.data.resize(cfg.frames, cfg.feature_dim);
    for (int t = 0; t < cfg.frames; ++t)
        for (int d = 0; d < cfg.feature_dim; ++d)
            seq.data(t, d) = protos(row_proto[t], d) + (cfg.noise > 0.0 ? cfg.noise * gaussian(rng) : 0.0);
    return seq;
}

Dataset make_split(const SynthConfig &cfg, const FeatureMatrix &protos, Rng &rng, int count, const char *prefix) {
    Dataset ds;
    ds.annotations.num_classes = cfg.num_classes;
    for (int i = 0; i < count; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%04d", prefix, i);
        auto ann = place_segments(cfg, rng, id);
        ds.features.push_back(render(cfg, protos, ann, rng));
        ds.annotations.videos.push_back(std::move(ann));
    }
    return ds;
}

} // namespace

SynthSplits synth_generate(const SynthConfig &cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int count = cfg.num_classes + 1 + (cfg.cued ? 1 : 0);
    Eigen::MatrixXd raw(cfg.feature_dim, count);
    for (int c = 0; c < count; ++c)
        for (int d = 0; d < cfg.feature_dim; ++d)
            raw(d, c) = gaussian(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() *
                              Eigen::MatrixXd::Identity(cfg.feature_dim, count);
    SynthSplits out;
    // orthonormal directions scaled by s/sqrt(2) are exactly s apart pairwise
    out.prototypes = (q.transpose() * (cfg.separation / std::sqrt(2.0))).eval();
    out.train = make_split(cfg, out.prototypes, rng, cfg.train_videos, "train");
    out.val = make_split(cfg, out.prototypes, rng, cfg.val_videos, "val");
    return out;
}

SynthConfig synth_config_from_json(const std::string &json_text) {
    SynthConfig cfg;
    try {
        const json j = json::parse(json_text);
        cfg.num_classes = j.value("num_classes", cfg.num_classes);
        cfg.train_videos = j.value("train_videos", cfg.train_videos);
        cfg.val_videos = j.value("val_videos", cfg.val_videos);
        cfg.frames = j.value("frames", cfg.frames);
        cfg.min_segments = j.value("min_segments", cfg.min_segments);
        cfg.max_segments = j.value("max_segments", cfg.max_segments);
        cfg.min_segment_length = j.value("min_segment_length", cfg.min_segment_length);
        cfg.max_segment_length = j.value("max_segment_length", cfg.max_segment_length);
        cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
        cfg.separation = j.value("separation", cfg.separation);
        cfg.noise = j.value("noise", cfg.noise);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.cued = j.value("cued", cfg.cued);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("synth config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string synth_config_to_json(const SynthConfig &cfg) {
    const json j{{"num_classes", cfg.num_classes},
                 {"train_videos", cfg.train_videos},
                 {"val_videos", cfg.val_videos},
                 {"frames", cfg.frames},
                 {"min_segments", cfg.min_segments},
                 {"max_segments", cfg.max_segments},
                 {"min_segment_length", cfg.min_segment_length},
                 {"max_segment_length", cfg.max_segment_length},
                 {"feature_dim", cfg.feature_dim},
                 {"separation", cfg.separation},
                 {"noise", cfg.noise},
                 {"seed", cfg.seed},
                 {"cued", cfg.cued}};
    return j.dump(2) + "\n";
}

} // namespace actionspotter
