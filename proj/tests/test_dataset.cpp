// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/dataset.hpp"
#include "actionspotter/errors.hpp"
#include "actionspotter/rng.hpp"
#include "actionspotter/synth.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>

namespace as = actionspotter;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string &name) {
    auto dir = fs::temp_directory_path() / ("as_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::uint8_t> raw_feature_file(std::uint32_t T, std::uint32_t D, std::uint32_t span,
                                           const std::vector<double> &values) {
    std::vector<std::uint8_t> b{'A', 'S', 'P', 'T', 1, 0};
    for (std::uint32_t v : {T, D, span})
        for (int i = 0; i < 4; ++i)
            b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    for (double x : values) {
        const auto bits = std::bit_cast<std::uint64_t>(x);
        for (int i = 0; i < 8; ++i)
            b.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return b;
}

as::LoadError::Kind load_error_kind(const std::vector<std::uint8_t> &bytes) {
    try {
        as::decode_features(bytes, "v");
    } catch (const as::LoadError &e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a load error";
    return as::LoadError::Kind::Io;
}

} // namespace

TEST(FeatureFile, DecodesSmallMatrix) {
    const auto seq = as::decode_features(raw_feature_file(3, 2, 1, {1, 2, 3, 4, 5, 6}), "clip");
    ASSERT_EQ(seq.frames(), 3);
    ASSERT_EQ(seq.dim(), 2);
    EXPECT_EQ(seq.video_id, "clip");
    EXPECT_EQ(seq.data(0, 1), 2.0);
    EXPECT_EQ(seq.data(2, 0), 5.0);
}

TEST(FeatureFile, RoundTripIsBitExact) {
    as::Rng rng(11);
    as::FeatureSequence seq;
    seq.video_id = "rand";
    seq.chunk_span = 16;
    seq.data.resize(120, 16);
    for (int r = 0; r < 120; ++r)
        for (int c = 0; c < 16; ++c)
            seq.data(r, c) = as::gaussian(rng) * 1e3;
    const auto dir = temp_dir("features");
    as::write_feature_file(seq, dir / "rand.aspt");
    const auto back = as::read_feature_file(dir / "rand.aspt");
    EXPECT_EQ(back, seq);
}

TEST(FeatureFile, DistinctLoadErrors) {
    using K = as::LoadError::Kind;
    EXPECT_EQ(load_error_kind(raw_feature_file(3, 1, 1, {1, 2, 3, 4})), K::TruncatedPayload);
    EXPECT_EQ(load_error_kind(raw_feature_file(3, 2, 1, {1, 2, 3, 4})), K::TruncatedPayload);
    auto bad_magic = raw_feature_file(1, 1, 1, {1});
    bad_magic[0] = 'X';
    EXPECT_EQ(load_error_kind(bad_magic), K::MalformedHeader);
    EXPECT_EQ(load_error_kind({'A', 'S'}), K::MalformedHeader);
    EXPECT_EQ(load_error_kind(raw_feature_file(0, 1, 1, {})), K::MalformedHeader);
    EXPECT_EQ(load_error_kind(raw_feature_file(1, 2, 1, {1, std::numeric_limits<double>::quiet_NaN()})),
              K::NonFinite);
    EXPECT_THROW(as::read_feature_file("/nonexistent/x.aspt"), as::LoadError);
}

TEST(Annotations, ParsesAndSorts) {
    const auto set = as::parse_annotations(R"({"num_classes": 2, "videos": [
        {"id": "a", "num_frames": 100, "segments": [{"label": 0, "start": 10, "end": 20}]},
        {"id": "b", "num_frames": 100, "segments": [{"label": 1, "start": 30, "end": 40},
                                                    {"label": 0, "start": 5, "end": 9}]}]})");
    ASSERT_EQ(set.videos.size(), 2u);
    EXPECT_EQ(set.videos[0].segments.size(), 1u);
    EXPECT_EQ(set.videos[1].segments[0].start, 5);
    EXPECT_EQ(set.videos[1].segments[1].start, 30);
    EXPECT_EQ(as::parse_annotations(as::dump_annotations(set)), set);
}

TEST(Annotations, ValidationErrorsNameTheVideo) {
    auto expect_error = [](const std::string &doc) {
        try {
            as::parse_annotations(doc);
            FAIL() << "no error for " << doc;
        } catch (const as::ValidationError &e) {
            EXPECT_NE(std::string(e.what()).find("clipx"), std::string::npos) << e.what();
        }
    };
    expect_error(R"({"num_classes": 1, "videos": [{"id": "clipx", "num_frames": 100,
                    "segments": [{"label": 0, "start": 20, "end": 10}]}]})");
    expect_error(R"({"num_classes": 1, "videos": [{"id": "clipx", "num_frames": 30,
                    "segments": [{"label": 0, "start": 20, "end": 30}]}]})");
    expect_error(R"({"num_classes": 1, "videos": [{"id": "clipx", "num_frames": 30,
                    "segments": [{"label": 3, "start": 2, "end": 3}]}]})");
}

TEST(FrameLabel, Examples) {
    as::VideoAnnotation a{"v", 50, {{2, 10, 20}}};
    EXPECT_EQ(as::frame_label(a, 15), 2);
    EXPECT_EQ(as::frame_label(a, 9), as::kBackground);
    EXPECT_THROW(as::frame_label(a, 50), as::RangeError);
    EXPECT_THROW(as::frame_label(a, -1), as::RangeError);
}

TEST(FrameLabel, OverlapTieBreakMatchesEnumeratedRule) {
    // sorted by (start, end): the first containing segment wins
    as::VideoAnnotation a{"v", 40, {{1, 10, 20}, {3, 15, 25}, {2, 15, 18}, {0, 30, 30}}};
    std::stable_sort(a.segments.begin(), a.segments.end(), [](const auto &x, const auto &y) {
        return x.start != y.start ? x.start < y.start : x.end < y.end;
    });
    EXPECT_EQ(as::frame_label(a, 18), 1);
    for (int t = 0; t < 40; ++t) {
        int expected = as::kBackground;
        int best_start = 1 << 30, best_end = 1 << 30;
        for (const auto &s : a.segments)
            if (s.contains(t) && (s.start < best_start || (s.start == best_start && s.end < best_end))) {
                expected = s.label;
                best_start = s.start;
                best_end = s.end;
            }
        EXPECT_EQ(as::frame_label(a, t), expected) << "t=" << t;
    }
}

TEST(FrameLabel, TotalAndConsistentWithMembership) {
    as::SynthConfig cfg;
    cfg.train_videos = 20;
    cfg.val_videos = 0;
    const auto s = as::synth_generate(cfg);
    for (const auto &v : s.train.annotations.videos)
        for (int t = 0; t < v.num_frames; ++t) {
            bool inside = false;
            for (const auto &seg : v.segments)
                inside |= seg.contains(t);
            EXPECT_EQ(as::frame_label(v, t) != as::kBackground, inside);
        }
}

TEST(Predictions, EmptyAndRoundTrip) {
    EXPECT_TRUE(as::parse_predictions("").empty());
    as::Rng rng(5);
    as::PredictionSet preds;
    for (int i = 0; i < 1000; ++i)
        preds.push_back({"video_" + std::to_string(as::uniform_int(rng, 0, 9)), as::uniform_int(rng, 0, 119),
                         as::uniform01(rng), as::uniform_int(rng, 0, 3)});
    const auto dir = temp_dir("preds");
    as::write_predictions(preds, dir / "p.jsonl");
    EXPECT_EQ(as::read_predictions(dir / "p.jsonl"), preds);
}

TEST(Predictions, RejectsNonFiniteScores) {
    EXPECT_THROW(as::parse_predictions(R"({"video": "a", "t": 1, "score": NaN, "label": 0})"), as::ValidationError);
    EXPECT_THROW(as::parse_predictions(R"({"video": "a", "t": 1, "score": "NaN", "label": 0})"),
                 as::ValidationError);
    EXPECT_THROW(as::parse_predictions(R"({"video": "a", "t": 1, "score": -Infinity, "label": 0})"),
                 as::ValidationError);
}

TEST(Predictions, UnknownVideoIsCrossReferenceError) {
    as::AnnotationSet gts{1, {{"a", 10, {{0, 1, 2}}}}};
    EXPECT_NO_THROW(as::check_predictions({{"a", 1, 0.5, 0}}, gts));
    EXPECT_THROW(as::check_predictions({{"zzz", 1, 0.5, 0}}, gts), as::CrossReferenceError);
}

TEST(Synth, DeterministicPerSeed) {
    as::SynthConfig cfg;
    cfg.train_videos = 10;
    cfg.val_videos = 3;
    const auto a = as::synth_generate(cfg);
    const auto b = as::synth_generate(cfg);
    EXPECT_EQ(a.train.features, b.train.features);
    EXPECT_EQ(a.train.annotations, b.train.annotations);
    EXPECT_EQ(a.val.features, b.val.features);
    cfg.seed = 1;
    EXPECT_NE(as::synth_generate(cfg).train.features, a.train.features);
}

TEST(Synth, NoiseFreeRowsEqualPrototypes) {
    as::SynthConfig cfg;
    cfg.noise = 0.0;
    cfg.train_videos = 10;
    cfg.val_videos = 0;
    const auto s = as::synth_generate(cfg);
    for (std::size_t i = 0; i < s.train.features.size(); ++i) {
        const auto &f = s.train.features[i];
        const auto &a = s.train.annotations.videos[i];
        for (int t = 0; t < f.frames(); ++t) {
            const int label = as::frame_label(a, t);
            const int proto = label == as::kBackground ? cfg.num_classes : label;
            EXPECT_EQ(f.data.row(t), s.prototypes.row(proto)) << a.video_id << " t=" << t;
        }
    }
}

TEST(Synth, PrototypesPairwiseSeparated) {
    as::SynthConfig cfg;
    cfg.separation = 3.5;
    const auto s = as::synth_generate(cfg);
    for (int i = 0; i < s.prototypes.rows(); ++i)
        for (int j = i + 1; j < s.prototypes.rows(); ++j)
            EXPECT_NEAR((s.prototypes.row(i) - s.prototypes.row(j)).norm(), 3.5, 1e-12);
}

TEST(Synth, SegmentsNeverOverlapAndBackgroundExists) {
    as::SynthConfig cfg;
    cfg.seed = 3;
    const auto s = as::synth_generate(cfg);
    for (const auto &v : s.train.annotations.videos) {
        ASSERT_GE(v.segments.size(), 1u);
        ASSERT_LE(v.segments.size(), 4u);
        int covered = 0;
        for (std::size_t k = 0; k < v.segments.size(); ++k) {
            const auto &seg = v.segments[k];
            EXPECT_GE(seg.end - seg.start + 1, cfg.min_segment_length);
            EXPECT_LE(seg.end - seg.start + 1, cfg.max_segment_length);
            covered += seg.end - seg.start + 1;
            if (k > 0)
                EXPECT_GT(seg.start, v.segments[k - 1].end + 1) << v.video_id;
        }
        EXPECT_LT(covered, v.num_frames);
    }
}

TEST(Synth, NearestPrototypeClassifierSeparatesFrames) {
    as::SynthConfig cfg; // C=4, 200 videos, D=16
    cfg.val_videos = 0;
    const auto s = as::synth_generate(cfg);
    long correct = 0, total = 0;
    for (std::size_t i = 0; i < s.train.features.size(); ++i) {
        const auto &f = s.train.features[i];
        const auto &a = s.train.annotations.videos[i];
        for (int t = 0; t < f.frames(); ++t) {
            Eigen::Index best;
            (s.prototypes.rowwise() - f.data.row(t)).rowwise().squaredNorm().minCoeff(&best);
            const int label = as::frame_label(a, t);
            correct += best == (label == as::kBackground ? cfg.num_classes : label);
            ++total;
        }
    }
    EXPECT_GT(static_cast<double>(correct) / static_cast<double>(total), 0.95);
}

TEST(Synth, InfeasiblePackingIsConfigError) {
    as::SynthConfig cfg;
    cfg.frames = 30;
    cfg.max_segments = 4;
    cfg.max_segment_length = 10;
    EXPECT_THROW(as::synth_generate(cfg), as::ConfigError);
    EXPECT_THROW(as::synth_config_from_json(R"({"frames": 30, "max_segment_length": 10})"), as::ConfigError);
}

TEST(Synth, ConfigJsonRoundTrip) {
    as::SynthConfig cfg;
    cfg.seed = 99;
    cfg.noise = 0.25;
    cfg.cued = true;
    cfg.feature_dim = 8;
    const auto back = as::synth_config_from_json(as::synth_config_to_json(cfg));
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.noise, 0.25);
    EXPECT_TRUE(back.cued);
}

TEST(Dataset, DirectoryRoundTrip) {
    as::SynthConfig cfg;
    cfg.train_videos = 4;
    cfg.val_videos = 0;
    const auto s = as::synth_generate(cfg);
    const auto dir = temp_dir("dataset");
    as::write_dataset(s.train, dir);
    const auto back = as::read_dataset(dir);
    EXPECT_EQ(back.annotations, s.train.annotations);
    EXPECT_EQ(back.features, s.train.features);
    EXPECT_THROW(as::read_dataset(dir / "missing"), as::ConfigError);
}
