// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace actionspotter {

/// Returned by frame_label for frames outside every ground-truth segment.
inline constexpr int kBackground = -1;

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-video backbone output: one row per frame (or per chunk of `chunk_span` frames).
struct FeatureSequence {
    std::string video_id;
    int chunk_span = 1;
    FeatureMatrix data;

    int frames() const { return static_cast<int>(data.rows()); }
    int dim() const { return static_cast<int>(data.cols()); }

    /// Frame index a spot on `row` reports: the center frame of the chunk.
    int timestamp_of(int row) const { return row * chunk_span + (chunk_span - 1) / 2; }

    void validate() const;

    friend bool operator==(const FeatureSequence &, const FeatureSequence &) = default;
};

struct GroundTruthSegment {
    int label = 0;
    int start = 0;
    int end = 0;

    bool contains(int t) const { return start <= t && t <= end; }
    int center() const { return (start + end) / 2; }

    friend bool operator==(const GroundTruthSegment &, const GroundTruthSegment &) = default;
};

struct VideoAnnotation {
    std::string video_id;
    int num_frames = 0;
    std::vector<GroundTruthSegment> segments; // sorted by (start, end)

    friend bool operator==(const VideoAnnotation &, const VideoAnnotation &) = default;
};

struct AnnotationSet {
    int num_classes = 0;
    std::vector<VideoAnnotation> videos;

    const VideoAnnotation *find(const std::string &video_id) const;
    void validate() const;

    friend bool operator==(const AnnotationSet &, const AnnotationSet &) = default;
};

struct SpotPrediction {
    std::string video_id;
    int timestamp = 0;
    double likelihood = 0.0;
    int label = 0;

    friend bool operator==(const SpotPrediction &, const SpotPrediction &) = default;
};

using PredictionSet = std::vector<SpotPrediction>;

// Feature files: "ASPT", u16 version, u32 T, u32 D, u32 chunk_span, then T*D little-endian f64.
inline constexpr std::uint16_t kFeatureFileVersion = 1;

std::vector<std::uint8_t> encode_features(const FeatureSequence &seq);
FeatureSequence decode_features(const std::vector<std::uint8_t> &bytes, std::string video_id);
void write_feature_file(const FeatureSequence &seq, const std::filesystem::path &path);
/// The video id is taken from the file stem.
FeatureSequence read_feature_file(const std::filesystem::path &path);

AnnotationSet parse_annotations(const std::string &json_text);
std::string dump_annotations(const AnnotationSet &set);
AnnotationSet read_annotations(const std::filesystem::path &path);
void write_annotations(const AnnotationSet &set, const std::filesystem::path &path);

/// Class id of the earliest-starting segment containing t (ties: earliest end), else kBackground.
int frame_label(const VideoAnnotation &annotation, int t);

PredictionSet parse_predictions(const std::string &jsonl);
std::string dump_predictions(const PredictionSet &preds);
PredictionSet read_predictions(const std::filesystem::path &path);
void write_predictions(const PredictionSet &preds, const std::filesystem::path &path);

/// Throws CrossReferenceError for unknown videos and ValidationError for out-of-range timestamps.
void check_predictions(const PredictionSet &preds, const AnnotationSet &gts);

/// Features and annotations for one split, aligned by index.
struct Dataset {
    AnnotationSet annotations;
    std::vector<FeatureSequence> features;

    std::size_t size() const { return features.size(); }
    int feature_dim() const { return features.empty() ? 0 : features.front().dim(); }
    void validate() const;
};

// On disk a split is a directory: annotations.json plus features/<video_id>.aspt.
void write_dataset(const Dataset &ds, const std::filesystem::path &dir);
Dataset read_dataset(const std::filesystem::path &dir);

} // namespace actionspotter
