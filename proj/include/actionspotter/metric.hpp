// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "actionspotter/dataset.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace actionspotter {

// Spotting mAP: per class, spots are ranked by likelihood and greedily matched to ground-truth
// segments of the same video; a spot is a true positive iff its timestamp falls inside a segment
// that no higher-ranked spot has claimed. AP is the area under the precision envelope
// (all-point interpolation) and mAP is the unweighted mean over classes that have ground truth.

enum class Match : std::uint8_t { FalsePositive, TruePositive };

struct MatchFlags {
    std::vector<Match> flags;
    int num_gt = 0;

    int true_positives() const;
};

struct PRPoint {
    double precision = 0.0;
    double recall = 0.0;
};

using PRCurve = std::vector<PRPoint>;

/// A ground-truth segment of one class, tagged with its video.
struct ClassSegment {
    std::string video_id;
    int start = 0;
    int end = 0;
};

/// Ranking order: likelihood descending, then video id, then timestamp ascending.
bool ranks_before(const SpotPrediction &a, const SpotPrediction &b);
void rank_spots(std::vector<SpotPrediction> &spots);

/// Spots must already be ranked (ContractViolation otherwise). When several unmatched segments
/// contain a timestamp, the earliest-starting one is consumed.
MatchFlags match_spots(std::span<const SpotPrediction> ranked, std::span<const ClassSegment> segments);

/// Requires num_gt >= 1.
PRCurve pr_curve(const MatchFlags &flags);

double average_precision(const PRCurve &curve);

struct ClassReport {
    int label = 0;
    double ap = 0.0;
    int num_gt = 0;
    int num_spots = 0;
};

struct MapReport {
    double map = 0.0;
    std::vector<ClassReport> per_class; // only classes with ground truth, ascending label
};

/// Pooled spotting mAP over a whole annotation set. Throws CrossReferenceError for predictions
/// on unknown videos.
MapReport spotting_map_report(const PredictionSet &preds, const AnnotationSet &gts);
double spotting_map(const PredictionSet &preds, const AnnotationSet &gts);

/// JSON document written by the `eval` command.
std::string map_report_json(const MapReport &report);

/// Incrementally maintained spotting mAP. Inserting a spot re-ranks and re-scores only the
/// spot's class; map() always equals spotting_map() over the inserted spots.
class MapAccumulator {
public:
    explicit MapAccumulator(AnnotationSet gts);

    void insert(const SpotPrediction &spot);
    double map() const;
    double class_ap(int label) const;

    const AnnotationSet &ground_truth() const { return gts_; }
    std::size_t size() const { return inserted_; }

private:
    struct ClassState {
        std::vector<ClassSegment> segments;
        std::vector<SpotPrediction> ranked;
        double ap = 0.0;
    };

    AnnotationSet gts_;
    std::vector<ClassState> classes_;
    std::vector<int> scored_; // labels with ground truth, ascending
    std::size_t inserted_ = 0;
};

} // namespace actionspotter
