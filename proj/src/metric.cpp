// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/metric.hpp"

#include "actionspotter/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <unordered_map>

namespace actionspotter {

int MatchFlags::true_positives() const {
    return static_cast<int>(std::count(flags.begin(), flags.end(), Match::TruePositive));
}

bool ranks_before(const SpotPrediction &a, const SpotPrediction &b) {
    if (a.likelihood != b.likelihood)
        return a.likelihood > b.likelihood;
    if (a.video_id != b.video_id)
        return a.video_id < b.video_id;
    return a.timestamp < b.timestamp;
}

void rank_spots(std::vector<SpotPrediction> &spots) { std::stable_sort(spots.begin(), spots.end(), ranks_before); }

MatchFlags match_spots(std::span<const SpotPrediction> ranked, std::span<const ClassSegment> segments) {
    for (std::size_t i = 1; i < ranked.size(); ++i)
        if (ranks_before(ranked[i], ranked[i - 1]))
            throw ContractViolation("match_spots: spots are not in ranked order at position " + std::to_string(i));

    std::unordered_map<std::string, std::vector<std::size_t>> by_video;
    for (std::size_t i = 0; i < segments.size(); ++i)
        by_video[segments[i].video_id].push_back(i);
    for (auto &[video, idx] : by_video)
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return segments[a].start != segments[b].start ? segments[a].start < segments[b].start
                                                          : segments[a].end < segments[b].end;
        });

    std::vector<bool> matched(segments.size(), false);
    MatchFlags out;
    out.num_gt = static_cast<int>(segments.size());
    out.flags.reserve(ranked.size());
    for (const auto &spot : ranked) {
        Match flag = Match::FalsePositive;
        if (auto it = by_video.find(spot.video_id); it != by_video.end()) {
            for (std::size_t i : it->second) {
                const auto &seg = segments[i];
                if (seg.start > spot.timestamp)
                    break;
                if (!matched[i] && spot.timestamp <= seg.end) {
                    matched[i] = true;
                    flag = Match::TruePositive;
                    break;
                }
            }
        }
        out.flags.push_back(flag);
    }
    return out;
}

PRCurve pr_curve(const MatchFlags &flags) {
    if (flags.num_gt < 1)
        throw ContractViolation("pr_curve: class has no ground truth");
    PRCurve curve;
    curve.reserve(flags.flags.size());
    int tp = 0;
    for (std::size_t i = 0; i < flags.flags.size(); ++i) {
        if (flags.flags[i] == Match::TruePositive)
            ++tp;
        curve.push_back({static_cast<double>(tp) / static_cast<double>(i + 1),
                         static_cast<double>(tp) / static_cast<double>(flags.num_gt)});
    }
    return curve;
}

double average_precision(const PRCurve &curve) {
    // sweep from the tail so `envelope` is the best precision at any recall >= the current one
    double ap = 0.0;
    double envelope = 0.0;
    for (std::size_t i = curve.size(); i-- > 0;) {
        envelope = std::max(envelope, curve[i].precision);
        const double prev_recall = i == 0 ? 0.0 : curve[i - 1].recall;
        const double step = curve[i].recall - prev_recall;
        if (step > 0.0)
            ap += step * envelope;
    }
    return ap;
}

namespace {

double score_class(std::span<const SpotPrediction> ranked, std::span<const ClassSegment> segments) {
    return average_precision(pr_curve(match_spots(ranked, segments)));
}

std::vector<std::vector<ClassSegment>> segments_by_class(const AnnotationSet &gts) {
    int num_classes = gts.num_classes;
    for (const auto &v : gts.videos)
        for (const auto &s : v.segments)
            num_classes = std::max(num_classes, s.label + 1);
    std::vector<std::vector<ClassSegment>> out(num_classes);
    for (const auto &v : gts.videos)
        for (const auto &s : v.segments)
            out[s.label].push_back({v.video_id, s.start, s.end});
    return out;
}

} // namespace

MapReport spotting_map_report(const PredictionSet &preds, const AnnotationSet &gts) {
    check_predictions(preds, gts);
    const auto segments = segments_by_class(gts);
    std::vector<std::vector<SpotPrediction>> spots(segments.size());
    for (const auto &p : preds)
        if (p.label >= 0 && p.label < static_cast<int>(spots.size()))
            spots[p.label].push_back(p);

    MapReport report;
    double sum = 0.0;
    for (std::size_t c = 0; c < segments.size(); ++c) {
        if (segments[c].empty())
            continue;
        rank_spots(spots[c]);
        ClassReport row;
        row.label = static_cast<int>(c);
        row.ap = score_class(spots[c], segments[c]);
        row.num_gt = static_cast<int>(segments[c].size());
        row.num_spots = static_cast<int>(spots[c].size());
        sum += row.ap;
        report.per_class.push_back(row);
    }
    report.map = report.per_class.empty() ? 0.0 : sum / static_cast<double>(report.per_class.size());
    return report;
}

double spotting_map(const PredictionSet &preds, const AnnotationSet &gts) {
    return spotting_map_report(preds, gts).map;
}

std::string map_report_json(const MapReport &report) {
    nlohmann::json j;
    j["map"] = report.map;
    j["interpolation"] = "all-point";
    j["per_class"] = nlohmann::json::array();
    for (const auto &c : report.per_class)
        j["per_class"].push_back({{"label", c.label}, {"ap", c.ap}, {"num_gt", c.num_gt}, {"num_spots", c.num_spots}});
    return j.dump(2) + "\n";
}

MapAccumulator::MapAccumulator(AnnotationSet gts) : gts_(std::move(gts)) {
    auto segments = segments_by_class(gts_);
    classes_.resize(segments.size());
    for (std::size_t c = 0; c < segments.size(); ++c) {
        if (!segments[c].empty())
            scored_.push_back(static_cast<int>(c));
        classes_[c].segments = std::move(segments[c]);
    }
}

void MapAccumulator::insert(const SpotPrediction &spot) {
    const auto *video = gts_.find(spot.video_id);
    if (!video)
        throw CrossReferenceError("accumulator: unknown video '" + spot.video_id + "'");
    if (spot.timestamp < 0 || spot.timestamp >= video->num_frames)
        throw ValidationError("accumulator: frame " + std::to_string(spot.timestamp) + " outside video '" +
                              spot.video_id + "'");
    ++inserted_;
    if (spot.label < 0 || spot.label >= static_cast<int>(classes_.size()))
        return;
    auto &cls = classes_[spot.label];
    cls.ranked.insert(std::upper_bound(cls.ranked.begin(), cls.ranked.end(), spot, ranks_before), spot);
    if (!cls.segments.empty())
        cls.ap = score_class(cls.ranked, cls.segments);
}

double MapAccumulator::map() const {
    if (scored_.empty())
        return 0.0;
    double sum = 0.0;
    for (int c : scored_)
        sum += classes_[c].ap;
    return sum / static_cast<double>(scored_.size());
}

double MapAccumulator::class_ap(int label) const {
    if (label < 0 || label >= static_cast<int>(classes_.size()))
        return 0.0;
    return classes_[label].ap;
}

} // namespace actionspotter
