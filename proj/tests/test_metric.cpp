// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/errors.hpp"
#include "actionspotter/metric.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace as = actionspotter;

namespace {

std::vector<as::SpotPrediction> spots(std::initializer_list<std::pair<int, double>> tl, const char *video = "v") {
    std::vector<as::SpotPrediction> out;
    for (auto [t, l] : tl)
        out.push_back({video, t, l, 0});
    return out;
}

std::vector<as::Match> flags(std::initializer_list<int> bits) {
    std::vector<as::Match> out;
    for (int b : bits)
        out.push_back(b ? as::Match::TruePositive : as::Match::FalsePositive);
    return out;
}

} // namespace

TEST(Ranking, LikelihoodThenVideoThenTimestamp) {
    std::vector<as::SpotPrediction> s{{"b", 3, 0.5, 0}, {"a", 9, 0.5, 0}, {"a", 2, 0.5, 0}, {"z", 0, 0.9, 0}};
    as::rank_spots(s);
    EXPECT_EQ(s[0].video_id, "z");
    EXPECT_EQ(s[1].timestamp, 2);
    EXPECT_EQ(s[2].timestamp, 9);
    EXPECT_EQ(s[3].video_id, "b");
}

TEST(MatchSpots, GreedyExample) {
    const std::vector<as::ClassSegment> segs{{"v", 10, 20}, {"v", 30, 40}};
    const auto m = as::match_spots(spots({{15, .9}, {16, .8}, {35, .7}}), segs);
    EXPECT_EQ(m.flags, flags({1, 0, 1}));
    EXPECT_EQ(m.num_gt, 2);
    EXPECT_EQ(m.true_positives(), 2);
}

TEST(MatchSpots, OtherVideoNeverMatches) {
    const std::vector<as::ClassSegment> segs{{"other", 0, 50}};
    EXPECT_EQ(as::match_spots(spots({{5, .9}}), segs).flags, flags({0}));
}

TEST(MatchSpots, OverlapConsumesEarliestStart) {
    const std::vector<as::ClassSegment> segs{{"v", 5, 30}, {"v", 10, 12}};
    // the first spot takes [5,30]; the second can still use [10,12]
    EXPECT_EQ(as::match_spots(spots({{11, .9}, {11, .8}, {11, .7}}), segs).flags, flags({1, 1, 0}));
}

TEST(MatchSpots, UnsortedInputIsContractViolation) {
    const std::vector<as::ClassSegment> segs{{"v", 0, 5}};
    EXPECT_THROW(as::match_spots(spots({{1, .1}, {2, .9}}), segs), as::ContractViolation);
}

TEST(PrCurve, MonotoneRecallAndErrors) {
    as::MatchFlags m{flags({1, 0, 1, 0, 0}), 3};
    const auto curve = as::pr_curve(m);
    ASSERT_EQ(curve.size(), 5u);
    EXPECT_DOUBLE_EQ(curve[0].precision, 1.0);
    EXPECT_DOUBLE_EQ(curve[2].recall, 2.0 / 3.0);
    for (std::size_t i = 1; i < curve.size(); ++i)
        EXPECT_GE(curve[i].recall, curve[i - 1].recall);
    EXPECT_THROW(as::pr_curve({flags({1}), 0}), as::ContractViolation);
}

TEST(AveragePrecision, Examples) {
    EXPECT_NEAR(as::average_precision(as::pr_curve({flags({1, 0, 1}), 2})), 5.0 / 6.0, 1e-12);
    EXPECT_DOUBLE_EQ(as::average_precision(as::pr_curve({flags({1, 1}), 2})), 1.0);
    EXPECT_DOUBLE_EQ(as::average_precision(as::pr_curve({flags({0, 0}), 2})), 0.0);
    EXPECT_DOUBLE_EQ(as::average_precision(as::pr_curve({{}, 2})), 0.0);
    // a missed segment caps AP at the achieved recall
    EXPECT_DOUBLE_EQ(as::average_precision(as::pr_curve({flags({1}), 2})), 0.5);
}

TEST(SpottingMap, HandComputedFixture) {
    as::AnnotationSet gts{1, {{"v", 50, {{0, 10, 20}, {0, 30, 40}}}}};
    const as::PredictionSet preds{{"v", 15, .9, 0}, {"v", 16, .8, 0}, {"v", 35, .7, 0}};
    EXPECT_NEAR(as::spotting_map(preds, gts), 5.0 / 6.0, 1e-12);
    EXPECT_DOUBLE_EQ(as::spotting_map({}, gts), 0.0);
}

TEST(SpottingMap, SkipsClassesWithoutGroundTruth) {
    as::AnnotationSet gts{3, {{"v", 50, {{1, 10, 20}}}}};
    const as::PredictionSet preds{{"v", 15, .9, 1}, {"v", 15, .95, 2}};
    const auto report = as::spotting_map_report(preds, gts);
    EXPECT_DOUBLE_EQ(report.map, 1.0);
    ASSERT_EQ(report.per_class.size(), 1u);
    EXPECT_EQ(report.per_class[0].label, 1);
    EXPECT_THROW(as::spotting_map({{"nope", 1, .5, 1}}, gts), as::CrossReferenceError);
}

TEST(SpottingMap, MatchesBruteForceOnRandomInstances) {
    as::Rng rng(2024);
    for (int i = 0; i < 300; ++i) {
        const auto inst = oracle::random_instance(rng);
        EXPECT_NEAR(as::spotting_map(inst.preds, inst.gts), oracle::map(inst.preds, inst.gts), 1e-9) << "case " << i;
    }
}

TEST(SpottingMap, InvariantUnderMonotoneScoreTransform) {
    as::Rng rng(77);
    for (int i = 0; i < 100; ++i) {
        auto inst = oracle::random_instance(rng);
        const double before = as::spotting_map(inst.preds, inst.gts);
        for (auto &p : inst.preds)
            p.likelihood = std::exp(3.0 * p.likelihood) - 5.0;
        EXPECT_DOUBLE_EQ(as::spotting_map(inst.preds, inst.gts), before);
    }
}

TEST(SpottingMap, BoundedAndPerfectForCenters) {
    as::Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const auto inst = oracle::random_instance(rng);
        const double m = as::spotting_map(inst.preds, inst.gts);
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, 1.0);
        as::PredictionSet centers;
        for (const auto &v : inst.gts.videos)
            for (const auto &s : v.segments)
                centers.push_back({v.video_id, s.center(), 1.0, s.label});
        bool any = false;
        for (const auto &v : inst.gts.videos)
            any |= !v.segments.empty();
        if (any)
            EXPECT_DOUBLE_EQ(as::spotting_map(centers, inst.gts), 1.0);
    }
}

TEST(MapReport, JsonShape) {
    as::AnnotationSet gts{1, {{"v", 50, {{0, 10, 20}, {0, 30, 40}}}}};
    const auto json = as::map_report_json(as::spotting_map_report({{"v", 15, .9, 0}}, gts));
    EXPECT_NE(json.find("\"map\""), std::string::npos);
    EXPECT_NE(json.find("all-point"), std::string::npos);
    EXPECT_NE(json.find("\"per_class\""), std::string::npos);
}

TEST(MapAccumulator, EqualsFromScratchAfterEveryInsertion) {
    as::Rng rng(9);
    for (int trace = 0; trace < 10; ++trace) {
        auto inst = oracle::random_instance(rng, 4, 3, 0);
        as::MapAccumulator acc(inst.gts);
        as::PredictionSet inserted;
        EXPECT_DOUBLE_EQ(acc.map(), 0.0);
        for (int i = 0; i < 200; ++i) {
            as::SpotPrediction p{inst.gts.videos[as::uniform_int(rng, 0, static_cast<int>(inst.gts.videos.size()) - 1)]
                                     .video_id,
                                 as::uniform_int(rng, 0, 29), as::uniform_int(rng, 0, 20) / 20.0,
                                 as::uniform_int(rng, 0, inst.gts.num_classes - 1)};
            acc.insert(p);
            inserted.push_back(p);
            ASSERT_NEAR(acc.map(), as::spotting_map(inserted, inst.gts), 1e-12) << "trace " << trace << " step " << i;
        }
        EXPECT_EQ(acc.size(), 200u);
    }
}

TEST(MapAccumulator, RejectsUnknownVideoAndBadTimestamp) {
    as::MapAccumulator acc(as::AnnotationSet{1, {{"v", 10, {{0, 1, 2}}}}});
    EXPECT_THROW(acc.insert({"w", 1, .5, 0}), as::CrossReferenceError);
    EXPECT_THROW(acc.insert({"v", 10, .5, 0}), as::ValidationError);
}
