// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "actionspotter/dataset.hpp"
#include "actionspotter/env.hpp"
#include "actionspotter/trainer.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace actionspotter {

struct DetectionSegment {
    std::string video_id;
    int label = 0;
    int start = 0;
    int end = 0;
    double score = 0.0;
};

/// One spot per detection at floor((start + end) / 2), score and label passed through.
PredictionSet redraw_detections(const std::vector<DetectionSegment> &segments);

/// {"detections": [{video, label, start, end, score}]}
std::vector<DetectionSegment> parse_detections(const std::string &json_text);
std::vector<DetectionSegment> read_detections(const std::filesystem::path &path);

/// Per frame: 1 at each segment center floor((I + J) / 2), 0 elsewhere.
std::vector<int> center_targets(const VideoAnnotation &annotation);

/// Center targets mapped onto feature rows (a row is positive if its chunk holds a center).
std::vector<int> row_center_targets(const VideoAnnotation &annotation, int rows, int chunk_span);

/// Per-frame classifier: Linear(D,H)+ReLU, Linear(H,H)+ReLU, then one or two output layers.
/// Naive: one C+1 output trained on center frames only (everything else background).
/// Multi-task: a 2-way centerness output and a C+1 class output on per-frame labels.
class SegmentationModel {
public:
    enum class Kind { Naive, MultiTask };

    SegmentationModel(Kind kind, int input_dim, int hidden, int num_classes);

    Kind kind() const { return kind_; }
    Eigen::VectorXd &params() { return params_; }
    const Eigen::VectorXd &params() const { return params_; }
    void init(Rng &rng);

    /// Loss over all frames of one video and its gradient (added into `grad` scaled by `scale`).
    double loss(const FeatureSequence &features, const VideoAnnotation &annotation, Eigen::VectorXd *grad,
                double scale = 1.0) const;

    /// Naive: a spot at every frame whose argmax is an action class, likelihood = that class's
    /// probability. Multi-task: a spot wherever the class argmax is an action, likelihood = the
    /// centerness probability.
    PredictionSet predict(const FeatureSequence &features) const;

private:
    struct Forward {
        Eigen::MatrixXd X, A1, A2, Oc, Ok; // columns are frames; Ok only for multi-task
    };
    Forward forward(const FeatureSequence &features) const;

    Kind kind_;
    int D_, H_, C_;
    Eigen::Index oW1_, ob1_, oW2_, ob2_, oWc_, obc_, oWk_, obk_;
    Eigen::VectorXd params_;
};

struct SegmentationResult {
    SegmentationModel model;
    double val_map = 0.0;
    int best_epoch = -1;
};

/// Adam on per-video losses, batches of hp.batch_size, epochs = hp.pretrain_epochs + hp.epochs,
/// early stopping on validation mAP with hp.patience.
SegmentationResult train_segmentation(SegmentationModel::Kind kind, const Dataset &train, const Dataset &val,
                                      const HyperParams &hp);

PredictionSet predict_segmentation(const SegmentationModel &model, const Dataset &data);

/// The network trained only with the supervised targets for the full epoch budget, browsing at
/// displacement 1, best epoch by validation mAP.
TrainResult supervised_actionspotter(const Dataset &train, const Dataset &val, const HyperParams &hp,
                                     const BrowseActionSet &actions);

/// Same hyperparameters with the GRU bypassed: heads read the raw feature.
HyperParams no_memory_variant(HyperParams hp);

/// Same hyperparameters with the browser replaced by a fixed stride.
HyperParams uniform_variant(HyperParams hp, int stride);

/// Moves one frame at a time and keeps exactly the segment centers with the true label and
/// likelihood 1; every other frame gets likelihood 0.
class OraclePolicy : public Policy {
public:
    const BrowseActionSet &actions() const override { return actions_; }
    void begin(const FeatureSequence &features, const VideoAnnotation *annotation) override;
    Decision decide(int row, Rng *rng) override;

private:
    BrowseActionSet actions_{{1}};
    const FeatureSequence *features_ = nullptr;
    const VideoAnnotation *annotation_ = nullptr;
    std::vector<int> centers_;
    std::vector<int> labels_;
};

/// Fixed-stride browsing with constant likelihood; SF and CL are not consulted. Used to measure
/// skip ratios of uniform subsampling without a model.
class StridePolicy : public Policy {
public:
    explicit StridePolicy(int stride) : actions_{{stride}} {}
    const BrowseActionSet &actions() const override { return actions_; }
    void begin(const FeatureSequence &, const VideoAnnotation *) override {}
    Decision decide(int row, Rng *rng) override;

private:
    BrowseActionSet actions_;
};

} // namespace actionspotter
