// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/baselines.hpp"

#include "actionspotter/errors.hpp"
#include "bytes.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace actionspotter {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

PredictionSet redraw_detections(const std::vector<DetectionSegment> &segments) {
    PredictionSet out;
    out.reserve(segments.size());
    for (const auto &s : segments) {
        if (s.start > s.end)
            throw ValidationError("detection on '" + s.video_id + "' has start " + std::to_string(s.start) +
                                  " after end " + std::to_string(s.end));
        // floor, also for negative sums
        const int sum = s.start + s.end;
        const int center = sum >= 0 ? sum / 2 : -((-sum + 1) / 2);
        out.push_back({s.video_id, center, s.score, s.label});
    }
    return out;
}

std::vector<DetectionSegment> parse_detections(const std::string &json_text) {
    std::vector<DetectionSegment> out;
    try {
        const json j = json::parse(json_text);
        for (const auto &d : j.at("detections")) {
            DetectionSegment s;
            s.video_id = d.at("video").get<std::string>();
            s.label = d.at("label").get<int>();
            s.start = d.at("start").get<int>();
            s.end = d.at("end").get<int>();
            s.score = d.at("score").get<double>();
            if (!std::isfinite(s.score))
                throw ValidationError("detection on '" + s.video_id + "' has a non-finite score");
            out.push_back(std::move(s));
        }
    } catch (const json::exception &e) {
        throw LoadError(LoadError::Kind::Schema, std::string("detections: ") + e.what());
    }
    return out;
}

std::vector<DetectionSegment> read_detections(const std::filesystem::path &path) {
    return parse_detections(detail::slurp(path));
}

std::vector<int> center_targets(const VideoAnnotation &annotation) {
    std::vector<int> out(static_cast<std::size_t>(std::max(0, annotation.num_frames)), 0);
    for (const auto &s : annotation.segments)
        out.at(static_cast<std::size_t>(s.center())) = 1;
    return out;
}

std::vector<int> row_center_targets(const VideoAnnotation &annotation, int rows, int chunk_span) {
    std::vector<int> out(static_cast<std::size_t>(rows), 0);
    for (const auto &s : annotation.segments) {
        const int row = s.center() / chunk_span;
        if (row < rows)
            out[static_cast<std::size_t>(row)] = 1;
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// per-frame segmentation baselines

SegmentationModel::SegmentationModel(Kind kind, int input_dim, int hidden, int num_classes)
    : kind_(kind), D_(input_dim), H_(hidden), C_(num_classes) {
    Index total = 0;
    auto add = [&total](Index n) {
        const Index at = total;
        total += n;
        return at;
    };
    oW1_ = add(Index(H_) * D_);
    ob1_ = add(H_);
    oW2_ = add(Index(H_) * H_);
    ob2_ = add(H_);
    oWc_ = add(Index(C_ + 1) * H_);
    obc_ = add(C_ + 1);
    oWk_ = kind_ == Kind::MultiTask ? add(Index(2) * H_) : total;
    obk_ = kind_ == Kind::MultiTask ? add(2) : total;
    params_ = VectorXd::Zero(total);
}

void SegmentationModel::init(Rng &rng) {
    params_.setZero();
    auto fill = [&](Index offset, Index count, Index fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Index i = 0; i < count; ++i)
            params_[offset + i] = bound * (2.0 * uniform01(rng) - 1.0);
    };
    fill(oW1_, Index(H_) * D_, D_);
    fill(oW2_, Index(H_) * H_, H_);
    fill(oWc_, Index(C_ + 1) * H_, H_);
    if (kind_ == Kind::MultiTask)
        fill(oWk_, Index(2) * H_, H_);
}

namespace {

using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;

MatrixXd column_softmax(const MatrixXd &logits) {
    MatrixXd p(logits.rows(), logits.cols());
    for (Index c = 0; c < logits.cols(); ++c) {
        const auto col = logits.col(c);
        p.col(c) = (col.array() - col.maxCoeff()).exp().matrix();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

} // namespace

SegmentationModel::Forward SegmentationModel::forward(const FeatureSequence &features) const {
    if (features.dim() != D_)
        throw ContractViolation("segmentation model: feature dimension mismatch");
    const double *p = params_.data();
    Forward f;
    f.X = features.data.transpose();
    f.A1 = ((CMap(p + oW1_, H_, D_) * f.X).colwise() + Eigen::Map<const VectorXd>(p + ob1_, H_)).cwiseMax(0.0);
    f.A2 = ((CMap(p + oW2_, H_, H_) * f.A1).colwise() + Eigen::Map<const VectorXd>(p + ob2_, H_)).cwiseMax(0.0);
    f.Oc = (CMap(p + oWc_, C_ + 1, H_) * f.A2).colwise() + Eigen::Map<const VectorXd>(p + obc_, C_ + 1);
    if (kind_ == Kind::MultiTask)
        f.Ok = (CMap(p + oWk_, 2, H_) * f.A2).colwise() + Eigen::Map<const VectorXd>(p + obk_, 2);
    return f;
}

double SegmentationModel::loss(const FeatureSequence &features, const VideoAnnotation &annotation, VectorXd *grad,
                               double scale) const {
    const auto f = forward(features);
    const Index T = f.X.cols();
    const auto centers = row_center_targets(annotation, static_cast<int>(T), features.chunk_span);
    // class targets: naive sees only the centers as actions, multi-task sees every frame's label
    std::vector<int> cls(static_cast<std::size_t>(T), C_);
    for (Index t = 0; t < T; ++t) {
        const int frame = std::min(features.timestamp_of(static_cast<int>(t)), annotation.num_frames - 1);
        const int label = frame_label(annotation, frame);
        if (kind_ == Kind::MultiTask)
            cls[t] = label == kBackground ? C_ : label;
    }
    if (kind_ == Kind::Naive)
        for (const auto &s : annotation.segments) {
            const Index row = s.center() / features.chunk_span;
            if (row < T)
                cls[row] = s.label;
        }

    const MatrixXd Pc = column_softmax(f.Oc);
    MatrixXd dOc = Pc;
    double loss = 0.0;
    for (Index t = 0; t < T; ++t) {
        loss -= std::log(std::max(Pc(cls[t], t), 1e-300));
        dOc(cls[t], t) -= 1.0;
    }
    MatrixXd dOk;
    if (kind_ == Kind::MultiTask) {
        const MatrixXd Pk = column_softmax(f.Ok);
        dOk = Pk;
        for (Index t = 0; t < T; ++t) {
            loss -= std::log(std::max(Pk(centers[t], t), 1e-300));
            dOk(centers[t], t) -= 1.0;
        }
    }
    const double norm = 1.0 / static_cast<double>(T);
    if (!grad)
        return loss * norm;

    VectorXd &g = *grad;
    double *gp = g.data();
    const double *p = params_.data();
    const double s = scale * norm;
    dOc *= s;
    MMap(gp + oWc_, C_ + 1, H_).noalias() += dOc * f.A2.transpose();
    Eigen::Map<VectorXd>(gp + obc_, C_ + 1) += dOc.rowwise().sum();
    MatrixXd dA2 = CMap(p + oWc_, C_ + 1, H_).transpose() * dOc;
    if (kind_ == Kind::MultiTask) {
        dOk *= s;
        MMap(gp + oWk_, 2, H_).noalias() += dOk * f.A2.transpose();
        Eigen::Map<VectorXd>(gp + obk_, 2) += dOk.rowwise().sum();
        dA2.noalias() += CMap(p + oWk_, 2, H_).transpose() * dOk;
    }
    dA2 = dA2.cwiseProduct((f.A2.array() > 0.0).cast<double>().matrix());
    MMap(gp + oW2_, H_, H_).noalias() += dA2 * f.A1.transpose();
    Eigen::Map<VectorXd>(gp + ob2_, H_) += dA2.rowwise().sum();
    const MatrixXd dA1 =
        (CMap(p + oW2_, H_, H_).transpose() * dA2).cwiseProduct((f.A1.array() > 0.0).cast<double>().matrix());
    MMap(gp + oW1_, H_, D_).noalias() += dA1 * f.X.transpose();
    Eigen::Map<VectorXd>(gp + ob1_, H_) += dA1.rowwise().sum();
    return loss * norm;
}

PredictionSet SegmentationModel::predict(const FeatureSequence &features) const {
    const auto f = forward(features);
    const MatrixXd Pc = column_softmax(f.Oc);
    MatrixXd Pk;
    if (kind_ == Kind::MultiTask)
        Pk = column_softmax(f.Ok);
    PredictionSet out;
    for (Index t = 0; t < Pc.cols(); ++t) {
        Index best;
        Pc.col(t).maxCoeff(&best);
        if (best == C_)
            continue;
        const double likelihood = kind_ == Kind::Naive ? Pc(best, t) : Pk(1, t);
        out.push_back({features.video_id, features.timestamp_of(static_cast<int>(t)), likelihood,
                       static_cast<int>(best)});
    }
    return out;
}

PredictionSet predict_segmentation(const SegmentationModel &model, const Dataset &data) {
    PredictionSet out;
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        const int last = data.annotations.videos[i].num_frames - 1;
        for (auto spot : model.predict(data.features[i])) {
            spot.timestamp = std::min(spot.timestamp, last);
            out.push_back(std::move(spot));
        }
    }
    return out;
}

SegmentationResult train_segmentation(SegmentationModel::Kind kind, const Dataset &train, const Dataset &val,
                                      const HyperParams &hp) {
    hp.validate();
    train.validate();
    val.validate();
    if (train.features.empty())
        throw ValidationError("training set has no videos");
    const int C = train.annotations.num_classes;
    SegmentationModel model(kind, train.feature_dim(), hp.hidden, C);
    Rng init(derive_seed(hp.seed, {kind == SegmentationModel::Kind::Naive ? 101u : 102u}));
    model.init(init);
    OptState opt = make_opt_state(model.params().size(), hp.learning_rate);

    SegmentationResult result{model, 0.0, -1};
    int since_best = 0;
    const int epochs = hp.pretrain_epochs + hp.epochs;
    std::vector<int> order(train.features.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(hp.seed, {103u, std::uint64_t(epoch)}));
        shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(hp.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(hp.batch_size));
            VectorXd grad = VectorXd::Zero(model.params().size());
            const double scale = 1.0 / static_cast<double>(e - b);
            for (std::size_t i = b; i < e; ++i)
                model.loss(train.features[order[i]], train.annotations.videos[order[i]], &grad, scale);
            adam_step(model.params(), grad, opt);
        }
        const double map = spotting_map(predict_segmentation(model, val), val.annotations);
        if (result.best_epoch < 0 || map > result.val_map) {
            result.model = model;
            result.val_map = map;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= hp.patience) {
            break;
        }
    }
    return result;
}

TrainResult supervised_actionspotter(const Dataset &train, const Dataset &val, const HyperParams &hp_in,
                                     const BrowseActionSet &actions) {
    HyperParams hp = hp_in;
    hp.uniform_stride = 1;
    hp.validate();
    train.validate();
    val.validate();
    Model model = make_model(train, hp, actions);
    OptState opt = make_opt_state(model.size(), hp.learning_rate);
    TrainResult result;
    VectorXd best = model.params();
    int since_best = 0;
    pretrain(model, opt, train, hp, hp.pretrain_epochs + hp.epochs, &val, [&](const EpochRow &row) {
        result.report.rows.push_back(row);
        if (result.best_epoch < 0 || row.val_map > result.best_map) {
            result.best_epoch = row.epoch;
            result.best_map = row.val_map;
            result.best_skip_ratio = row.val_skip_ratio;
            best = model.params();
            since_best = 0;
            return true;
        }
        return ++since_best < hp.patience;
    });
    model.params() = best;
    result.val_predictions = evaluate(model, val, actions, 1, hp.sigma).predictions;
    result.checkpoint.model = model.config();
    result.checkpoint.actions = actions;
    result.checkpoint.hyper_json = hyperparams_to_json(hp);
    result.checkpoint.params = best;
    result.checkpoint.opt = opt;
    return result;
}

HyperParams no_memory_variant(HyperParams hp) {
    hp.use_memory = false;
    return hp;
}

HyperParams uniform_variant(HyperParams hp, int stride) {
    if (stride < 1)
        throw ConfigError("uniform stride must be >= 1");
    hp.uniform_stride = stride;
    return hp;
}

void OraclePolicy::begin(const FeatureSequence &features, const VideoAnnotation *annotation) {
    if (!annotation)
        throw ContractViolation("oracle policy needs the annotation");
    features_ = &features;
    annotation_ = annotation;
    centers_.assign(static_cast<std::size_t>(features.frames()), 0);
    labels_.assign(static_cast<std::size_t>(features.frames()), 0);
    for (const auto &s : annotation->segments) {
        const int row = s.center() / features.chunk_span;
        if (row < features.frames() && !centers_[row]) {
            centers_[row] = 1;
            labels_[row] = s.label;
        }
    }
}

Decision OraclePolicy::decide(int row, Rng *) {
    Decision d;
    const bool center = centers_.at(static_cast<std::size_t>(row)) != 0;
    d.keep = center;
    d.likelihood = center ? 1.0 : 0.0;
    if (center) {
        d.label = labels_[row];
    } else {
        const int frame = std::min(features_->timestamp_of(row), annotation_->num_frames - 1);
        const int label = frame_label(*annotation_, frame);
        d.label = label == kBackground ? 0 : label;
    }
    return d;
}

Decision StridePolicy::decide(int, Rng *) {
    Decision d;
    d.likelihood = 0.5;
    return d;
}

} // namespace actionspotter
