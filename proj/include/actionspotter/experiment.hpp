// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "actionspotter/dataset.hpp"
#include "actionspotter/env.hpp"
#include "actionspotter/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace actionspotter {

/// Methods a run can use:
///   "actionspotter"  reinforcement training (uniform_stride and use_memory select the variants)
///   "supervised"     the same network trained on center targets only
///   "naive", "multitask"  per-frame segmentation baselines
bool is_known_method(const std::string &method);

struct RunOutcome {
    std::string method;
    double map = 0.0;
    double skip_ratio = 0.0;
    int best_epoch = -1;
    std::string report_csv; // empty for segmentation baselines
    PredictionSet predictions;
    std::optional<Checkpoint> checkpoint;
};

RunOutcome run_method(const std::string &method, const Dataset &train, const Dataset &val, const HyperParams &hp,
                      const BrowseActionSet &actions);

/// One line of a line chart.
struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points; // (x, y), drawn in the given order
};

/// Minimal standalone SVG line chart with axes, markers and a legend.
std::string svg_line_chart(const std::string &title, const std::string &x_label, const std::string &y_label,
                           const std::vector<Series> &series, double x_min, double x_max, double y_min, double y_max);

} // namespace actionspotter
