// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/experiment.hpp"

#include "actionspotter/baselines.hpp"
#include "actionspotter/errors.hpp"

#include <cstdio>

namespace actionspotter {

bool is_known_method(const std::string &method) {
    return method == "actionspotter" || method == "supervised" || method == "naive" || method == "multitask";
}

RunOutcome run_method(const std::string &method, const Dataset &train_set, const Dataset &val, const HyperParams &hp,
                      const BrowseActionSet &actions) {
    RunOutcome out;
    out.method = method;
    if (method == "actionspotter" || method == "supervised") {
        auto r = method == "actionspotter" ? train(train_set, val, hp, actions)
                                           : supervised_actionspotter(train_set, val, hp, actions);
        out.map = r.best_map;
        out.skip_ratio = r.best_skip_ratio;
        out.best_epoch = r.best_epoch;
        out.report_csv = r.report.csv();
        out.predictions = std::move(r.val_predictions);
        out.checkpoint = std::move(r.checkpoint);
        return out;
    }
    if (method == "naive" || method == "multitask") {
        const auto kind =
            method == "naive" ? SegmentationModel::Kind::Naive : SegmentationModel::Kind::MultiTask;
        const auto r = train_segmentation(kind, train_set, val, hp);
        out.predictions = predict_segmentation(r.model, val);
        out.map = spotting_map(out.predictions, val.annotations);
        out.best_epoch = r.best_epoch;
        return out;
    }
    throw ConfigError("unknown method '" + method + "' (expected actionspotter, supervised, naive or multitask)");
}

namespace {

std::string escape_xml(const std::string &s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fmt(const char *f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace

std::string svg_line_chart(const std::string &title, const std::string &x_label, const std::string &y_label,
                           const std::vector<Series> &series, double x_min, double x_max, double y_min, double y_max) {
    static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    const double W = 640, H = 420, left = 70, right = 170, top = 40, bottom = 60;
    const double pw = W - left - right, ph = H - top - bottom;
    if (x_max <= x_min)
        x_max = x_min + 1.0;
    if (y_max <= y_min)
        y_max = y_min + 1.0;
    auto X = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
    auto Y = [&](double y) { return top + ph - (y - y_min) / (y_max - y_min) * ph; };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" viewBox=\"0 0 640 420\">\n";
    s += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + escape_xml(title) + "</text>\n";
    s += "<g stroke=\"black\" stroke-width=\"1\">\n";
    s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top + ph) + "\" x2=\"" + fmt("%.1f", left + pw) +
         "\" y2=\"" + fmt("%.1f", top + ph) + "\"/>\n";
    s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top) + "\" x2=\"" + fmt("%.1f", left) +
         "\" y2=\"" + fmt("%.1f", top + ph) + "\"/>\n</g>\n";
    s += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = x_min + (x_max - x_min) * i / 5.0;
        const double yv = y_min + (y_max - y_min) * i / 5.0;
        s += "<text x=\"" + fmt("%.1f", X(xv)) + "\" y=\"" + fmt("%.1f", top + ph + 16) +
             "\" text-anchor=\"middle\">" + fmt("%.2f", xv) + "</text>\n";
        s += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", Y(yv) + 4) + "\" text-anchor=\"end\">" +
             fmt("%.2f", yv) + "</text>\n";
        s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", Y(yv)) + "\" x2=\"" + fmt("%.1f", left + pw) +
             "\" y2=\"" + fmt("%.1f", Y(yv)) + "\" stroke=\"#ddd\"/>\n";
    }
    s += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", H - 18) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + escape_xml(x_label) + "</text>\n";
    s += "<text transform=\"translate(18," + fmt("%.1f", top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">" + escape_xml(y_label) + "</text>\n</g>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const std::string color = colors[k % 6];
        const auto &sr = series[k];
        s += "<g class=\"series\" data-name=\"" + escape_xml(sr.name) + "\">\n";
        if (sr.points.size() > 1) {
            s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"";
            for (const auto &[x, y] : sr.points)
                s += fmt("%.1f", X(x)) + "," + fmt("%.1f", Y(y)) + " ";
            s += "\"/>\n";
        }
        for (const auto &[x, y] : sr.points)
            s += "<circle cx=\"" + fmt("%.1f", X(x)) + "\" cy=\"" + fmt("%.1f", Y(y)) + "\" r=\"4\" fill=\"" + color +
                 "\"/>\n";
        const double ly = top + 10 + 20.0 * static_cast<double>(k);
        s += "<rect x=\"" + fmt("%.1f", left + pw + 15) + "\" y=\"" + fmt("%.1f", ly - 8) +
             "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
        s += "<text x=\"" + fmt("%.1f", left + pw + 33) + "\" y=\"" + fmt("%.1f", ly + 2) +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + escape_xml(sr.name) + "</text>\n</g>\n";
    }
    s += "</svg>\n";
    return s;
}

} // namespace actionspotter
