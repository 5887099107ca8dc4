// SPDX-License-Identifier: Apache-2.0
// Python module actionspotter._core: metric, dataset types, synthetic data, redraw and the CLI.
#include "actionspotter/baselines.hpp"
#include "actionspotter/cli.hpp"
#include "actionspotter/dataset.hpp"
#include "actionspotter/env.hpp"
#include "actionspotter/errors.hpp"
#include "actionspotter/metric.hpp"
#include "actionspotter/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
namespace as = actionspotter;

namespace {

py::dict synth_split(const as::Dataset &d) {
    py::list feats;
    for (const auto &f : d.features)
        feats.append(py::cast(f.data));
    py::dict out;
    out["annotations"] = d.annotations;
    out["features"] = feats;
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "ActionSpotter core: spotting mAP, datasets, synthetic benchmark and command line";

    auto error = py::register_exception<as::Error>(m, "Error");
    py::register_exception<as::LoadError>(m, "LoadError", error);
    py::register_exception<as::ValidationError>(m, "ValidationError", error);
    py::register_exception<as::CrossReferenceError>(m, "CrossReferenceError", error);
    py::register_exception<as::ContractViolation>(m, "ContractViolation", error);
    py::register_exception<as::ConfigError>(m, "ConfigError", error);
    py::register_exception<as::RangeError>(m, "RangeError", error);
    py::register_exception<as::CheckpointError>(m, "CheckpointError", error);

    py::class_<as::GroundTruthSegment>(m, "GroundTruthSegment")
        .def(py::init<int, int, int>(), py::arg("label"), py::arg("start"), py::arg("end"))
        .def_readwrite("label", &as::GroundTruthSegment::label)
        .def_readwrite("start", &as::GroundTruthSegment::start)
        .def_readwrite("end", &as::GroundTruthSegment::end)
        .def("center", &as::GroundTruthSegment::center)
        .def(py::self == py::self)
        .def("__repr__", [](const as::GroundTruthSegment &s) {
            return "GroundTruthSegment(label=" + std::to_string(s.label) + ", start=" + std::to_string(s.start) +
                   ", end=" + std::to_string(s.end) + ")";
        });

    py::class_<as::VideoAnnotation>(m, "VideoAnnotation")
        .def(py::init<std::string, int, std::vector<as::GroundTruthSegment>>(), py::arg("video_id"),
             py::arg("num_frames"), py::arg("segments") = std::vector<as::GroundTruthSegment>{})
        .def_readwrite("video_id", &as::VideoAnnotation::video_id)
        .def_readwrite("num_frames", &as::VideoAnnotation::num_frames)
        .def_readwrite("segments", &as::VideoAnnotation::segments)
        .def(py::self == py::self);

    py::class_<as::AnnotationSet>(m, "AnnotationSet")
        .def(py::init<int, std::vector<as::VideoAnnotation>>(), py::arg("num_classes"), py::arg("videos"))
        .def_readwrite("num_classes", &as::AnnotationSet::num_classes)
        .def_readwrite("videos", &as::AnnotationSet::videos)
        .def("validate", &as::AnnotationSet::validate)
        .def("to_json", [](const as::AnnotationSet &s) { return as::dump_annotations(s); })
        .def_static("from_json", &as::parse_annotations)
        .def(py::self == py::self);

    py::class_<as::SpotPrediction>(m, "SpotPrediction")
        .def(py::init<std::string, int, double, int>(), py::arg("video_id"), py::arg("timestamp"),
             py::arg("likelihood"), py::arg("label"))
        .def_readwrite("video_id", &as::SpotPrediction::video_id)
        .def_readwrite("timestamp", &as::SpotPrediction::timestamp)
        .def_readwrite("likelihood", &as::SpotPrediction::likelihood)
        .def_readwrite("label", &as::SpotPrediction::label)
        .def(py::self == py::self)
        .def("__repr__", [](const as::SpotPrediction &p) {
            std::ostringstream s;
            s << "SpotPrediction(video_id='" << p.video_id << "', timestamp=" << p.timestamp
              << ", likelihood=" << p.likelihood << ", label=" << p.label << ")";
            return s.str();
        });

    m.def("frame_label", &as::frame_label, py::arg("annotation"), py::arg("t"),
          "Class of the frame, or -1 for background.");
    m.def("parse_predictions", &as::parse_predictions, py::arg("jsonl"));
    m.def("dump_predictions", &as::dump_predictions, py::arg("predictions"));

    py::class_<as::ClassReport>(m, "ClassReport")
        .def_readonly("label", &as::ClassReport::label)
        .def_readonly("ap", &as::ClassReport::ap)
        .def_readonly("num_gt", &as::ClassReport::num_gt)
        .def_readonly("num_spots", &as::ClassReport::num_spots);
    py::class_<as::MapReport>(m, "MapReport")
        .def_readonly("map", &as::MapReport::map)
        .def_readonly("per_class", &as::MapReport::per_class)
        .def("to_json", [](const as::MapReport &r) { return as::map_report_json(r); });

    m.def("spotting_map", &as::spotting_map, py::arg("predictions"), py::arg("ground_truth"),
          "Pooled spotting mAP of the predictions against the annotation set.");
    m.def("spotting_map_report", &as::spotting_map_report, py::arg("predictions"), py::arg("ground_truth"));

    py::class_<as::MapAccumulator>(m, "MapAccumulator")
        .def(py::init<as::AnnotationSet>(), py::arg("ground_truth"))
        .def("insert", &as::MapAccumulator::insert, py::arg("spot"))
        .def("map", &as::MapAccumulator::map)
        .def("class_ap", &as::MapAccumulator::class_ap, py::arg("label"))
        .def("__len__", &as::MapAccumulator::size);

    m.def("reward", &as::reward, py::arg("map_prev"), py::arg("map_new"), py::arg("entropy"), py::arg("gamma"),
          py::arg("rho"));
    m.def(
        "discounted_return",
        [](const std::vector<double> &rewards, double gamma) {
            const auto r = as::discounted_return(rewards, gamma);
            py::dict out;
            out["total"] = r.total;
            out["cumulative"] = r.cumulative;
            out["to_go"] = r.to_go;
            out["after"] = r.after;
            return out;
        },
        py::arg("rewards"), py::arg("gamma"));
    m.def("skip_ratio", &as::skip_ratio, py::arg("steps"), py::arg("frames"));

    py::class_<as::DetectionSegment>(m, "DetectionSegment")
        .def(py::init<std::string, int, int, int, double>(), py::arg("video_id"), py::arg("label"),
             py::arg("start"), py::arg("end"), py::arg("score"))
        .def_readwrite("video_id", &as::DetectionSegment::video_id)
        .def_readwrite("label", &as::DetectionSegment::label)
        .def_readwrite("start", &as::DetectionSegment::start)
        .def_readwrite("end", &as::DetectionSegment::end)
        .def_readwrite("score", &as::DetectionSegment::score);
    m.def("redraw_detections", &as::redraw_detections, py::arg("segments"),
          "One spot per detection at the floor midpoint, score kept.");

    m.def(
        "synth_generate",
        [](const std::string &config_json) {
            const auto cfg = as::synth_config_from_json(config_json);
            const auto s = as::synth_generate(cfg);
            py::dict out;
            out["train"] = synth_split(s.train);
            out["val"] = synth_split(s.val);
            out["prototypes"] = s.prototypes;
            return out;
        },
        py::arg("config_json") = "{}",
        "Synthetic benchmark from a JSON config; returns train/val splits (annotations plus one "
        "T x D feature array per video) and the class prototypes.");

    m.def(
        "run_cli",
        [](const std::vector<std::string> &args) {
            std::vector<std::string> full{"actionspotter"};
            full.insert(full.end(), args.begin(), args.end());
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = as::cli::run(full, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command line; returns (exit_code, stdout, stderr).");
}
