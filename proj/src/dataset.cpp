// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/dataset.hpp"

#include "actionspotter/errors.hpp"
#include "bytes.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>
#include <unordered_set>

namespace actionspotter {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace detail;

namespace {

constexpr char kMagic[4] = {'A', 'S', 'P', 'T'};
constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 4 + 4;

void sort_segments(std::vector<GroundTruthSegment> &segments) {
    std::stable_sort(segments.begin(), segments.end(), [](const auto &a, const auto &b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
    });
}

} // namespace

void FeatureSequence::validate() const {
    if (chunk_span < 1)
        throw ValidationError("features '" + video_id + "': chunk_span must be >= 1");
    if (data.rows() < 1 || data.cols() < 1)
        throw ValidationError("features '" + video_id + "': empty matrix");
    if (!data.allFinite())
        throw ValidationError("features '" + video_id + "': non-finite values");
}

const VideoAnnotation *AnnotationSet::find(const std::string &video_id) const {
    for (const auto &v : videos)
        if (v.video_id == video_id)
            return &v;
    return nullptr;
}

void AnnotationSet::validate() const {
    if (num_classes < 1)
        throw ValidationError("annotations: num_classes must be >= 1");
    std::unordered_set<std::string> seen;
    for (const auto &v : videos) {
        if (!seen.insert(v.video_id).second)
            throw ValidationError("annotations: duplicate video '" + v.video_id + "'");
        if (v.num_frames < 1)
            throw ValidationError("video '" + v.video_id + "': num_frames must be >= 1");
        for (const auto &s : v.segments) {
            if (s.end < s.start)
                throw ValidationError("video '" + v.video_id + "': segment end " +
                                      std::to_string(s.end) + " < start " + std::to_string(s.start));
            if (s.start < 0 || s.end >= v.num_frames)
                throw ValidationError("video '" + v.video_id + "': segment [" +
                                      std::to_string(s.start) + ", " + std::to_string(s.end) +
                                      "] outside [0, " + std::to_string(v.num_frames) + ")");
            if (s.label < 0 || s.label >= num_classes)
                throw ValidationError("video '" + v.video_id + "': unknown class id " +
                                      std::to_string(s.label));
        }
    }
}

std::vector<std::uint8_t> encode_features(const FeatureSequence &seq) {
    seq.validate();
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + 8 * static_cast<std::size_t>(seq.data.size()));
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kFeatureFileVersion);
    put_u32(out, static_cast<std::uint32_t>(seq.frames()));
    put_u32(out, static_cast<std::uint32_t>(seq.dim()));
    put_u32(out, static_cast<std::uint32_t>(seq.chunk_span));
    for (Eigen::Index r = 0; r < seq.data.rows(); ++r)
        for (Eigen::Index c = 0; c < seq.data.cols(); ++c)
            put_f64(out, seq.data(r, c));
    return out;
}

FeatureSequence decode_features(const std::vector<std::uint8_t> &bytes, std::string video_id) {
    using K = LoadError::Kind;
    if (bytes.size() < kHeaderSize || !std::equal(kMagic, kMagic + 4, bytes.begin()))
        throw LoadError(K::MalformedHeader, "feature file '" + video_id + "': bad magic or short header");
    const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != kFeatureFileVersion)
        throw LoadError(K::MalformedHeader,
                        "feature file '" + video_id + "': unsupported version " + std::to_string(version));
    const std::uint32_t rows = get_u32(&bytes[6]);
    const std::uint32_t cols = get_u32(&bytes[10]);
    const std::uint32_t span = get_u32(&bytes[14]);
    if (rows == 0 || cols == 0 || span == 0)
        throw LoadError(K::MalformedHeader, "feature file '" + video_id + "': zero dimension in header");
    const std::size_t expected = kHeaderSize + 8ull * rows * cols;
    if (bytes.size() != expected)
        throw LoadError(K::TruncatedPayload, "feature file '" + video_id + "': expected " +
                                                 std::to_string(expected) + " bytes, got " +
                                                 std::to_string(bytes.size()));
    FeatureSequence seq;
    seq.video_id = std::move(video_id);
    seq.chunk_span = static_cast<int>(span);
    seq.data.resize(rows, cols);
    const std::uint8_t *p = bytes.data() + kHeaderSize;
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c, p += 8) {
            const double v = get_f64(p);
            if (!std::isfinite(v))
                throw LoadError(K::NonFinite, "feature file '" + seq.video_id + "': non-finite value at row " +
                                                  std::to_string(r));
            seq.data(r, c) = v;
        }
    return seq;
}

void write_feature_file(const FeatureSequence &seq, const fs::path &path) {
    const auto bytes = encode_features(seq);
    spit(path, std::string(bytes.begin(), bytes.end()));
}

FeatureSequence read_feature_file(const fs::path &path) {
    const std::string raw = slurp(path);
    return decode_features(std::vector<std::uint8_t>(raw.begin(), raw.end()), path.stem().string());
}

AnnotationSet parse_annotations(const std::string &json_text) {
    AnnotationSet set;
    try {
        const json doc = json::parse(json_text);
        set.num_classes = doc.at("num_classes").get<int>();
        for (const auto &jv : doc.at("videos")) {
            VideoAnnotation v;
            v.video_id = jv.at("id").get<std::string>();
            v.num_frames = jv.at("num_frames").get<int>();
            for (const auto &js : jv.at("segments"))
                v.segments.push_back({js.at("label").get<int>(), js.at("start").get<int>(), js.at("end").get<int>()});
            sort_segments(v.segments);
            set.videos.push_back(std::move(v));
        }
    } catch (const json::exception &e) {
        throw LoadError(LoadError::Kind::Schema, std::string("annotations: ") + e.what());
    }
    set.validate();
    return set;
}

std::string dump_annotations(const AnnotationSet &set) {
    json doc;
    doc["num_classes"] = set.num_classes;
    doc["videos"] = json::array();
    for (const auto &v : set.videos) {
        json jv{{"id", v.video_id}, {"num_frames", v.num_frames}, {"segments", json::array()}};
        for (const auto &s : v.segments)
            jv["segments"].push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});
        doc["videos"].push_back(std::move(jv));
    }
    return doc.dump(1) + "\n";
}

AnnotationSet read_annotations(const fs::path &path) { return parse_annotations(slurp(path)); }

void write_annotations(const AnnotationSet &set, const fs::path &path) { spit(path, dump_annotations(set)); }

int frame_label(const VideoAnnotation &annotation, int t) {
    if (t < 0 || t >= annotation.num_frames)
        throw RangeError("frame " + std::to_string(t) + " outside [0, " + std::to_string(annotation.num_frames) +
                         ") of video '" + annotation.video_id + "'");
    // segments are kept sorted by (start, end), so the first hit is the tie-break winner
    for (const auto &s : annotation.segments) {
        if (s.start > t)
            break;
        if (s.contains(t))
            return s.label;
    }
    return kBackground;
}

PredictionSet parse_predictions(const std::string &jsonl) {
    PredictionSet preds;
    std::istringstream in(jsonl);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        // Python's json module writes bare NaN/Infinity tokens, which nlohmann refuses to parse
        static const std::regex non_finite(R"(:\s*-?(NaN|Infinity)\b)");
        if (std::regex_search(line, non_finite))
            throw ValidationError("predictions line " + std::to_string(lineno) + ": non-finite score");
        SpotPrediction p;
        try {
            const json j = json::parse(line);
            p.video_id = j.at("video").get<std::string>();
            p.timestamp = j.at("t").get<int>();
            const auto &score = j.at("score");
            // NaN/Inf are not valid JSON numbers; accept them as strings so they can be rejected explicitly
            p.likelihood = score.is_string() ? std::stod(score.get<std::string>()) : score.get<double>();
            p.label = j.at("label").get<int>();
        } catch (const json::exception &e) {
            throw LoadError(LoadError::Kind::Schema, "predictions line " + std::to_string(lineno) + ": " + e.what());
        } catch (const std::invalid_argument &) {
            throw LoadError(LoadError::Kind::Schema, "predictions line " + std::to_string(lineno) + ": bad score");
        }
        if (!std::isfinite(p.likelihood))
            throw ValidationError("predictions line " + std::to_string(lineno) + ": non-finite score");
        if (p.timestamp < 0)
            throw ValidationError("predictions line " + std::to_string(lineno) + ": negative timestamp");
        if (p.label < 0)
            throw ValidationError("predictions line " + std::to_string(lineno) + ": negative label");
        preds.push_back(std::move(p));
    }
    return preds;
}

std::string dump_predictions(const PredictionSet &preds) {
    std::string out;
    for (const auto &p : preds) {
        if (!std::isfinite(p.likelihood))
            throw ValidationError("prediction for '" + p.video_id + "' has non-finite score");
        out += json{{"video", p.video_id}, {"t", p.timestamp}, {"score", p.likelihood}, {"label", p.label}}.dump();
        out += '\n';
    }
    return out;
}

PredictionSet read_predictions(const fs::path &path) { return parse_predictions(slurp(path)); }

void write_predictions(const PredictionSet &preds, const fs::path &path) { spit(path, dump_predictions(preds)); }

void check_predictions(const PredictionSet &preds, const AnnotationSet &gts) {
    for (const auto &p : preds) {
        const auto *v = gts.find(p.video_id);
        if (!v)
            throw CrossReferenceError("prediction references unknown video '" + p.video_id + "'");
        if (p.timestamp < 0 || p.timestamp >= v->num_frames)
            throw ValidationError("prediction at frame " + std::to_string(p.timestamp) + " outside video '" +
                                  p.video_id + "'");
        if (!std::isfinite(p.likelihood))
            throw ValidationError("prediction for '" + p.video_id + "' has non-finite score");
    }
}

void Dataset::validate() const {
    annotations.validate();
    if (annotations.videos.size() != features.size())
        throw ValidationError("dataset: annotation and feature counts differ");
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto &f = features[i];
        const auto &a = annotations.videos[i];
        f.validate();
        if (f.video_id != a.video_id)
            throw ValidationError("dataset: feature '" + f.video_id + "' misaligned with annotation '" + a.video_id +
                                  "'");
        const int covered = f.frames() * f.chunk_span;
        if (covered < a.num_frames || (f.frames() - 1) * f.chunk_span >= a.num_frames)
            throw ValidationError("dataset: video '" + a.video_id + "' has " + std::to_string(f.frames()) +
                                  " rows of span " + std::to_string(f.chunk_span) + " for " +
                                  std::to_string(a.num_frames) + " frames");
        if (f.dim() != features.front().dim())
            throw ValidationError("dataset: inconsistent feature dimension in '" + f.video_id + "'");
    }
}

void write_dataset(const Dataset &ds, const fs::path &dir) {
    ds.validate();
    fs::create_directories(dir / "features");
    write_annotations(ds.annotations, dir / "annotations.json");
    for (const auto &f : ds.features)
        write_feature_file(f, dir / "features" / (f.video_id + ".aspt"));
}

Dataset read_dataset(const fs::path &dir) {
    if (!fs::is_directory(dir))
        throw ConfigError("dataset directory not found: " + dir.string());
    Dataset ds;
    ds.annotations = read_annotations(dir / "annotations.json");
    for (const auto &v : ds.annotations.videos)
        ds.features.push_back(read_feature_file(dir / "features" / (v.video_id + ".aspt")));
    ds.validate();
    return ds;
}

} // namespace actionspotter
