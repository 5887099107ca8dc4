// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "actionspotter/dataset.hpp"

#include <cstdint>
#include <string>

namespace actionspotter {

/// Knobs for the synthetic spotting benchmark.
///
/// Every video has `frames` rows. Between `min_segments` and `max_segments` non-overlapping
/// segments are placed with at least one background frame between neighbours; segment lengths
/// are uniform in [min_segment_length, max_segment_length]. Rows inside a segment of class c
/// are prototype_c + noise, other rows are the background prototype + noise. The C+1
/// prototypes sit on a random orthonormal frame scaled so every pair is `separation` apart.
///
/// With `cued` set, in-segment rows all share one "action" prototype and the class is only
/// visible on the background frame right before the segment (a cue). Telling classes apart
/// then requires memory.
struct SynthConfig {
    int num_classes = 4;
    int train_videos = 200;
    int val_videos = 50;
    int frames = 120;
    int min_segments = 1;
    int max_segments = 4;
    int min_segment_length = 2;
    int max_segment_length = 20;
    int feature_dim = 16;
    double separation = 5.0;
    double noise = 1.0;
    std::uint64_t seed = 0;
    bool cued = false;

    /// Throws ConfigError when the worst-case packing cannot fit (segments plus gaps plus one
    /// background frame must fit in `frames`) or a field is out of range.
    void validate() const;
};

struct SynthSplits {
    Dataset train;
    Dataset val;
    /// Row k < num_classes is class k's prototype; the last row is the background prototype
    /// (cued mode appends the shared action prototype after it).
    FeatureMatrix prototypes;
};

SynthSplits synth_generate(const SynthConfig &cfg);

SynthConfig synth_config_from_json(const std::string &json_text);
std::string synth_config_to_json(const SynthConfig &cfg);

} // namespace actionspotter
