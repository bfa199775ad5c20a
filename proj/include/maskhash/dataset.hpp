// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include "maskhash/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskhash {

// Frame features are stored as float32, matching the on-disk format exactly so
// generate -> save -> load round-trips bit-identically. Math on top promotes
// to double.
struct Video {
    uint32_t id = 0;
    uint32_t label = 0;
    uint32_t num_frames = 0;
    uint32_t feature_dim = 0;
    std::vector<float> frames; // num_frames x feature_dim, row-major

    const float* frame(uint32_t t) const { return frames.data() + static_cast<size_t>(t) * feature_dim; }
};

struct Dataset {
    uint32_t num_classes = 0;
    uint32_t feature_dim = 0;
    std::vector<Video> videos;
};

// One sampled set of frames from a single video; carries its own feature copy
// so downstream passes need no back-reference to the dataset.
struct FrameSet {
    uint32_t video_id = 0;
    std::vector<uint32_t> indices;  // strictly increasing, < num_frames
    std::vector<float> features;    // indices.size() x feature_dim, row-major
};

struct IntraPair {
    FrameSet a;
    FrameSet b;
    uint32_t label = 0;
};

struct SynthConfig {
    uint32_t k_classes = 0;
    uint32_t videos_per_class = 0;
    uint32_t frames_per_video = 0;
    uint32_t feature_dim = 0;
    double class_sep = 0.0;
    double video_sep = 0.0;
    double frame_noise = 0.0;
    uint64_t seed = 0;
};

// Three-level hierarchy: class prototype, per-video perturbation, per-frame
// noise. Requires class_sep > video_sep > frame_noise >= 0 so classes stay
// separable and intra-video variation is non-degenerate.
Dataset generate_synthetic(const SynthConfig& config);

void save_dataset(const Dataset& dataset, const std::string& features_path, const std::string& labels_path);
Dataset load_dataset(const std::string& features_path, const std::string& labels_path);

// Even-interval sampling: stride floor(T/n), random start offset.
FrameSet sample_frame_set(const Video& video, uint32_t n_frames, Rng& rng);

// Two disjoint frame sets from one video. Resamples the second set a bounded
// number of times, then falls back to uniform sampling from the complement of
// the first set's indices so the call always terminates.
IntraPair sample_intra_pair(const Video& video, uint32_t n_frames, Rng& rng);

// Stratified per class; each class keeps at least one video on each side.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, uint64_t seed);

} // namespace maskhash
