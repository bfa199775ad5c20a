// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/dataset.hpp"
#include "maskhash/error.hpp"
#include "maskhash/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>

namespace maskhash {

namespace {

void copy_frames(const Video& video, const std::vector<uint32_t>& indices, FrameSet& out) {
    out.features.resize(static_cast<size_t>(indices.size()) * video.feature_dim);
    for (size_t i = 0; i < indices.size(); ++i) {
        const float* src = video.frame(indices[i]);
        std::copy(src, src + video.feature_dim, out.features.begin() + i * video.feature_dim);
    }
}

bool disjoint_sorted(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            return false;
        }
        (a[i] < b[j]) ? ++i : ++j;
    }
    return true;
}

} // namespace

Dataset generate_synthetic(const SynthConfig& config) {
    if (config.k_classes < 2) {
        throw Error::config("k_classes must be at least 2, got " + std::to_string(config.k_classes));
    }
    if (config.videos_per_class < 1 || config.frames_per_video < 1 || config.feature_dim < 1) {
        throw Error::config("videos_per_class, frames_per_video, and feature_dim must all be at least 1");
    }
    if (!(config.class_sep > config.video_sep && config.video_sep > config.frame_noise && config.frame_noise >= 0.0)) {
        throw Error::config("separation scales must satisfy class_sep > video_sep > frame_noise >= 0");
    }

    Rng rng(config.seed);
    const uint32_t d = config.feature_dim;
    Dataset dataset;
    dataset.num_classes = config.k_classes;
    dataset.feature_dim = d;
    dataset.videos.reserve(static_cast<size_t>(config.k_classes) * config.videos_per_class);

    std::vector<double> class_proto(d);
    std::vector<double> video_proto(d);
    uint32_t next_id = 0;
    for (uint32_t k = 0; k < config.k_classes; ++k) {
        for (uint32_t i = 0; i < d; ++i) {
            class_proto[i] = config.class_sep * rng.gaussian();
        }
        for (uint32_t v = 0; v < config.videos_per_class; ++v) {
            for (uint32_t i = 0; i < d; ++i) {
                video_proto[i] = class_proto[i] + config.video_sep * rng.gaussian();
            }
            Video video;
            video.id = next_id++;
            video.label = k;
            video.num_frames = config.frames_per_video;
            video.feature_dim = d;
            video.frames.resize(static_cast<size_t>(config.frames_per_video) * d);
            for (uint32_t t = 0; t < config.frames_per_video; ++t) {
                for (uint32_t i = 0; i < d; ++i) {
                    video.frames[static_cast<size_t>(t) * d + i] =
                        static_cast<float>(video_proto[i] + config.frame_noise * rng.gaussian());
                }
            }
            dataset.videos.push_back(std::move(video));
        }
    }
    return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& features_path, const std::string& labels_path) {
    BinaryWriter writer(features_path);
    writer.magic("MHF1");
    writer.u32(static_cast<uint32_t>(dataset.videos.size()));
    writer.u32(dataset.feature_dim);
    for (const Video& video : dataset.videos) {
        writer.u32(video.num_frames);
        writer.f32_array(video.frames.data(), video.frames.size());
    }
    writer.close();

    std::ofstream labels(labels_path);
    if (!labels) {
        throw Error::data("cannot open '" + labels_path + "' for writing");
    }
    for (const Video& video : dataset.videos) {
        labels << video.label << '\n';
    }
    labels.flush();
    if (!labels) {
        throw Error::data("write to '" + labels_path + "' failed");
    }
}

Dataset load_dataset(const std::string& features_path, const std::string& labels_path) {
    BinaryReader reader(features_path);
    reader.expect_magic("MHF1");
    const uint32_t num_videos = reader.u32();
    const uint32_t feature_dim = reader.u32();
    if (num_videos == 0) {
        throw Error::data("'" + features_path + "' contains no videos");
    }
    if (feature_dim == 0) {
        throw Error::data("'" + features_path + "' declares feature_dim 0");
    }

    Dataset dataset;
    dataset.feature_dim = feature_dim;
    dataset.videos.resize(num_videos);
    for (uint32_t v = 0; v < num_videos; ++v) {
        Video& video = dataset.videos[v];
        video.id = v;
        video.feature_dim = feature_dim;
        video.num_frames = reader.u32();
        if (video.num_frames == 0) {
            throw Error::data("'" + features_path + "' video " + std::to_string(v) + " has 0 frames");
        }
        video.frames.resize(static_cast<size_t>(video.num_frames) * feature_dim);
        reader.f32_array(video.frames.data(), video.frames.size());
    }
    reader.expect_eof();

    std::ifstream labels(labels_path);
    if (!labels) {
        throw Error::data("cannot open '" + labels_path + "' for reading");
    }
    std::string line;
    size_t line_no = 0;
    uint32_t max_label = 0;
    std::vector<uint32_t> parsed;
    parsed.reserve(num_videos);
    while (std::getline(labels, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        uint32_t label = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), label);
        if (ec != std::errc() || ptr != line.data() + line.size()) {
            throw Error::data("'" + labels_path + "' line " + std::to_string(line_no) + ": invalid label '" + line + "'");
        }
        parsed.push_back(label);
        max_label = std::max(max_label, label);
    }
    if (parsed.empty()) {
        throw Error::data("'" + labels_path + "' contains no labels");
    }
    if (parsed.size() != num_videos) {
        throw Error::data("'" + labels_path + "' has " + std::to_string(parsed.size()) +
                          " labels but '" + features_path + "' has " + std::to_string(num_videos) + " videos");
    }
    for (uint32_t v = 0; v < num_videos; ++v) {
        dataset.videos[v].label = parsed[v];
    }
    dataset.num_classes = max_label + 1;
    if (dataset.num_classes < 2) {
        throw Error::data("'" + labels_path + "' holds a single class; at least 2 are required");
    }
    return dataset;
}

FrameSet sample_frame_set(const Video& video, uint32_t n_frames, Rng& rng) {
    if (n_frames == 0) {
        throw Error::data("n_frames must be positive");
    }
    if (video.num_frames < n_frames) {
        throw Error::data("video " + std::to_string(video.id) + " has " + std::to_string(video.num_frames) +
                          " frames, need at least " + std::to_string(n_frames));
    }
    const uint32_t stride = video.num_frames / n_frames;
    const uint32_t offset_bound = video.num_frames - stride * (n_frames - 1);
    const uint32_t offset = static_cast<uint32_t>(rng.below(offset_bound));

    FrameSet set;
    set.video_id = video.id;
    set.indices.resize(n_frames);
    for (uint32_t i = 0; i < n_frames; ++i) {
        set.indices[i] = offset + stride * i;
    }
    copy_frames(video, set.indices, set);
    return set;
}

IntraPair sample_intra_pair(const Video& video, uint32_t n_frames, Rng& rng) {
    if (video.num_frames < 2 * n_frames) {
        throw Error::data("video " + std::to_string(video.id) + " has " + std::to_string(video.num_frames) +
                          " frames, an intra-pair needs at least " + std::to_string(2 * n_frames));
    }
    IntraPair pair;
    pair.label = video.label;
    pair.a = sample_frame_set(video, n_frames, rng);

    constexpr int max_retries = 16;
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        FrameSet candidate = sample_frame_set(video, n_frames, rng);
        if (disjoint_sorted(pair.a.indices, candidate.indices)) {
            pair.b = std::move(candidate);
            return pair;
        }
    }

    // Even-interval retries exhausted; draw without replacement from the
    // complement of a's indices. T >= 2n guarantees the complement suffices.
    std::vector<uint32_t> complement;
    complement.reserve(video.num_frames - n_frames);
    size_t a_pos = 0;
    for (uint32_t t = 0; t < video.num_frames; ++t) {
        if (a_pos < pair.a.indices.size() && pair.a.indices[a_pos] == t) {
            ++a_pos;
        } else {
            complement.push_back(t);
        }
    }
    for (uint32_t i = 0; i < n_frames; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(complement.size() - i));
        std::swap(complement[i], complement[j]);
    }
    complement.resize(n_frames);
    std::sort(complement.begin(), complement.end());

    pair.b.video_id = video.id;
    pair.b.indices = std::move(complement);
    copy_frames(video, pair.b.indices, pair.b);
    return pair;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error::config("train_fraction must be in (0, 1), got " + std::to_string(train_fraction));
    }
    std::vector<std::vector<uint32_t>> by_class(dataset.num_classes);
    for (uint32_t v = 0; v < dataset.videos.size(); ++v) {
        by_class[dataset.videos[v].label].push_back(v);
    }

    Rng rng(seed);
    std::vector<uint32_t> train_rows, test_rows;
    for (uint32_t k = 0; k < dataset.num_classes; ++k) {
        std::vector<uint32_t>& rows = by_class[k];
        if (rows.size() < 2) {
            throw Error::data("class " + std::to_string(k) + " has " + std::to_string(rows.size()) +
                              " videos; splitting needs at least 2");
        }
        rng.shuffle(rows);
        const size_t want = static_cast<size_t>(train_fraction * static_cast<double>(rows.size()) + 0.5);
        const size_t n_train = std::clamp<size_t>(want, 1, rows.size() - 1);
        train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + n_train);
        test_rows.insert(test_rows.end(), rows.begin() + n_train, rows.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());

    auto take = [&](const std::vector<uint32_t>& rows) {
        Dataset part;
        part.num_classes = dataset.num_classes;
        part.feature_dim = dataset.feature_dim;
        part.videos.reserve(rows.size());
        for (uint32_t row : rows) {
            part.videos.push_back(dataset.videos[row]);
        }
        return part;
    };
    return {take(train_rows), take(test_rows)};
}

} // namespace maskhash
