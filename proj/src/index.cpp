// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/index.hpp"
#include "maskhash/error.hpp"
#include "maskhash/io.hpp"

#include <algorithm>
#include <bit>

namespace maskhash {

PackedCode pack(const std::vector<uint8_t>& bits) {
    PackedCode code;
    code.length = static_cast<uint32_t>(bits.size());
    code.words.assign(words_per_code(code.length), 0);
    for (uint32_t i = 0; i < code.length; ++i) {
        if (bits[i]) {
            code.words[i / 64] |= uint64_t(1) << (i % 64);
        }
    }
    return code;
}

std::vector<uint8_t> unpack(const PackedCode& code) {
    std::vector<uint8_t> bits(code.length);
    for (uint32_t i = 0; i < code.length; ++i) {
        bits[i] = static_cast<uint8_t>((code.words[i / 64] >> (i % 64)) & 1u);
    }
    return bits;
}

uint32_t masked_hamming(const PackedCode& q, const PackedCode& d, const PackedCode& mask_row) {
    if (q.length != d.length || q.length != mask_row.length) {
        throw Error::data("masked_hamming code length mismatch");
    }
    uint32_t distance = 0;
    for (size_t w = 0; w < q.words.size(); ++w) {
        distance += static_cast<uint32_t>(std::popcount((q.words[w] ^ d.words[w]) & mask_row.words[w]));
    }
    return distance;
}

PackedCode PackedIndex::mask_row_code(uint32_t k) const {
    PackedCode code;
    code.length = code_length;
    const uint64_t* row = mask.row(k);
    code.words.assign(row, row + words_per_code(code_length));
    return code;
}

PackedIndex build_index(const ModelParams& params, const Dataset& dataset, const CategoryMask& mask,
                        uint64_t seed) {
    const Architecture& a = params.arch;
    if (mask.code_length != a.code_length || mask.num_classes != a.num_classes) {
        throw Error::data("mask dimensions do not match the model");
    }
    if (dataset.feature_dim != a.feature_dim) {
        throw Error::data("dataset feature_dim does not match the model");
    }

    PackedIndex index;
    index.code_length = a.code_length;
    index.num_classes = a.num_classes;
    index.mask = mask;
    index.entries.reserve(dataset.videos.size());

    Rng rng(seed);
    for (const Video& video : dataset.videos) {
        if (video.label >= a.num_classes) {
            throw Error::data("video " + std::to_string(video.id) + " label out of range for the model");
        }
        const FrameSet set = sample_frame_set(video, a.n_frames, rng);
        const ForwardTrace trace = forward(params, set);
        const PackedCode code = pack(binarize(trace.ip));
        IndexEntry entry;
        entry.video_id = video.id;
        entry.label = video.label;
        entry.words = code.words;
        index.entries.push_back(std::move(entry));
    }
    return index;
}

std::vector<RankedHit> scan(const PackedIndex& index, const PackedCode& query_code, uint32_t mask_class,
                            size_t top_n) {
    if (top_n == 0) {
        throw Error::data("top_n must be at least 1");
    }
    if (mask_class >= index.num_classes) {
        throw Error::data("mask class " + std::to_string(mask_class) + " out of range");
    }
    if (query_code.length != index.code_length) {
        throw Error::data("query code length does not match the index");
    }
    const uint64_t* mask_row = index.mask.row(mask_class);
    const size_t words = query_code.words.size();

    std::vector<uint32_t> distances(index.entries.size());
    // Distances are bounded by L, so a counting pass finds the cutoff without
    // sorting the whole index.
    std::vector<uint32_t> buckets(index.code_length + 1, 0);
    for (size_t e = 0; e < index.entries.size(); ++e) {
        const uint64_t* entry_words = index.entries[e].words.data();
        uint32_t dist = 0;
        for (size_t w = 0; w < words; ++w) {
            dist += static_cast<uint32_t>(std::popcount((query_code.words[w] ^ entry_words[w]) & mask_row[w]));
        }
        distances[e] = dist;
        ++buckets[dist];
    }

    const size_t want = std::min(top_n, index.entries.size());
    uint32_t cutoff = 0;
    size_t covered = 0;
    for (uint32_t d = 0; d <= index.code_length; ++d) {
        covered += buckets[d];
        if (covered >= want) {
            cutoff = d;
            break;
        }
    }

    // Two stable passes: everything strictly below the cutoff first, then
    // cutoff-distance entries in insertion order up to the quota.
    std::vector<RankedHit> hits;
    hits.reserve(want);
    std::vector<std::vector<size_t>> by_distance(cutoff + 1);
    for (size_t e = 0; e < index.entries.size(); ++e) {
        if (distances[e] <= cutoff) {
            by_distance[distances[e]].push_back(e);
        }
    }
    for (uint32_t d = 0; d <= cutoff && hits.size() < want; ++d) {
        for (size_t e : by_distance[d]) {
            if (hits.size() == want) {
                break;
            }
            hits.push_back({index.entries[e].video_id, index.entries[e].label, distances[e]});
        }
    }
    return hits;
}

std::vector<RankedHit> query(const PackedIndex& index, const ModelParams& params, const FrameSet& frame_set,
                             size_t top_n) {
    const ForwardTrace trace = forward(params, frame_set);
    const uint32_t predicted = predict_class(trace.probs);
    const PackedCode code = pack(binarize(trace.ip));
    return scan(index, code, predicted, top_n);
}

void save_index(const PackedIndex& index, const std::string& path) {
    BinaryWriter writer(path);
    writer.magic("MHI1");
    writer.u32(index.code_length);
    writer.u32(index.num_classes);
    writer.u32(static_cast<uint32_t>(index.entries.size()));
    writer.f32(index.mask.ratio);
    for (uint64_t word : index.mask.rows) {
        writer.u64(word);
    }
    for (const IndexEntry& entry : index.entries) {
        writer.u32(entry.video_id);
        writer.u32(entry.label);
        for (uint64_t word : entry.words) {
            writer.u64(word);
        }
    }
    writer.close();
}

PackedIndex load_index(const std::string& path) {
    BinaryReader reader(path);
    reader.expect_magic("MHI1");
    PackedIndex index;
    index.code_length = reader.u32();
    index.num_classes = reader.u32();
    const uint32_t num_entries = reader.u32();
    if (index.code_length == 0 || index.code_length > 512 || index.num_classes == 0) {
        throw Error::data("'" + path + "' has invalid index dimensions");
    }

    index.mask.ratio = reader.f32();
    if (!(index.mask.ratio > 0.0f && index.mask.ratio <= 1.0f)) {
        throw Error::data("'" + path + "' has mask ratio outside (0, 1]");
    }
    index.mask.num_classes = index.num_classes;
    index.mask.code_length = index.code_length;
    const uint32_t words = words_per_code(index.code_length);
    index.mask.rows.resize(static_cast<size_t>(index.num_classes) * words);
    for (uint64_t& word : index.mask.rows) {
        word = reader.u64();
    }
    index.mask.selected_count = validate_mask_rows(index.mask, path);

    const uint64_t pad_mask = index.code_length % 64 == 0
        ? ~uint64_t(0)
        : (uint64_t(1) << (index.code_length % 64)) - 1;
    index.entries.resize(num_entries);
    for (uint32_t e = 0; e < num_entries; ++e) {
        IndexEntry& entry = index.entries[e];
        entry.video_id = reader.u32();
        entry.label = reader.u32();
        if (entry.label >= index.num_classes) {
            throw Error::data("'" + path + "' entry " + std::to_string(e) + " label out of range");
        }
        entry.words.resize(words);
        for (uint64_t& word : entry.words) {
            word = reader.u64();
        }
        if ((entry.words[words - 1] & ~pad_mask) != 0) {
            throw Error::data("'" + path + "' entry " + std::to_string(e) + " has padding bits set");
        }
    }
    reader.expect_eof();
    return index;
}

} // namespace maskhash
