// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include "maskhash/dataset.hpp"
#include "maskhash/mask.hpp"
#include "maskhash/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskhash {

// Bit i lives at word i/64, bit position i%64; bits at positions >= length
// stay zero so word-level XOR/AND/popcount needs no edge handling.
struct PackedCode {
    uint32_t length = 0;
    std::vector<uint64_t> words;
};

PackedCode pack(const std::vector<uint8_t>& bits);
std::vector<uint8_t> unpack(const PackedCode& code);

// Sum over words of popcount((q ^ d) & mask); equals the per-bit loop exactly.
uint32_t masked_hamming(const PackedCode& q, const PackedCode& d, const PackedCode& mask_row);

struct IndexEntry {
    uint32_t video_id = 0;
    uint32_t label = 0;
    std::vector<uint64_t> words;
};

struct PackedIndex {
    uint32_t code_length = 0;
    uint32_t num_classes = 0;
    CategoryMask mask;
    std::vector<IndexEntry> entries; // insertion order, stable

    PackedCode mask_row_code(uint32_t k) const;
};

struct RankedHit {
    uint32_t video_id = 0;
    uint32_t label = 0;
    uint32_t distance = 0;
};

// One frame set per video, sampled deterministically from the seed, encoded
// and packed in dataset order.
PackedIndex build_index(const ModelParams& params, const Dataset& dataset, const CategoryMask& mask,
                        uint64_t seed);

// Linear scan of the whole index with mask row `mask_class`; returns the
// top_n smallest distances, ties kept in insertion order.
std::vector<RankedHit> scan(const PackedIndex& index, const PackedCode& query_code, uint32_t mask_class,
                            size_t top_n);

// Forward + predicted class + binarize + pack, then scan.
std::vector<RankedHit> query(const PackedIndex& index, const ModelParams& params, const FrameSet& frame_set,
                             size_t top_n);

void save_index(const PackedIndex& index, const std::string& path);
PackedIndex load_index(const std::string& path);

} // namespace maskhash
