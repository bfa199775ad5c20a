// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include "maskhash/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskhash {

inline uint32_t words_per_code(uint32_t code_length) {
    return (code_length + 63) / 64;
}

// Per-category bit selection over the classifier weights: row k keeps the
// n = max(1, round(ratio * L)) bits of largest |weight|, ties toward the
// lower index. Rows are stored bit-packed, bit i at word i/64 bit i%64.
struct CategoryMask {
    float ratio = 0.0f;
    uint32_t num_classes = 0;   // K
    uint32_t code_length = 0;   // L
    uint32_t selected_count = 0; // n, identical for every row
    std::vector<uint64_t> rows; // K x words_per_code(L)

    const uint64_t* row(uint32_t k) const { return rows.data() + static_cast<size_t>(k) * words_per_code(code_length); }
    bool bit(uint32_t k, uint32_t i) const { return (row(k)[i / 64] >> (i % 64)) & 1u; }
};

uint32_t selected_bit_count(double ratio, uint32_t code_length);

// One mask row as explicit bits, from one classifier weight row.
std::vector<uint8_t> category_vector(const std::vector<double>& weight_row, double ratio);

CategoryMask build_mask(const std::vector<double>& cls_w, uint32_t num_classes, uint32_t code_length,
                        double ratio);

inline CategoryMask build_mask(const ModelParams& params, double ratio) {
    return build_mask(params.cls_w, params.arch.num_classes, params.arch.code_length, ratio);
}

// Column sums over the mask rows: s[i] = number of categories using bit i.
std::vector<uint32_t> bit_contribution(const CategoryMask& mask);

// Two plot-ready CSVs: the category/bit membership grid and the per-bit
// contribution sums with their reference levels.
void export_bit_map(const CategoryMask& mask, const std::string& map_csv_path,
                    const std::string& contribution_csv_path);

void save_mask(const CategoryMask& mask, const std::string& path);
CategoryMask load_mask(const std::string& path);

// Checks padding bits are clear and every row shares one positive popcount;
// returns that popcount. Used by both the mask and index file loaders.
uint32_t validate_mask_rows(const CategoryMask& mask, const std::string& path);

} // namespace maskhash
