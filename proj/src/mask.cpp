// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/mask.hpp"
#include "maskhash/error.hpp"
#include "maskhash/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

namespace maskhash {

uint32_t selected_bit_count(double ratio, uint32_t code_length) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw Error::config("ratio must be in (0, 1], got " + std::to_string(ratio));
    }
    if (code_length == 0) {
        throw Error::config("code_length must be positive");
    }
    // Round half up; ratio <= 1 keeps the result <= L.
    const auto n = static_cast<uint32_t>(std::floor(ratio * static_cast<double>(code_length) + 0.5));
    return std::max<uint32_t>(1, n);
}

std::vector<uint8_t> category_vector(const std::vector<double>& weight_row, double ratio) {
    const auto l = static_cast<uint32_t>(weight_row.size());
    const uint32_t n = selected_bit_count(ratio, l);
    for (double w : weight_row) {
        if (!std::isfinite(w)) {
            throw Error::data("category_vector weight row contains a non-finite value");
        }
    }
    std::vector<uint32_t> order(l);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        const double wa = std::fabs(weight_row[a]);
        const double wb = std::fabs(weight_row[b]);
        if (wa != wb) {
            return wa > wb;
        }
        return a < b;
    });
    std::vector<uint8_t> bits(l, 0);
    for (uint32_t i = 0; i < n; ++i) {
        bits[order[i]] = 1;
    }
    return bits;
}

CategoryMask build_mask(const std::vector<double>& cls_w, uint32_t num_classes, uint32_t code_length,
                        double ratio) {
    if (cls_w.size() != static_cast<size_t>(num_classes) * code_length) {
        throw Error::data("classifier weight shape does not match num_classes x code_length");
    }
    CategoryMask mask;
    mask.ratio = static_cast<float>(ratio);
    mask.num_classes = num_classes;
    mask.code_length = code_length;
    mask.selected_count = selected_bit_count(ratio, code_length);
    const uint32_t words = words_per_code(code_length);
    mask.rows.assign(static_cast<size_t>(num_classes) * words, 0);

    std::vector<double> row(code_length);
    for (uint32_t k = 0; k < num_classes; ++k) {
        const double* src = cls_w.data() + static_cast<size_t>(k) * code_length;
        std::copy(src, src + code_length, row.begin());
        const std::vector<uint8_t> bits = category_vector(row, ratio);
        uint64_t* dst = mask.rows.data() + static_cast<size_t>(k) * words;
        for (uint32_t i = 0; i < code_length; ++i) {
            if (bits[i]) {
                dst[i / 64] |= uint64_t(1) << (i % 64);
            }
        }
    }
    return mask;
}

std::vector<uint32_t> bit_contribution(const CategoryMask& mask) {
    std::vector<uint32_t> s(mask.code_length, 0);
    for (uint32_t k = 0; k < mask.num_classes; ++k) {
        for (uint32_t i = 0; i < mask.code_length; ++i) {
            s[i] += mask.bit(k, i) ? 1 : 0;
        }
    }
    return s;
}

void export_bit_map(const CategoryMask& mask, const std::string& map_csv_path,
                    const std::string& contribution_csv_path) {
    {
        std::ofstream out(map_csv_path);
        if (!out) {
            throw Error::data("cannot open '" + map_csv_path + "' for writing");
        }
        for (uint32_t i = 0; i < mask.code_length; ++i) {
            out << (i ? "," : "") << i;
        }
        out << '\n';
        for (uint32_t k = 0; k < mask.num_classes; ++k) {
            for (uint32_t i = 0; i < mask.code_length; ++i) {
                out << (i ? "," : "") << (mask.bit(k, i) ? 1 : 0);
            }
            out << '\n';
        }
        out.flush();
        if (!out) {
            throw Error::data("write to '" + map_csv_path + "' failed");
        }
    }
    {
        const std::vector<uint32_t> s = bit_contribution(mask);
        const double mean_s = mask.code_length == 0 ? 0.0
            : static_cast<double>(std::accumulate(s.begin(), s.end(), uint64_t(0))) / mask.code_length;
        // Two reference levels: ratio*L, and K*ratio (the per-row construction
        // pins the mean of s to the latter).
        const double ref_r_l = static_cast<double>(mask.ratio) * mask.code_length;
        const double ref_k_r = static_cast<double>(mask.ratio) * mask.num_classes;
        std::ofstream out(contribution_csv_path);
        if (!out) {
            throw Error::data("cannot open '" + contribution_csv_path + "' for writing");
        }
        out << "bit,s,mean_s,ref_r_l,ref_k_r\n";
        for (uint32_t i = 0; i < mask.code_length; ++i) {
            out << i << ',' << s[i] << ',' << format_g12(mean_s) << ',' << format_g12(ref_r_l)
                << ',' << format_g12(ref_k_r) << '\n';
        }
        out.flush();
        if (!out) {
            throw Error::data("write to '" + contribution_csv_path + "' failed");
        }
    }
}

// Shared by the mask file and the index file, which embeds the same layout.
// Returns the common row popcount, the stored truth for selected_count (the
// float ratio cannot reconstruct n reliably: rounding may cross the half
// boundary).
uint32_t validate_mask_rows(const CategoryMask& mask, const std::string& path) {
    const uint32_t words = words_per_code(mask.code_length);
    uint32_t expected = 0;
    for (uint32_t k = 0; k < mask.num_classes; ++k) {
        const uint64_t* row = mask.row(k);
        if (mask.code_length % 64 != 0) {
            const uint64_t pad_mask = ~((uint64_t(1) << (mask.code_length % 64)) - 1);
            if ((row[words - 1] & pad_mask) != 0) {
                throw Error::data("'" + path + "' mask row " + std::to_string(k) + " has padding bits set");
            }
        }
        uint32_t count = 0;
        for (uint32_t w = 0; w < words; ++w) {
            count += static_cast<uint32_t>(std::popcount(row[w]));
        }
        if (k == 0) {
            expected = count;
        } else if (count != expected) {
            throw Error::data("'" + path + "' mask rows disagree on selected bit count");
        }
    }
    if (expected == 0) {
        throw Error::data("'" + path + "' mask rows are all-zero");
    }
    return expected;
}

void save_mask(const CategoryMask& mask, const std::string& path) {
    BinaryWriter writer(path);
    writer.magic("MHK1");
    writer.u32(mask.num_classes);
    writer.u32(mask.code_length);
    writer.f32(mask.ratio);
    for (uint64_t word : mask.rows) {
        writer.u64(word);
    }
    writer.close();
}

CategoryMask load_mask(const std::string& path) {
    BinaryReader reader(path);
    reader.expect_magic("MHK1");
    CategoryMask mask;
    mask.num_classes = reader.u32();
    mask.code_length = reader.u32();
    mask.ratio = reader.f32();
    if (mask.num_classes == 0 || mask.code_length == 0 || mask.code_length > 512) {
        throw Error::data("'" + path + "' has invalid mask dimensions");
    }
    if (!(mask.ratio > 0.0f && mask.ratio <= 1.0f)) {
        throw Error::data("'" + path + "' has mask ratio outside (0, 1]");
    }
    const uint32_t words = words_per_code(mask.code_length);
    mask.rows.resize(static_cast<size_t>(mask.num_classes) * words);
    for (uint64_t& word : mask.rows) {
        word = reader.u64();
    }
    reader.expect_eof();
    mask.selected_count = validate_mask_rows(mask, path);
    return mask;
}

} // namespace maskhash
