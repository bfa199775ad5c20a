// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include "maskhash/dataset.hpp"
#include "maskhash/index.hpp"
#include "maskhash/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskhash {

struct MetricReport {
    double map = 0.0;
    double map_at_n = 0.0;
    uint32_t map_at_n_cap = 0;
    std::vector<double> precision_at;  // precision_at[i] = mean precision at n = i + 1
    std::vector<double> pr_precision;  // interpolated precision at recall 0.00, 0.01, ..., 1.00
    uint32_t num_queries = 0;          // queries included in the means
    uint32_t num_queries_excluded = 0; // queries with zero relevant database entries
};

// AP over a full ranking: mean over relevant positions p of
// (relevant count in first p) / p, divided by total_relevant.
double average_precision(const std::vector<uint8_t>& relevance, uint32_t total_relevant);

// AP over the length-n prefix with denominator min(total_relevant, n).
double average_precision_at(const std::vector<uint8_t>& relevance, uint32_t total_relevant, uint32_t n);

// Full metric suite over prepared query codes; the seam that decouples metric
// math from the model so oracle tests can feed synthetic codes directly.
// Queries whose label has no database entry are excluded from every mean and
// counted. threads: 0 = auto, per-query work fanned out, aggregation in query
// order.
MetricReport evaluate_codes(const PackedIndex& index, const std::vector<PackedCode>& query_codes,
                            const std::vector<uint32_t>& query_labels,
                            const std::vector<uint32_t>& mask_classes, uint32_t max_n, uint32_t threads);

// Samples one frame set per query video (deterministic per seed), encodes it,
// picks the mask row by predicted class, then scores against the index.
MetricReport evaluate(const PackedIndex& index, const ModelParams& params, const Dataset& query_dataset,
                      uint64_t seed, uint32_t max_n, uint32_t threads);

struct SweepRow {
    double ratio = 0.0;
    double map = 0.0;
};

// One mask + index + evaluation per ratio from the same trained parameters.
// The grid must contain 1.0 so the unmasked baseline is always reported.
std::vector<SweepRow> ratio_sweep(const ModelParams& params, const Dataset& database,
                                  const Dataset& query_dataset, const std::vector<double>& ratios,
                                  uint64_t seed, uint32_t max_n, uint32_t threads);

void save_metric_csvs(const MetricReport& report, const std::string& map_report_path,
                      const std::string& precision_path, const std::string& pr_path);

// Adds is_best (first argmax) and beats_unmasked (strictly above the
// ratio-1.0 row) columns so the headline comparison is machine-readable.
void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

} // namespace maskhash
