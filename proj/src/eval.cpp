// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/eval.hpp"
#include "maskhash/error.hpp"
#include "maskhash/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

namespace maskhash {

namespace {

constexpr uint32_t pr_levels = 101;

struct QueryMetrics {
    bool excluded = false;
    double ap = 0.0;
    double ap_at_n = 0.0;
    std::vector<double> precision_at;   // length max_n
    std::vector<double> pr_precision;   // length pr_levels
};

QueryMetrics score_query(const PackedIndex& index, const PackedCode& code, uint32_t label,
                         uint32_t mask_class, uint32_t total_relevant, uint32_t max_n) {
    QueryMetrics m;
    if (total_relevant == 0) {
        m.excluded = true;
        return m;
    }
    const std::vector<RankedHit> hits = scan(index, code, mask_class, index.entries.size());
    std::vector<uint8_t> relevance(hits.size());
    for (size_t i = 0; i < hits.size(); ++i) {
        relevance[i] = hits[i].label == label ? 1 : 0;
    }
    m.ap = average_precision(relevance, total_relevant);
    m.ap_at_n = average_precision_at(relevance, total_relevant, max_n);

    m.precision_at.resize(max_n);
    uint32_t cum = 0;
    for (uint32_t n = 1; n <= max_n; ++n) {
        if (n <= relevance.size() && relevance[n - 1]) {
            ++cum;
        }
        m.precision_at[n - 1] = static_cast<double>(cum) / n;
    }

    // Precision/recall at every relevant position; recall reaches 1 at the
    // last one because the ranking covers the whole database.
    std::vector<double> recalls, precisions;
    recalls.reserve(total_relevant);
    precisions.reserve(total_relevant);
    cum = 0;
    for (size_t p = 0; p < relevance.size(); ++p) {
        if (relevance[p]) {
            ++cum;
            recalls.push_back(static_cast<double>(cum) / total_relevant);
            precisions.push_back(static_cast<double>(cum) / static_cast<double>(p + 1));
        }
    }
    std::vector<double> best_from(precisions.size());
    double running = 0.0;
    for (size_t i = precisions.size(); i-- > 0;) {
        running = std::max(running, precisions[i]);
        best_from[i] = running;
    }
    m.pr_precision.resize(pr_levels);
    size_t cursor = 0;
    for (uint32_t j = 0; j < pr_levels; ++j) {
        const double level = static_cast<double>(j) / 100.0;
        while (cursor < recalls.size() && recalls[cursor] < level) {
            ++cursor;
        }
        m.pr_precision[j] = cursor < best_from.size() ? best_from[cursor] : 0.0;
    }
    return m;
}

uint32_t resolve_threads(uint32_t threads, size_t jobs) {
    uint32_t t = threads;
    if (t == 0) {
        t = std::max(1u, std::thread::hardware_concurrency());
    }
    return static_cast<uint32_t>(std::min<size_t>(t, jobs));
}

} // namespace

double average_precision(const std::vector<uint8_t>& relevance, uint32_t total_relevant) {
    if (total_relevant == 0) {
        throw Error::data("average_precision requires at least one relevant item");
    }
    double sum = 0.0;
    uint32_t cum = 0;
    for (size_t p = 0; p < relevance.size(); ++p) {
        if (relevance[p]) {
            ++cum;
            sum += static_cast<double>(cum) / static_cast<double>(p + 1);
        }
    }
    return sum / total_relevant;
}

double average_precision_at(const std::vector<uint8_t>& relevance, uint32_t total_relevant, uint32_t n) {
    if (total_relevant == 0) {
        throw Error::data("average_precision_at requires at least one relevant item");
    }
    if (n == 0) {
        throw Error::data("average_precision_at requires n >= 1");
    }
    const size_t prefix = std::min<size_t>(n, relevance.size());
    double sum = 0.0;
    uint32_t cum = 0;
    for (size_t p = 0; p < prefix; ++p) {
        if (relevance[p]) {
            ++cum;
            sum += static_cast<double>(cum) / static_cast<double>(p + 1);
        }
    }
    return sum / std::min<uint32_t>(total_relevant, n);
}

MetricReport evaluate_codes(const PackedIndex& index, const std::vector<PackedCode>& query_codes,
                            const std::vector<uint32_t>& query_labels,
                            const std::vector<uint32_t>& mask_classes, uint32_t max_n, uint32_t threads) {
    if (query_codes.empty()) {
        throw Error::data("query set is empty");
    }
    if (query_labels.size() != query_codes.size() || mask_classes.size() != query_codes.size()) {
        throw Error::data("query codes, labels, and mask classes must have equal lengths");
    }
    if (max_n == 0) {
        throw Error::data("max_n must be at least 1");
    }
    if (index.entries.empty()) {
        throw Error::data("index is empty");
    }

    std::vector<uint32_t> label_counts(index.num_classes, 0);
    for (const IndexEntry& entry : index.entries) {
        ++label_counts[entry.label];
    }

    const size_t n_queries = query_codes.size();
    std::vector<QueryMetrics> per_query(n_queries);
    auto run_range = [&](size_t worker, size_t stride) {
        for (size_t q = worker; q < n_queries; q += stride) {
            const uint32_t label = query_labels[q];
            const uint32_t relevant = label < index.num_classes ? label_counts[label] : 0;
            per_query[q] = score_query(index, query_codes[q], label, mask_classes[q], relevant, max_n);
        }
    };

    const uint32_t n_threads = resolve_threads(threads, n_queries);
    if (n_threads <= 1) {
        run_range(0, 1);
    } else {
        std::vector<std::exception_ptr> failures(n_threads);
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (uint32_t w = 0; w < n_threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    run_range(w, n_threads);
                } catch (...) {
                    failures[w] = std::current_exception();
                }
            });
        }
        for (std::thread& t : pool) {
            t.join();
        }
        for (const std::exception_ptr& failure : failures) {
            if (failure) {
                std::rethrow_exception(failure);
            }
        }
    }

    // Aggregation walks queries in order regardless of which thread scored
    // them, so the report is identical for any thread count.
    MetricReport report;
    report.map_at_n_cap = max_n;
    report.precision_at.assign(max_n, 0.0);
    report.pr_precision.assign(pr_levels, 0.0);
    for (const QueryMetrics& m : per_query) {
        if (m.excluded) {
            ++report.num_queries_excluded;
            continue;
        }
        ++report.num_queries;
        report.map += m.ap;
        report.map_at_n += m.ap_at_n;
        for (uint32_t i = 0; i < max_n; ++i) {
            report.precision_at[i] += m.precision_at[i];
        }
        for (uint32_t j = 0; j < pr_levels; ++j) {
            report.pr_precision[j] += m.pr_precision[j];
        }
    }
    if (report.num_queries == 0) {
        throw Error::data("every query was excluded: no query label appears in the index");
    }
    const double inv = 1.0 / report.num_queries;
    report.map *= inv;
    report.map_at_n *= inv;
    for (double& v : report.precision_at) {
        v *= inv;
    }
    for (double& v : report.pr_precision) {
        v *= inv;
    }
    return report;
}

MetricReport evaluate(const PackedIndex& index, const ModelParams& params, const Dataset& query_dataset,
                      uint64_t seed, uint32_t max_n, uint32_t threads) {
    const Architecture& a = params.arch;
    if (query_dataset.videos.empty()) {
        throw Error::data("query set is empty");
    }
    if (query_dataset.feature_dim != a.feature_dim) {
        throw Error::data("query dataset feature_dim does not match the model");
    }
    if (index.code_length != a.code_length || index.num_classes != a.num_classes) {
        throw Error::data("index dimensions do not match the model");
    }

    // All sampling happens up front on one stream; thread count can then
    // never influence which frames a query uses.
    Rng rng(seed);
    std::vector<PackedCode> codes;
    std::vector<uint32_t> labels;
    std::vector<uint32_t> mask_classes;
    codes.reserve(query_dataset.videos.size());
    labels.reserve(query_dataset.videos.size());
    mask_classes.reserve(query_dataset.videos.size());
    for (const Video& video : query_dataset.videos) {
        const FrameSet set = sample_frame_set(video, a.n_frames, rng);
        const ForwardTrace trace = forward(params, set);
        codes.push_back(pack(binarize(trace.ip)));
        labels.push_back(video.label);
        mask_classes.push_back(predict_class(trace.probs));
    }
    return evaluate_codes(index, codes, labels, mask_classes, max_n, threads);
}

std::vector<SweepRow> ratio_sweep(const ModelParams& params, const Dataset& database,
                                  const Dataset& query_dataset, const std::vector<double>& ratios,
                                  uint64_t seed, uint32_t max_n, uint32_t threads) {
    if (ratios.empty()) {
        throw Error::config("ratio grid is empty");
    }
    bool has_unmasked = false;
    for (double r : ratios) {
        if (!(r > 0.0 && r <= 1.0)) {
            throw Error::config("ratio " + std::to_string(r) + " outside (0, 1]");
        }
        has_unmasked = has_unmasked || r == 1.0;
    }
    if (!has_unmasked) {
        throw Error::config("ratio grid must include 1.0, the unmasked baseline");
    }

    std::vector<SweepRow> rows;
    rows.reserve(ratios.size());
    for (double r : ratios) {
        const CategoryMask mask = build_mask(params, r);
        const PackedIndex index = build_index(params, database, mask, seed);
        const MetricReport report = evaluate(index, params, query_dataset, seed, max_n, threads);
        rows.push_back({r, report.map});
    }
    return rows;
}

void save_metric_csvs(const MetricReport& report, const std::string& map_report_path,
                      const std::string& precision_path, const std::string& pr_path) {
    {
        std::ofstream out(map_report_path);
        if (!out) {
            throw Error::data("cannot open '" + map_report_path + "' for writing");
        }
        out << "metric,value\n";
        out << "map," << format_g12(report.map) << '\n';
        out << "map_at_n," << format_g12(report.map_at_n) << '\n';
        out << "map_at_n_cap," << report.map_at_n_cap << '\n';
        out << "num_queries," << report.num_queries << '\n';
        out << "num_queries_excluded," << report.num_queries_excluded << '\n';
        out.flush();
        if (!out) {
            throw Error::data("write to '" + map_report_path + "' failed");
        }
    }
    {
        std::ofstream out(precision_path);
        if (!out) {
            throw Error::data("cannot open '" + precision_path + "' for writing");
        }
        out << "n,precision\n";
        for (size_t i = 0; i < report.precision_at.size(); ++i) {
            out << (i + 1) << ',' << format_g12(report.precision_at[i]) << '\n';
        }
        out.flush();
        if (!out) {
            throw Error::data("write to '" + precision_path + "' failed");
        }
    }
    {
        std::ofstream out(pr_path);
        if (!out) {
            throw Error::data("cannot open '" + pr_path + "' for writing");
        }
        out << "recall,precision\n";
        char recall[16];
        for (size_t j = 0; j < report.pr_precision.size(); ++j) {
            std::snprintf(recall, sizeof(recall), "%.2f", static_cast<double>(j) / 100.0);
            out << recall << ',' << format_g12(report.pr_precision[j]) << '\n';
        }
        out.flush();
        if (!out) {
            throw Error::data("write to '" + pr_path + "' failed");
        }
    }
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    double unmasked = 0.0;
    for (const SweepRow& row : rows) {
        if (row.ratio == 1.0) {
            unmasked = row.map;
        }
    }
    size_t best = 0;
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].map > rows[best].map) {
            best = i;
        }
    }
    std::ofstream out(path);
    if (!out) {
        throw Error::data("cannot open '" + path + "' for writing");
    }
    out << "ratio,map,is_best,beats_unmasked\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        out << format_g12(rows[i].ratio) << ',' << format_g12(rows[i].map) << ','
            << (i == best ? 1 : 0) << ',' << (rows[i].map > unmasked ? 1 : 0) << '\n';
    }
    out.flush();
    if (!out) {
        throw Error::data("write to '" + path + "' failed");
    }
}

} // namespace maskhash
