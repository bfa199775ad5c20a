// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash.h"

#include "maskhash/config.hpp"
#include "maskhash/dataset.hpp"
#include "maskhash/error.hpp"
#include "maskhash/eval.hpp"
#include "maskhash/index.hpp"
#include "maskhash/mask.hpp"
#include "maskhash/model.hpp"
#include "maskhash/training.hpp"

#include <exception>
#include <forward_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

struct mh_config {
    maskhash::Config config;
    // Keeps strings returned to C callers alive for the config's lifetime.
    std::forward_list<std::string> interned;
};

struct mh_dataset {
    maskhash::Dataset dataset;
};

struct mh_model {
    maskhash::ModelParams params;
};

struct mh_loss_history {
    std::vector<maskhash::LossBreakdown> rows;
};

struct mh_mask {
    maskhash::CategoryMask mask;
};

struct mh_index {
    maskhash::PackedIndex index;
};

struct mh_ranking {
    std::vector<maskhash::RankedHit> hits;
};

struct mh_report {
    maskhash::MetricReport report;
};

struct mh_sweep {
    std::vector<maskhash::SweepRow> rows;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
mh_status guarded(Fn&& fn) {
    try {
        g_last_error.clear();
        fn();
        return MH_OK;
    } catch (const maskhash::Error& e) {
        g_last_error = e.what();
        return static_cast<mh_status>(e.exit_code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MH_ERR_DATA;
    }
}

mh_status null_argument(const char* what) {
    g_last_error = std::string(what) + " must not be null";
    return MH_ERR_CONFIG;
}

maskhash::Architecture to_arch(const mh_architecture& a) {
    maskhash::Architecture arch;
    arch.feature_dim = a.feature_dim;
    arch.embed_dim = a.embed_dim;
    arch.repr_dim = a.repr_dim;
    arch.code_length = a.code_length;
    arch.num_classes = a.num_classes;
    arch.n_frames = a.n_frames;
    return arch;
}

const char* intern(mh_config* cfg, std::string value) {
    cfg->interned.push_front(std::move(value));
    return cfg->interned.front().c_str();
}

} // namespace

extern "C" {

const char* mh_last_error(void) {
    return g_last_error.c_str();
}

/* --- config --- */

mh_status mh_config_open(const char* path, mh_config** out) {
    if (path == nullptr || out == nullptr) return null_argument("path and out");
    return guarded([&] {
        auto handle = std::make_unique<mh_config>();
        handle->config = maskhash::Config::parse_file(path);
        *out = handle.release();
    });
}

int mh_config_has(const mh_config* cfg, const char* key) {
    return (cfg != nullptr && key != nullptr && cfg->config.has(key)) ? 1 : 0;
}

mh_status mh_config_str(mh_config* cfg, const char* key, const char** out) {
    if (cfg == nullptr || key == nullptr || out == nullptr) return null_argument("cfg, key, and out");
    return guarded([&] { *out = intern(cfg, cfg->config.get_string(key)); });
}

mh_status mh_config_str_or(mh_config* cfg, const char* key, const char* fallback, const char** out) {
    if (cfg == nullptr || key == nullptr || fallback == nullptr || out == nullptr) {
        return null_argument("cfg, key, fallback, and out");
    }
    return guarded([&] { *out = intern(cfg, cfg->config.get_string(key, fallback)); });
}

mh_status mh_config_u32(const mh_config* cfg, const char* key, uint32_t* out) {
    if (cfg == nullptr || key == nullptr || out == nullptr) return null_argument("cfg, key, and out");
    return guarded([&] { *out = cfg->config.get_u32(key); });
}

mh_status mh_config_u32_or(const mh_config* cfg, const char* key, uint32_t fallback, uint32_t* out) {
    if (cfg == nullptr || key == nullptr || out == nullptr) return null_argument("cfg, key, and out");
    return guarded([&] { *out = cfg->config.get_u32(key, fallback); });
}

mh_status mh_config_u64(const mh_config* cfg, const char* key, uint64_t* out) {
    if (cfg == nullptr || key == nullptr || out == nullptr) return null_argument("cfg, key, and out");
    return guarded([&] { *out = cfg->config.get_u64(key); });
}

mh_status mh_config_u64_or(const mh_config* cfg, const char* key, uint64_t fallback, uint64_t* out) {
    if (cfg == nullptr || key == nullptr || out == nullptr) return null_argument("cfg, key, and out");
    return guarded([&] { *out = cfg->config.get_u64(key, fallback); });
}

mh_status mh_config_f64(const mh_config* cfg, const char* key, double* out) {
    if (cfg == nullptr || key == nullptr || out == nullptr) return null_argument("cfg, key, and out");
    return guarded([&] { *out = cfg->config.get_f64(key); });
}

mh_status mh_config_f64_or(const mh_config* cfg, const char* key, double fallback, double* out) {
    if (cfg == nullptr || key == nullptr || out == nullptr) return null_argument("cfg, key, and out");
    return guarded([&] { *out = cfg->config.get_f64(key, fallback); });
}

void mh_config_free(mh_config* cfg) {
    delete cfg;
}

/* --- datasets --- */

mh_status mh_dataset_generate(const mh_synth_params* params, mh_dataset** out) {
    if (params == nullptr || out == nullptr) return null_argument("params and out");
    return guarded([&] {
        maskhash::SynthConfig config;
        config.k_classes = params->k_classes;
        config.videos_per_class = params->videos_per_class;
        config.frames_per_video = params->frames_per_video;
        config.feature_dim = params->feature_dim;
        config.class_sep = params->class_sep;
        config.video_sep = params->video_sep;
        config.frame_noise = params->frame_noise;
        config.seed = params->seed;
        auto handle = std::make_unique<mh_dataset>();
        handle->dataset = maskhash::generate_synthetic(config);
        *out = handle.release();
    });
}

mh_status mh_dataset_load(const char* features_path, const char* labels_path, mh_dataset** out) {
    if (features_path == nullptr || labels_path == nullptr || out == nullptr) {
        return null_argument("paths and out");
    }
    return guarded([&] {
        auto handle = std::make_unique<mh_dataset>();
        handle->dataset = maskhash::load_dataset(features_path, labels_path);
        *out = handle.release();
    });
}

mh_status mh_dataset_save(const mh_dataset* ds, const char* features_path, const char* labels_path) {
    if (ds == nullptr || features_path == nullptr || labels_path == nullptr) {
        return null_argument("ds and paths");
    }
    return guarded([&] { maskhash::save_dataset(ds->dataset, features_path, labels_path); });
}

mh_status mh_dataset_split(const mh_dataset* ds, double train_fraction, uint64_t seed,
                           mh_dataset** train_out, mh_dataset** test_out) {
    if (ds == nullptr || train_out == nullptr || test_out == nullptr) {
        return null_argument("ds, train_out, and test_out");
    }
    return guarded([&] {
        auto [train, test] = maskhash::split(ds->dataset, train_fraction, seed);
        auto train_handle = std::make_unique<mh_dataset>();
        auto test_handle = std::make_unique<mh_dataset>();
        train_handle->dataset = std::move(train);
        test_handle->dataset = std::move(test);
        *train_out = train_handle.release();
        *test_out = test_handle.release();
    });
}

uint32_t mh_dataset_num_videos(const mh_dataset* ds) {
    return ds == nullptr ? 0 : static_cast<uint32_t>(ds->dataset.videos.size());
}

uint32_t mh_dataset_num_classes(const mh_dataset* ds) {
    return ds == nullptr ? 0 : ds->dataset.num_classes;
}

uint32_t mh_dataset_feature_dim(const mh_dataset* ds) {
    return ds == nullptr ? 0 : ds->dataset.feature_dim;
}

void mh_dataset_free(mh_dataset* ds) {
    delete ds;
}

/* --- training --- */

mh_status mh_train(const mh_dataset* ds, const mh_architecture* arch, const mh_train_params* train,
                   mh_model** model_out, mh_loss_history** history_out) {
    if (ds == nullptr || arch == nullptr || train == nullptr || model_out == nullptr) {
        return null_argument("ds, arch, train, and model_out");
    }
    return guarded([&] {
        maskhash::TrainConfig config;
        config.alpha = train->alpha;
        config.beta = train->beta;
        config.margin = train->margin;
        config.learning_rate = train->learning_rate;
        config.batch_size = train->batch_size;
        config.iterations = train->iterations;
        config.seed = train->seed;
        if (train->optimizer != nullptr) {
            config.optimizer = train->optimizer;
        }
        maskhash::TrainResult result = maskhash::train(ds->dataset, to_arch(*arch), config);
        auto model_handle = std::make_unique<mh_model>();
        model_handle->params = std::move(result.params);
        if (history_out != nullptr) {
            auto history_handle = std::make_unique<mh_loss_history>();
            history_handle->rows = std::move(result.history);
            *history_out = history_handle.release();
        }
        *model_out = model_handle.release();
    });
}

size_t mh_loss_history_size(const mh_loss_history* history) {
    return history == nullptr ? 0 : history->rows.size();
}

void mh_loss_history_row(const mh_loss_history* history, size_t i, double* total, double* inter,
                         double* intra) {
    if (history == nullptr || i >= history->rows.size()) {
        return;
    }
    const maskhash::LossBreakdown& row = history->rows[i];
    if (total != nullptr) *total = row.total;
    if (inter != nullptr) *inter = row.inter;
    if (intra != nullptr) *intra = row.intra;
}

mh_status mh_loss_history_save_csv(const mh_loss_history* history, const char* path) {
    if (history == nullptr || path == nullptr) return null_argument("history and path");
    return guarded([&] { maskhash::save_loss_history(history->rows, path); });
}

void mh_loss_history_free(mh_loss_history* history) {
    delete history;
}

mh_status mh_model_save(const mh_model* model, const char* path) {
    if (model == nullptr || path == nullptr) return null_argument("model and path");
    return guarded([&] { maskhash::save_model(model->params, path); });
}

mh_status mh_model_load(const char* path, mh_model** out) {
    if (path == nullptr || out == nullptr) return null_argument("path and out");
    return guarded([&] {
        auto handle = std::make_unique<mh_model>();
        handle->params = maskhash::load_model(path);
        *out = handle.release();
    });
}

void mh_model_arch(const mh_model* model, mh_architecture* out) {
    if (model == nullptr || out == nullptr) {
        return;
    }
    const maskhash::Architecture& a = model->params.arch;
    out->feature_dim = a.feature_dim;
    out->embed_dim = a.embed_dim;
    out->repr_dim = a.repr_dim;
    out->code_length = a.code_length;
    out->num_classes = a.num_classes;
    out->n_frames = a.n_frames;
}

void mh_model_free(mh_model* model) {
    delete model;
}

mh_status mh_grad_check(const mh_architecture* arch, double alpha, double beta, double margin,
                        uint64_t seed, uint32_t instances, double epsilon, double* max_rel_error_out) {
    if (arch == nullptr || max_rel_error_out == nullptr) return null_argument("arch and max_rel_error_out");
    return guarded([&] {
        maskhash::TrainConfig config;
        config.alpha = alpha;
        config.beta = beta;
        config.margin = margin;
        *max_rel_error_out = maskhash::grad_check_random(to_arch(*arch), config, seed, instances, epsilon);
    });
}

/* --- masks --- */

mh_status mh_mask_build(const mh_model* model, double ratio, mh_mask** out) {
    if (model == nullptr || out == nullptr) return null_argument("model and out");
    return guarded([&] {
        auto handle = std::make_unique<mh_mask>();
        handle->mask = maskhash::build_mask(model->params, ratio);
        *out = handle.release();
    });
}

mh_status mh_mask_save(const mh_mask* mask, const char* path) {
    if (mask == nullptr || path == nullptr) return null_argument("mask and path");
    return guarded([&] { maskhash::save_mask(mask->mask, path); });
}

mh_status mh_mask_load(const char* path, mh_mask** out) {
    if (path == nullptr || out == nullptr) return null_argument("path and out");
    return guarded([&] {
        auto handle = std::make_unique<mh_mask>();
        handle->mask = maskhash::load_mask(path);
        *out = handle.release();
    });
}

void mh_mask_dims(const mh_mask* mask, uint32_t* num_classes, uint32_t* code_length,
                  uint32_t* selected_count) {
    if (mask == nullptr) {
        return;
    }
    if (num_classes != nullptr) *num_classes = mask->mask.num_classes;
    if (code_length != nullptr) *code_length = mask->mask.code_length;
    if (selected_count != nullptr) *selected_count = mask->mask.selected_count;
}

int mh_mask_bit(const mh_mask* mask, uint32_t row, uint32_t bit) {
    if (mask == nullptr || row >= mask->mask.num_classes || bit >= mask->mask.code_length) {
        return 0;
    }
    return mask->mask.bit(row, bit) ? 1 : 0;
}

mh_status mh_mask_export_csv(const mh_mask* mask, const char* map_csv_path,
                             const char* contribution_csv_path) {
    if (mask == nullptr || map_csv_path == nullptr || contribution_csv_path == nullptr) {
        return null_argument("mask and paths");
    }
    return guarded([&] { maskhash::export_bit_map(mask->mask, map_csv_path, contribution_csv_path); });
}

void mh_mask_free(mh_mask* mask) {
    delete mask;
}

/* --- index --- */

mh_status mh_index_build(const mh_model* model, const mh_dataset* database, const mh_mask* mask,
                         uint64_t seed, mh_index** out) {
    if (model == nullptr || database == nullptr || mask == nullptr || out == nullptr) {
        return null_argument("model, database, mask, and out");
    }
    return guarded([&] {
        auto handle = std::make_unique<mh_index>();
        handle->index = maskhash::build_index(model->params, database->dataset, mask->mask, seed);
        *out = handle.release();
    });
}

mh_status mh_index_save(const mh_index* index, const char* path) {
    if (index == nullptr || path == nullptr) return null_argument("index and path");
    return guarded([&] { maskhash::save_index(index->index, path); });
}

mh_status mh_index_load(const char* path, mh_index** out) {
    if (path == nullptr || out == nullptr) return null_argument("path and out");
    return guarded([&] {
        auto handle = std::make_unique<mh_index>();
        handle->index = maskhash::load_index(path);
        *out = handle.release();
    });
}

uint32_t mh_index_size(const mh_index* index) {
    return index == nullptr ? 0 : static_cast<uint32_t>(index->index.entries.size());
}

void mh_index_free(mh_index* index) {
    delete index;
}

mh_status mh_query(const mh_index* index, const mh_model* model, const mh_dataset* queries,
                   uint32_t video_id, uint64_t seed, size_t top_n, mh_ranking** out) {
    if (index == nullptr || model == nullptr || queries == nullptr || out == nullptr) {
        return null_argument("index, model, queries, and out");
    }
    return guarded([&] {
        const maskhash::Video* video = nullptr;
        for (const maskhash::Video& candidate : queries->dataset.videos) {
            if (candidate.id == video_id) {
                video = &candidate;
                break;
            }
        }
        if (video == nullptr) {
            throw maskhash::Error::data("video id " + std::to_string(video_id) +
                                        " not found in the query set");
        }
        maskhash::Rng rng(seed);
        const maskhash::FrameSet set =
            maskhash::sample_frame_set(*video, model->params.arch.n_frames, rng);
        auto handle = std::make_unique<mh_ranking>();
        handle->hits = maskhash::query(index->index, model->params, set, top_n);
        *out = handle.release();
    });
}

size_t mh_ranking_size(const mh_ranking* ranking) {
    return ranking == nullptr ? 0 : ranking->hits.size();
}

void mh_ranking_row(const mh_ranking* ranking, size_t i, uint32_t* video_id, uint32_t* label,
                    uint32_t* distance) {
    if (ranking == nullptr || i >= ranking->hits.size()) {
        return;
    }
    const maskhash::RankedHit& hit = ranking->hits[i];
    if (video_id != nullptr) *video_id = hit.video_id;
    if (label != nullptr) *label = hit.label;
    if (distance != nullptr) *distance = hit.distance;
}

void mh_ranking_free(mh_ranking* ranking) {
    delete ranking;
}

/* --- metrics --- */

mh_status mh_evaluate(const mh_index* index, const mh_model* model, const mh_dataset* queries,
                      uint64_t seed, uint32_t max_n, uint32_t threads, mh_report** out) {
    if (index == nullptr || model == nullptr || queries == nullptr || out == nullptr) {
        return null_argument("index, model, queries, and out");
    }
    return guarded([&] {
        auto handle = std::make_unique<mh_report>();
        handle->report =
            maskhash::evaluate(index->index, model->params, queries->dataset, seed, max_n, threads);
        *out = handle.release();
    });
}

double mh_report_map(const mh_report* report) {
    return report == nullptr ? 0.0 : report->report.map;
}

double mh_report_map_at_n(const mh_report* report) {
    return report == nullptr ? 0.0 : report->report.map_at_n;
}

uint32_t mh_report_map_at_n_cap(const mh_report* report) {
    return report == nullptr ? 0 : report->report.map_at_n_cap;
}

uint32_t mh_report_num_queries(const mh_report* report) {
    return report == nullptr ? 0 : report->report.num_queries;
}

uint32_t mh_report_num_excluded(const mh_report* report) {
    return report == nullptr ? 0 : report->report.num_queries_excluded;
}

size_t mh_report_precision_points(const mh_report* report) {
    return report == nullptr ? 0 : report->report.precision_at.size();
}

double mh_report_precision_at(const mh_report* report, size_t i) {
    if (report == nullptr || i >= report->report.precision_at.size()) {
        return 0.0;
    }
    return report->report.precision_at[i];
}

size_t mh_report_pr_points(const mh_report* report) {
    return report == nullptr ? 0 : report->report.pr_precision.size();
}

void mh_report_pr_point(const mh_report* report, size_t i, double* recall, double* precision) {
    if (report == nullptr || i >= report->report.pr_precision.size()) {
        return;
    }
    if (recall != nullptr) *recall = static_cast<double>(i) / 100.0;
    if (precision != nullptr) *precision = report->report.pr_precision[i];
}

mh_status mh_report_save_csvs(const mh_report* report, const char* map_report_path,
                              const char* precision_path, const char* pr_path) {
    if (report == nullptr || map_report_path == nullptr || precision_path == nullptr ||
        pr_path == nullptr) {
        return null_argument("report and paths");
    }
    return guarded(
        [&] { maskhash::save_metric_csvs(report->report, map_report_path, precision_path, pr_path); });
}

void mh_report_free(mh_report* report) {
    delete report;
}

mh_status mh_sweep_run(const mh_model* model, const mh_dataset* database, const mh_dataset* queries,
                       const double* ratios, size_t num_ratios, uint64_t seed, uint32_t max_n,
                       uint32_t threads, mh_sweep** out) {
    if (model == nullptr || database == nullptr || queries == nullptr || ratios == nullptr ||
        out == nullptr) {
        return null_argument("model, database, queries, ratios, and out");
    }
    return guarded([&] {
        const std::vector<double> grid(ratios, ratios + num_ratios);
        auto handle = std::make_unique<mh_sweep>();
        handle->rows = maskhash::ratio_sweep(model->params, database->dataset, queries->dataset, grid,
                                             seed, max_n, threads);
        *out = handle.release();
    });
}

size_t mh_sweep_size(const mh_sweep* sweep) {
    return sweep == nullptr ? 0 : sweep->rows.size();
}

void mh_sweep_row(const mh_sweep* sweep, size_t i, double* ratio, double* map) {
    if (sweep == nullptr || i >= sweep->rows.size()) {
        return;
    }
    if (ratio != nullptr) *ratio = sweep->rows[i].ratio;
    if (map != nullptr) *map = sweep->rows[i].map;
}

mh_status mh_sweep_save_csv(const mh_sweep* sweep, const char* path) {
    if (sweep == nullptr || path == nullptr) return null_argument("sweep and path");
    return guarded([&] { maskhash::save_sweep_csv(sweep->rows, path); });
}

void mh_sweep_free(mh_sweep* sweep) {
    delete sweep;
}

} // extern "C"
