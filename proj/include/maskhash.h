/* Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root. */

/*
 * C interface to the maskhash library: supervised video hashing with
 * per-category bit masks and masked-Hamming retrieval.
 *
 * Every function that can fail returns an mh_status; on failure the handle
 * outputs are left untouched and mh_last_error() holds a one-line message for
 * the calling thread. Handles are opaque and owned by the caller: each
 * mh_*_free releases one. Accessors on valid handles do not fail.
 */

#ifndef MASKHASH_H
#define MASKHASH_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mh_status {
    MH_OK = 0,
    MH_ERR_CONFIG = 2,  /* invalid configuration, key, or argument */
    MH_ERR_DATA = 3,    /* malformed file, dimension mismatch, contract violation */
    MH_ERR_NUMERIC = 4  /* non-finite values, divergence */
} mh_status;

/* Message for the most recent failure on this thread; "" when none. The
 * pointer stays valid until the next API call on the same thread. */
const char* mh_last_error(void);

typedef struct mh_config mh_config;
typedef struct mh_dataset mh_dataset;
typedef struct mh_model mh_model;
typedef struct mh_loss_history mh_loss_history;
typedef struct mh_mask mh_mask;
typedef struct mh_index mh_index;
typedef struct mh_ranking mh_ranking;
typedef struct mh_report mh_report;
typedef struct mh_sweep mh_sweep;

typedef struct mh_architecture {
    uint32_t feature_dim;
    uint32_t embed_dim;
    uint32_t repr_dim;
    uint32_t code_length;
    uint32_t num_classes;
    uint32_t n_frames;
} mh_architecture;

typedef struct mh_train_params {
    double alpha;
    double beta;
    double margin;
    double learning_rate;
    uint32_t batch_size;
    uint32_t iterations;
    uint64_t seed;
    const char* optimizer; /* "sgd", "sgd_momentum(mu)", or "adam(b1,b2,eps)" */
} mh_train_params;

typedef struct mh_synth_params {
    uint32_t k_classes;
    uint32_t videos_per_class;
    uint32_t frames_per_video;
    uint32_t feature_dim;
    double class_sep;
    double video_sep;
    double frame_noise;
    uint64_t seed;
} mh_synth_params;

/* --- configuration files: flat key=value lines, '#' comments --- */

mh_status mh_config_open(const char* path, mh_config** out);
int mh_config_has(const mh_config* cfg, const char* key);
/* Required getters fail with MH_ERR_CONFIG naming the missing key. String
 * results stay valid until mh_config_free. */
mh_status mh_config_str(mh_config* cfg, const char* key, const char** out);
mh_status mh_config_str_or(mh_config* cfg, const char* key, const char* fallback, const char** out);
mh_status mh_config_u32(const mh_config* cfg, const char* key, uint32_t* out);
mh_status mh_config_u32_or(const mh_config* cfg, const char* key, uint32_t fallback, uint32_t* out);
mh_status mh_config_u64(const mh_config* cfg, const char* key, uint64_t* out);
mh_status mh_config_u64_or(const mh_config* cfg, const char* key, uint64_t fallback, uint64_t* out);
mh_status mh_config_f64(const mh_config* cfg, const char* key, double* out);
mh_status mh_config_f64_or(const mh_config* cfg, const char* key, double fallback, double* out);
void mh_config_free(mh_config* cfg);

/* --- datasets --- */

mh_status mh_dataset_generate(const mh_synth_params* params, mh_dataset** out);
mh_status mh_dataset_load(const char* features_path, const char* labels_path, mh_dataset** out);
mh_status mh_dataset_save(const mh_dataset* ds, const char* features_path, const char* labels_path);
/* Stratified per class; both sides keep at least one video of every class. */
mh_status mh_dataset_split(const mh_dataset* ds, double train_fraction, uint64_t seed,
                           mh_dataset** train_out, mh_dataset** test_out);
uint32_t mh_dataset_num_videos(const mh_dataset* ds);
uint32_t mh_dataset_num_classes(const mh_dataset* ds);
uint32_t mh_dataset_feature_dim(const mh_dataset* ds);
void mh_dataset_free(mh_dataset* ds);

/* --- training --- */

/* history_out may be NULL when the loss curve is not needed. */
mh_status mh_train(const mh_dataset* ds, const mh_architecture* arch, const mh_train_params* train,
                   mh_model** model_out, mh_loss_history** history_out);
size_t mh_loss_history_size(const mh_loss_history* history);
void mh_loss_history_row(const mh_loss_history* history, size_t i, double* total, double* inter,
                         double* intra);
mh_status mh_loss_history_save_csv(const mh_loss_history* history, const char* path);
void mh_loss_history_free(mh_loss_history* history);

mh_status mh_model_save(const mh_model* model, const char* path);
mh_status mh_model_load(const char* path, mh_model** out);
void mh_model_arch(const mh_model* model, mh_architecture* out);
void mh_model_free(mh_model* model);

/* Worst relative error between analytic gradients and central finite
 * differences over `instances` randomly initialized models. */
mh_status mh_grad_check(const mh_architecture* arch, double alpha, double beta, double margin,
                        uint64_t seed, uint32_t instances, double epsilon, double* max_rel_error_out);

/* --- category masks --- */

mh_status mh_mask_build(const mh_model* model, double ratio, mh_mask** out);
mh_status mh_mask_save(const mh_mask* mask, const char* path);
mh_status mh_mask_load(const char* path, mh_mask** out);
void mh_mask_dims(const mh_mask* mask, uint32_t* num_classes, uint32_t* code_length,
                  uint32_t* selected_count);
int mh_mask_bit(const mh_mask* mask, uint32_t row, uint32_t bit);
mh_status mh_mask_export_csv(const mh_mask* mask, const char* map_csv_path,
                             const char* contribution_csv_path);
void mh_mask_free(mh_mask* mask);

/* --- retrieval index --- */

mh_status mh_index_build(const mh_model* model, const mh_dataset* database, const mh_mask* mask,
                         uint64_t seed, mh_index** out);
mh_status mh_index_save(const mh_index* index, const char* path);
mh_status mh_index_load(const char* path, mh_index** out);
uint32_t mh_index_size(const mh_index* index);
void mh_index_free(mh_index* index);

/* Samples a frame set from the query video (found by id), encodes it, picks
 * the mask row by predicted class, and scans the index. */
mh_status mh_query(const mh_index* index, const mh_model* model, const mh_dataset* queries,
                   uint32_t video_id, uint64_t seed, size_t top_n, mh_ranking** out);
size_t mh_ranking_size(const mh_ranking* ranking);
void mh_ranking_row(const mh_ranking* ranking, size_t i, uint32_t* video_id, uint32_t* label,
                    uint32_t* distance);
void mh_ranking_free(mh_ranking* ranking);

/* --- metrics --- */

/* threads: 0 = one per hardware thread. Results are independent of the
 * thread count. */
mh_status mh_evaluate(const mh_index* index, const mh_model* model, const mh_dataset* queries,
                      uint64_t seed, uint32_t max_n, uint32_t threads, mh_report** out);
double mh_report_map(const mh_report* report);
double mh_report_map_at_n(const mh_report* report);
uint32_t mh_report_map_at_n_cap(const mh_report* report);
uint32_t mh_report_num_queries(const mh_report* report);
uint32_t mh_report_num_excluded(const mh_report* report);
size_t mh_report_precision_points(const mh_report* report);
double mh_report_precision_at(const mh_report* report, size_t i); /* n = i + 1 */
size_t mh_report_pr_points(const mh_report* report);
void mh_report_pr_point(const mh_report* report, size_t i, double* recall, double* precision);
mh_status mh_report_save_csvs(const mh_report* report, const char* map_report_path,
                              const char* precision_path, const char* pr_path);
void mh_report_free(mh_report* report);

/* One mask + index + evaluation per ratio; the grid must include 1.0. */
mh_status mh_sweep_run(const mh_model* model, const mh_dataset* database, const mh_dataset* queries,
                       const double* ratios, size_t num_ratios, uint64_t seed, uint32_t max_n,
                       uint32_t threads, mh_sweep** out);
size_t mh_sweep_size(const mh_sweep* sweep);
void mh_sweep_row(const mh_sweep* sweep, size_t i, double* ratio, double* map);
mh_status mh_sweep_save_csv(const mh_sweep* sweep, const char* path);
void mh_sweep_free(mh_sweep* sweep);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MASKHASH_H */
