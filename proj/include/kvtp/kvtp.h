/* Copyright (C) 2026 KVTP contributors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the KVTP library. Every function returns a kvtp_status; on failure
 * kvtp_last_error() describes the problem for the calling thread. Objects are opaque handles
 * released with their *_free function. Strings returned through char** are released with
 * kvtp_string_free.
 */
#ifndef KVTP_KVTP_H
#define KVTP_KVTP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define KVTP_API __declspec(dllexport)
#else
#  define KVTP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the CLI exit codes. */
typedef enum kvtp_status {
    KVTP_OK = 0,
    KVTP_ERR_INVALID_ARGUMENT = 1,
    KVTP_ERR_FORMAT = 2,
    KVTP_ERR_NUMERICAL = 3,
    KVTP_ERR_CLIENT = 4,
    KVTP_ERR_INTERNAL = 5
} kvtp_status;

typedef struct kvtp_matrix kvtp_matrix;
typedef struct kvtp_params kvtp_params;
typedef struct kvtp_corpus kvtp_corpus;
typedef struct kvtp_pruned kvtp_pruned;

KVTP_API const char* kvtp_version(void);
KVTP_API const char* kvtp_last_error(void);
KVTP_API void kvtp_string_free(char* s);

/* ---- matrices ---- */
KVTP_API kvtp_status kvtp_matrix_create(size_t rows, size_t cols, const double* data, kvtp_matrix** out);
/* Binary (u64 rows, u64 cols, f32 data) or CSV, auto-detected. */
KVTP_API kvtp_status kvtp_matrix_load(const char* path, kvtp_matrix** out);
KVTP_API kvtp_status kvtp_matrix_save(const kvtp_matrix* m, const char* path);
KVTP_API size_t kvtp_matrix_rows(const kvtp_matrix* m);
KVTP_API size_t kvtp_matrix_cols(const kvtp_matrix* m);
KVTP_API const double* kvtp_matrix_data(const kvtp_matrix* m);
KVTP_API void kvtp_matrix_free(kvtp_matrix* m);

/* ---- predictor ---- */
typedef struct kvtp_param_scalars {
    double a;
    double b;
    double tau_local;
    double tau_global;
    double theta;
    double phi;
} kvtp_param_scalars;

/* Default initialization; dim > 0 adds an identity adapter of that size. */
KVTP_API kvtp_status kvtp_params_create(size_t dim, kvtp_params** out);
KVTP_API kvtp_status kvtp_params_load(const char* path, kvtp_params** out);
KVTP_API kvtp_status kvtp_params_save(const kvtp_params* p, const char* path);
KVTP_API kvtp_status kvtp_params_get(const kvtp_params* p, kvtp_param_scalars* out);
KVTP_API kvtp_status kvtp_params_set(kvtp_params* p, const kvtp_param_scalars* values);
KVTP_API kvtp_status kvtp_params_export_text(const kvtp_params* p, char** out);
KVTP_API void kvtp_params_free(kvtp_params* p);

/* Relevance logits for every frame row of `frames`; `out_scores` holds rows(frames) doubles. */
KVTP_API kvtp_status kvtp_predict_scores(const kvtp_params* p, const kvtp_matrix* frames, size_t clip_size,
                                         const double* query, size_t query_dim, double* out_scores);

typedef struct kvtp_train_config {
    double learning_rate;
    double momentum;
    size_t epochs;
    size_t batch_size;
    uint64_t seed;
    int train_mixing;
    int train_adapter;
} kvtp_train_config;

KVTP_API void kvtp_train_config_default(kvtp_train_config* out);

/* `initial` may be NULL (default initialization). `loss_trace` receives config->epochs values
 * and may be NULL. */
KVTP_API kvtp_status kvtp_train(const kvtp_corpus* corpus, const kvtp_train_config* config,
                                const kvtp_params* initial, kvtp_params** out, double* loss_trace);

/* ---- synthetic corpus ---- */
typedef struct kvtp_synthetic_spec {
    size_t videos;
    size_t frames;
    size_t dim;
    size_t tokens_per_frame;
    size_t token_dim;
    size_t keyframes;
    size_t clip_size;
    size_t signal_tokens;
    size_t context_tokens;
    double signal_strength;
    uint64_t seed;
} kvtp_synthetic_spec;

KVTP_API void kvtp_synthetic_spec_default(kvtp_synthetic_spec* out);
KVTP_API kvtp_status kvtp_synthetic_generate(const kvtp_synthetic_spec* spec, kvtp_corpus** out);
KVTP_API kvtp_status kvtp_corpus_load(const char* dir, kvtp_corpus** out);
KVTP_API kvtp_status kvtp_corpus_save(const kvtp_corpus* corpus, const char* dir);
KVTP_API size_t kvtp_corpus_size(const kvtp_corpus* corpus);
KVTP_API void kvtp_corpus_free(kvtp_corpus* corpus);

/* ---- allocation ---- */
typedef struct kvtp_allocation_config {
    double alpha;
    double temperature;
    double max_ratio;
} kvtp_allocation_config;

typedef struct kvtp_sparsity_report {
    double sparsity;
    int passes_sparsity;
    int passes_length;
} kvtp_sparsity_report;

KVTP_API kvtp_status kvtp_allocate(const double* scores, size_t n, const kvtp_allocation_config* config,
                                   double* out_ratios);
KVTP_API kvtp_status kvtp_token_budgets(const double* ratios, size_t n, size_t tokens_per_frame,
                                        size_t* out_budgets);
KVTP_API kvtp_status kvtp_sparsity(const double* scores, size_t n, const kvtp_allocation_config* config, double beta,
                                   kvtp_sparsity_report* out);
KVTP_API kvtp_status kvtp_hard_allocation(const double* scores, size_t n, double keep_fraction, double* out_ratios);

/* Per-frame `index, score, ratio, budget` report. json != 0 selects the JSON variant. */
KVTP_API kvtp_status kvtp_allocation_report(const double* scores, size_t n, const kvtp_allocation_config* config,
                                            size_t tokens_per_frame, double beta, int json, char** out);

/* ---- pruning ---- */
typedef enum kvtp_backend {
    KVTP_BACKEND_RANDOM = 0,
    KVTP_BACKEND_SALIENCY = 1,
    KVTP_BACKEND_PRUMERGE = 2,
    KVTP_BACKEND_MERGE = 3,
    KVTP_BACKEND_HARD = 4
} kvtp_backend;

KVTP_API kvtp_status kvtp_backend_from_name(const char* name, kvtp_backend* out);

/* `tokens` stacks the frames: (frame_count * tokens_per_frame) x d_v. `saliency` is NULL or
 * frame_count x tokens_per_frame. */
KVTP_API kvtp_status kvtp_prune_video(const kvtp_matrix* tokens, size_t tokens_per_frame,
                                      const kvtp_matrix* saliency, const size_t* budgets, size_t frame_count,
                                      kvtp_backend backend, uint64_t seed, kvtp_pruned** out);
KVTP_API kvtp_status kvtp_hard_frame_select(const kvtp_matrix* tokens, size_t tokens_per_frame,
                                            const double* scores, size_t frame_count, double fraction,
                                            kvtp_pruned** out);
KVTP_API size_t kvtp_pruned_total_tokens(const kvtp_pruned* p);
KVTP_API kvtp_status kvtp_pruned_save(const kvtp_pruned* p, const char* matrix_path, const char* index_path);
KVTP_API void kvtp_pruned_free(kvtp_pruned* p);

/* ---- cost model ---- */
typedef struct kvtp_backbone_spec {
    uint64_t layers;
    uint64_t model_dim;
    uint64_t ffn_dim;
    uint64_t text_tokens;
    double predictor_overhead_flops;
} kvtp_backbone_spec;

/* Calibrated deployment; full_vision_tokens may be NULL. */
KVTP_API void kvtp_calibration_backbone(kvtp_backbone_spec* out, uint64_t* full_vision_tokens);
KVTP_API kvtp_status kvtp_forward_flops(const kvtp_backbone_spec* spec, uint64_t vision_tokens, double* out);
KVTP_API kvtp_status kvtp_relative_flops(const kvtp_backbone_spec* spec, uint64_t full_vision_tokens,
                                         uint64_t pruned_vision_tokens, double* out);
/* Table for the full model and each keep ratio; csv != 0 selects CSV. */
KVTP_API kvtp_status kvtp_flops_table(const kvtp_backbone_spec* spec, uint64_t full_vision_tokens,
                                      const double* keep_ratios, size_t count, int csv, char** out);

/* ---- curation ---- */
typedef enum kvtp_client_kind { KVTP_CLIENT_MOCK = 0, KVTP_CLIENT_HTTP = 1 } kvtp_client_kind;

typedef struct kvtp_curate_config {
    double alpha;
    double beta;
    double temperature;
    size_t clip_size;
    size_t concurrency;
    size_t max_attempts;
    const char* eval_sources; /* comma separated; NULL for the default list */
    const char* model;        /* NULL for the default */
    kvtp_client_kind client;
    uint64_t mock_seed;
} kvtp_curate_config;

KVTP_API void kvtp_curate_config_default(kvtp_curate_config* out);

/* Annotates and filters the record files, writing records, manifests and logs to out_dir.
 * `summary` (optional) receives a short text summary. */
KVTP_API kvtp_status kvtp_curate(const char* const* inputs, size_t input_count, const char* out_dir,
                                 const kvtp_curate_config* config, char** summary);

/* ---- end-to-end simulation ---- */
typedef struct kvtp_simulate_config {
    kvtp_synthetic_spec spec; /* spec.videos is ignored */
    size_t train_videos;
    size_t eval_videos;
    size_t retention_videos;
    kvtp_train_config train;
    double alpha;
    const double* temperatures;
    size_t temperature_count;
    const double* betas;
    size_t beta_count;
    kvtp_backend backend;
} kvtp_simulate_config;

/* Defaults; temperatures and betas are NULL, meaning the built-in sweeps. */
KVTP_API void kvtp_simulate_config_default(kvtp_simulate_config* out);

/* Metrics CSV in `csv`; `top1_accuracy` (optional) receives held-out keyframe accuracy. */
KVTP_API kvtp_status kvtp_simulate(const kvtp_simulate_config* config, char** csv, double* top1_accuracy);

#ifdef __cplusplus
}
#endif

#endif /* KVTP_KVTP_H */
