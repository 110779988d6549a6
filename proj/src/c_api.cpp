// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/kvtp.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "kvtp/allocator.hpp"
#include "kvtp/costmodel.hpp"
#include "kvtp/curation.hpp"
#include "kvtp/error.hpp"
#include "kvtp/io.hpp"
#include "kvtp/predictor.hpp"
#include "kvtp/pruners.hpp"
#include "kvtp/simulation.hpp"
#include "kvtp/synthetic.hpp"

struct kvtp_matrix {
    kvtp::Matrix value;
};

struct kvtp_params {
    kvtp::PredictorParams value;
};

struct kvtp_corpus {
    kvtp::SyntheticCorpus value;
};

struct kvtp_pruned {
    kvtp::PrunedSequence value;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
kvtp_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return KVTP_OK;
    } catch (const kvtp::Error& e) {
        g_last_error = e.what();
        return static_cast<kvtp_status>(static_cast<int>(e.code()));
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return KVTP_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return KVTP_ERR_INTERNAL;
    }
}

void need(const void* p, const char* what) {
    kvtp::require(p != nullptr, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) {
        throw std::bad_alloc();
    }
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

kvtp::AllocationConfig to_cpp(const kvtp_allocation_config* c) {
    need(c, "allocation config");
    return {c->alpha, c->temperature, c->max_ratio};
}

kvtp::TrainConfig to_cpp(const kvtp_train_config& c) {
    return {c.learning_rate, c.momentum, c.epochs, c.batch_size, c.seed, c.train_mixing != 0, c.train_adapter != 0};
}

kvtp::SyntheticSpec to_cpp(const kvtp_synthetic_spec& s) {
    kvtp::SyntheticSpec out;
    out.videos = s.videos;
    out.frames = s.frames;
    out.dim = s.dim;
    out.tokens_per_frame = s.tokens_per_frame;
    out.token_dim = s.token_dim;
    out.keyframes = s.keyframes;
    out.clip_size = s.clip_size;
    out.signal_tokens = s.signal_tokens;
    out.context_tokens = s.context_tokens;
    out.signal_strength = s.signal_strength;
    out.seed = s.seed;
    return out;
}

kvtp::BackboneSpec to_cpp(const kvtp_backbone_spec* s) {
    need(s, "backbone spec");
    return {s->layers, s->model_dim, s->ffn_dim, s->text_tokens, s->predictor_overhead_flops};
}

kvtp::PruneBackend to_cpp(kvtp_backend b) {
    switch (b) {
    case KVTP_BACKEND_RANDOM: return kvtp::PruneBackend::Random;
    case KVTP_BACKEND_SALIENCY: return kvtp::PruneBackend::Saliency;
    case KVTP_BACKEND_PRUMERGE: return kvtp::PruneBackend::SaliencyMerge;
    case KVTP_BACKEND_MERGE: return kvtp::PruneBackend::Bipartite;
    case KVTP_BACKEND_HARD: return kvtp::PruneBackend::Hard;
    }
    throw kvtp::Error(kvtp::ErrorCode::InvalidArgument, "unknown backend value");
}

std::vector<kvtp::FrameTokenSet> split_frames(const kvtp_matrix* tokens, size_t tokens_per_frame,
                                              const kvtp_matrix* saliency, size_t frame_count) {
    need(tokens, "tokens");
    kvtp::require(tokens_per_frame >= 1, "tokens per frame must be positive");
    kvtp::require(tokens->value.rows() == frame_count * tokens_per_frame,
                  "token matrix has " + std::to_string(tokens->value.rows()) + " rows, expected " +
                      std::to_string(frame_count) + " x " + std::to_string(tokens_per_frame),
                  kvtp::ErrorCode::Format);
    if (saliency) {
        kvtp::require(saliency->value.rows() == frame_count && saliency->value.cols() == tokens_per_frame,
                      "saliency must be frame_count x tokens_per_frame", kvtp::ErrorCode::Format);
    }
    std::vector<kvtp::FrameTokenSet> frames(frame_count);
    for (size_t i = 0; i < frame_count; ++i) {
        frames[i].frame_index = i;
        frames[i].tokens = tokens->value.slice_rows(i * tokens_per_frame, tokens_per_frame);
        if (saliency) {
            const auto row = saliency->value.row(i);
            frames[i].saliency = kvtp::Vector(row.begin(), row.end());
        }
    }
    return frames;
}

std::vector<std::string> split_csv(const char* text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b != std::string::npos) {
            out.push_back(item.substr(b, e - b + 1));
        }
    }
    return out;
}

}  // namespace

extern "C" {

const char* kvtp_version(void) {
    return "0.1.0";
}

const char* kvtp_last_error(void) {
    return g_last_error.c_str();
}

void kvtp_string_free(char* s) {
    std::free(s);
}

kvtp_status kvtp_matrix_create(size_t rows, size_t cols, const double* data, kvtp_matrix** out) {
    return guarded([&] {
        need(out, "out");
        need(data, "data");
        std::vector<double> values(data, data + rows * cols);
        *out = new kvtp_matrix{kvtp::Matrix(rows, cols, std::move(values))};
    });
}

kvtp_status kvtp_matrix_load(const char* path, kvtp_matrix** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new kvtp_matrix{kvtp::read_matrix(path)};
    });
}

kvtp_status kvtp_matrix_save(const kvtp_matrix* m, const char* path) {
    return guarded([&] {
        need(m, "matrix");
        need(path, "path");
        kvtp::write_matrix_binary(path, m->value);
    });
}

size_t kvtp_matrix_rows(const kvtp_matrix* m) {
    return m ? m->value.rows() : 0;
}

size_t kvtp_matrix_cols(const kvtp_matrix* m) {
    return m ? m->value.cols() : 0;
}

const double* kvtp_matrix_data(const kvtp_matrix* m) {
    return m ? m->value.data().data() : nullptr;
}

void kvtp_matrix_free(kvtp_matrix* m) {
    delete m;
}

kvtp_status kvtp_params_create(size_t dim, kvtp_params** out) {
    return guarded([&] {
        need(out, "out");
        *out = new kvtp_params{kvtp::PredictorParams::initial(dim)};
    });
}

kvtp_status kvtp_params_load(const char* path, kvtp_params** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new kvtp_params{kvtp::load_params(path)};
    });
}

kvtp_status kvtp_params_save(const kvtp_params* p, const char* path) {
    return guarded([&] {
        need(p, "params");
        need(path, "path");
        kvtp::save_params(path, p->value);
    });
}

kvtp_status kvtp_params_get(const kvtp_params* p, kvtp_param_scalars* out) {
    return guarded([&] {
        need(p, "params");
        need(out, "out");
        const auto& v = p->value;
        *out = {v.a, v.b, v.tau_local, v.tau_global, v.theta, v.phi};
    });
}

kvtp_status kvtp_params_set(kvtp_params* p, const kvtp_param_scalars* values) {
    return guarded([&] {
        need(p, "params");
        need(values, "values");
        kvtp::PredictorParams next = p->value;
        next.a = values->a;
        next.b = values->b;
        next.tau_local = values->tau_local;
        next.tau_global = values->tau_global;
        next.theta = values->theta;
        next.phi = values->phi;
        next.validate();
        p->value = std::move(next);
    });
}

kvtp_status kvtp_params_export_text(const kvtp_params* p, char** out) {
    return guarded([&] {
        need(p, "params");
        need(out, "out");
        *out = dup_string(kvtp::export_params_text(p->value));
    });
}

void kvtp_params_free(kvtp_params* p) {
    delete p;
}

kvtp_status kvtp_predict_scores(const kvtp_params* p, const kvtp_matrix* frames, size_t clip_size,
                                const double* query, size_t query_dim, double* out_scores) {
    return guarded([&] {
        need(p, "params");
        need(frames, "frames");
        need(query, "query");
        need(out_scores, "out_scores");
        const kvtp::EmbeddingSequence seq{frames->value, clip_size};
        const kvtp::Vector scores = kvtp::predict_scores(p->value, seq, std::span<const double>(query, query_dim));
        std::copy(scores.begin(), scores.end(), out_scores);
    });
}

void kvtp_train_config_default(kvtp_train_config* out) {
    if (!out) {
        return;
    }
    const kvtp::TrainConfig d;
    *out = {d.learning_rate, d.momentum, d.epochs, d.batch_size, d.seed, d.train_mixing, d.train_adapter};
}

kvtp_status kvtp_train(const kvtp_corpus* corpus, const kvtp_train_config* config, const kvtp_params* initial,
                       kvtp_params** out, double* loss_trace) {
    return guarded([&] {
        need(corpus, "corpus");
        need(config, "config");
        need(out, "out");
        const auto samples = corpus->value.samples();
        kvtp::require(!samples.empty(), "corpus is empty");
        kvtp::PredictorParams init =
            initial ? initial->value : kvtp::PredictorParams::initial(samples.front().embeddings.dim());
        kvtp::TrainResult r = kvtp::train(samples, to_cpp(*config), std::move(init));
        if (loss_trace) {
            std::copy(r.loss_trace.begin(), r.loss_trace.end(), loss_trace);
        }
        *out = new kvtp_params{std::move(r.params)};
    });
}

void kvtp_synthetic_spec_default(kvtp_synthetic_spec* out) {
    if (!out) {
        return;
    }
    const kvtp::SyntheticSpec s;
    *out = {s.videos,    s.frames,        s.dim,           s.tokens_per_frame, s.token_dim, s.keyframes,
            s.clip_size, s.signal_tokens, s.context_tokens, s.signal_strength,  s.seed};
}

kvtp_status kvtp_synthetic_generate(const kvtp_synthetic_spec* spec, kvtp_corpus** out) {
    return guarded([&] {
        need(spec, "spec");
        need(out, "out");
        *out = new kvtp_corpus{kvtp::generate_synthetic(to_cpp(*spec))};
    });
}

kvtp_status kvtp_corpus_load(const char* dir, kvtp_corpus** out) {
    return guarded([&] {
        need(dir, "dir");
        need(out, "out");
        *out = new kvtp_corpus{kvtp::load_corpus(dir)};
    });
}

kvtp_status kvtp_corpus_save(const kvtp_corpus* corpus, const char* dir) {
    return guarded([&] {
        need(corpus, "corpus");
        need(dir, "dir");
        kvtp::save_corpus(dir, corpus->value);
    });
}

size_t kvtp_corpus_size(const kvtp_corpus* corpus) {
    return corpus ? corpus->value.videos.size() : 0;
}

void kvtp_corpus_free(kvtp_corpus* corpus) {
    delete corpus;
}

kvtp_status kvtp_allocate(const double* scores, size_t n, const kvtp_allocation_config* config, double* out_ratios) {
    return guarded([&] {
        need(scores, "scores");
        need(out_ratios, "out_ratios");
        const kvtp::Vector r = kvtp::allocate(std::span<const double>(scores, n), to_cpp(config));
        std::copy(r.begin(), r.end(), out_ratios);
    });
}

kvtp_status kvtp_token_budgets(const double* ratios, size_t n, size_t tokens_per_frame, size_t* out_budgets) {
    return guarded([&] {
        need(ratios, "ratios");
        need(out_budgets, "out_budgets");
        const auto b = kvtp::to_token_budgets(std::span<const double>(ratios, n), tokens_per_frame);
        std::copy(b.begin(), b.end(), out_budgets);
    });
}

kvtp_status kvtp_sparsity(const double* scores, size_t n, const kvtp_allocation_config* config, double beta,
                          kvtp_sparsity_report* out) {
    return guarded([&] {
        need(scores, "scores");
        need(out, "out");
        const auto r = kvtp::sparsity(std::span<const double>(scores, n), to_cpp(config), beta);
        *out = {r.sparsity, r.passes_sparsity ? 1 : 0, r.passes_length ? 1 : 0};
    });
}

kvtp_status kvtp_hard_allocation(const double* scores, size_t n, double keep_fraction, double* out_ratios) {
    return guarded([&] {
        need(scores, "scores");
        need(out_ratios, "out_ratios");
        const kvtp::Vector r = kvtp::hard_allocation(std::span<const double>(scores, n), keep_fraction);
        std::copy(r.begin(), r.end(), out_ratios);
    });
}

kvtp_status kvtp_allocation_report(const double* scores, size_t n, const kvtp_allocation_config* config,
                                   size_t tokens_per_frame, double beta, int json, char** out) {
    return guarded([&] {
        need(scores, "scores");
        need(out, "out");
        const std::span<const double> s(scores, n);
        const kvtp::AllocationConfig cfg = to_cpp(config);
        const kvtp::Vector ratios = kvtp::allocate(s, cfg);
        const auto budgets = kvtp::to_token_budgets(ratios, tokens_per_frame);
        const auto report = kvtp::sparsity(s, cfg, beta);
        *out = dup_string(kvtp::format_allocation_report(s, ratios, budgets, report, beta,
                                                         json ? kvtp::ReportFormat::Json : kvtp::ReportFormat::Text));
    });
}

kvtp_status kvtp_backend_from_name(const char* name, kvtp_backend* out) {
    return guarded([&] {
        need(name, "name");
        need(out, "out");
        switch (kvtp::parse_backend(name)) {
        case kvtp::PruneBackend::Random: *out = KVTP_BACKEND_RANDOM; break;
        case kvtp::PruneBackend::Saliency: *out = KVTP_BACKEND_SALIENCY; break;
        case kvtp::PruneBackend::SaliencyMerge: *out = KVTP_BACKEND_PRUMERGE; break;
        case kvtp::PruneBackend::Bipartite: *out = KVTP_BACKEND_MERGE; break;
        case kvtp::PruneBackend::Hard: *out = KVTP_BACKEND_HARD; break;
        }
    });
}

kvtp_status kvtp_prune_video(const kvtp_matrix* tokens, size_t tokens_per_frame, const kvtp_matrix* saliency,
                             const size_t* budgets, size_t frame_count, kvtp_backend backend, uint64_t seed,
                             kvtp_pruned** out) {
    return guarded([&] {
        need(budgets, "budgets");
        need(out, "out");
        const auto frames = split_frames(tokens, tokens_per_frame, saliency, frame_count);
        *out = new kvtp_pruned{kvtp::prune_video(frames, std::span<const size_t>(budgets, frame_count),
                                                 to_cpp(backend), seed)};
    });
}

kvtp_status kvtp_hard_frame_select(const kvtp_matrix* tokens, size_t tokens_per_frame, const double* scores,
                                   size_t frame_count, double fraction, kvtp_pruned** out) {
    return guarded([&] {
        need(scores, "scores");
        need(out, "out");
        const auto frames = split_frames(tokens, tokens_per_frame, nullptr, frame_count);
        *out = new kvtp_pruned{
            kvtp::hard_frame_select(frames, std::span<const double>(scores, frame_count), fraction)};
    });
}

size_t kvtp_pruned_total_tokens(const kvtp_pruned* p) {
    return p ? p->value.total_tokens() : 0;
}

kvtp_status kvtp_pruned_save(const kvtp_pruned* p, const char* matrix_path, const char* index_path) {
    return guarded([&] {
        need(p, "pruned");
        need(matrix_path, "matrix_path");
        need(index_path, "index_path");
        kvtp::save_pruned(p->value, matrix_path, index_path);
    });
}

void kvtp_pruned_free(kvtp_pruned* p) {
    delete p;
}

void kvtp_calibration_backbone(kvtp_backbone_spec* out, uint64_t* full_vision_tokens) {
    const kvtp::CalibrationConfig c = kvtp::calibration_config();
    if (out) {
        *out = {c.backbone.layers, c.backbone.model_dim, c.backbone.ffn_dim, c.backbone.text_tokens,
                c.backbone.predictor_overhead_flops};
    }
    if (full_vision_tokens) {
        *full_vision_tokens = c.full_vision_tokens();
    }
}

kvtp_status kvtp_forward_flops(const kvtp_backbone_spec* spec, uint64_t vision_tokens, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = kvtp::forward_flops(to_cpp(spec), vision_tokens);
    });
}

kvtp_status kvtp_relative_flops(const kvtp_backbone_spec* spec, uint64_t full_vision_tokens,
                                uint64_t pruned_vision_tokens, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = kvtp::relative_flops(to_cpp(spec), full_vision_tokens, pruned_vision_tokens);
    });
}

kvtp_status kvtp_flops_table(const kvtp_backbone_spec* spec, uint64_t full_vision_tokens, const double* keep_ratios,
                             size_t count, int csv, char** out) {
    return guarded([&] {
        need(out, "out");
        kvtp::require(count == 0 || keep_ratios != nullptr, "keep_ratios must not be NULL");
        const std::vector<double> ratios(keep_ratios, keep_ratios + count);
        *out = dup_string(kvtp::format_flops_table(kvtp::flops_table(to_cpp(spec), full_vision_tokens, ratios), csv != 0));
    });
}

void kvtp_curate_config_default(kvtp_curate_config* out) {
    if (!out) {
        return;
    }
    const kvtp::CurationConfig d;
    *out = {d.allocation.alpha, d.beta, d.allocation.temperature, d.clip_size, d.concurrency, d.retry.max_attempts,
            nullptr, nullptr, KVTP_CLIENT_MOCK, 0};
}

kvtp_status kvtp_curate(const char* const* inputs, size_t input_count, const char* out_dir,
                        const kvtp_curate_config* config, char** summary) {
    return guarded([&] {
        need(out_dir, "out_dir");
        need(config, "config");
        kvtp::require(input_count == 0 || inputs != nullptr, "inputs must not be NULL");
        kvtp::CurationConfig cfg;
        cfg.allocation.alpha = config->alpha;
        cfg.allocation.temperature = config->temperature;
        cfg.beta = config->beta;
        cfg.clip_size = config->clip_size;
        cfg.concurrency = config->concurrency;
        cfg.retry.max_attempts = config->max_attempts;
        if (config->eval_sources) {
            cfg.eval_sources = split_csv(config->eval_sources);
        }
        if (config->model) {
            cfg.model = config->model;
        }
        std::unique_ptr<kvtp::LlmClient> client;
        if (config->client == KVTP_CLIENT_HTTP) {
            const auto http = kvtp::HttpClientConfig::from_environment();
            kvtp::require(!http.endpoint.empty(), "KVTP_LLM_ENDPOINT is not set", kvtp::ErrorCode::Client);
            client = std::make_unique<kvtp::HttpLlmClient>(http);
        } else {
            cfg.retry.backoff = std::chrono::milliseconds(0);
            client = std::make_unique<kvtp::MockLlmClient>(config->mock_seed);
        }
        std::vector<std::filesystem::path> paths;
        for (size_t i = 0; i < input_count; ++i) {
            need(inputs[i], "input path");
            paths.emplace_back(inputs[i]);
        }
        const kvtp::CurationSummary s = kvtp::curate(*client, paths, out_dir, cfg);
        if (summary) {
            std::ostringstream text;
            text << "eval: " << s.eval.size() << "\ntrain: " << s.train.size() << "\nskipped: " << s.skipped.size()
                 << "\nwarnings: " << s.warnings.size() << "\n";
            *summary = dup_string(text.str());
        }
    });
}

void kvtp_simulate_config_default(kvtp_simulate_config* out) {
    if (!out) {
        return;
    }
    const kvtp::SimulationConfig d;
    kvtp_synthetic_spec_default(&out->spec);
    out->train_videos = d.train_videos;
    out->eval_videos = d.eval_videos;
    out->retention_videos = d.retention_videos;
    out->train = {d.train.learning_rate, d.train.momentum, d.train.epochs, d.train.batch_size,
                  d.train.seed,          d.train.train_mixing, d.train.train_adapter};
    out->alpha = d.alpha;
    out->temperatures = nullptr;
    out->temperature_count = 0;
    out->betas = nullptr;
    out->beta_count = 0;
    out->backend = KVTP_BACKEND_SALIENCY;
}

kvtp_status kvtp_simulate(const kvtp_simulate_config* config, char** csv, double* top1_accuracy) {
    return guarded([&] {
        need(config, "config");
        need(csv, "csv");
        kvtp::SimulationConfig cfg;
        cfg.spec = to_cpp(config->spec);
        cfg.train_videos = config->train_videos;
        cfg.eval_videos = config->eval_videos;
        cfg.retention_videos = config->retention_videos;
        cfg.train = to_cpp(config->train);
        cfg.alpha = config->alpha;
        if (config->temperatures && config->temperature_count) {
            cfg.temperatures.assign(config->temperatures, config->temperatures + config->temperature_count);
        }
        if (config->betas && config->beta_count) {
            cfg.betas.assign(config->betas, config->betas + config->beta_count);
        }
        cfg.backend = to_cpp(config->backend);
        const kvtp::SimulationResult r = kvtp::run_simulation(cfg);
        if (top1_accuracy) {
            *top1_accuracy = r.top1_accuracy;
        }
        *csv = dup_string(kvtp::simulation_csv(r));
    });
}

}  // extern "C"
