// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvtp/numerics.hpp"

namespace kvtp {

/// N frame embeddings (rows) grouped into consecutive clips of `clip_size` frames.
struct EmbeddingSequence {
    Matrix frames;
    std::size_t clip_size = 8;

    std::size_t frame_count() const noexcept { return frames.rows(); }
    std::size_t dim() const noexcept { return frames.cols(); }
    void validate() const;
};

/// Learnable state of the relevance predictor.
///
/// `a` and `b` scale and shift every cosine logit (base, local and global heads share them).
/// `tau_local` / `tau_global` are the attention temperatures of the two context-fusion heads and
/// `theta` / `phi` their mixing weights. The optional adapter is a d x d linear map applied to
/// frame embeddings before anything else; the query is never adapted.
struct PredictorParams {
    double a = 1.0;
    double b = 0.0;
    double tau_local = 1.0;
    double tau_global = 1.0;
    double theta = 0.25;
    double phi = 0.25;
    std::optional<Matrix> adapter;

    /// Default initialization with an identity adapter of size `dim` (or none when dim == 0).
    static PredictorParams initial(std::size_t dim);

    void validate() const;
    bool operator==(const PredictorParams&) const = default;
};

struct TrainingSample {
    EmbeddingSequence embeddings;
    Vector query;
    Vector labels;  ///< per-frame scores in [0, 5]

    void validate() const;
};

struct ParamGradients {
    double a = 0.0;
    double b = 0.0;
    double tau_local = 0.0;
    double tau_global = 0.0;
    double theta = 0.0;
    double phi = 0.0;
    std::optional<Matrix> adapter;
};

EmbeddingSequence apply_adapter(const PredictorParams& params, const EmbeddingSequence& embeddings);

// The forward operations below all apply the adapter (if any) to the frames first.
Vector base_logits(const PredictorParams& params, const EmbeddingSequence& embeddings, std::span<const double> query);
Matrix local_fused_embeddings(const PredictorParams& params, const EmbeddingSequence& embeddings);
Matrix global_fused_embeddings(const PredictorParams& params, const EmbeddingSequence& embeddings);
Vector combined_logits(const PredictorParams& params, const EmbeddingSequence& embeddings,
                       std::span<const double> query);

/// Relevance logits for the allocator. No softmax is applied here.
inline Vector predict_scores(const PredictorParams& params, const EmbeddingSequence& embeddings,
                             std::span<const double> query) {
    return combined_logits(params, embeddings, query);
}

/// S - mean(S).
Vector center_labels(std::span<const double> labels);

/// -sum_i log sigmoid(L'_i * S^_i), evaluated as sum_i softplus(-L'_i * S^_i).
double loss(const PredictorParams& params, const TrainingSample& sample);

struct LossAndGradients {
    double loss = 0.0;
    ParamGradients gradients;
};

LossAndGradients loss_gradients(const PredictorParams& params, const TrainingSample& sample);

struct TrainConfig {
    double learning_rate = 1e-2;
    double momentum = 0.9;
    std::size_t epochs = 10;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    bool train_mixing = true;   ///< update theta and phi
    bool train_adapter = true;  ///< update adapter entries when present
};

struct TrainResult {
    PredictorParams params;
    std::vector<double> loss_trace;  ///< mean per-sample loss of each epoch
};

TrainResult train(std::span<const TrainingSample> samples, const TrainConfig& config, PredictorParams initial);

// Versioned binary: "KVTP", u32 version, six f64 scalars, u8 adapter flag, [u64 rows, u64 cols, f64 data].
void save_params(const std::filesystem::path& path, const PredictorParams& params);
PredictorParams load_params(const std::filesystem::path& path);
std::string serialize_params(const PredictorParams& params);
PredictorParams deserialize_params(const std::string& bytes);

/// key = value text for inspection.
std::string export_params_text(const PredictorParams& params);

}  // namespace kvtp
