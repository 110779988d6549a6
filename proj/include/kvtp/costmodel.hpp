// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kvtp {

/// Decoder-style transformer dimensions for the analytical FLOPs model.
struct BackboneSpec {
    std::uint64_t layers = 28;
    std::uint64_t model_dim = 3584;
    std::uint64_t ffn_dim = 18944;
    std::uint64_t text_tokens = 128;
    double predictor_overhead_flops = 0.0;

    void validate() const;
};

/// layers * 2 * (4 T d^2 + 2 T^2 d + 2 T d d_ff) + overhead, with T = text + vision tokens.
double forward_flops(const BackboneSpec& spec, std::uint64_t vision_tokens);

/// Pruned cost over unpruned cost; the predictor overhead is charged to the pruned run only.
double relative_flops(const BackboneSpec& spec, std::uint64_t full_vision_tokens, std::uint64_t pruned_vision_tokens);

/// Deployment the Table-style percentages are calibrated against: a 7B Qwen2-class decoder
/// (28 layers, d = 3584, d_ff = 18944), 128 frames of 169 tokens, 128 text tokens, and a
/// relevance-predictor overhead of 1e14 FLOPs (one SigLIP-so400m pass over 128 frames at 384 px,
/// about 8.5e13, plus text encoding and fusion head, rounded).
struct CalibrationConfig {
    BackboneSpec backbone{28, 3584, 18944, 128, 1.0e14};
    std::uint64_t frames = 128;
    std::uint64_t tokens_per_frame = 169;

    std::uint64_t full_vision_tokens() const { return frames * tokens_per_frame; }
};

CalibrationConfig calibration_config();

struct FlopsRow {
    std::string method;
    std::uint64_t vision_tokens = 0;
    double flops = 0.0;
    double relative = 1.0;
};

/// Rows for the full model and each keep ratio (baseline without overhead, KVTP with overhead).
std::vector<FlopsRow> flops_table(const BackboneSpec& spec, std::uint64_t full_vision_tokens,
                                  const std::vector<double>& keep_ratios);
std::string format_flops_table(const std::vector<FlopsRow>& rows, bool csv);

}  // namespace kvtp
