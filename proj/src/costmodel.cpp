// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/costmodel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "kvtp/error.hpp"

namespace kvtp {

void BackboneSpec::validate() const {
    require(layers > 0 && model_dim > 0 && ffn_dim > 0, "backbone dimensions must be positive");
    require(predictor_overhead_flops >= 0.0 && std::isfinite(predictor_overhead_flops),
            "predictor overhead must be non-negative");
}

namespace {

double backbone_flops(const BackboneSpec& spec, std::uint64_t vision_tokens) {
    const double t = static_cast<double>(spec.text_tokens + vision_tokens);
    const double d = static_cast<double>(spec.model_dim);
    const double ff = static_cast<double>(spec.ffn_dim);
    // Projections, attention scores/mixing, and the MLP; x2 turns MACs into FLOPs.
    const double per_layer_macs = 4.0 * t * d * d + 2.0 * t * t * d + 2.0 * t * d * ff;
    return static_cast<double>(spec.layers) * 2.0 * per_layer_macs;
}

}  // namespace

double forward_flops(const BackboneSpec& spec, std::uint64_t vision_tokens) {
    spec.validate();
    return backbone_flops(spec, vision_tokens) + spec.predictor_overhead_flops;
}

double relative_flops(const BackboneSpec& spec, std::uint64_t full_vision_tokens, std::uint64_t pruned_vision_tokens) {
    spec.validate();
    require(full_vision_tokens > 0, "relative_flops: full vision token count must be positive");
    require(pruned_vision_tokens <= full_vision_tokens, "relative_flops: pruned count exceeds full count");
    return forward_flops(spec, pruned_vision_tokens) / backbone_flops(spec, full_vision_tokens);
}

CalibrationConfig calibration_config() {
    return {};
}

std::vector<FlopsRow> flops_table(const BackboneSpec& spec, std::uint64_t full_vision_tokens,
                                  const std::vector<double>& keep_ratios) {
    BackboneSpec bare = spec;
    bare.predictor_overhead_flops = 0.0;
    std::vector<FlopsRow> rows;
    rows.push_back({"full", full_vision_tokens, forward_flops(bare, full_vision_tokens), 1.0});
    for (double rho : keep_ratios) {
        require(rho >= 0.0 && rho <= 1.0, "keep ratio must lie in [0, 1]");
        const auto tokens = static_cast<std::uint64_t>(std::llround(rho * static_cast<double>(full_vision_tokens)));
        char name[64];
        std::snprintf(name, sizeof(name), "uniform@%.2f", rho);
        rows.push_back({name, tokens, forward_flops(bare, tokens), relative_flops(bare, full_vision_tokens, tokens)});
        std::snprintf(name, sizeof(name), "kvtp@%.2f", rho);
        rows.push_back({name, tokens, forward_flops(spec, tokens), relative_flops(spec, full_vision_tokens, tokens)});
    }
    return rows;
}

std::string format_flops_table(const std::vector<FlopsRow>& rows, bool csv) {
    std::ostringstream out;
    char line[160];
    if (csv) {
        out << "method,tokens,flops,relative\n";
        for (const auto& r : rows) {
            std::snprintf(line, sizeof(line), "%s,%llu,%.6e,%.6f\n", r.method.c_str(),
                          static_cast<unsigned long long>(r.vision_tokens), r.flops, r.relative);
            out << line;
        }
        return out.str();
    }
    std::snprintf(line, sizeof(line), "%-14s %10s %14s %10s\n", "method", "tokens", "FLOPs", "relative");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-14s %10llu %14.4e %9.1f%%\n", r.method.c_str(),
                      static_cast<unsigned long long>(r.vision_tokens), r.flops, 100.0 * r.relative);
        out << line;
    }
    return out.str();
}

}  // namespace kvtp
