// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kvtp/numerics.hpp"

namespace kvtp {

/// Videos shorter than this fail the length filter.
inline constexpr std::size_t kMinCuratedFrames = 64;

struct AllocationConfig {
    double alpha = 0.2;        ///< mean keep ratio
    double temperature = 1.0;  ///< softmax temperature over scores
    double max_ratio = 1.0;    ///< per-frame clamp ceiling

    void validate() const;
};

/// Per-frame keep ratios: alpha * N * softmax(scores / T) before clamping.
Vector unclamped_keep_ratios(std::span<const double> scores, const AllocationConfig& config);

/// Keep ratios with values above max_ratio clamped and the excess water-filled over the
/// remaining frames in proportion to their softmax weights. Sum is alpha * N.
Vector allocate(std::span<const double> scores, const AllocationConfig& config);

/// Largest-remainder rounding of ratio * tokens_per_frame; ties go to the lower index.
std::vector<std::size_t> to_token_budgets(std::span<const double> ratios, std::size_t tokens_per_frame);

struct SparsityReport {
    double sparsity = 1.0;  ///< max(r) / mean(r) over unclamped ratios
    bool passes_sparsity = false;
    bool passes_length = false;

    bool passes() const { return passes_sparsity && passes_length; }
};

SparsityReport sparsity(std::span<const double> scores, const AllocationConfig& config, double beta);

/// 1 for the ceil(keep_fraction * N) highest scores (lower index wins ties), 0 elsewhere.
Vector hard_allocation(std::span<const double> scores, double keep_fraction);

enum class ReportFormat { Text, Json };

/// Per-frame `index, score, ratio, budget` lines plus a sparsity footer.
std::string format_allocation_report(std::span<const double> scores, std::span<const double> ratios,
                                     std::span<const std::size_t> budgets, const SparsityReport& report,
                                     double beta, ReportFormat format);

}  // namespace kvtp
