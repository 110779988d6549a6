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

/// Vision tokens of one frame (P x d_v) with an optional per-token saliency.
struct FrameTokenSet {
    Matrix tokens;
    std::optional<Vector> saliency;
    std::size_t frame_index = 0;

    std::size_t token_count() const noexcept { return tokens.rows(); }
    void validate() const;
};

/// Retained tokens of one frame. `kept_indices` are original token positions (strictly
/// increasing); `merged[k]` marks rows that are averages of several input tokens.
struct PrunedFrame {
    std::size_t frame_index = 0;
    Matrix tokens;
    std::vector<std::size_t> kept_indices;
    std::vector<bool> merged;

    std::size_t size() const noexcept { return kept_indices.size(); }
};

struct PrunedSequence {
    std::vector<PrunedFrame> frames;

    std::size_t total_tokens() const;
};

enum class PruneBackend {
    Random,
    Saliency,
    SaliencyMerge,  ///< saliency top-k with dropped tokens folded into their nearest survivor
    Bipartite,
    Hard,           ///< all-or-nothing per frame; budgets must be 0 or P
};

PruneBackend parse_backend(const std::string& name);
std::string backend_name(PruneBackend backend);

PrunedFrame random_prune(const FrameTokenSet& frame, std::size_t budget, std::uint64_t seed);
PrunedFrame saliency_prune(const FrameTokenSet& frame, std::size_t budget, bool merge_dropped);
PrunedFrame bipartite_merge(const FrameTokenSet& frame, std::size_t budget);

PrunedSequence hard_frame_select(std::span<const FrameTokenSet> frames, std::span<const double> scores,
                                 double fraction);

/// Applies `backend` to every frame with its budget. Output is in frame order.
PrunedSequence prune_video(std::span<const FrameTokenSet> frames, std::span<const std::size_t> budgets,
                           PruneBackend backend, std::uint64_t seed);

/// Retained tokens stacked into one binary matrix plus a CSV sidecar
/// `frame_index,position,original_index,merged`.
void save_pruned(const PrunedSequence& pruned, const std::filesystem::path& matrix_path,
                 const std::filesystem::path& index_path);
std::string pruned_index_csv(const PrunedSequence& pruned);

}  // namespace kvtp
