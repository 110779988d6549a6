// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kvtp/predictor.hpp"
#include "kvtp/pruners.hpp"

namespace kvtp {

/// Planted-keyframe video corpus parameters.
///
/// Each video has one query and a contiguous event of `keyframes` frames whose embeddings have
/// cosine exactly `signal_strength` with the query; every other frame is an isotropic random
/// direction. Keyframes carry `signal_tokens` high-saliency tokens, and every other frame carries
/// `context_tokens` high-saliency tokens standing in for cross-frame context.
/// Labels are 5 on keyframes, 2 on their immediate neighbours and 0 elsewhere.
struct SyntheticSpec {
    std::size_t videos = 16;
    std::size_t frames = 64;
    std::size_t dim = 64;
    std::size_t tokens_per_frame = 32;
    std::size_t token_dim = 8;
    std::size_t keyframes = 8;
    std::size_t clip_size = 8;
    std::size_t signal_tokens = 24;
    std::size_t context_tokens = 1;
    double signal_strength = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class PlantedToken : std::uint8_t { None = 0, Signal = 1, Context = 2 };

struct SyntheticVideo {
    TrainingSample sample;
    std::vector<FrameTokenSet> frames;
    std::vector<std::size_t> keyframes;
    std::vector<std::vector<PlantedToken>> planted;  ///< [frame][token]

    std::size_t planted_count() const;
};

struct SyntheticCorpus {
    SyntheticSpec spec;
    std::vector<SyntheticVideo> videos;

    std::vector<TrainingSample> samples(std::size_t first = 0, std::size_t count = SIZE_MAX) const;
};

/// Deterministic in spec.seed; video v depends only on (seed, v).
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Planted tokens surviving in `pruned` as original (not merged-in) indices.
std::size_t retained_planted(const SyntheticVideo& video, const PrunedSequence& pruned);

// Directory layout: corpus.json plus video_NNNN/{frames,query,tokens,saliency,planted}.bin.
void save_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);
SyntheticCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace kvtp
