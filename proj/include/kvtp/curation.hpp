// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvtp/allocator.hpp"
#include "kvtp/llm_client.hpp"
#include "kvtp/numerics.hpp"

namespace kvtp {

/// Inclusive frame range [start, end].
struct ClipRange {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start + 1; }
    /// "[0, 7]"
    std::string label() const;
    auto operator<=>(const ClipRange&) const = default;
};

using ClipPartition = std::vector<ClipRange>;
using SegmentScores = std::map<ClipRange, int>;
using CaptionMap = std::map<ClipRange, std::string>;

inline constexpr int kMaxSegmentScore = 5;
inline constexpr std::size_t kMaxQueryTokens = 64;

extern const std::string_view kCaptionSystemPrompt;
extern const std::string_view kScoringPrompt;
extern const std::string_view kDebiasPrompt;

/// ceil(N / n) chronological ranges; the last one may be short.
ClipPartition partition_clips(std::size_t frame_count, std::size_t clip_size);

struct ParsedScores {
    SegmentScores scores;
    std::vector<std::string> warnings;  ///< one per clamped value
};

/// Parses "{[24,29]: 4}"-style strings. Whitespace is allowed around every token; scores outside
/// [0, 5] are clamped with a warning. Malformed input throws Error(Format) naming the byte offset.
ParsedScores parse_score_string(std::string_view text);

enum class ScoreStringStyle {
    Spaced,   ///< "{[24,29]: 4, [30,37]: 1}"
    Compact,  ///< "{[0,6]:3,[7,20]:5}"
};

std::string serialize_score_string(const SegmentScores& scores, ScoreStringStyle style = ScoreStringStyle::Spaced);

/// Every frame of a scored range takes its score; frames of unscored ranges get 0.
Vector broadcast_scores(const SegmentScores& segments, const ClipPartition& partition, std::size_t frame_count);

struct CaptionResult {
    CaptionMap captions;
    std::map<ClipRange, std::string> failures;  ///< ranges whose retries were exhausted

    bool complete() const { return failures.empty(); }
};

/// One request per range, at most `concurrency` in flight; result order follows the ranges.
CaptionResult caption_clips(LlmClient& client, const ClipPartition& ranges,
                            const std::vector<std::string>& frame_refs, const std::string& model,
                            std::size_t concurrency, const RetryPolicy& retry);

struct DebiasResult {
    std::string text;
    bool flagged = false;  ///< truncated or fell back to the original question
};

std::size_t count_whitespace_tokens(std::string_view text);
std::string truncate_tokens(std::string_view text, std::size_t max_tokens);

DebiasResult debias_query(LlmClient& client, const std::string& question, const std::string& model,
                          const RetryPolicy& retry);

/// Asks the scorer for segment scores and parses the reply. Unparseable replies are retried,
/// then reported as Error(Client) carrying the raw text.
ParsedScores score_segments(LlmClient& client, const CaptionMap& captions, const std::string& debiased_question,
                            const std::string& model, const RetryPolicy& retry);

/// One curated sample. Serialized with the field names path, question, debiased_question,
/// captions and relevance_score; source, frame_count, frames and incomplete are optional extras.
struct DatasetRecord {
    std::string path;
    std::string question;
    std::string debiased_question;
    CaptionMap captions;
    std::optional<SegmentScores> relevance_score;
    std::optional<std::string> source;
    std::optional<std::size_t> frame_count;
    std::vector<std::string> frames;
    bool incomplete = false;

    /// frame_count, or one past the largest caption/score frame index.
    std::optional<std::size_t> resolved_frame_count() const;

    bool operator==(const DatasetRecord&) const = default;
};

std::string record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const std::string& text);
void save_record(const std::filesystem::path& path, const DatasetRecord& record);
DatasetRecord load_record(const std::filesystem::path& path);

struct CurationConfig {
    AllocationConfig allocation;  ///< alpha and temperature for the sparsity test
    double beta = 1.5;
    std::size_t clip_size = 8;
    std::vector<std::string> eval_sources{"VideoMME", "EgoSchema", "NeXT-QA"};
    std::size_t concurrency = 4;
    RetryPolicy retry;
    std::string model = "gpt-4o";
};

/// Fills missing captions, debiased question and scores through `client`.
/// Caption failures leave the record marked incomplete.
DatasetRecord annotate_record(LlmClient& client, DatasetRecord record, const CurationConfig& config,
                              std::vector<std::string>* warnings = nullptr);

enum class Split { Eval, Train, Excluded };

struct CurationDecision {
    Split split = Split::Excluded;
    SparsityReport report;
    std::string reason;  ///< why the record was excluded
};

/// Sparsity and length filter plus the eval/train split by source.
CurationDecision assess_record(const DatasetRecord& record, const CurationConfig& config);

/// True when `source` (or, failing that, `path`) names one of the eval datasets.
bool is_eval_source(const DatasetRecord& record, const std::vector<std::string>& eval_sources);

struct ManifestEntry {
    std::string path;
    double sparsity = 1.0;
};

struct CurationSummary {
    std::vector<ManifestEntry> eval;
    std::vector<ManifestEntry> train;
    std::vector<std::pair<std::string, std::string>> skipped;  ///< input, reason
    std::vector<std::string> warnings;
};

/// Annotates and filters every input record file, writing records/<name>.json, eval_manifest.txt,
/// train_manifest.txt and skipped.txt under `out_dir`. Manifest paths are relative to `out_dir`.
CurationSummary curate(LlmClient& client, const std::vector<std::filesystem::path>& inputs,
                       const std::filesystem::path& out_dir, const CurationConfig& config);

std::string format_manifest(const std::vector<ManifestEntry>& entries);

}  // namespace kvtp
