// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/curation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "kvtp/error.hpp"
#include "kvtp/io.hpp"

namespace kvtp {

const std::string_view kCaptionSystemPrompt =
    "### Task:\n"
    "You are an expert in understanding scene transitions based on visual features in a video. You are requested "
    "to create the descriptions for the current clip sent to you, which includes multiple sequential frames.\n"
    "### Guidelines For Clip Description:\n"
    "- Analyze the narrative progression implied by the sequence of frames, interpreting the sequence as a whole.\n"
    "- Note that since these frames are extracted from a clip, adjacent frames may show minimal differences.\n"
    "- When referring to people, use their characteristics, such as clothing, to distinguish different people.\n"
    "- **IMPORTANT** Please provide as many details as possible in your description, including colors, shapes, "
    "and textures.\n"
    "### Output Format:\n"
    "Your response should look like this: The clip begins with..., progresses by..., and concludes with...";

const std::string_view kScoringPrompt =
    "You are provided with descriptions of segments from a video. Each segment is labeled with a starting and "
    "ending frame index and a description of the events in that segment.\n"
    "### Instructions\n"
    "1. Identify the relevancy between each segment and the question, assigning a score from 0 to 5 for all "
    "segments.\n"
    "- 0 represents no relevancy, and 5 represents the most relevant.\n"
    "2. Sometimes the question may not be explicitly relevant to the descriptions. Consider the potential "
    "connection behind it.\n"
    "3. Only return the starting and ending frame index for all segments and their corresponding scores.\n"
    "4. Be mindful of the temporal relationship between segments and the question when scoring.\n"
    "### Output Format\n"
    "Return the answer as a dictionary-like string:\n"
    "Example output:\n"
    "{[0,6]:3,[7,20]:5}";

const std::string_view kDebiasPrompt =
    "Rewrite the following video question so it is short and neutral. Keep every piece of information needed to "
    "answer it, including the answer choices, and drop instructions, system text and filler. Use at most 64 "
    "words. Return only the rewritten question.";

std::string ClipRange::label() const {
    return "[" + std::to_string(start) + ", " + std::to_string(end) + "]";
}

ClipPartition partition_clips(std::size_t frame_count, std::size_t clip_size) {
    require(frame_count >= 1, "partition_clips: frame count must be positive");
    require(clip_size >= 1, "partition_clips: clip size must be positive");
    ClipPartition out;
    for (std::size_t s = 0; s < frame_count; s += clip_size) {
        out.push_back({s, std::min(s + clip_size, frame_count) - 1});
    }
    return out;
}

namespace {

class ScoreParser {
public:
    explicit ScoreParser(std::string_view text) : m_text(text) {}

    ParsedScores parse() {
        ParsedScores out;
        skip_ws();
        expect('{');
        skip_ws();
        if (peek() == '}') {
            ++m_pos;
        } else {
            for (;;) {
                const std::size_t entry_at = m_pos;
                expect('[');
                const long long start = integer();
                expect(',');
                const long long end = integer();
                expect(']');
                expect(':');
                const long long score = integer();
                if (start < 0 || end < start) {
                    fail(entry_at, "invalid frame range");
                }
                const ClipRange r{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
                if (out.scores.count(r)) {
                    fail(entry_at, "duplicate range " + r.label());
                }
                int clamped = static_cast<int>(std::clamp<long long>(score, 0, kMaxSegmentScore));
                if (clamped != score) {
                    out.warnings.push_back("score " + std::to_string(score) + " for " + r.label() +
                                           " clamped to " + std::to_string(clamped));
                }
                out.scores[r] = clamped;
                skip_ws();
                if (peek() == ',') {
                    ++m_pos;
                    skip_ws();
                    continue;
                }
                expect('}');
                break;
            }
        }
        skip_ws();
        if (m_pos != m_text.size()) {
            fail(m_pos, "trailing characters");
        }
        return out;
    }

private:
    char peek() const { return m_pos < m_text.size() ? m_text[m_pos] : '\0'; }

    void skip_ws() {
        while (m_pos < m_text.size() && std::isspace(static_cast<unsigned char>(m_text[m_pos]))) {
            ++m_pos;
        }
    }

    void expect(char c) {
        skip_ws();
        if (peek() != c) {
            fail(m_pos, std::string("expected '") + c + "'");
        }
        ++m_pos;
    }

    long long integer() {
        skip_ws();
        const std::size_t begin = m_pos;
        if (peek() == '-' || peek() == '+') {
            ++m_pos;
        }
        const std::size_t digits = m_pos;
        while (std::isdigit(static_cast<unsigned char>(peek()))) {
            ++m_pos;
        }
        if (m_pos == digits || m_pos - digits > 12) {
            fail(begin, "expected integer");
        }
        return std::stoll(std::string(m_text.substr(begin, m_pos - begin)));
    }

    [[noreturn]] void fail(std::size_t at, const std::string& what) const {
        throw Error(ErrorCode::Format, "malformed score string at byte " + std::to_string(at) + ": " + what);
    }

    std::string_view m_text;
    std::size_t m_pos = 0;
};

}  // namespace

ParsedScores parse_score_string(std::string_view text) {
    return ScoreParser(text).parse();
}

std::string serialize_score_string(const SegmentScores& scores, ScoreStringStyle style) {
    std::string out = "{";
    bool first = true;
    for (const auto& [range, score] : scores) {
        if (!first) {
            out += style == ScoreStringStyle::Spaced ? ", " : ",";
        }
        first = false;
        out += "[" + std::to_string(range.start) + "," + std::to_string(range.end) + "]";
        out += style == ScoreStringStyle::Spaced ? ": " : ":";
        out += std::to_string(score);
    }
    return out + "}";
}

Vector broadcast_scores(const SegmentScores& segments, const ClipPartition& partition, std::size_t frame_count) {
    Vector out(frame_count, 0.0);
    const std::set<ClipRange> valid(partition.begin(), partition.end());
    for (const auto& [range, score] : segments) {
        require(valid.count(range) == 1, "segment " + range.label() + " does not match any clip of the partition",
                ErrorCode::Format);
        require(range.end < frame_count, "segment " + range.label() + " exceeds frame count", ErrorCode::Format);
        for (std::size_t i = range.start; i <= range.end; ++i) {
            out[i] = score;
        }
    }
    return out;
}

CaptionResult caption_clips(LlmClient& client, const ClipPartition& ranges,
                            const std::vector<std::string>& frame_refs, const std::string& model,
                            std::size_t concurrency, const RetryPolicy& retry) {
    std::vector<std::optional<std::string>> captions(ranges.size());
    std::vector<std::string> errors(ranges.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t k = next++; k < ranges.size(); k = next++) {
            const ClipRange& r = ranges[k];
            std::string user = "Frame range: " + r.label() + "\nFrames:";
            for (std::size_t i = r.start; i <= r.end; ++i) {
                user += " " + (i < frame_refs.size() ? frame_refs[i] : "frame_" + std::to_string(i));
            }
            ChatRequest req{model, {{"system", std::string(kCaptionSystemPrompt)}, {"user", user}}};
            try {
                captions[k] = complete_with_retry(client, req, retry);
            } catch (const Error& e) {
                errors[k] = e.what();
            }
        }
    };
    const std::size_t workers = std::min(std::max<std::size_t>(1, concurrency), ranges.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }

    CaptionResult out;
    for (std::size_t k = 0; k < ranges.size(); ++k) {
        if (captions[k]) {
            out.captions[ranges[k]] = std::move(*captions[k]);
        } else {
            out.failures[ranges[k]] = errors[k];
        }
    }
    return out;
}

std::size_t count_whitespace_tokens(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::size_t n = 0;
    for (std::string tok; in >> tok;) {
        ++n;
    }
    return n;
}

std::string truncate_tokens(std::string_view text, std::size_t max_tokens) {
    std::istringstream in{std::string(text)};
    std::string out;
    std::size_t n = 0;
    for (std::string tok; n < max_tokens && in >> tok; ++n) {
        out += (n ? " " : "") + tok;
    }
    return out;
}

DebiasResult debias_query(LlmClient& client, const std::string& question, const std::string& model,
                          const RetryPolicy& retry) {
    require(count_whitespace_tokens(question) > 0, "debias_query: empty question");
    ChatRequest req{model, {{"system", std::string(kDebiasPrompt)}, {"user", question}}};
    std::string reply;
    try {
        reply = complete_with_retry(client, req, retry);
    } catch (const Error&) {
        return {truncate_tokens(question, kMaxQueryTokens), true};
    }
    if (count_whitespace_tokens(reply) == 0) {
        return {truncate_tokens(question, kMaxQueryTokens), true};
    }
    if (count_whitespace_tokens(reply) > kMaxQueryTokens) {
        return {truncate_tokens(reply, kMaxQueryTokens), true};
    }
    return {reply, false};
}

ParsedScores score_segments(LlmClient& client, const CaptionMap& captions, const std::string& debiased_question,
                            const std::string& model, const RetryPolicy& retry) {
    require(!captions.empty(), "score_segments: no captions to score");
    std::string user = "Segments:\n";
    for (const auto& [range, text] : captions) {
        user += range.label() + ": " + text + "\n";
    }
    user += "Question: " + debiased_question;
    ChatRequest req{model, {{"system", std::string(kScoringPrompt)}, {"user", user}}};

    const std::size_t attempts = std::max<std::size_t>(1, retry.max_attempts);
    std::string reply;
    std::string parse_error;
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
        reply = complete_with_retry(client, req, retry);
        try {
            return parse_score_string(reply);
        } catch (const Error& e) {
            parse_error = e.what();
        }
    }
    throw Error(ErrorCode::Client, "unparseable score reply '" + reply + "': " + parse_error);
}

std::optional<std::size_t> DatasetRecord::resolved_frame_count() const {
    if (frame_count) {
        return frame_count;
    }
    std::optional<std::size_t> last;
    auto see = [&](const ClipRange& r) { last = std::max(last.value_or(0), r.end); };
    for (const auto& [r, text] : captions) {
        see(r);
    }
    if (relevance_score) {
        for (const auto& [r, s] : *relevance_score) {
            see(r);
        }
    }
    if (!last) {
        return std::nullopt;
    }
    return *last + 1;
}

namespace {

ClipRange parse_range_label(const std::string& label) {
    static const std::regex re(R"(^\s*\[\s*(\d+)\s*,\s*(\d+)\s*\]\s*$)");
    std::smatch m;
    require(std::regex_match(label, m, re), "bad caption key '" + label + "'", ErrorCode::Format);
    return {std::stoul(m[1].str()), std::stoul(m[2].str())};
}

// Captions stored as a Python-style dict string: {'[0, 7]': '...', '[8, 15]': '...'}.
CaptionMap parse_caption_dict_string(const std::string& text) {
    static const std::regex key_re(R"('\[\s*(\d+)\s*,\s*(\d+)\s*\]'\s*:\s*')");
    std::vector<std::pair<ClipRange, std::pair<std::size_t, std::size_t>>> keys;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), key_re); it != std::sregex_iterator(); ++it) {
        const auto pos = static_cast<std::size_t>(it->position());
        keys.push_back({{std::stoul((*it)[1].str()), std::stoul((*it)[2].str())},
                        {pos, pos + static_cast<std::size_t>(it->length())}});
    }
    CaptionMap out;
    for (std::size_t k = 0; k < keys.size(); ++k) {
        const std::size_t begin = keys[k].second.second;
        std::size_t end = k + 1 < keys.size() ? keys[k + 1].second.first : text.rfind('}');
        require(end != std::string::npos && end >= begin, "unterminated caption dict", ErrorCode::Format);
        std::string body = text.substr(begin, end - begin);
        while (!body.empty() && (std::isspace(static_cast<unsigned char>(body.back())) || body.back() == ',')) {
            body.pop_back();
        }
        require(!body.empty() && body.back() == '\'', "caption for " + keys[k].first.label() + " is not quoted",
                ErrorCode::Format);
        body.pop_back();
        out[keys[k].first] = body;
    }
    return out;
}

}  // namespace

std::string record_to_json(const DatasetRecord& record) {
    nlohmann::ordered_json doc;
    doc["path"] = record.path;
    doc["question"] = record.question;
    doc["debiased_question"] = record.debiased_question;
    nlohmann::ordered_json captions = nlohmann::ordered_json::object();
    for (const auto& [range, text] : record.captions) {
        captions[range.label()] = text;
    }
    doc["captions"] = captions;
    if (record.relevance_score) {
        doc["relevance_score"] = serialize_score_string(*record.relevance_score);
    }
    if (record.source) {
        doc["source"] = *record.source;
    }
    if (record.frame_count) {
        doc["frame_count"] = *record.frame_count;
    }
    if (!record.frames.empty()) {
        doc["frames"] = record.frames;
    }
    if (record.incomplete) {
        doc["incomplete"] = true;
    }
    return doc.dump(4) + "\n";
}

DatasetRecord record_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, std::string("record is not valid JSON: ") + e.what());
    }
    require(doc.is_object(), "record must be a JSON object", ErrorCode::Format);
    DatasetRecord r;
    try {
        r.path = doc.at("path").get<std::string>();
        r.question = doc.value("question", "");
        r.debiased_question = doc.value("debiased_question", "");
        if (doc.contains("captions")) {
            const auto& c = doc["captions"];
            if (c.is_string()) {
                r.captions = parse_caption_dict_string(c.get<std::string>());
            } else {
                for (const auto& [key, value] : c.items()) {
                    r.captions[parse_range_label(key)] = value.get<std::string>();
                }
            }
        }
        if (doc.contains("relevance_score") && !doc["relevance_score"].is_null()) {
            r.relevance_score = parse_score_string(doc["relevance_score"].get<std::string>()).scores;
        }
        if (doc.contains("source")) {
            r.source = doc["source"].get<std::string>();
        }
        if (doc.contains("frame_count")) {
            r.frame_count = doc["frame_count"].get<std::size_t>();
        }
        if (doc.contains("frames")) {
            r.frames = doc["frames"].get<std::vector<std::string>>();
        }
        r.incomplete = doc.value("incomplete", false);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, std::string("record field error: ") + e.what());
    }
    return r;
}

void save_record(const std::filesystem::path& path, const DatasetRecord& record) {
    write_text_file(path, record_to_json(record));
}

DatasetRecord load_record(const std::filesystem::path& path) {
    try {
        return record_from_json(read_text_file(path));
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

DatasetRecord annotate_record(LlmClient& client, DatasetRecord record, const CurationConfig& config,
                              std::vector<std::string>* warnings) {
    const auto frames = record.resolved_frame_count();
    require(frames.has_value(), record.path + ": frame count unknown");
    const ClipPartition partition = partition_clips(*frames, config.clip_size);

    if (record.captions.empty()) {
        CaptionResult captions =
            caption_clips(client, partition, record.frames, config.model, config.concurrency, config.retry);
        record.captions = std::move(captions.captions);
        if (!captions.complete()) {
            record.incomplete = true;
            if (warnings) {
                for (const auto& [range, err] : captions.failures) {
                    warnings->push_back(record.path + ": caption " + range.label() + " failed: " + err);
                }
            }
        }
    }
    if (record.debiased_question.empty()) {
        const DebiasResult d = debias_query(client, record.question, config.model, config.retry);
        record.debiased_question = d.text;
        if (d.flagged && warnings) {
            warnings->push_back(record.path + ": debiased question truncated or fell back to the original");
        }
    }
    if (!record.relevance_score && !record.incomplete) {
        ParsedScores scored =
            score_segments(client, record.captions, record.debiased_question, config.model, config.retry);
        record.relevance_score = std::move(scored.scores);
        if (warnings) {
            for (auto& w : scored.warnings) {
                warnings->push_back(record.path + ": " + w);
            }
        }
    }
    return record;
}

namespace {

std::string normalize_name(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            out += static_cast<char>(std::tolower(c));
        }
    }
    return out;
}

}  // namespace

bool is_eval_source(const DatasetRecord& record, const std::vector<std::string>& eval_sources) {
    if (record.source) {
        const std::string src = normalize_name(*record.source);
        return std::any_of(eval_sources.begin(), eval_sources.end(),
                           [&](const std::string& e) { return normalize_name(e) == src; });
    }
    const std::string path = normalize_name(record.path);
    return std::any_of(eval_sources.begin(), eval_sources.end(), [&](const std::string& e) {
        const std::string name = normalize_name(e);
        return !name.empty() && path.find(name) != std::string::npos;
    });
}

CurationDecision assess_record(const DatasetRecord& record, const CurationConfig& config) {
    CurationDecision d;
    if (record.incomplete) {
        d.reason = "incomplete annotation";
        return d;
    }
    if (!record.relevance_score) {
        d.reason = "missing relevance scores";
        return d;
    }
    const auto frames = record.resolved_frame_count();
    if (!frames || *frames == 0) {
        d.reason = "unknown frame count";
        return d;
    }
    Vector scores;
    try {
        scores = broadcast_scores(*record.relevance_score, partition_clips(*frames, config.clip_size), *frames);
    } catch (const Error& e) {
        d.reason = e.what();
        return d;
    }
    d.report = sparsity(scores, config.allocation, config.beta);
    if (!d.report.passes_length) {
        d.reason = "not long enough (" + std::to_string(*frames) + " frames)";
        return d;
    }
    if (!d.report.passes_sparsity) {
        d.reason = "not sparse enough";
        return d;
    }
    d.split = is_eval_source(record, config.eval_sources) ? Split::Eval : Split::Train;
    return d;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
    std::string out;
    char buf[64];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof(buf), ",%.6f\n", e.sparsity);
        out += e.path + buf;
    }
    return out;
}

CurationSummary curate(LlmClient& client, const std::vector<std::filesystem::path>& inputs,
                       const std::filesystem::path& out_dir, const CurationConfig& config) {
    config.allocation.validate();
    CurationSummary summary;
    std::set<std::string> used_names;
    for (const auto& input : inputs) {
        DatasetRecord record;
        try {
            record = annotate_record(client, load_record(input), config, &summary.warnings);
        } catch (const Error& e) {
            summary.skipped.push_back({input.string(), e.what()});
            continue;
        }
        std::string name = input.stem().string();
        for (int k = 1; used_names.count(name); ++k) {
            name = input.stem().string() + "_" + std::to_string(k);
        }
        used_names.insert(name);
        const std::string rel = "records/" + name + ".json";
        save_record(out_dir / rel, record);

        const CurationDecision d = assess_record(record, config);
        if (d.split == Split::Excluded) {
            summary.skipped.push_back({input.string(), d.reason});
        } else {
            (d.split == Split::Eval ? summary.eval : summary.train).push_back({rel, d.report.sparsity});
        }
    }
    write_text_file(out_dir / "eval_manifest.txt", format_manifest(summary.eval));
    write_text_file(out_dir / "train_manifest.txt", format_manifest(summary.train));
    std::string log;
    for (const auto& [path, reason] : summary.skipped) {
        log += path + "\t" + reason + "\n";
    }
    write_text_file(out_dir / "skipped.txt", log);
    std::string warn;
    for (const auto& w : summary.warnings) {
        warn += w + "\n";
    }
    write_text_file(out_dir / "warnings.txt", warn);
    return summary;
}

}  // namespace kvtp
