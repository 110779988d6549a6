// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "kvtp/llm_client.hpp"

#include <cstdlib>
#include <regex>
#include <thread>

#include "json.hpp"
#include "kvtp/curation.hpp"
#include "kvtp/error.hpp"

namespace kvtp {

std::string to_wire_request(const ChatRequest& request) {
    nlohmann::ordered_json messages = nlohmann::ordered_json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    nlohmann::ordered_json body = {{"model", request.model}, {"messages", messages}};
    return body.dump();
}

std::string parse_wire_response(const std::string& body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Client, std::string("LLM response is not JSON: ") + e.what());
    }
    const auto choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty()) {
        throw Error(ErrorCode::Client, "LLM response has no choices");
    }
    const auto& first = (*choices)[0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string()) {
        throw Error(ErrorCode::Client, "LLM response choice has no message content");
    }
    return first["message"]["content"].get<std::string>();
}

std::string complete_with_retry(LlmClient& client, const ChatRequest& request, const RetryPolicy& policy) {
    const std::size_t attempts = std::max<std::size_t>(1, policy.max_attempts);
    for (std::size_t attempt = 1;; ++attempt) {
        try {
            return client.complete(request);
        } catch (const Error& e) {
            if (attempt >= attempts) {
                throw Error(ErrorCode::Client, std::string(e.what()) + " (after " + std::to_string(attempt) +
                                                   " attempt" + (attempt == 1 ? "" : "s") + ")");
            }
        }
        if (policy.backoff.count() > 0) {
            std::this_thread::sleep_for(policy.backoff * attempt);
        }
    }
}

HttpClientConfig HttpClientConfig::from_environment() {
    HttpClientConfig c;
    if (const char* e = std::getenv("KVTP_LLM_ENDPOINT")) {
        c.endpoint = e;
    }
    if (const char* k = std::getenv("KVTP_LLM_API_KEY")) {
        c.api_key = k;
    }
    return c;
}

HttpLlmClient::HttpLlmClient(HttpClientConfig config) : m_config(std::move(config)) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    require(std::regex_match(m_config.endpoint, m, url_re),
            "LLM endpoint must be an http(s) URL, got '" + m_config.endpoint + "'");
    m_scheme_host_port = m[1].str();
    m_path = m[2].matched ? m[2].str() : "/v1/chat/completions";
}

std::string HttpLlmClient::complete(const ChatRequest& request) {
    httplib::Client cli(m_scheme_host_port);
    cli.set_connection_timeout(m_config.timeout);
    cli.set_read_timeout(m_config.timeout);
    cli.set_write_timeout(m_config.timeout);
    httplib::Headers headers;
    if (!m_config.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + m_config.api_key);
    }
    auto res = cli.Post(m_path, headers, to_wire_request(request), "application/json");
    if (!res) {
        throw Error(ErrorCode::Client, "LLM request failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::Client, "LLM endpoint returned HTTP " + std::to_string(res->status));
    }
    return parse_wire_response(res->body);
}

namespace {

enum class RequestKind { Caption, Score, Debias, Unknown };

RequestKind classify(const ChatRequest& request) {
    for (const auto& m : request.messages) {
        if (m.role != "system") {
            continue;
        }
        if (m.content == kCaptionSystemPrompt) return RequestKind::Caption;
        if (m.content == kScoringPrompt) return RequestKind::Score;
        if (m.content == kDebiasPrompt) return RequestKind::Debias;
    }
    return RequestKind::Unknown;
}

std::string user_content(const ChatRequest& request) {
    for (const auto& m : request.messages) {
        if (m.role == "user") {
            return m.content;
        }
    }
    return {};
}

std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    x ^= x >> 33;
    return x;
}

std::uint64_t text_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h = (h ^ c) * 1099511628211ull;
    }
    return h;
}

}  // namespace

std::string MockLlmClient::complete(const ChatRequest& request) {
    ++m_calls;
    const std::size_t now = ++m_in_flight;
    std::size_t seen = m_max_in_flight.load();
    while (now > seen && !m_max_in_flight.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
        std::atomic<std::size_t>& counter;
        ~Leave() { --counter; }
    } leave{m_in_flight};

    if (m_latency.count() > 0) {
        std::this_thread::sleep_for(m_latency);
    }
    if (m_failing) {
        throw Error(ErrorCode::Client, "mock client configured to fail");
    }
    const std::string user = user_content(request);
    switch (classify(request)) {
    case RequestKind::Caption: {
        static const std::regex range_re(R"(Frame range: \[(\d+), (\d+)\])");
        std::smatch m;
        if (!std::regex_search(user, m, range_re)) {
            throw Error(ErrorCode::Client, "mock caption request without a frame range");
        }
        return "mock-caption-" + m[1].str() + "-" + m[2].str();
    }
    case RequestKind::Debias:
        if (m_debias_reply) {
            return *m_debias_reply;
        }
        return user;
    case RequestKind::Score:
        if (m_score_reply) {
            return *m_score_reply;
        }
        return score_reply(user);
    case RequestKind::Unknown:
        break;
    }
    throw Error(ErrorCode::Client, "mock client cannot answer this request");
}

std::string MockLlmClient::score_reply(const std::string& user) const {
    // Ranges appear as "[a, b]: caption" lines; the question follows "Question:".
    static const std::regex line_re(R"(^\[(\d+), (\d+)\]:)", std::regex::multiline);
    std::vector<ClipRange> ranges;
    for (auto it = std::sregex_iterator(user.begin(), user.end(), line_re); it != std::sregex_iterator(); ++it) {
        ranges.push_back({std::stoul((*it)[1].str()), std::stoul((*it)[2].str())});
    }
    SegmentScores scores;
    if (ranges.empty()) {
        return "{}";
    }
    const std::uint64_t h = mix(m_seed ^ text_hash(user));
    if (h % 5 == 0) {
        // Whole-video question: every segment equally relevant.
        for (const auto& r : ranges) {
            scores[r] = 3;
        }
        return serialize_score_string(scores, ScoreStringStyle::Compact);
    }
    const std::size_t hot = (h >> 8) % ranges.size();
    scores[ranges[hot]] = 3 + static_cast<int>((h >> 16) % 3);
    for (std::size_t k = 0; k < ranges.size(); ++k) {
        if (k == hot) {
            continue;
        }
        const std::uint64_t hk = mix(h + k);
        const std::size_t dist = k > hot ? k - hot : hot - k;
        const int s = dist == 1 ? static_cast<int>(hk % 4) : static_cast<int>(hk % 7 == 0 ? 1 + hk % 2 : 0);
        if (s > 0) {
            scores[ranges[k]] = s;
        }
    }
    return serialize_score_string(scores, ScoreStringStyle::Compact);
}

}  // namespace kvtp
