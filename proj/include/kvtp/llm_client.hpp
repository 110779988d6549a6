// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace kvtp {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
};

/// JSON body {model, messages:[{role, content}]} of a chat-completion call.
std::string to_wire_request(const ChatRequest& request);

/// First choice's message content from a chat-completion response body.
std::string parse_wire_response(const std::string& body);

/// A chat-completion backend. Implementations must be callable from several threads at once
/// and report failures as Error(ErrorCode::Client).
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
    std::size_t max_attempts = 3;
    std::chrono::milliseconds backoff{200};
};

/// Calls `client` until it succeeds or the attempts run out; rethrows the last failure.
std::string complete_with_retry(LlmClient& client, const ChatRequest& request, const RetryPolicy& policy);

struct HttpClientConfig {
    std::string endpoint;  ///< full URL, e.g. https://host/v1/chat/completions
    std::string api_key;
    std::chrono::seconds timeout{60};

    /// KVTP_LLM_ENDPOINT and KVTP_LLM_API_KEY.
    static HttpClientConfig from_environment();
};

class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpClientConfig config);
    std::string complete(const ChatRequest& request) override;

private:
    HttpClientConfig m_config;
    std::string m_scheme_host_port;
    std::string m_path;
};

/// Deterministic offline stand-in for the captioner and scorer.
///
/// Captions echo the frame range ("mock-caption-0-7"), debiasing echoes the question and scoring
/// derives a reply from the seed and request text. Each reply can be overridden, and the client
/// can be told to fail. Tracks the maximum number of concurrent in-flight calls.
class MockLlmClient final : public LlmClient {
public:
    explicit MockLlmClient(std::uint64_t seed = 0) : m_seed(seed) {}

    std::string complete(const ChatRequest& request) override;

    void set_score_reply(std::string reply) { m_score_reply = std::move(reply); }
    void set_debias_reply(std::string reply) { m_debias_reply = std::move(reply); }
    void set_failing(bool failing) { m_failing = failing; }
    void set_latency(std::chrono::milliseconds latency) { m_latency = latency; }

    std::size_t calls() const { return m_calls.load(); }
    std::size_t max_in_flight() const { return m_max_in_flight.load(); }

private:
    std::string score_reply(const std::string& user) const;

    std::uint64_t m_seed;
    std::optional<std::string> m_score_reply;
    std::optional<std::string> m_debias_reply;
    std::atomic<bool> m_failing{false};
    std::chrono::milliseconds m_latency{0};
    std::atomic<std::size_t> m_calls{0};
    std::atomic<std::size_t> m_in_flight{0};
    std::atomic<std::size_t> m_max_in_flight{0};
};

}  // namespace kvtp
