// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

// Must match the definition used by the library build of httplib.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "kvtp/error.hpp"
#include "kvtp/llm_client.hpp"

TEST_CASE("wire format") {
    const kvtp::ChatRequest req{"gpt-4o", {{"system", "be brief"}, {"user", "hi"}}};
    const auto j = nlohmann::json::parse(kvtp::to_wire_request(req));
    CHECK(j["model"] == "gpt-4o");
    CHECK(j["messages"].size() == 2);
    CHECK(j["messages"][1]["role"] == "user");
    CHECK(j["messages"][1]["content"] == "hi");

    CHECK(kvtp::parse_wire_response(R"({"choices":[{"message":{"role":"assistant","content":"ok"}}]})") == "ok");
    CHECK_THROWS_AS(kvtp::parse_wire_response("{}"), kvtp::Error);
    CHECK_THROWS_AS(kvtp::parse_wire_response("not json"), kvtp::Error);
}

TEST_CASE("retry policy") {
    kvtp::MockLlmClient broken;
    broken.set_failing(true);
    const kvtp::ChatRequest req{"m", {{"user", "x"}}};
    try {
        kvtp::complete_with_retry(broken, req, {3, std::chrono::milliseconds(0)});
        FAIL("failing client succeeded");
    } catch (const kvtp::Error& e) {
        CHECK(e.code() == kvtp::ErrorCode::Client);
    }
    CHECK(broken.calls() == 3);
}

TEST_CASE("http client against a loopback endpoint") {
    httplib::Server server;
    std::string seen_auth;
    std::string seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"{[0,7]: 5}"}}]})",
                        "application/json");
    });
    server.Post("/fail", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    kvtp::HttpClientConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.api_key = "secret";
    kvtp::HttpLlmClient client(cfg);
    const std::string reply = client.complete({"gpt-4o", {{"user", "score these"}}});
    CHECK(reply == "{[0,7]: 5}");
    CHECK(seen_auth == "Bearer secret");
    CHECK(nlohmann::json::parse(seen_body)["messages"][0]["content"] == "score these");

    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/fail";
    kvtp::HttpLlmClient failing(cfg);
    try {
        failing.complete({"gpt-4o", {{"user", "x"}}});
        FAIL("HTTP 500 accepted");
    } catch (const kvtp::Error& e) {
        CHECK(e.code() == kvtp::ErrorCode::Client);
    }
    server.stop();
    worker.join();

    CHECK_THROWS_AS(kvtp::HttpLlmClient(kvtp::HttpClientConfig{"not a url", "", std::chrono::seconds(1)}),
                    kvtp::Error);
}

TEST_CASE("credentials come from the environment") {
    ::setenv("KVTP_LLM_ENDPOINT", "https://example.invalid/v1/chat/completions", 1);
    ::setenv("KVTP_LLM_API_KEY", "k", 1);
    const auto cfg = kvtp::HttpClientConfig::from_environment();
    CHECK(cfg.endpoint == "https://example.invalid/v1/chat/completions");
    CHECK(cfg.api_key == "k");
    ::unsetenv("KVTP_LLM_ENDPOINT");
    ::unsetenv("KVTP_LLM_API_KEY");
}
