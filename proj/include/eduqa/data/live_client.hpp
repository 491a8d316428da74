// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include <curl/curl.h>
#include <nlohmann/json.hpp>

#include "eduqa/data/client.hpp"

// Needs libcurl. Only the command-line tool links it; the library and the
// tests never talk to a network service.

namespace eduqa::data {

struct LiveClientOptions {
    std::string api_key;
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.7;
};

/// Chat-completions client. HTTP 429 and 5xx count as timeouts so the retry
/// policy covers them; other 4xx answers are refusals.
class LiveClient final : public CompletionClient {
  public:
    explicit LiveClient(LiveClientOptions o) : o_(std::move(o)) {
        static std::once_flag once;
        std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
    }

    std::string send(const CompletionRequest& request, std::chrono::milliseconds timeout) override {
        const nlohmann::json body{{"model", o_.model},
                                  {"temperature", o_.temperature},
                                  {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.text}}})}};
        const std::string payload = body.dump();
        std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), curl_easy_cleanup);
        if (!curl) throw ClientError(ClientErrorKind::malformed, "curl_easy_init failed");
        std::unique_ptr<curl_slist, decltype(&curl_slist_free_all)> headers(nullptr, curl_slist_free_all);
        for (const std::string& h : {std::string("Content-Type: application/json"), "Authorization: Bearer " + o_.api_key})
            headers.reset(curl_slist_append(headers.release(), h.c_str()));
        std::string response;
        const std::string url = o_.base_url + "/chat/completions";
        curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
        curl_easy_setopt(curl.get(), CURLOPT_HTTPHEADER, headers.get());
        curl_easy_setopt(curl.get(), CURLOPT_POSTFIELDS, payload.c_str());
        curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT_MS, static_cast<long>(timeout.count()));
        curl_easy_setopt(curl.get(), CURLOPT_NOSIGNAL, 1L);
        curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, &LiveClient::collect);
        curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &response);
        const CURLcode rc = curl_easy_perform(curl.get());
        if (rc == CURLE_OPERATION_TIMEDOUT || rc == CURLE_COULDNT_CONNECT || rc == CURLE_COULDNT_RESOLVE_HOST)
            throw ClientError(ClientErrorKind::timeout, std::string("request failed: ") + curl_easy_strerror(rc));
        if (rc != CURLE_OK) throw ClientError(ClientErrorKind::malformed, std::string("request failed: ") + curl_easy_strerror(rc));
        long status = 0;
        curl_easy_getinfo(curl.get(), CURLINFO_RESPONSE_CODE, &status);
        if (status == 429 || status >= 500) throw ClientError(ClientErrorKind::timeout, "HTTP " + std::to_string(status));
        if (status >= 400) throw ClientError(ClientErrorKind::refusal, "HTTP " + std::to_string(status) + ": " + response);
        try {
            const auto j = nlohmann::json::parse(response);
            const auto& choice = j.at("choices").at(0);
            if (choice.value("finish_reason", std::string()) == "content_filter")
                throw ClientError(ClientErrorKind::refusal, "completion stopped by the content filter");
            return choice.at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ClientError(ClientErrorKind::malformed, std::string("unexpected response body: ") + e.what());
        }
    }

  private:
    static std::size_t collect(char* data, std::size_t size, std::size_t n, void* out) {
        static_cast<std::string*>(out)->append(data, size * n);
        return size * n;
    }

    LiveClientOptions o_;
};

}  // namespace eduqa::data
