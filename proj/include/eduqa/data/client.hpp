// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/data/prompts.hpp"
#include "eduqa/data/text.hpp"
#include "eduqa/io.hpp"

namespace eduqa::data {

enum class ClientErrorKind { timeout, refusal, malformed };

inline std::string to_string(ClientErrorKind k) {
    switch (k) {
        case ClientErrorKind::timeout: return "timeout";
        case ClientErrorKind::refusal: return "refusal";
        case ClientErrorKind::malformed: return "malformed";
    }
    return "malformed";
}

class ClientError : public Error {
  public:
    ClientError(ClientErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    ClientErrorKind kind() const { return kind_; }

  private:
    ClientErrorKind kind_;
};

/// The prompt id travels with the text so scripted clients can answer per
/// prompt; live clients only send the text.
struct CompletionRequest {
    std::string prompt_id;
    std::string text;
};

class CompletionClient {
  public:
    virtual ~CompletionClient() = default;
    /// Returns the completion text or throws ClientError. Must be safe to
    /// call from several threads at once.
    virtual std::string send(const CompletionRequest& request, std::chrono::milliseconds timeout) = 0;
};

/// Replays scripted responses from a line-delimited fixture:
///
///     {"prompt_id": "ctx-0001/plain/1", "responses": ["Question: ...\nAnswer: ...", {"error": "timeout"}]}
///
/// Attempt n for a prompt gets responses[n], the last one repeating. A
/// prompt_id of "*" scripts every prompt without its own entry.
class MockClient final : public CompletionClient {
  public:
    struct Step {
        std::optional<std::string> text;
        std::optional<ClientErrorKind> error;
    };

    void script(const std::string& prompt_id, std::vector<Step> steps) { scripts_[prompt_id] = std::move(steps); }

    static std::unique_ptr<MockClient> from_jsonl(std::string_view jsonl) {
        auto m = std::make_unique<MockClient>();
        std::istringstream in{std::string(jsonl)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto where = "mock fixture line " + std::to_string(lineno);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(where + ": " + e.what());
            }
            if (!j.contains("prompt_id") || !j["prompt_id"].is_string() || !j.contains("responses") ||
                !j["responses"].is_array() || j["responses"].empty()) {
                throw ParseError(where + ": need prompt_id and a non-empty responses array");
            }
            std::vector<Step> steps;
            for (const auto& r : j["responses"]) {
                if (r.is_string()) {
                    steps.push_back({r.get<std::string>(), std::nullopt});
                } else if (r.is_object() && r.contains("error")) {
                    const auto e = r["error"].get<std::string>();
                    if (e == "timeout") steps.push_back({std::nullopt, ClientErrorKind::timeout});
                    else if (e == "refusal") steps.push_back({std::nullopt, ClientErrorKind::refusal});
                    else if (e == "malformed") steps.push_back({std::nullopt, ClientErrorKind::malformed});
                    else throw ParseError(where + ": unknown error kind '" + e + "'");
                } else {
                    throw ParseError(where + ": each response is a string or {\"error\": kind}");
                }
            }
            m->script(j["prompt_id"].get<std::string>(), std::move(steps));
        }
        return m;
    }

    static std::unique_ptr<MockClient> from_file(const std::filesystem::path& p) { return from_jsonl(io::read_file(p)); }

    std::string send(const CompletionRequest& request, std::chrono::milliseconds) override {
        std::size_t attempt;
        const std::vector<Step>* steps;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = scripts_.find(request.prompt_id);
            if (it == scripts_.end()) it = scripts_.find("*");
            if (it == scripts_.end()) throw ClientError(ClientErrorKind::refusal, "mock has no script for '" + request.prompt_id + "'");
            steps = &it->second;
            attempt = attempts_[request.prompt_id]++;
        }
        const auto& step = (*steps)[std::min(attempt, steps->size() - 1)];
        if (step.error) throw ClientError(*step.error, "scripted " + to_string(*step.error) + " for '" + request.prompt_id + "'");
        return *step.text;
    }

    std::size_t attempts(const std::string& prompt_id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = attempts_.find(prompt_id);
        return it == attempts_.end() ? 0 : it->second;
    }

  private:
    std::map<std::string, std::vector<Step>> scripts_;
    std::map<std::string, std::size_t> attempts_;
    mutable std::mutex mu_;
};

// --- response contract ------------------------------------------------------

struct QaPair {
    std::string question;
    std::string answer;
};

/// Reads "Question:" / "Answer:" pairs (also "Câu hỏi:" / "Trả lời:"). An
/// answer runs until the next question line. Returns nothing when the text
/// holds no complete pair or a question lacks its answer.
inline std::optional<std::vector<QaPair>> parse_response(std::string_view response) {
    static const std::pair<std::string_view, bool> labels[] = {
        {"Question:", true}, {"Câu hỏi:", true}, {"Answer:", false}, {"Trả lời:", false}};
    std::vector<QaPair> pairs;
    std::optional<std::string> question;
    std::optional<std::string> answer;
    auto close = [&]() -> bool {
        if (!question) return true;
        if (!answer) return false;
        auto q = clean_text(*question), a = clean_text(*answer);
        if (q.empty() || a.empty()) return false;
        pairs.push_back({std::move(q), std::move(a)});
        question.reset();
        answer.reset();
        return true;
    };
    std::istringstream in{clean_text_lines(response)};
    std::string line;
    while (std::getline(in, line)) {
        const auto start = line.find_first_not_of(" \t*-");
        const std::string_view body = start == std::string::npos ? std::string_view() : std::string_view(line).substr(start);
        bool matched = false;
        for (const auto& [label, is_question] : labels) {
            if (body.substr(0, label.size()) != label) continue;
            matched = true;
            const std::string rest(body.substr(label.size()));
            if (is_question) {
                if (!close()) return std::nullopt;
                question = rest;
            } else {
                if (!question || answer) return std::nullopt;
                answer = rest;
            }
            break;
        }
        if (!matched && answer) *answer += " " + line;
        else if (!matched && question) *question += " " + line;
    }
    if (!close() || pairs.empty()) return std::nullopt;
    return pairs;
}

// --- batch generation ---------------------------------------------------------

struct RetryPolicy {
    std::size_t max_attempts = 3;  // timeouts only; refusals and malformed replies are final
    std::chrono::milliseconds backoff{0};
    std::chrono::milliseconds timeout{30000};
};

struct QuarantineRecord {
    std::string prompt_id;
    std::string context_id;
    std::string reason;  // timeout | refusal | malformed | unparseable
    std::string detail;
    std::size_t attempts = 0;
    std::string response;
};

struct GenerationBatch {
    std::vector<QaExample> examples;
    std::vector<QuarantineRecord> quarantine;
};

struct GenerationOptions {
    RetryPolicy retry;
    std::size_t parallelism = 4;
};

/// Sends every prompt, at most `parallelism` in flight, and parses the
/// replies. Output order follows the prompt list regardless of completion
/// order. Failed or unparseable prompts land in the quarantine list and the
/// batch continues.
inline GenerationBatch generate_candidates(CompletionClient& client, const std::vector<Prompt>& prompts,
                                           const GenerationOptions& opts = {}) {
    if (opts.retry.max_attempts < 1) throw ConfigError("retry policy needs at least one attempt");
    struct Outcome {
        std::vector<QaExample> examples;
        std::optional<QuarantineRecord> quarantine;
    };
    std::vector<Outcome> outcomes(prompts.size());
    auto run_one = [&](std::size_t i) {
        const auto& p = prompts[i];
        std::size_t attempt = 0;
        while (true) {
            ++attempt;
            try {
                const auto text = client.send({p.id, p.text}, opts.retry.timeout);
                auto pairs = parse_response(text);
                if (!pairs) {
                    outcomes[i].quarantine = QuarantineRecord{p.id, p.context_id, "unparseable",
                                                              "no complete Question/Answer pair", attempt, text};
                    return;
                }
                for (std::size_t k = 0; k < pairs->size(); ++k) {
                    QaExample ex;
                    ex.id = p.id + "#" + std::to_string(k + 1);
                    ex.context = p.context;
                    ex.question = (*pairs)[k].question;
                    ex.answer = (*pairs)[k].answer;
                    ex.provenance = Provenance::generated;
                    outcomes[i].examples.push_back(std::move(ex));
                }
                return;
            } catch (const ClientError& e) {
                if (e.kind() == ClientErrorKind::timeout && attempt < opts.retry.max_attempts) {
                    if (opts.retry.backoff.count() > 0) std::this_thread::sleep_for(opts.retry.backoff * attempt);
                    continue;
                }
                outcomes[i].quarantine = QuarantineRecord{p.id, p.context_id, to_string(e.kind()), e.what(), attempt, ""};
                return;
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(opts.parallelism, prompts.size()));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < prompts.size();) run_one(i);
        });
    }
    for (auto& t : pool) t.join();

    GenerationBatch batch;
    for (auto& o : outcomes) {
        for (auto& e : o.examples) batch.examples.push_back(std::move(e));
        if (o.quarantine) batch.quarantine.push_back(std::move(*o.quarantine));
    }
    return batch;
}

inline void to_json(nlohmann::json& j, const QuarantineRecord& q) {
    j = nlohmann::json{{"prompt_id", q.prompt_id}, {"context_id", q.context_id}, {"reason", q.reason},
                       {"detail", q.detail},       {"attempts", q.attempts},     {"response", q.response}};
}

}  // namespace eduqa::data
