// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/data/prompts.hpp"
#include "eduqa/data/types.hpp"
#include "eduqa/eval/normalize.hpp"
#include "eduqa/io.hpp"

namespace eduqa::data {

namespace detail {

inline std::string nfc(const std::string& s) { return text::to_utf8(text::nfc(text::from_utf8(s))); }

inline QaExample nfc(QaExample e) {
    e.id = nfc(e.id);
    e.context = nfc(e.context);
    e.question = nfc(e.question);
    e.answer = nfc(e.answer);
    return e;
}

/// Calls f(json, line number) for each non-blank line.
template <class F>
void for_each_jsonl(std::string_view content, const std::string& source, F&& f) {
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
        try {
            f(j, lineno);
        } catch (const ParseError& e) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace detail

/// Parses a line-delimited corpus. Text fields are stored NFC; ids must be
/// unique.
inline std::vector<QaExample> parse_corpus(std::string_view content, const std::string& source = "corpus") {
    std::vector<QaExample> out;
    std::set<std::string> seen;
    detail::for_each_jsonl(content, source, [&](const nlohmann::json& j, std::size_t) {
        auto ex = detail::nfc(j.get<QaExample>());
        if (!seen.insert(ex.id).second) throw ParseError("duplicate id '" + ex.id + "'");
        out.push_back(std::move(ex));
    });
    return out;
}

inline std::vector<QaExample> read_corpus(const std::filesystem::path& path) {
    return parse_corpus(io::read_file(path), path.string());
}

/// One record per line, keys sorted, text NFC.
inline std::string serialize_corpus(const std::vector<QaExample>& corpus) {
    std::string out;
    for (const auto& ex : corpus) out += nlohmann::json(detail::nfc(ex)).dump() + "\n";
    return out;
}

inline void write_corpus(const std::vector<QaExample>& corpus, const std::filesystem::path& path) {
    io::atomic_write(path, serialize_corpus(corpus));
}

inline std::vector<Context> parse_contexts(std::string_view content, const std::string& source = "contexts") {
    std::vector<Context> out;
    std::set<std::string> seen;
    detail::for_each_jsonl(content, source, [&](const nlohmann::json& j, std::size_t) {
        auto c = j.get<Context>();
        c.text = detail::nfc(c.text);
        if (!seen.insert(c.id).second) throw ParseError("duplicate context id '" + c.id + "'");
        out.push_back(std::move(c));
    });
    return out;
}

inline std::vector<Context> read_contexts(const std::filesystem::path& path) {
    return parse_contexts(io::read_file(path), path.string());
}

inline std::string serialize_contexts(const std::vector<Context>& contexts) {
    std::string out;
    for (const auto& c : contexts) out += nlohmann::json(c).dump() + "\n";
    return out;
}

inline void write_contexts(const std::vector<Context>& contexts, const std::filesystem::path& path) {
    io::atomic_write(path, serialize_contexts(contexts));
}

}  // namespace eduqa::data
