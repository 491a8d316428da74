// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/errors.hpp"

namespace eduqa::data {

enum class QualityLevel { VeryGood, Good, Medium, Bad, VeryBad };

inline constexpr std::array<QualityLevel, 5> kQualityLevels = {QualityLevel::VeryGood, QualityLevel::Good,
                                                               QualityLevel::Medium, QualityLevel::Bad,
                                                               QualityLevel::VeryBad};

inline std::string to_string(QualityLevel q) {
    switch (q) {
        case QualityLevel::VeryGood: return "VeryGood";
        case QualityLevel::Good: return "Good";
        case QualityLevel::Medium: return "Medium";
        case QualityLevel::Bad: return "Bad";
        case QualityLevel::VeryBad: return "VeryBad";
    }
    return "VeryBad";
}

inline QualityLevel quality_from_string(const std::string& s) {
    for (auto q : kQualityLevels)
        if (to_string(q) == s) return q;
    throw ParseError("unknown quality level '" + s + "'");
}

enum class Provenance { generated, human_labeled, human_corrected };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::generated: return "generated";
        case Provenance::human_labeled: return "human-labeled";
        case Provenance::human_corrected: return "human-corrected";
    }
    return "generated";
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "generated") return Provenance::generated;
    if (s == "human-labeled") return Provenance::human_labeled;
    if (s == "human-corrected") return Provenance::human_corrected;
    throw ParseError("unknown provenance '" + s + "'");
}

struct QaExample {
    std::string id;
    std::string context;
    std::string question;
    std::string answer;
    std::optional<QualityLevel> quality;
    Provenance provenance = Provenance::generated;

    bool operator==(const QaExample&) const = default;
};

// --- instruction templates -------------------------------------------------

enum class TemplateStyle { plain, chain_of_thought, self_consistency_cot, tree_of_thought };

inline std::string to_string(TemplateStyle s) {
    switch (s) {
        case TemplateStyle::plain: return "plain";
        case TemplateStyle::chain_of_thought: return "chain_of_thought";
        case TemplateStyle::self_consistency_cot: return "self_consistency_cot";
        case TemplateStyle::tree_of_thought: return "tree_of_thought";
    }
    return "plain";
}

inline TemplateStyle template_style_from_string(const std::string& s) {
    for (auto st : {TemplateStyle::plain, TemplateStyle::chain_of_thought, TemplateStyle::self_consistency_cot,
                    TemplateStyle::tree_of_thought})
        if (to_string(st) == s) return st;
    throw ConfigError("unknown template style '" + s + "'");
}

struct InstructionTemplate {
    std::string name;
    TemplateStyle style = TemplateStyle::plain;
    std::string body;
};

/// One piece of a template body: literal text, or a placeholder name.
struct TemplatePart {
    bool placeholder = false;
    std::string text;
};

inline constexpr std::array<std::string_view, 4> kPlaceholders = {"context", "question", "answer", "variant"};

/// Splits a body at the recognised placeholders. Other braces are literal
/// text, so LaTeX such as \frac{a}{b} survives.
inline std::vector<TemplatePart> parse_template(std::string_view body) {
    std::vector<TemplatePart> parts;
    std::string literal;
    std::size_t i = 0;
    while (i < body.size()) {
        bool matched = false;
        if (body[i] == '{') {
            for (auto name : kPlaceholders) {
                if (body.substr(i + 1, name.size()) == name && i + 1 + name.size() < body.size() &&
                    body[i + 1 + name.size()] == '}') {
                    if (!literal.empty()) parts.push_back({false, std::move(literal)});
                    literal.clear();
                    parts.push_back({true, std::string(name)});
                    i += name.size() + 2;
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) literal.push_back(body[i++]);
    }
    if (!literal.empty()) parts.push_back({false, std::move(literal)});
    return parts;
}

inline std::size_t count_placeholder(const InstructionTemplate& t, std::string_view name) {
    std::size_t n = 0;
    for (const auto& p : parse_template(t.body)) n += p.placeholder && p.text == name;
    return n;
}

/// Throws ConfigError unless every name occurs exactly once in the body.
inline void require_placeholders(const InstructionTemplate& t, std::initializer_list<std::string_view> names) {
    for (auto name : names) {
        const auto n = count_placeholder(t, name);
        if (n != 1) {
            throw ConfigError("template '" + t.name + "' must contain {" + std::string(name) + "} exactly once (found " +
                              std::to_string(n) + ")");
        }
    }
}

/// Substitutes placeholders in one pass; substituted values are never
/// rescanned. Placeholders without a value are left verbatim.
inline std::string render(const InstructionTemplate& t, const std::map<std::string, std::string>& values) {
    std::string out;
    for (const auto& p : parse_template(t.body)) {
        if (!p.placeholder) {
            out += p.text;
            continue;
        }
        auto it = values.find(p.text);
        out += it == values.end() ? "{" + p.text + "}" : it->second;
    }
    return out;
}

// --- JSON ------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const QaExample& e) {
    j = nlohmann::json{{"id", e.id},
                       {"context", e.context},
                       {"question", e.question},
                       {"answer", e.answer},
                       {"provenance", to_string(e.provenance)}};
    if (e.quality) j["quality"] = to_string(*e.quality);
}

inline void from_json(const nlohmann::json& j, QaExample& e) {
    if (!j.is_object()) throw ParseError("example must be a JSON object");
    for (const char* k : {"id", "context", "question", "answer"}) {
        if (!j.contains(k) || !j[k].is_string()) throw ParseError(std::string("example field '") + k + "' missing or not a string");
    }
    e.id = j["id"].get<std::string>();
    e.context = j["context"].get<std::string>();
    e.question = j["question"].get<std::string>();
    e.answer = j["answer"].get<std::string>();
    e.quality = j.contains("quality") && !j["quality"].is_null()
                    ? std::optional<QualityLevel>(quality_from_string(j["quality"].get<std::string>()))
                    : std::nullopt;
    e.provenance = j.contains("provenance") ? provenance_from_string(j["provenance"].get<std::string>())
                                            : Provenance::generated;
}

inline void to_json(nlohmann::json& j, const InstructionTemplate& t) {
    j = nlohmann::json{{"name", t.name}, {"style", to_string(t.style)}, {"body", t.body}};
}

inline void from_json(const nlohmann::json& j, InstructionTemplate& t) {
    t.name = j.value("name", std::string("custom"));
    t.style = template_style_from_string(j.value("style", std::string("plain")));
    if (!j.contains("body") || !j["body"].is_string()) throw ConfigError("template needs a string 'body'");
    t.body = j["body"].get<std::string>();
}

}  // namespace eduqa::data
