// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/data/types.hpp"

namespace eduqa::data {

struct Context {
    std::string id;
    std::string text;

    bool operator==(const Context&) const = default;
};

/// Ids "ctx-0001", "ctx-0002", ... in segment order.
inline std::vector<Context> make_contexts(const std::vector<std::string>& segments) {
    std::vector<Context> out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        std::string n = std::to_string(i + 1);
        out.push_back({"ctx-" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n, segments[i]});
    }
    return out;
}

inline constexpr const char* kResponseContract =
    "Reply with one or more pairs, each on its own lines, in exactly this form:\n"
    "Question: <question in Vietnamese>\n"
    "Answer: <answer in Vietnamese, quoting the excerpt where possible>";

/// The built-in generation template for each prompting style.
inline InstructionTemplate builtin_template(TemplateStyle style) {
    const std::string header =
        "You are preparing question-answer data about university student regulations.\n\n"
        "Regulation excerpt:\n\"\"\"\n{context}\n\"\"\"\n\n";
    const std::string footer = std::string("\n\n") + kResponseContract + "\n{variant}";
    switch (style) {
        case TemplateStyle::plain:
            return {"plain", style,
                    header + "Write a question a student could ask about this excerpt, and its answer taken from the excerpt." +
                        footer};
        case TemplateStyle::chain_of_thought:
            return {"chain_of_thought", style,
                    header +
                        "Think step by step. First list the rules the excerpt states. Then pick one rule and write a "
                        "question whose answer depends on it. Finally write the answer using only the excerpt. Show only "
                        "the final pair." +
                        footer};
        case TemplateStyle::self_consistency_cot:
            return {"self_consistency_cot", style,
                    header +
                        "Reason step by step along three independent lines, each ending in a candidate question and "
                        "answer. Keep the pair that the reasoning lines agree on most, and check that the answer is "
                        "supported by the excerpt. Show only that pair." +
                        footer};
        case TemplateStyle::tree_of_thought:
            return {"tree_of_thought", style,
                    header +
                        "Imagine three experts reading the excerpt.\n"
                        "Step 1: each expert proposes one question a student might ask.\n"
                        "Step 2: each expert drafts an answer from the excerpt and rates how well the excerpt supports "
                        "it.\n"
                        "Step 3: any expert whose answer is not supported by the excerpt leaves the discussion.\n"
                        "Step 4: the remaining experts agree on the best question and answer.\n"
                        "Show only the agreed pair." +
                        footer};
    }
    return builtin_template(TemplateStyle::plain);
}

inline InstructionTemplate builtin_template(const std::string& name) {
    return builtin_template(template_style_from_string(name));
}

/// Instruction scaffold used to turn QA examples into training sequences.
inline InstructionTemplate default_training_template() {
    return {"qa_instruction", TemplateStyle::plain,
            "### Instruction:\nAnswer the question using only the regulation excerpt. If the excerpt does not answer "
            "it, give an empty answer.\n\n### Context:\n{context}\n\n### Question:\n{question}\n\n### Answer:\n{answer}"};
}

/// Inference form of a training template: everything before {answer}.
inline std::string render_inference_prompt(const InstructionTemplate& t, const std::string& context,
                                           const std::string& question) {
    std::string out;
    for (const auto& p : parse_template(t.body)) {
        if (p.placeholder && p.text == "answer") break;
        if (!p.placeholder) out += p.text;
        else if (p.text == "context") out += context;
        else if (p.text == "question") out += question;
    }
    return out;
}

struct Prompt {
    std::string id;
    std::string context_id;
    std::string context;
    std::string template_name;
    std::string text;
};

/// k prompts per context, ids "<context id>/<template>/<i>". With k > 1
/// the {variant} placeholder carries "Variant i of k" so the prompts
/// differ; with k = 1 it renders empty.
inline std::vector<Prompt> craft_prompts(const std::vector<Context>& contexts, const InstructionTemplate& t,
                                         std::size_t k_per_context) {
    if (k_per_context < 1) throw ConfigError("craft_prompts: k_per_context must be >= 1");
    require_placeholders(t, {"context"});
    if (count_placeholder(t, "variant") > 1) throw ConfigError("template '" + t.name + "' repeats {variant}");
    std::vector<Prompt> out;
    for (const auto& c : contexts) {
        for (std::size_t i = 1; i <= k_per_context; ++i) {
            const std::string variant =
                k_per_context == 1 ? "" : "Variant " + std::to_string(i) + " of " + std::to_string(k_per_context) +
                                              ": ask about a different rule than the other variants.";
            out.push_back({c.id + "/" + t.name + "/" + std::to_string(i), c.id, c.text, t.name,
                           render(t, {{"context", c.text}, {"variant", variant}})});
        }
    }
    return out;
}

inline void to_json(nlohmann::json& j, const Context& c) { j = nlohmann::json{{"id", c.id}, {"context", c.text}}; }

inline void from_json(const nlohmann::json& j, Context& c) {
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("context") || !j["context"].is_string())
        throw ParseError("context record needs string fields id and context");
    c.id = j["id"].get<std::string>();
    c.text = j["context"].get<std::string>();
}

}  // namespace eduqa::data
