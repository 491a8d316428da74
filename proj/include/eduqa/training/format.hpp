// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "eduqa/data/types.hpp"
#include "eduqa/errors.hpp"
#include "eduqa/model/tokenizer.hpp"
#include "eduqa/numerics/ops.hpp"

namespace eduqa::train {

/// A token sequence and which of its tokens the model is trained to predict.
struct TrainingExample {
    std::string id;
    std::vector<std::int64_t> tokens;
    std::vector<bool> loss_mask;  // same length as tokens

    std::size_t loss_tokens() const {
        std::size_t n = 0;
        for (bool b : loss_mask) n += b;
        return n;
    }
};

/// Next-token targets for tokens[0..n-2]: tokens[i+1] where it is in the loss,
/// kIgnoreIndex elsewhere.
inline std::vector<std::int64_t> shifted_targets(const TrainingExample& ex) {
    std::vector<std::int64_t> t(ex.tokens.size() - 1);
    for (std::size_t i = 0; i + 1 < ex.tokens.size(); ++i) t[i] = ex.loss_mask[i + 1] ? ex.tokens[i + 1] : num::kIgnoreIndex;
    return t;
}

/// Renders the template as BOS, prompt, answer, EOS. Only the answer tokens
/// and EOS count towards the loss. {answer} must close the template.
///
/// When the result exceeds max_length, tokens are dropped from the left end
/// of the context first, then from the tail of the answer; the question and
/// the template's own text are never cut.
inline TrainingExample format_training_example(const data::QaExample& ex, const data::InstructionTemplate& tmpl,
                                               const model::Tokenizer& tok, std::size_t max_length) {
    data::require_placeholders(tmpl, {"context", "question", "answer"});
    const auto parts = data::parse_template(tmpl.body);
    std::size_t last = parts.size();
    while (last > 0 && !parts[last - 1].placeholder && parts[last - 1].text.find_first_not_of(" \t\r\n") == std::string::npos)
        --last;
    if (last == 0 || !parts[last - 1].placeholder || parts[last - 1].text != "answer") {
        throw ConfigError("template '" + tmpl.name + "': {answer} must be the last element of a training template");
    }

    struct Piece {
        std::string kind;  // "literal", "context", "question", "answer", "variant"
        std::vector<std::int64_t> ids;
    };
    std::vector<Piece> pieces;
    for (std::size_t i = 0; i < last; ++i) {
        const auto& p = parts[i];
        if (!p.placeholder) {
            pieces.push_back({"literal", tok.encode(p.text)});
        } else if (p.text == "context") {
            pieces.push_back({"context", tok.encode(ex.context)});
        } else if (p.text == "question") {
            pieces.push_back({"question", tok.encode(ex.question)});
        } else if (p.text == "answer") {
            pieces.push_back({"answer", tok.encode(ex.answer)});
        } else {
            pieces.push_back({"literal", {}});
        }
    }

    auto total = [&] {
        std::size_t n = 2;  // BOS, EOS
        for (const auto& p : pieces) n += p.ids.size();
        return n;
    };
    auto find = [&](const std::string& kind) -> std::vector<std::int64_t>& {
        for (auto& p : pieces)
            if (p.kind == kind) return p.ids;
        throw ContractError("missing template piece " + kind);
    };
    if (total() > max_length) {
        auto& ctx = find("context");
        const std::size_t excess = total() - max_length;
        ctx.erase(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(std::min(excess, ctx.size())));
    }
    if (total() > max_length) {
        auto& ans = find("answer");
        const std::size_t excess = total() - max_length;
        if (excess >= ans.size()) {
            throw LengthError("example '" + ex.id + "': question and template need more than max_length " +
                              std::to_string(max_length) + " tokens");
        }
        ans.resize(ans.size() - excess);
    }

    TrainingExample out;
    out.id = ex.id;
    out.tokens.push_back(tok.bos());
    out.loss_mask.push_back(false);
    for (const auto& p : pieces) {
        const bool in_loss = p.kind == "answer";
        out.tokens.insert(out.tokens.end(), p.ids.begin(), p.ids.end());
        out.loss_mask.insert(out.loss_mask.end(), p.ids.size(), in_loss);
    }
    out.tokens.push_back(tok.eos());
    out.loss_mask.push_back(true);
    return out;
}

/// Vocabulary of the synthetic copy task: `symbols` payload ids, then
/// separator, BOS and EOS.
struct CopyTask {
    std::size_t symbols = 8;
    std::size_t length = 4;

    std::int64_t sep() const { return static_cast<std::int64_t>(symbols); }
    std::int64_t bos() const { return static_cast<std::int64_t>(symbols) + 1; }
    std::int64_t eos() const { return static_cast<std::int64_t>(symbols) + 2; }
    std::size_t vocab_size() const { return symbols + 3; }
};

/// BOS a1..an SEP a1..an EOS, with the echoed half and EOS in the loss.
inline std::vector<TrainingExample> make_copy_task(const CopyTask& task, std::size_t count, std::uint64_t seed) {
    if (task.symbols == 0 || task.length == 0) throw ConfigError("copy task needs symbols and length >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> pick(0, static_cast<std::int64_t>(task.symbols) - 1);
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < count; ++i) {
        TrainingExample ex;
        ex.id = "copy-" + std::to_string(i);
        std::vector<std::int64_t> payload(task.length);
        for (auto& p : payload) p = pick(rng);
        ex.tokens.push_back(task.bos());
        ex.tokens.insert(ex.tokens.end(), payload.begin(), payload.end());
        ex.tokens.push_back(task.sep());
        ex.loss_mask.assign(ex.tokens.size(), false);
        ex.tokens.insert(ex.tokens.end(), payload.begin(), payload.end());
        ex.tokens.push_back(task.eos());
        ex.loss_mask.resize(ex.tokens.size(), true);
        out.push_back(std::move(ex));
    }
    return out;
}

/// FNV-1a, used for the id-hash validation split.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline bool is_validation_id(std::string_view id) { return fnv1a(id) % 10 == 0; }

}  // namespace eduqa::train
