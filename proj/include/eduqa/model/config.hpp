// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "eduqa/errors.hpp"

namespace eduqa::model {

enum class AttentionVariant {
    sliding_window,  // rotary positions, windowed causal attention, SiLU feedforward
    alibi,           // linear distance bias, embedding layernorm, GELU feedforward
};

inline std::string to_string(AttentionVariant v) {
    return v == AttentionVariant::alibi ? "alibi" : "sliding_window";
}

inline AttentionVariant attention_variant_from_string(const std::string& s) {
    if (s == "sliding_window") return AttentionVariant::sliding_window;
    if (s == "alibi") return AttentionVariant::alibi;
    throw ConfigError("unknown attention variant '" + s + "' (expected sliding_window or alibi)");
}

struct ModelConfig {
    std::size_t d_model = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t vocab_size = 259;
    std::size_t max_seq_len = 128;
    AttentionVariant attention = AttentionVariant::sliding_window;
    std::size_t window = 8;  // only meaningful for sliding_window
    bool embedding_layernorm = false;
    std::size_t feedforward_mult = 4;
    double rope_base = 10000.0;
    double norm_eps = 1e-7;

    std::size_t head_dim() const { return d_model / n_heads; }

    /// Number of most recent positions a query may attend to. ALiBi attends
    /// causally over everything, bounded by the context length.
    std::size_t attention_span() const {
        return attention == AttentionVariant::sliding_window ? window : max_seq_len;
    }

    void validate() const {
        if (d_model == 0 || n_heads == 0 || vocab_size == 0 || max_seq_len == 0 || feedforward_mult == 0) {
            throw ConfigError("model config: d_model, n_heads, vocab_size, max_seq_len, feedforward_mult must be positive");
        }
        if (d_model % n_heads != 0) {
            throw ConfigError("model config: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                              std::to_string(n_heads));
        }
        if (attention == AttentionVariant::sliding_window) {
            if (window < 1) throw ConfigError("model config: sliding window W must be >= 1");
            if (head_dim() % 2 != 0) throw ConfigError("model config: rotary encoding needs an even head dimension");
        }
        if (attention == AttentionVariant::alibi && !embedding_layernorm) {
            throw ConfigError("model config: the alibi variant always carries the embedding layernorm");
        }
        if (!(norm_eps > 0.0)) throw ConfigError("model config: norm_eps must be positive");
    }

    static ModelConfig sliding(std::size_t d_model, std::size_t n_layers, std::size_t n_heads, std::size_t vocab,
                               std::size_t window, std::size_t max_seq_len = 128) {
        ModelConfig c;
        c.d_model = d_model;
        c.n_layers = n_layers;
        c.n_heads = n_heads;
        c.vocab_size = vocab;
        c.window = window;
        c.max_seq_len = max_seq_len;
        c.attention = AttentionVariant::sliding_window;
        c.embedding_layernorm = false;
        return c;
    }

    static ModelConfig alibi(std::size_t d_model, std::size_t n_layers, std::size_t n_heads, std::size_t vocab,
                             std::size_t max_seq_len = 128) {
        ModelConfig c;
        c.d_model = d_model;
        c.n_layers = n_layers;
        c.n_heads = n_heads;
        c.vocab_size = vocab;
        c.max_seq_len = max_seq_len;
        c.attention = AttentionVariant::alibi;
        c.embedding_layernorm = true;
        return c;
    }

    bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"d_model", c.d_model},
                       {"n_layers", c.n_layers},
                       {"n_heads", c.n_heads},
                       {"vocab_size", c.vocab_size},
                       {"max_seq_len", c.max_seq_len},
                       {"attention", to_string(c.attention)},
                       {"window", c.window},
                       {"embedding_layernorm", c.embedding_layernorm},
                       {"feedforward_mult", c.feedforward_mult},
                       {"rope_base", c.rope_base},
                       {"norm_eps", c.norm_eps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    static const char* known[] = {"d_model",   "n_layers", "n_heads",  "vocab_size",          "max_seq_len", "attention",
                                  "window",    "embedding_layernorm", "feedforward_mult", "rope_base",    "norm_eps"};
    if (!j.is_object()) throw ConfigError("model config must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("model config: unknown key '" + it.key() + "'");
    }
    ModelConfig d;
    auto get_size = [&](const char* key, std::size_t fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number_unsigned()) throw ConfigError(std::string("model config: '") + key + "' must be a positive integer");
        return j[key].get<std::size_t>();
    };
    c.d_model = get_size("d_model", d.d_model);
    c.n_layers = j.contains("n_layers") ? j["n_layers"].get<std::size_t>() : d.n_layers;
    c.n_heads = get_size("n_heads", d.n_heads);
    c.vocab_size = get_size("vocab_size", d.vocab_size);
    c.max_seq_len = get_size("max_seq_len", d.max_seq_len);
    c.attention = j.contains("attention") ? attention_variant_from_string(j["attention"].get<std::string>()) : d.attention;
    c.window = get_size("window", d.window);
    c.embedding_layernorm = j.contains("embedding_layernorm") ? j["embedding_layernorm"].get<bool>()
                                                              : c.attention == AttentionVariant::alibi;
    c.feedforward_mult = get_size("feedforward_mult", d.feedforward_mult);
    c.rope_base = j.value("rope_base", d.rope_base);
    c.norm_eps = j.value("norm_eps", d.norm_eps);
    c.validate();
}

}  // namespace eduqa::model
