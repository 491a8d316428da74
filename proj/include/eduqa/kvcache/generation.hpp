// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "eduqa/kvcache/rolling_cache.hpp"
#include "eduqa/model/decoder.hpp"

namespace eduqa::kv {

struct Greedy {};

struct Temperature {
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

struct GenerationParams {
    std::size_t max_new_tokens = 64;
    std::variant<Greedy, Temperature> sampling = Greedy{};
    std::optional<std::int64_t> stop_token;
    // Defaults to the model's attention window.
    std::optional<std::size_t> prefill_chunk;
};

/// Feeds a known prompt through the model in consecutive chunks, each
/// attending over the cache and causally within itself. Returns the logits
/// of the final prompt position.
template <typename T>
std::vector<T> prefill(const model::DecoderModel<T>& m, RollingKVCache<T>& cache, const std::vector<std::int64_t>& prompt,
                       std::size_t chunk) {
    if (prompt.empty()) throw ContractError("prefill: empty prompt");
    if (chunk < 1) throw ConfigError("prefill: chunk size must be >= 1");
    num::NoGradGuard no_grad;
    num::Tensor<T> logits;
    for (std::size_t begin = 0; begin < prompt.size(); begin += chunk) {
        const std::size_t end = std::min(prompt.size(), begin + chunk);
        std::vector<std::int64_t> piece(prompt.begin() + static_cast<std::ptrdiff_t>(begin),
                                        prompt.begin() + static_cast<std::ptrdiff_t>(end));
        logits = m.forward(piece, &cache);
    }
    const std::size_t V = logits.dim(1);
    auto last = logits.data().subspan((logits.dim(0) - 1) * V, V);
    return {last.begin(), last.end()};
}

template <typename T>
std::int64_t argmax(std::span<const T> logits) {
    return static_cast<std::int64_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

template <typename T>
struct GenerationTrace {
    std::vector<std::int64_t> tokens;
    std::vector<std::vector<T>> step_logits;  // logits that produced tokens[i]
};

/// Autoregressive decoding over a rolling cache: prefill, then one token per
/// step until the stop token or max_new_tokens.
template <typename T>
GenerationTrace<T> generate_traced(const model::DecoderModel<T>& m, const std::vector<std::int64_t>& prompt,
                                   const GenerationParams& params) {
    if (prompt.empty()) throw ContractError("generate: empty prompt");
    GenerationTrace<T> out;
    if (params.max_new_tokens == 0) return out;
    num::NoGradGuard no_grad;
    auto cache = m.make_cache();
    auto logits = prefill(m, cache, prompt, params.prefill_chunk.value_or(m.config().attention_span()));

    std::mt19937_64 rng;
    const Temperature* temp = std::get_if<Temperature>(&params.sampling);
    if (temp) {
        if (!(temp->temperature > 0.0)) throw ConfigError("sampling temperature must be positive");
        rng.seed(temp->seed);
    }
    auto pick = [&](const std::vector<T>& l) -> std::int64_t {
        if (!temp) return argmax<T>(l);
        std::vector<double> w(l.size());
        const double mx = static_cast<double>(*std::max_element(l.begin(), l.end()));
        for (std::size_t i = 0; i < l.size(); ++i) w[i] = std::exp((static_cast<double>(l[i]) - mx) / temp->temperature);
        std::discrete_distribution<std::int64_t> dist(w.begin(), w.end());
        return dist(rng);
    };

    for (std::size_t step = 0; step < params.max_new_tokens; ++step) {
        const auto next = pick(logits);
        out.tokens.push_back(next);
        out.step_logits.push_back(logits);
        if (params.stop_token && next == *params.stop_token) break;
        if (step + 1 == params.max_new_tokens) break;
        auto l = m.forward({next}, &cache);
        logits.assign(l.data().begin(), l.data().end());
    }
    return out;
}

template <typename T>
std::vector<std::int64_t> generate(const model::DecoderModel<T>& m, const std::vector<std::int64_t>& prompt,
                                   const GenerationParams& params) {
    return generate_traced(m, prompt, params).tokens;
}

}  // namespace eduqa::kv
