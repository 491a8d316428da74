// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "eduqa/numerics/ops.hpp"

namespace eduqa::model {

/// Geometric ALiBi slopes: slope(h) = 2^(-8(h+1)/n_heads).
inline std::vector<double> alibi_slopes(std::size_t n_heads) {
    std::vector<double> slopes(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        slopes[h] = std::pow(2.0, -8.0 * static_cast<double>(h + 1) / static_cast<double>(n_heads));
    }
    return slopes;
}

/// Additive attention bias of shape [heads x q x k]:
/// -slope(h) * (q_pos - k_pos) for k_pos <= q_pos, and 0 for future keys
/// (those are removed by the causal mask anyway).
template <typename T = double>
num::Tensor<T> alibi_bias(std::size_t n_heads, const std::vector<std::int64_t>& query_pos,
                          const std::vector<std::int64_t>& key_pos) {
    if (n_heads == 0 || query_pos.empty() || key_pos.empty()) {
        throw DimensionError("alibi_bias: heads, queries and keys must be non-empty");
    }
    for (auto p : query_pos)
        if (p < 0) throw IndexError("alibi_bias: negative query position");
    for (auto p : key_pos)
        if (p < 0) throw IndexError("alibi_bias: negative key position");
    const auto slopes = alibi_slopes(n_heads);
    const std::size_t nq = query_pos.size(), nk = key_pos.size();
    std::vector<T> values(n_heads * nq * nk, T(0));
    for (std::size_t h = 0; h < n_heads; ++h)
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t j = 0; j < nk; ++j) {
                const auto dist = query_pos[i] - key_pos[j];
                if (dist >= 0) values[(h * nq + i) * nk + j] = static_cast<T>(-slopes[h] * static_cast<double>(dist));
            }
    return num::Tensor<T>({n_heads, nq, nk}, std::move(values));
}

/// Boolean [query x key] attention pattern over absolute positions.
///
/// A query at position i may attend to key position j iff j <= i and, when a
/// window W is set, i - j < W (exactly W positions [i-W+1, i]).
struct AttentionMask {
    std::vector<std::int64_t> query_pos;
    std::vector<std::int64_t> key_pos;
    std::optional<std::size_t> window;

    bool allowed(std::size_t q, std::size_t k) const {
        const auto dist = query_pos[q] - key_pos[k];
        if (dist < 0) return false;
        return !window || dist < static_cast<std::int64_t>(*window);
    }

    std::vector<bool> flat() const {
        std::vector<bool> out(query_pos.size() * key_pos.size());
        for (std::size_t q = 0; q < query_pos.size(); ++q)
            for (std::size_t k = 0; k < key_pos.size(); ++k) out[q * key_pos.size() + k] = allowed(q, k);
        return out;
    }
};

/// Sets every score outside the causal window to -inf. Scores are indexed
/// [query x key] with the given absolute positions.
template <typename T>
num::Tensor<T> apply_sliding_window_mask(const num::Tensor<T>& scores, const std::vector<std::int64_t>& query_pos,
                                         const std::vector<std::int64_t>& key_pos, std::size_t window) {
    if (window < 1) throw ConfigError("sliding window W must be >= 1");
    if (scores.rank() != 2 || scores.dim(0) != query_pos.size() || scores.dim(1) != key_pos.size()) {
        throw DimensionError("apply_sliding_window_mask: scores " + num::shape_str(scores.shape()) +
                             " do not match position lists");
    }
    AttentionMask mask{query_pos, key_pos, window};
    return num::masked_fill(scores, mask.flat(), -std::numeric_limits<T>::infinity());
}

}  // namespace eduqa::model
