// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "eduqa/numerics/ops.hpp"

namespace eduqa::lora {

inline constexpr std::size_t kDefaultRank = 128;
inline constexpr double kDefaultDropout = 0.1;

/// Low-rank pair running in parallel to a frozen weight W0 [d x k]:
///
///     h_out = W0 h_in + (alpha / r) * W_up (W_down h_in)
///
/// W_up [d x r] starts at exactly zero and W_down [r x k] is Gaussian with
/// std 1/sqrt(r), so a fresh adapter contributes nothing.
template <typename T>
struct LoraAdapter {
    std::string target;
    num::Tensor<T> up;    // [d x r]
    num::Tensor<T> down;  // [r x k]
    std::size_t rank = 0;
    double alpha = 0.0;
    double dropout = 0.0;

    std::size_t out_dim() const { return up.dim(0); }
    std::size_t in_dim() const { return down.dim(1); }
    T scaling() const { return static_cast<T>(alpha / static_cast<double>(rank)); }
    std::size_t param_count() const { return up.size() + down.size(); }
};

inline void validate_adapter_shape(std::size_t d, std::size_t k, std::size_t r, double alpha, double dropout) {
    if (r == 0) throw ConfigError("LoRA rank must be positive");
    if (r > std::min(d, k)) {
        throw ConfigError("LoRA rank " + std::to_string(r) + " exceeds min(d, k) = " + std::to_string(std::min(d, k)));
    }
    if (!(alpha > 0.0)) throw ConfigError("LoRA alpha must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("LoRA dropout must lie in [0, 1)");
}

template <typename T, typename Rng>
LoraAdapter<T> make_adapter(std::string target, std::size_t d, std::size_t k, std::size_t r, double alpha,
                            double dropout, Rng& rng) {
    validate_adapter_shape(d, k, r, alpha, dropout);
    LoraAdapter<T> a;
    a.target = std::move(target);
    a.up = num::Tensor<T>::zeros({d, r}, true);
    a.down = num::Tensor<T>::randn({r, k}, static_cast<T>(1.0 / std::sqrt(static_cast<double>(r))), rng, true);
    a.rank = r;
    a.alpha = alpha;
    a.dropout = dropout;
    return a;
}

namespace detail {

template <typename T>
void check_base(const LoraAdapter<T>& a, const num::Tensor<T>& w0) {
    if (w0.rank() != 2 || w0.dim(0) != a.out_dim() || w0.dim(1) != a.in_dim()) {
        throw DimensionError("LoRA adapter for '" + a.target + "' composes to [" + std::to_string(a.out_dim()) + "x" +
                             std::to_string(a.in_dim()) + "] but base weight is " + num::shape_str(w0.shape()));
    }
    if (a.up.dim(1) != a.rank || a.down.dim(0) != a.rank) {
        throw DimensionError("LoRA adapter for '" + a.target + "' has factors " + num::shape_str(a.up.shape()) + " and " +
                             num::shape_str(a.down.shape()) + " inconsistent with rank " + std::to_string(a.rank));
    }
}

}  // namespace detail

/// Single-vector application, computed as two rank-r products
/// without forming W_up W_down.
template <typename T>
std::vector<T> apply(const LoraAdapter<T>& a, const num::Tensor<T>& w0, std::span<const T> h_in) {
    detail::check_base(a, w0);
    const std::size_t d = a.out_dim(), k = a.in_dim(), r = a.rank;
    if (h_in.size() != k) {
        throw DimensionError("LoRA apply: input length " + std::to_string(h_in.size()) + " but base weight expects " +
                             std::to_string(k));
    }
    auto W = w0.data();
    auto U = a.up.data();
    auto D = a.down.data();
    std::vector<T> low(r, T(0));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < k; ++j) low[i] += D[i * k + j] * h_in[j];
    const T s = a.scaling();
    std::vector<T> out(d, T(0));
    for (std::size_t i = 0; i < d; ++i) {
        T base = 0, delta = 0;
        for (std::size_t j = 0; j < k; ++j) base += W[i * k + j] * h_in[j];
        for (std::size_t j = 0; j < r; ++j) delta += U[i * r + j] * low[j];
        out[i] = base + s * delta;
    }
    return out;
}

/// Batched graph form used inside the model: x is [t x k], result [t x d].
/// `branch_input` is x, or a dropout-masked copy of x during training.
template <typename T>
num::Tensor<T> apply_rows(const LoraAdapter<T>& a, const num::Tensor<T>& w0, const num::Tensor<T>& x,
                          const num::Tensor<T>& branch_input) {
    detail::check_base(a, w0);
    auto base = num::matmul(x, num::transpose(w0));
    auto low = num::matmul(branch_input, num::transpose(a.down));
    auto delta = num::matmul(low, num::transpose(a.up));
    return num::add(base, num::scale(delta, a.scaling()));
}

/// W0 + (alpha/r) W_up W_down. Merging the same adapter twice adds the
/// update twice.
template <typename T>
num::Tensor<T> merge(const LoraAdapter<T>& a, const num::Tensor<T>& w0) {
    detail::check_base(a, w0);
    num::NoGradGuard guard;
    const std::size_t d = a.out_dim(), k = a.in_dim(), r = a.rank;
    auto U = a.up.data();
    auto D = a.down.data();
    const T s = a.scaling();
    std::vector<T> out(w0.data().begin(), w0.data().end());
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            const T u = U[i * r + j];
            if (u == T(0)) continue;
            for (std::size_t c = 0; c < k; ++c) out[i * k + c] += s * u * D[j * k + c];
        }
    return num::Tensor<T>(w0.shape(), std::move(out));
}

/// How many times fewer parameters the adapter pair trains than W0:
/// dk / (r (d + k)). Values below 1 mean the adapter is larger than the base.
inline double reduction_factor(std::size_t d, std::size_t k, std::size_t r) {
    if (d == 0 || k == 0 || r == 0) throw ConfigError("reduction_factor needs positive d, k, r");
    return static_cast<double>(d) * static_cast<double>(k) /
           (static_cast<double>(r) * static_cast<double>(d + k));
}

inline bool adapter_exceeds_base(std::size_t d, std::size_t k, std::size_t r) {
    return reduction_factor(d, k, r) < 1.0;
}

}  // namespace eduqa::lora
