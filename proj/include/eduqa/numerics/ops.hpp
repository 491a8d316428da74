// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "eduqa/numerics/tensor.hpp"

// Whole-tensor operations with reverse-mode rules. All matrix ops take
// rank-2 tensors in row-major layout; vectors (gain, bias) are rank-1.

namespace eduqa::num {

/// Target id that cross_entropy skips.
inline constexpr std::int64_t kIgnoreIndex = -1;

namespace detail {

template <typename T>
void require_matrix(const Tensor<T>& x, const char* op) {
    if (x.rank() != 2) {
        throw DimensionError(std::string(op) + " expects a matrix, got shape " + shape_str(x.shape()));
    }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <typename T>
void accumulate(Node<T>& target, std::size_t i, T value) {
    target.ensure_grad()[i] += value;
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
    if (b.dim(0) != n) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::vector<T> out(m * p, T(0));
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const T aik = A[i * n + k];
            if (aik == T(0)) continue;
            for (std::size_t j = 0; j < p; ++j) out[i * p + j] += aik * B[k * p + j];
        }
    }
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_result("matmul", {m, p}, std::move(out), {an, bn}, [an, bn, m, n, p](detail::Node<T>& self) {
        const auto& G = self.grad;
        if (an->requires_grad) {
            auto& dA = an->ensure_grad();
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t k = 0; k < n; ++k) {
                    T acc = 0;
                    for (std::size_t j = 0; j < p; ++j) acc += G[i * p + j] * bn->data[k * p + j];
                    dA[i * n + k] += acc;
                }
        }
        if (bn->requires_grad) {
            auto& dB = bn->ensure_grad();
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t k = 0; k < n; ++k) {
                    const T aik = an->data[i * n + k];
                    if (aik == T(0)) continue;
                    for (std::size_t j = 0; j < p; ++j) dB[k * p + j] += aik * G[i * p + j];
                }
        }
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    detail::require_matrix(x, "transpose");
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<T> out(m * n);
    auto X = x.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = X[i * n + j];
    auto xn = x.node();
    return Tensor<T>::make_result("transpose", {n, m}, std::move(out), {xn}, [xn, m, n](detail::Node<T>& self) {
        auto& dX = xn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dX[i * n + j] += self.grad[j * m + i];
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_result("add", a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
        for (auto* p : {an.get(), bn.get()}) {
            if (!p->requires_grad) continue;
            auto& d = p->ensure_grad();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_result("mul", a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
        if (an->requires_grad) {
            auto& d = an->ensure_grad();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            auto& d = bn->ensure_grad();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * an->data[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    std::vector<T> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    auto xn = x.node();
    return Tensor<T>::make_result("scale", x.shape(), std::move(out), {xn}, [xn, factor](detail::Node<T>& self) {
        auto& d = xn->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * factor;
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (auto v : x.data()) total += v;
    auto xn = x.node();
    return Tensor<T>::make_result("sum", {1}, {total}, {xn}, [xn](detail::Node<T>& self) {
        auto& d = xn->ensure_grad();
        for (auto& g : d) g += self.grad[0];
    });
}

/// Row-wise softmax with max subtraction. Entries equal to -inf receive zero
/// weight; a row that is entirely -inf, or any NaN, is a numeric error.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    detail::require_matrix(x, "softmax_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    auto X = x.data();
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            const T v = X[i * n + j];
            if (std::isnan(v)) throw NumericError("softmax_rows: NaN in row " + std::to_string(i));
            if (v == std::numeric_limits<T>::infinity()) {
                throw NumericError("softmax_rows: +inf in row " + std::to_string(i));
            }
            mx = std::max(mx, v);
        }
        if (mx == -std::numeric_limits<T>::infinity()) {
            throw NumericError("softmax_rows: row " + std::to_string(i) + " has no finite entry");
        }
        T denom = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const T e = std::exp(X[i * n + j] - mx);
            out[i * n + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
    }
    auto xn = x.node();
    auto y = out;
    return Tensor<T>::make_result("softmax_rows", {m, n}, std::move(out), {xn},
                                  [xn, y = std::move(y), m, n](detail::Node<T>& self) {
                                      auto& d = xn->ensure_grad();
                                      for (std::size_t i = 0; i < m; ++i) {
                                          T dot = 0;
                                          for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
                                          for (std::size_t j = 0; j < n; ++j)
                                              d[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
                                      }
                                  });
}

/// Per-row normalization to zero mean / unit (population) variance followed
/// by an affine map with gain and bias of length cols(x).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
    detail::require_matrix(x, "layer_norm");
    if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (gain.size() != n || bias.size() != n) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                             " do not match row length " + std::to_string(n));
    }
    auto X = x.data();
    auto G = gain.data();
    auto B = bias.data();
    std::vector<T> xhat(m * n), inv_std(m), out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        T mean = 0;
        for (std::size_t j = 0; j < n; ++j) mean += X[i * n + j];
        mean /= static_cast<T>(n);
        T var = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const T c = X[i * n + j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(n);
        inv_std[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (X[i * n + j] - mean) * inv_std[i];
            out[i * n + j] = xhat[i * n + j] * G[j] + B[j];
        }
    }
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    return Tensor<T>::make_result(
        "layer_norm", {m, n}, std::move(out), {xn, gn, bn},
        [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), m, n](detail::Node<T>& self) {
            const auto& dY = self.grad;
            if (gn->requires_grad || bn->requires_grad) {
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        if (gn->requires_grad) detail::accumulate(*gn, j, dY[i * n + j] * xhat[i * n + j]);
                        if (bn->requires_grad) detail::accumulate(*bn, j, dY[i * n + j]);
                    }
            }
            if (xn->requires_grad) {
                auto& dX = xn->ensure_grad();
                std::vector<T> dxhat(n);
                for (std::size_t i = 0; i < m; ++i) {
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                        dxhat[j] = dY[i * n + j] * gn->data[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat[i * n + j];
                    }
                    mean_d /= static_cast<T>(n);
                    mean_dx /= static_cast<T>(n);
                    for (std::size_t j = 0; j < n; ++j)
                        dX[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
                }
            }
        });
}

/// Mean negative log-likelihood over positions whose target is not
/// kIgnoreIndex. With every position ignored the loss is exactly 0.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int64_t>& targets) {
    detail::require_matrix(logits, "cross_entropy");
    const std::size_t t = logits.dim(0), V = logits.dim(1);
    if (targets.size() != t) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(t) + " positions");
    }
    auto L = logits.data();
    std::vector<T> probs(t * V, T(0));
    T total = 0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < t; ++i) {
        const auto target = targets[i];
        if (target == kIgnoreIndex) continue;
        if (target < 0 || static_cast<std::size_t>(target) >= V) {
            throw IndexError("cross_entropy: target " + std::to_string(target) + " at position " + std::to_string(i) +
                             " outside vocabulary of " + std::to_string(V));
        }
        T mx = L[i * V];
        for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, L[i * V + j]);
        T denom = 0;
        for (std::size_t j = 0; j < V; ++j) denom += std::exp(L[i * V + j] - mx);
        const T log_denom = std::log(denom);
        for (std::size_t j = 0; j < V; ++j) probs[i * V + j] = std::exp(L[i * V + j] - mx - log_denom);
        total += -(L[i * V + static_cast<std::size_t>(target)] - mx - log_denom);
        ++counted;
    }
    const T loss = counted ? total / static_cast<T>(counted) : T(0);
    auto ln = logits.node();
    return Tensor<T>::make_result(
        "cross_entropy", {1}, {loss}, {ln},
        [ln, probs = std::move(probs), targets, counted, t, V](detail::Node<T>& self) {
            if (!counted) return;
            auto& d = ln->ensure_grad();
            const T g = self.grad[0] / static_cast<T>(counted);
            for (std::size_t i = 0; i < t; ++i) {
                if (targets[i] == kIgnoreIndex) continue;
                for (std::size_t j = 0; j < V; ++j) {
                    T p = probs[i * V + j];
                    if (j == static_cast<std::size_t>(targets[i])) p -= T(1);
                    d[i * V + j] += g * p;
                }
            }
        });
}

/// Row lookup: out[i] = table[ids[i]].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::int64_t>& ids) {
    detail::require_matrix(table, "embedding");
    const std::size_t V = table.dim(0), d = table.dim(1);
    if (ids.empty()) throw DimensionError("embedding: empty id list");
    std::vector<T> out(ids.size() * d);
    auto W = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
            throw IndexError("embedding: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                             std::to_string(V));
        }
        std::copy_n(W.begin() + static_cast<std::ptrdiff_t>(ids[i] * static_cast<std::int64_t>(d)), d,
                    out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    auto tn = table.node();
    return Tensor<T>::make_result("embedding", {ids.size(), d}, std::move(out), {tn}, [tn, ids, d](detail::Node<T>& self) {
        auto& dW = tn->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) dW[static_cast<std::size_t>(ids[i]) * d + j] += self.grad[i * d + j];
    });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    auto X = x.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] / (T(1) + std::exp(-X[i]));
    auto xn = x.node();
    return Tensor<T>::make_result("silu", x.shape(), std::move(out), {xn}, [xn](detail::Node<T>& self) {
        auto& d = xn->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) {
            const T v = xn->data[i];
            const T s = T(1) / (T(1) + std::exp(-v));
            d[i] += self.grad[i] * s * (T(1) + v * (T(1) - s));
        }
    });
}

/// tanh approximation of GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    constexpr T kA = static_cast<T>(0.044715);
    auto X = x.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = X[i];
        out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
    }
    auto xn = x.node();
    return Tensor<T>::make_result("gelu", x.shape(), std::move(out), {xn}, [xn](detail::Node<T>& self) {
        auto& d = xn->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) {
            const T v = xn->data[i];
            const T u = kC * (v + kA * v * v * v);
            const T th = std::tanh(u);
            const T du = kC * (T(1) + T(3) * kA * v * v);
            d[i] += self.grad[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du);
        }
    });
}

/// Columns [begin, end) of a matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    detail::require_matrix(x, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (begin >= end || end > n) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<T> out(m * w);
    auto X = x.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = X[i * n + begin + j];
    auto xn = x.node();
    return Tensor<T>::make_result("slice_cols", {m, w}, std::move(out), {xn}, [xn, m, n, w, begin](detail::Node<T>& self) {
        auto& d = xn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) d[i * n + begin + j] += self.grad[i * w + j];
    });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t m = parts.front().dim(0);
    std::size_t n = 0;
    for (const auto& p : parts) {
        detail::require_matrix(p, "concat_cols");
        if (p.dim(0) != m) throw DimensionError("concat_cols: row count mismatch " + shape_str(p.shape()));
        n += p.dim(1);
    }
    std::vector<T> out(m * n);
    std::vector<typename Tensor<T>::NodePtr> nodes;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        auto P = p.data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * n + offset + j] = P[i * w + j];
        offset += w;
        nodes.push_back(p.node());
    }
    auto captured = nodes;
    return Tensor<T>::make_result("concat_cols", {m, n}, std::move(out), std::move(nodes),
                                  [captured, m, n](detail::Node<T>& self) {
                                      std::size_t off = 0;
                                      for (const auto& p : captured) {
                                          const std::size_t w = p->shape[1];
                                          if (p->requires_grad) {
                                              auto& d = p->ensure_grad();
                                              for (std::size_t i = 0; i < m; ++i)
                                                  for (std::size_t j = 0; j < w; ++j)
                                                      d[i * w + j] += self.grad[i * n + off + j];
                                          }
                                          off += w;
                                      }
                                  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t n = parts.front().dim(1);
    std::size_t m = 0;
    std::vector<T> out;
    std::vector<typename Tensor<T>::NodePtr> nodes;
    for (const auto& p : parts) {
        detail::require_matrix(p, "concat_rows");
        if (p.dim(1) != n) throw DimensionError("concat_rows: column count mismatch " + shape_str(p.shape()));
        m += p.dim(0);
        out.insert(out.end(), p.data().begin(), p.data().end());
        nodes.push_back(p.node());
    }
    auto captured = nodes;
    return Tensor<T>::make_result("concat_rows", {m, n}, std::move(out), std::move(nodes),
                                  [captured](detail::Node<T>& self) {
                                      std::size_t off = 0;
                                      for (const auto& p : captured) {
                                          if (p->requires_grad) {
                                              auto& d = p->ensure_grad();
                                              for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[off + i];
                                          }
                                          off += p->data.size();
                                      }
                                  });
}

/// Writes `value` wherever allowed[i] is false; gradient flows only through
/// the kept entries.
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const std::vector<bool>& allowed, T value) {
    if (allowed.size() != x.size()) {
        throw DimensionError("masked_fill: mask of " + std::to_string(allowed.size()) + " entries for " +
                             shape_str(x.shape()));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!allowed[i]) out[i] = value;
    auto xn = x.node();
    return Tensor<T>::make_result("masked_fill", x.shape(), std::move(out), {xn}, [xn, allowed](detail::Node<T>& self) {
        auto& d = xn->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i)
            if (allowed[i]) d[i] += self.grad[i];
    });
}

/// Rotary position encoding on a [t x (n_heads*head_dim)] matrix. Row i is
/// rotated by its absolute position positions[i]; each head rotates its
/// consecutive column pairs (2j, 2j+1) by angle pos * base^(-2j/head_dim).
template <typename T>
Tensor<T> rope(const Tensor<T>& x, const std::vector<std::int64_t>& positions, std::size_t n_heads, T base = T(10000)) {
    detail::require_matrix(x, "rope");
    const std::size_t t = x.dim(0), d = x.dim(1);
    if (positions.size() != t) throw DimensionError("rope: one position per row required");
    if (n_heads == 0 || d % n_heads != 0 || (d / n_heads) % 2 != 0) {
        throw DimensionError("rope: head dimension must be even, got width " + std::to_string(d) + " over " +
                             std::to_string(n_heads) + " heads");
    }
    const std::size_t hd = d / n_heads;
    std::vector<T> cos_t(t * hd / 2), sin_t(t * hd / 2);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < hd / 2; ++j) {
            const double freq = std::pow(static_cast<double>(base), -2.0 * static_cast<double>(j) / static_cast<double>(hd));
            const double angle = static_cast<double>(positions[i]) * freq;
            cos_t[i * hd / 2 + j] = static_cast<T>(std::cos(angle));
            sin_t[i * hd / 2 + j] = static_cast<T>(std::sin(angle));
        }
    auto X = x.data();
    std::vector<T> out(t * d);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t h = 0; h < n_heads; ++h)
            for (std::size_t j = 0; j < hd / 2; ++j) {
                const std::size_t c0 = i * d + h * hd + 2 * j;
                const T c = cos_t[i * hd / 2 + j], s = sin_t[i * hd / 2 + j];
                out[c0] = X[c0] * c - X[c0 + 1] * s;
                out[c0 + 1] = X[c0] * s + X[c0 + 1] * c;
            }
    auto xn = x.node();
    return Tensor<T>::make_result(
        "rope", {t, d}, std::move(out), {xn},
        [xn, cos_t = std::move(cos_t), sin_t = std::move(sin_t), t, d, hd, n_heads](detail::Node<T>& self) {
            auto& dX = xn->ensure_grad();
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t h = 0; h < n_heads; ++h)
                    for (std::size_t j = 0; j < hd / 2; ++j) {
                        const std::size_t c0 = i * d + h * hd + 2 * j;
                        const T c = cos_t[i * hd / 2 + j], s = sin_t[i * hd / 2 + j];
                        const T g0 = self.grad[c0], g1 = self.grad[c0 + 1];
                        dX[c0] += g0 * c + g1 * s;
                        dX[c0 + 1] += -g0 * s + g1 * c;
                    }
        });
}

}  // namespace eduqa::num
