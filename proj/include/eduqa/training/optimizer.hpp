// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/errors.hpp"
#include "eduqa/model/decoder.hpp"

namespace eduqa::train {

enum class TrainMode { full, lora };

inline std::string to_string(TrainMode m) { return m == TrainMode::lora ? "lora" : "full"; }

inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "full") return TrainMode::full;
    if (s == "lora") return TrainMode::lora;
    throw ConfigError("unknown training mode '" + s + "' (expected full or lora)");
}

inline constexpr double kDefaultLoraLearningRate = 2e-4;
inline constexpr double kDefaultFullLearningRate = 2e-5;

struct OptimizerConfig {
    double learning_rate = kDefaultLoraLearningRate;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double warmup_ratio = 0.05;
    double weight_decay = 0.01;
    std::size_t batch_size = 8;
    std::size_t max_length = 1024;
    std::size_t num_epochs = 10;
    std::optional<double> grad_clip;

    static OptimizerConfig for_mode(TrainMode mode) {
        OptimizerConfig c;
        if (mode == TrainMode::full) {
            c.learning_rate = kDefaultFullLearningRate;
            c.batch_size = 4;
        }
        return c;
    }

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in (0, 1)");
        if (!(eps > 0.0)) throw ConfigError("eps must be positive");
        if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("warmup_ratio must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (max_length < 2) throw ConfigError("max_length must be >= 2");
        if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
    }
};

/// Linear warmup from 0 to the peak over ceil(warmup_ratio * total) steps,
/// then linear decay to 0 at `total`.
inline double lr_at(std::size_t step, std::size_t total, const OptimizerConfig& c) {
    if (total == 0) throw ConfigError("lr_at: total_steps must be positive");
    if (step > total) throw ConfigError("lr_at: step " + std::to_string(step) + " beyond total " + std::to_string(total));
    const auto warm = static_cast<std::size_t>(std::ceil(c.warmup_ratio * static_cast<double>(total)));
    if (step <= warm && warm > 0) return c.learning_rate * static_cast<double>(step) / static_cast<double>(warm);
    return c.learning_rate * static_cast<double>(total - step) / static_cast<double>(total - warm);
}

template <typename T>
struct AdamMoments {
    std::vector<T> m;
    std::vector<T> v;
};

/// First and second moments keyed by parameter name.
template <typename T>
using AdamWState = std::map<std::string, AdamMoments<T>>;

/// One decoupled-weight-decay Adam update with bias correction:
///
///     w -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)
///
/// `step` counts from 1. Tensors that do not require grad are left alone.
/// Every gradient is checked before any weight moves.
template <typename T>
void adamw_step(const std::vector<model::NamedTensor<T>>& params, AdamWState<T>& state, const OptimizerConfig& c,
                std::size_t step, double lr) {
    if (step < 1) throw ConfigError("adamw_step: step counts from 1");
    double sq_norm = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        for (T g : p.tensor.grad()) {
            if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in '" + p.name + "'");
            sq_norm += static_cast<double>(g) * static_cast<double>(g);
        }
    }
    double clip = 1.0;
    if (c.grad_clip && std::sqrt(sq_norm) > *c.grad_clip) clip = *c.grad_clip / std::sqrt(sq_norm);

    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        auto t = p.tensor;
        auto w = t.mutable_data();
        auto g = t.grad();
        auto& st = state[p.name];
        if (st.m.empty()) {
            st.m.assign(w.size(), T(0));
            st.v.assign(w.size(), T(0));
        }
        if (st.m.size() != w.size()) throw DimensionError("optimizer state for '" + p.name + "' has the wrong size");
        const bool has_grad = !g.empty();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = has_grad ? static_cast<double>(g[i]) * clip : 0.0;
            const double m = c.beta1 * static_cast<double>(st.m[i]) + (1.0 - c.beta1) * gi;
            const double v = c.beta2 * static_cast<double>(st.v[i]) + (1.0 - c.beta2) * gi * gi;
            st.m[i] = static_cast<T>(m);
            st.v[i] = static_cast<T>(v);
            const double update = (m / bc1) / (std::sqrt(v / bc2) + c.eps) + c.weight_decay * static_cast<double>(w[i]);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * update);
        }
    }
}

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
                       {"beta2", c.beta2},                 {"eps", c.eps},
                       {"warmup_ratio", c.warmup_ratio},   {"weight_decay", c.weight_decay},
                       {"batch_size", c.batch_size},       {"max_length", c.max_length},
                       {"num_epochs", c.num_epochs}};
    if (c.grad_clip) j["grad_clip"] = *c.grad_clip;
}

}  // namespace eduqa::train
