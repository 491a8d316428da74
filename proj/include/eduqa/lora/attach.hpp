// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eduqa/lora/adapter.hpp"
#include "eduqa/model/decoder.hpp"

namespace eduqa::lora {

struct LoraOptions {
    std::size_t rank = kDefaultRank;
    std::optional<double> alpha;  // defaults to rank, i.e. scaling 1
    double dropout = kDefaultDropout;
    // nullopt selects every attention projection; an empty list attaches nothing.
    std::optional<std::vector<std::string>> targets;
    std::uint64_t seed = 0;

    double effective_alpha() const { return alpha.value_or(static_cast<double>(rank)); }
};

/// Freezes the base weights and registers one fresh adapter per target.
/// Afterwards the trainable parameter count is the sum of r (d_i + k_i).
template <typename T>
void attach(model::DecoderModel<T>& m, const LoraOptions& opts) {
    const auto targets = opts.targets ? *opts.targets : m.attention_weight_names();
    for (const auto& name : targets) {
        if (!m.has_parameter(name)) throw ConfigError("LoRA target '" + name + "' is not a model weight");
        if (m.param(name).rank() != 2) throw ConfigError("LoRA target '" + name + "' is not a 2-D weight");
    }
    std::mt19937_64 rng(opts.seed);
    m.set_base_trainable(false);
    for (const auto& name : targets) {
        const auto& w = m.param(name);
        m.mutable_adapters()[name] =
            make_adapter<T>(name, w.dim(0), w.dim(1), opts.rank, opts.effective_alpha(), opts.dropout, rng);
    }
}

/// A plain model whose weights absorb every adapter; it has no adapters and
/// costs exactly as much as the base model at inference time.
template <typename T>
model::DecoderModel<T> merge_into_base(const model::DecoderModel<T>& m) {
    model::DecoderModel<T> out(m.config());
    for (const auto& p : m.parameters()) {
        auto it = m.adapters().find(p.name);
        if (it == m.adapters().end()) {
            out.set_param(p.name, p.tensor.data());
        } else {
            out.set_param(p.name, merge(it->second, p.tensor).data());
        }
    }
    return out;
}

}  // namespace eduqa::lora
