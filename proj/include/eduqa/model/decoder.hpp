// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "eduqa/kvcache/rolling_cache.hpp"
#include "eduqa/lora/adapter.hpp"
#include "eduqa/model/attention.hpp"
#include "eduqa/model/config.hpp"
#include "eduqa/numerics/numerics.hpp"

namespace eduqa::model {

template <typename T>
struct NamedTensor {
    std::string name;
    num::Tensor<T> tensor;
};

/// Intermediate values captured by forward() for inspection in tests and
/// diagnostics. Indexed by layer, then head.
template <typename T>
struct ForwardTrace {
    std::vector<std::int64_t> query_positions;
    num::Tensor<T> embedding_output;                             // after the optional embedding layernorm
    std::vector<std::vector<std::int64_t>> key_positions;        // [layer]
    std::vector<std::vector<num::Tensor<T>>> attention_weights;  // [layer][head] -> [q x k]
    std::vector<num::Tensor<T>> attention_outputs;               // [layer] -> [q x d]
    std::vector<num::Tensor<T>> layer_outputs;                   // [layer] -> residual stream after the block
};

/// Pre-norm decoder-only transformer.
///
/// Linear weights are stored [out x in] and applied as x W^T, so a weight's
/// shape is the (d x k) of the LoRA update that may shadow it. Parameters:
///
///     tok_emb                   [vocab x d]
///     emb_ln.{gain,bias}        [d]            (embedding_layernorm only)
///     layers.L.ln1.{gain,bias}  [d]
///     layers.L.attn.w{q,k,v,o}  [d x d]
///     layers.L.ln2.{gain,bias}  [d]
///     layers.L.ff.w_in          [f*d x d]
///     layers.L.ff.w_out         [d x f*d]
///     head.ln.{gain,bias}       [d]
///     head.proj                 [vocab x d]
template <typename T>
class DecoderModel {
  public:
    explicit DecoderModel(const ModelConfig& config, std::uint64_t seed = 0) : config_(config) {
        config_.validate();
        std::mt19937_64 rng(seed);
        const T proj_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config_.d_model)));
        build([&](const Shape& shape, Init init) {
            switch (init) {
                case Init::ones: return num::Tensor<T>::full(shape, T(1), true);
                case Init::zeros: return num::Tensor<T>::zeros(shape, true);
                case Init::gaussian: break;
            }
            return num::Tensor<T>::randn(shape, proj_std, rng, true);
        });
        dropout_rng_.seed(seed ^ 0x9e3779b97f4a7c15ULL);
    }

    /// Every weight, gain and bias set to zero.
    static DecoderModel zeros(const ModelConfig& config) {
        DecoderModel m(config, 0);
        for (auto& p : m.params_)
            for (auto& v : p.tensor.mutable_data()) v = T(0);
        return m;
    }

    const ModelConfig& config() const { return config_; }

    const std::vector<NamedTensor<T>>& parameters() const { return params_; }

    bool has_parameter(const std::string& name) const { return index_.count(name) != 0; }

    const num::Tensor<T>& param(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return params_[it->second].tensor;
    }

    /// Replaces a parameter's values in place (shape must match).
    void set_param(const std::string& name, std::span<const T> values) {
        auto t = param(name);
        if (values.size() != t.size()) {
            throw DimensionError("set_param '" + name + "': expected " + std::to_string(t.size()) + " values, got " +
                                 std::to_string(values.size()));
        }
        std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }

    /// Names of the 2-D weights a LoRA adapter may shadow.
    std::vector<std::string> linear_weight_names() const {
        std::vector<std::string> out;
        for (std::size_t l = 0; l < config_.n_layers; ++l) {
            for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "ff.w_in", "ff.w_out"}) {
                out.push_back(layer_name(l, w));
            }
        }
        out.push_back("head.proj");
        return out;
    }

    std::vector<std::string> attention_weight_names() const {
        std::vector<std::string> out;
        for (std::size_t l = 0; l < config_.n_layers; ++l)
            for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) out.push_back(layer_name(l, w));
        return out;
    }

    // --- LoRA bookkeeping -------------------------------------------------

    const std::map<std::string, lora::LoraAdapter<T>>& adapters() const { return adapters_; }
    std::map<std::string, lora::LoraAdapter<T>>& mutable_adapters() { return adapters_; }

    void set_base_trainable(bool trainable) {
        for (auto& p : params_) p.tensor.set_requires_grad(trainable);
    }

    /// Tensors an optimizer should update: trainable base parameters followed
    /// by adapter factors.
    std::vector<NamedTensor<T>> trainable_tensors() const {
        std::vector<NamedTensor<T>> out;
        for (const auto& p : params_)
            if (p.tensor.requires_grad()) out.push_back(p);
        for (const auto& [name, a] : adapters_) {
            if (a.up.requires_grad()) out.push_back({name + ".lora_up", a.up});
            if (a.down.requires_grad()) out.push_back({name + ".lora_down", a.down});
        }
        return out;
    }

    std::size_t param_count(bool trainable_only = false) const {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (!trainable_only || p.tensor.requires_grad()) n += p.tensor.size();
        for (const auto& [_, a] : adapters_) {
            if (!trainable_only || a.up.requires_grad()) n += a.up.size();
            if (!trainable_only || a.down.requires_grad()) n += a.down.size();
        }
        return n;
    }

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
        for (auto& [_, a] : adapters_) {
            a.up.zero_grad();
            a.down.zero_grad();
        }
    }

    // --- forward ----------------------------------------------------------

    /// Logits [t x vocab] for each input token.
    ///
    /// Without a cache the tokens occupy positions 0..t-1 and attend to each
    /// other under the causal (and, for sliding_window, windowed) mask. With a
    /// cache they continue from cache.next_pos(), attend over the cached
    /// entries plus themselves, and are appended to the cache afterwards.
    num::Tensor<T> forward(const std::vector<std::int64_t>& tokens, kv::RollingKVCache<T>* cache = nullptr,
                           ForwardTrace<T>* trace = nullptr) const {
        if (tokens.empty()) throw ContractError("forward: empty token sequence");
        for (auto id : tokens) {
            if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
                throw IndexError("forward: token id " + std::to_string(id) + " outside vocabulary of " +
                                 std::to_string(config_.vocab_size));
            }
        }
        if (cache) {
            check_cache(*cache);
        } else if (tokens.size() > config_.max_seq_len) {
            throw LengthError("forward: sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                              std::to_string(config_.max_seq_len));
        }
        const std::int64_t start = cache ? cache->next_pos() : 0;
        const std::size_t t = tokens.size(), d = config_.d_model;
        std::vector<std::int64_t> qpos(t);
        for (std::size_t i = 0; i < t; ++i) qpos[i] = start + static_cast<std::int64_t>(i);
        if (trace) {
            *trace = ForwardTrace<T>{};
            trace->query_positions = qpos;
        }

        auto x = num::embedding(param("tok_emb"), tokens);
        if (config_.embedding_layernorm) x = norm(x, "emb_ln");
        if (trace) trace->embedding_output = x;

        std::vector<num::Tensor<T>> new_keys, new_values;
        for (std::size_t l = 0; l < config_.n_layers; ++l) {
            auto h = norm(x, layer_name(l, "ln1"));
            auto q = linear(h, layer_name(l, "attn.wq"));
            auto k = linear(h, layer_name(l, "attn.wk"));
            auto v = linear(h, layer_name(l, "attn.wv"));
            if (config_.attention == AttentionVariant::sliding_window) {
                q = num::rope(q, qpos, config_.n_heads, static_cast<T>(config_.rope_base));
                k = num::rope(k, qpos, config_.n_heads, static_cast<T>(config_.rope_base));
            }
            std::vector<std::int64_t> kpos;
            auto keys = k;
            auto values = v;
            if (cache) {
                auto entries = cache->gather(l);
                if (!entries.empty()) {
                    std::vector<T> ck, cv;
                    for (const auto& e : entries) {
                        kpos.push_back(e.position);
                        ck.insert(ck.end(), e.key.begin(), e.key.end());
                        cv.insert(cv.end(), e.value.begin(), e.value.end());
                    }
                    keys = num::concat_rows<T>({num::Tensor<T>({entries.size(), d}, std::move(ck)), k});
                    values = num::concat_rows<T>({num::Tensor<T>({entries.size(), d}, std::move(cv)), v});
                }
                new_keys.push_back(k);
                new_values.push_back(v);
            }
            kpos.insert(kpos.end(), qpos.begin(), qpos.end());

            auto attn = attention(q, keys, values, qpos, kpos, trace);
            auto attn_out = linear(attn, layer_name(l, "attn.wo"));
            x = num::add(x, attn_out);

            auto h2 = norm(x, layer_name(l, "ln2"));
            auto f = linear(h2, layer_name(l, "ff.w_in"));
            f = config_.attention == AttentionVariant::alibi ? num::gelu(f) : num::silu(f);
            x = num::add(x, linear(f, layer_name(l, "ff.w_out")));

            if (trace) {
                trace->key_positions.push_back(kpos);
                trace->attention_outputs.push_back(attn_out);
                trace->layer_outputs.push_back(x);
            }
        }

        auto logits = linear(norm(x, "head.ln"), "head.proj");

        if (cache) {
            for (std::size_t i = 0; i < t; ++i) {
                for (std::size_t l = 0; l < config_.n_layers; ++l) {
                    cache->append(l, new_keys[l].data().subspan(i * d, d), new_values[l].data().subspan(i * d, d));
                }
                cache->advance();
            }
        }
        return logits;
    }

    kv::RollingKVCache<T> make_cache() const {
        return kv::RollingKVCache<T>(config_.attention_span(), std::max<std::size_t>(config_.n_layers, 1), config_.d_model);
    }

    static std::string layer_name(std::size_t layer, const std::string& leaf) {
        return "layers." + std::to_string(layer) + "." + leaf;
    }

  private:
    using Shape = num::Shape;
    enum class Init { gaussian, ones, zeros };

    template <typename Factory>
    void build(Factory&& make) {
        const std::size_t d = config_.d_model, V = config_.vocab_size, f = config_.feedforward_mult * d;
        auto add = [&](std::string name, Shape shape, Init init) {
            index_[name] = params_.size();
            params_.push_back({std::move(name), make(shape, init)});
        };
        auto add_norm = [&](const std::string& prefix) {
            add(prefix + ".gain", {d}, Init::ones);
            add(prefix + ".bias", {d}, Init::zeros);
        };
        add("tok_emb", {V, d}, Init::gaussian);
        if (config_.embedding_layernorm) add_norm("emb_ln");
        for (std::size_t l = 0; l < config_.n_layers; ++l) {
            add_norm(layer_name(l, "ln1"));
            for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) add(layer_name(l, w), {d, d}, Init::gaussian);
            add_norm(layer_name(l, "ln2"));
            add(layer_name(l, "ff.w_in"), {f, d}, Init::gaussian);
            add(layer_name(l, "ff.w_out"), {d, f}, Init::gaussian);
        }
        add_norm("head.ln");
        add("head.proj", {V, d}, Init::gaussian);
    }

    void check_cache(const kv::RollingKVCache<T>& cache) const {
        if (cache.window() != config_.attention_span()) {
            throw ConfigError("cache window " + std::to_string(cache.window()) + " does not match model window " +
                              std::to_string(config_.attention_span()));
        }
        if (cache.n_layers() != std::max<std::size_t>(config_.n_layers, 1) || cache.kv_dim() != config_.d_model) {
            throw ConfigError("cache geometry does not match the model (layers/width)");
        }
    }

    num::Tensor<T> norm(const num::Tensor<T>& x, const std::string& prefix) const {
        return num::layer_norm(x, param(prefix + ".gain"), param(prefix + ".bias"), static_cast<T>(config_.norm_eps));
    }

    num::Tensor<T> linear(const num::Tensor<T>& x, const std::string& weight) const {
        const auto& w = param(weight);
        auto it = adapters_.find(weight);
        if (it == adapters_.end()) return num::matmul(x, num::transpose(w));
        const auto& a = it->second;
        if (!training_ || a.dropout == 0.0) return lora::apply_rows(a, w, x, x);
        std::bernoulli_distribution keep(1.0 - a.dropout);
        const T kept = static_cast<T>(1.0 / (1.0 - a.dropout));
        std::vector<T> mask(x.size());
        for (auto& m : mask) m = keep(dropout_rng_) ? kept : T(0);
        return lora::apply_rows(a, w, x, num::mul(x, num::Tensor<T>(x.shape(), std::move(mask))));
    }

    num::Tensor<T> attention(const num::Tensor<T>& q, const num::Tensor<T>& k, const num::Tensor<T>& v,
                             const std::vector<std::int64_t>& qpos, const std::vector<std::int64_t>& kpos,
                             ForwardTrace<T>* trace) const {
        const std::size_t H = config_.n_heads, hd = config_.head_dim();
        const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
        const std::size_t span = config_.attention_span();
        num::Tensor<T> bias;
        if (config_.attention == AttentionVariant::alibi) bias = alibi_bias<T>(H, qpos, kpos);
        std::vector<num::Tensor<T>> heads;
        std::vector<num::Tensor<T>> weights;
        for (std::size_t h = 0; h < H; ++h) {
            auto qh = num::slice_cols(q, h * hd, (h + 1) * hd);
            auto kh = num::slice_cols(k, h * hd, (h + 1) * hd);
            auto vh = num::slice_cols(v, h * hd, (h + 1) * hd);
            auto scores = num::scale(num::matmul(qh, num::transpose(kh)), inv_sqrt);
            if (bias.defined()) {
                const std::size_t n = qpos.size() * kpos.size();
                std::vector<T> slice(bias.data().begin() + static_cast<std::ptrdiff_t>(h * n),
                                     bias.data().begin() + static_cast<std::ptrdiff_t>((h + 1) * n));
                scores = num::add(scores, num::Tensor<T>({qpos.size(), kpos.size()}, std::move(slice)));
            }
            scores = apply_sliding_window_mask(scores, qpos, kpos, span);
            auto probs = num::softmax_rows(scores);
            if (trace) weights.push_back(probs);
            heads.push_back(num::matmul(probs, vh));
        }
        if (trace) trace->attention_weights.push_back(std::move(weights));
        return H == 1 ? heads.front() : num::concat_cols(heads);
    }

    ModelConfig config_;
    std::vector<NamedTensor<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
    std::map<std::string, lora::LoraAdapter<T>> adapters_;
    bool training_ = false;
    mutable std::mt19937_64 dropout_rng_;
};

/// Parameter count implied by a config alone (base weights, no adapters).
inline std::size_t param_count_for(const ModelConfig& c) {
    const std::size_t d = c.d_model, V = c.vocab_size, f = c.feedforward_mult * d;
    std::size_t n = V * d;                                  // token embedding
    if (c.embedding_layernorm) n += 2 * d;                  // emb_ln
    n += c.n_layers * (2 * d + 4 * d * d + 2 * d + 2 * f * d);
    n += 2 * d + V * d;                                     // head.ln + head.proj
    return n;
}

}  // namespace eduqa::model
