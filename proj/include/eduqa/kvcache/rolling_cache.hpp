// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eduqa/errors.hpp"

namespace eduqa::kv {

template <typename T>
struct CacheEntry {
    std::int64_t position;
    std::span<const T> key;
    std::span<const T> value;
};

/// Fixed-capacity key/value store, one ring buffer per layer.
///
/// The entry for timestep i lives in slot i mod W. Writers append the rows of
/// every layer for the current timestep and then call advance(); the
/// timestep counter is shared by all layers.
template <typename T>
class RollingKVCache {
  public:
    RollingKVCache(std::size_t window, std::size_t n_layers, std::size_t kv_dim)
        : window_(window), n_layers_(n_layers), kv_dim_(kv_dim) {
        if (window == 0) throw ConfigError("rolling cache window must be >= 1");
        if (n_layers == 0 || kv_dim == 0) throw ConfigError("rolling cache needs at least one layer and a positive width");
        keys_.assign(n_layers, std::vector<T>(window * kv_dim, T(0)));
        values_.assign(n_layers, std::vector<T>(window * kv_dim, T(0)));
        tags_.assign(n_layers, std::vector<std::int64_t>(window, -1));
    }

    std::size_t window() const { return window_; }
    std::size_t n_layers() const { return n_layers_; }
    std::size_t kv_dim() const { return kv_dim_; }
    std::int64_t next_pos() const { return next_pos_; }
    std::size_t capacity() const { return window_; }

    std::size_t slot_for(std::int64_t timestep) const {
        return static_cast<std::size_t>(timestep % static_cast<std::int64_t>(window_));
    }

    std::size_t valid_entries() const {
        return static_cast<std::size_t>(std::min<std::int64_t>(next_pos_, static_cast<std::int64_t>(window_)));
    }

    /// Writes layer's key/value for the current timestep at slot next_pos mod
    /// W, overwriting the entry from timestep next_pos - W.
    void append(std::size_t layer, std::span<const T> k, std::span<const T> v) {
        if (layer >= n_layers_) {
            throw IndexError("rolling cache: layer " + std::to_string(layer) + " out of range (" +
                             std::to_string(n_layers_) + " layers)");
        }
        if (k.size() != kv_dim_ || v.size() != kv_dim_) {
            throw DimensionError("rolling cache: expected key/value width " + std::to_string(kv_dim_));
        }
        const std::size_t slot = slot_for(next_pos_);
        std::copy(k.begin(), k.end(), keys_[layer].begin() + static_cast<std::ptrdiff_t>(slot * kv_dim_));
        std::copy(v.begin(), v.end(), values_[layer].begin() + static_cast<std::ptrdiff_t>(slot * kv_dim_));
        tags_[layer][slot] = next_pos_;
    }

    void advance() { ++next_pos_; }

    /// Valid entries of one layer, oldest first.
    std::vector<CacheEntry<T>> gather(std::size_t layer) const {
        if (layer >= n_layers_) throw IndexError("rolling cache: layer " + std::to_string(layer) + " out of range");
        std::vector<CacheEntry<T>> out;
        const auto first = next_pos_ - static_cast<std::int64_t>(valid_entries());
        for (auto p = first; p < next_pos_; ++p) {
            const std::size_t slot = slot_for(p);
            if (tags_[layer][slot] != p) continue;  // layer not written for this timestep
            out.push_back({p, std::span<const T>(keys_[layer]).subspan(slot * kv_dim_, kv_dim_),
                           std::span<const T>(values_[layer]).subspan(slot * kv_dim_, kv_dim_)});
        }
        return out;
    }

    /// Absolute position tags by physical slot (-1 for never written).
    const std::vector<std::int64_t>& slot_tags(std::size_t layer) const { return tags_.at(layer); }

    void reset() {
        next_pos_ = 0;
        for (auto& t : tags_) std::fill(t.begin(), t.end(), -1);
    }

  private:
    std::size_t window_;
    std::size_t n_layers_;
    std::size_t kv_dim_;
    std::int64_t next_pos_ = 0;
    std::vector<std::vector<T>> keys_;
    std::vector<std::vector<T>> values_;
    std::vector<std::vector<std::int64_t>> tags_;
};

}  // namespace eduqa::kv
