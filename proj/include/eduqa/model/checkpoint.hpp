// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/io.hpp"
#include "eduqa/model/decoder.hpp"

// Named-tensor container. Byte layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "EDUQALM1"
//   offset 8   u64       manifest length N
//   offset 16  N bytes   manifest, compact UTF-8 JSON with sorted keys:
//                          {"kind": "model"|"adapter", "meta": {...},
//                           "tensors": [{"name", "dtype": "f32"|"f64", "shape": [...]}, ...]}
//   then       payloads of each listed tensor, in manifest order, row-major,
//              no padding; size = prod(shape) * sizeof(dtype)
//
// See docs/checkpoint_format.md.

namespace eduqa::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kMagic[8] = {'E', 'D', 'U', 'Q', 'A', 'L', 'M', '1'};

struct TensorRecord {
    std::string name;
    std::string dtype;  // "f32" or "f64"
    num::Shape shape;
    std::string payload;
};

struct Checkpoint {
    std::string kind = "model";
    nlohmann::json meta = nlohmann::json::object();
    std::vector<TensorRecord> tensors;

    const TensorRecord& find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw ParseError("checkpoint has no tensor '" + name + "'");
    }
    bool contains(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return true;
        return false;
    }
};

template <typename T>
constexpr const char* dtype_tag() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? "f32" : "f64";
}

inline std::size_t dtype_size(const std::string& tag) {
    if (tag == "f32") return 4;
    if (tag == "f64") return 8;
    throw ParseError("unknown dtype tag '" + tag + "'");
}

template <typename T>
TensorRecord to_record(const std::string& name, const num::Tensor<T>& t) {
    TensorRecord r{name, dtype_tag<T>(), t.shape(), {}};
    r.payload.resize(t.size() * sizeof(T));
    std::memcpy(r.payload.data(), t.data().data(), r.payload.size());
    return r;
}

template <typename T>
std::vector<T> record_values(const TensorRecord& r) {
    const std::size_t n = num::numel(r.shape);
    std::vector<T> out(n);
    if (r.dtype == "f32") {
        std::vector<float> raw(n);
        std::memcpy(raw.data(), r.payload.data(), n * 4);
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(raw[i]);
    } else {
        std::vector<double> raw(n);
        std::memcpy(raw.data(), r.payload.data(), n * 8);
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(raw[i]);
    }
    return out;
}

inline std::string encode(const Checkpoint& c) {
    nlohmann::json manifest;
    manifest["kind"] = c.kind;
    manifest["meta"] = c.meta;
    manifest["tensors"] = nlohmann::json::array();
    for (const auto& t : c.tensors) {
        if (t.payload.size() != num::numel(t.shape) * dtype_size(t.dtype)) {
            throw ContractError("checkpoint tensor '" + t.name + "' payload does not match its shape");
        }
        manifest["tensors"].push_back({{"name", t.name}, {"dtype", t.dtype}, {"shape", t.shape}});
    }
    const std::string text = manifest.dump();
    std::string out(kMagic, 8);
    const std::uint64_t len = text.size();
    out.append(reinterpret_cast<const char*>(&len), 8);
    out += text;
    for (const auto& t : c.tensors) out += t.payload;
    return out;
}

inline Checkpoint decode(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw ParseError("not a checkpoint (bad magic)");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (16 + len > bytes.size()) throw ParseError("checkpoint manifest truncated");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }
    Checkpoint c;
    c.kind = manifest.at("kind").get<std::string>();
    c.meta = manifest.value("meta", nlohmann::json::object());
    std::size_t offset = 16 + len;
    for (const auto& entry : manifest.at("tensors")) {
        TensorRecord r;
        r.name = entry.at("name").get<std::string>();
        r.dtype = entry.at("dtype").get<std::string>();
        r.shape = entry.at("shape").get<num::Shape>();
        const std::size_t n = num::numel(r.shape) * dtype_size(r.dtype);
        if (offset + n > bytes.size()) throw ParseError("checkpoint payload for '" + r.name + "' truncated");
        r.payload = bytes.substr(offset, n);
        offset += n;
        c.tensors.push_back(std::move(r));
    }
    if (offset != bytes.size()) throw ParseError("checkpoint has trailing bytes after the last payload");
    return c;
}

inline void save(const Checkpoint& c, const std::filesystem::path& path) { io::atomic_write(path, encode(c)); }

inline Checkpoint load(const std::filesystem::path& path) { return decode(io::read_file(path)); }

// --- model / adapter helpers ------------------------------------------------

template <typename T>
Checkpoint model_checkpoint(const model::DecoderModel<T>& m, nlohmann::json meta = nlohmann::json::object()) {
    Checkpoint c;
    c.kind = "model";
    c.meta = std::move(meta);
    c.meta["config"] = m.config();
    for (const auto& p : m.parameters()) c.tensors.push_back(to_record(p.name, p.tensor));
    return c;
}

template <typename T>
model::DecoderModel<T> model_from_checkpoint(const Checkpoint& c) {
    if (c.kind != "model") throw ParseError("expected a model checkpoint, found kind '" + c.kind + "'");
    if (!c.meta.contains("config")) throw ParseError("model checkpoint has no config");
    model::DecoderModel<T> m(c.meta.at("config").get<model::ModelConfig>());
    for (const auto& p : m.parameters()) {
        const auto& r = c.find(p.name);
        if (r.shape != p.tensor.shape()) {
            throw DimensionError("checkpoint tensor '" + p.name + "' has shape " + num::shape_str(r.shape) +
                                 ", model expects " + num::shape_str(p.tensor.shape()));
        }
        auto values = record_values<T>(r);
        m.set_param(p.name, values);
    }
    return m;
}

template <typename T>
Checkpoint adapter_checkpoint(const model::DecoderModel<T>& m, nlohmann::json meta = nlohmann::json::object()) {
    Checkpoint c;
    c.kind = "adapter";
    c.meta = std::move(meta);
    c.meta["base_config"] = m.config();
    c.meta["adapters"] = nlohmann::json::array();
    for (const auto& [name, a] : m.adapters()) {
        c.meta["adapters"].push_back({{"target", name}, {"rank", a.rank}, {"alpha", a.alpha}, {"dropout", a.dropout}});
        c.tensors.push_back(to_record(name + ".lora_up", a.up));
        c.tensors.push_back(to_record(name + ".lora_down", a.down));
    }
    return c;
}

/// Reattaches every adapter stored in an adapter checkpoint. The base
/// weights are frozen, the adapters trainable, as after lora::attach.
template <typename T>
void attach_from_checkpoint(model::DecoderModel<T>& m, const Checkpoint& c) {
    if (c.kind != "adapter") throw ParseError("expected an adapter checkpoint, found kind '" + c.kind + "'");
    m.set_base_trainable(false);
    for (const auto& spec : c.meta.at("adapters")) {
        const auto target = spec.at("target").get<std::string>();
        if (!m.has_parameter(target)) throw ConfigError("adapter targets unknown weight '" + target + "'");
        lora::LoraAdapter<T> a;
        a.target = target;
        a.rank = spec.at("rank").get<std::size_t>();
        a.alpha = spec.at("alpha").get<double>();
        a.dropout = spec.at("dropout").get<double>();
        const auto& up = c.find(target + ".lora_up");
        const auto& down = c.find(target + ".lora_down");
        a.up = num::Tensor<T>(up.shape, record_values<T>(up), true);
        a.down = num::Tensor<T>(down.shape, record_values<T>(down), true);
        const auto& w = m.param(target);
        if (a.up.rank() != 2 || a.down.rank() != 2 || a.up.dim(1) != a.rank || a.down.dim(0) != a.rank ||
            a.up.dim(0) != w.dim(0) || a.down.dim(1) != w.dim(1)) {
            throw DimensionError("adapter '" + target + "' factors " + num::shape_str(a.up.shape()) + " / " +
                                 num::shape_str(a.down.shape()) + " (rank " + std::to_string(a.rank) +
                                 ") do not fit base weight " + num::shape_str(w.shape()));
        }
        m.mutable_adapters()[target] = std::move(a);
    }
}

}  // namespace eduqa::ckpt
