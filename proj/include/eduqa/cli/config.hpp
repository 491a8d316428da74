// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "eduqa/data/types.hpp"
#include "eduqa/io.hpp"
#include "eduqa/lora/attach.hpp"
#include "eduqa/model/config.hpp"
#include "eduqa/training/format.hpp"
#include "eduqa/training/optimizer.hpp"

namespace eduqa::cli {

enum class DataKind { corpus, copy_task };

struct CopyTaskData {
    train::CopyTask task;
    std::size_t count = 64;
};

/// One run, as read from a JSON config file:
///
///     {
///       "seed": 7,
///       "model":     {"d_model": 32, "n_layers": 2, ...},
///       "optimizer": {"learning_rate": 2e-4, "num_epochs": 10, ...},
///       "lora":      {"rank": 8, "alpha": 16, "dropout": 0.1, "targets": [...]},
///       "paths":     {"corpus": "...", "checkpoint_dir": "...", "run_log": "..."},
///       "data":      {"kind": "corpus" | "copy_task",
///                     "copy_task": {"symbols": 8, "length": 4, "count": 64},
///                     "template": {"name": ..., "body": ...}}
///     }
///
/// Relative paths are resolved against the config file's directory.
struct RunConfig {
    std::uint64_t seed = 0;
    model::ModelConfig model;
    nlohmann::json optimizer = nlohmann::json::object();  // applied over the mode defaults
    std::optional<lora::LoraOptions> lora;
    std::filesystem::path corpus;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path run_log;
    DataKind data_kind = DataKind::corpus;
    CopyTaskData copy_task;
    std::optional<data::InstructionTemplate> training_template;

    train::OptimizerConfig optimizer_for(train::TrainMode mode) const;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("config: unknown key '" + where + "." + it.key() + "'");
}

inline double number(const nlohmann::json& j, const std::string& key, const std::string& where) {
    if (!j[key].is_number()) throw ConfigError("config: '" + where + "." + key + "' must be a number");
    return j[key].get<double>();
}

inline std::size_t count(const nlohmann::json& j, const std::string& key, const std::string& where) {
    if (!j[key].is_number_unsigned()) throw ConfigError("config: '" + where + "." + key + "' must be a non-negative integer");
    return j[key].get<std::size_t>();
}

inline std::string string(const nlohmann::json& j, const std::string& key, const std::string& where) {
    if (!j[key].is_string()) throw ConfigError("config: '" + where + "." + key + "' must be a string");
    return j[key].get<std::string>();
}

}  // namespace detail

inline train::OptimizerConfig apply_optimizer(const nlohmann::json& j, train::OptimizerConfig c) {
    detail::check_keys(j, "optimizer",
                       {"learning_rate", "beta1", "beta2", "eps", "warmup_ratio", "weight_decay", "batch_size", "max_length",
                        "num_epochs", "grad_clip"});
    const std::string w = "optimizer";
    if (j.contains("learning_rate")) c.learning_rate = detail::number(j, "learning_rate", w);
    if (j.contains("beta1")) c.beta1 = detail::number(j, "beta1", w);
    if (j.contains("beta2")) c.beta2 = detail::number(j, "beta2", w);
    if (j.contains("eps")) c.eps = detail::number(j, "eps", w);
    if (j.contains("warmup_ratio")) c.warmup_ratio = detail::number(j, "warmup_ratio", w);
    if (j.contains("weight_decay")) c.weight_decay = detail::number(j, "weight_decay", w);
    if (j.contains("batch_size")) c.batch_size = detail::count(j, "batch_size", w);
    if (j.contains("max_length")) c.max_length = detail::count(j, "max_length", w);
    if (j.contains("num_epochs")) c.num_epochs = detail::count(j, "num_epochs", w);
    if (j.contains("grad_clip") && !j["grad_clip"].is_null()) c.grad_clip = detail::number(j, "grad_clip", w);
    c.validate();
    return c;
}

inline train::OptimizerConfig RunConfig::optimizer_for(train::TrainMode mode) const {
    return apply_optimizer(optimizer, train::OptimizerConfig::for_mode(mode));
}

inline lora::LoraOptions parse_lora(const nlohmann::json& j) {
    detail::check_keys(j, "lora", {"rank", "alpha", "dropout", "targets"});
    lora::LoraOptions o;
    if (j.contains("rank")) o.rank = detail::count(j, "rank", "lora");
    if (j.contains("alpha")) o.alpha = detail::number(j, "alpha", "lora");
    if (j.contains("dropout")) o.dropout = detail::number(j, "dropout", "lora");
    if (j.contains("targets")) {
        if (!j["targets"].is_array()) throw ConfigError("config: 'lora.targets' must be an array of weight names");
        std::vector<std::string> t;
        for (const auto& x : j["targets"]) {
            if (!x.is_string()) throw ConfigError("config: 'lora.targets' must be an array of weight names");
            t.push_back(x.get<std::string>());
        }
        o.targets = std::move(t);
    }
    if (o.rank < 1) throw ConfigError("config: 'lora.rank' must be >= 1");
    if (!(o.dropout >= 0.0 && o.dropout < 1.0)) throw ConfigError("config: 'lora.dropout' must lie in [0, 1)");
    return o;
}

/// Validates the document against the schema above and resolves paths.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
    detail::check_keys(j, "<root>", {"seed", "model", "optimizer", "lora", "paths", "data"});
    for (const char* k : {"model", "paths"})
        if (!j.contains(k)) throw ConfigError(std::string("config: missing required section '") + k + "'");
    RunConfig c;
    if (j.contains("seed")) c.seed = detail::count(j, "seed", "<root>");
    try {
        c.model = j["model"].get<model::ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: model: ") + e.what());
    }
    if (j.contains("optimizer")) {
        c.optimizer = j["optimizer"];
        apply_optimizer(c.optimizer, {});
    }
    if (j.contains("lora") && !j["lora"].is_null()) c.lora = parse_lora(j["lora"]);

    const auto& p = j["paths"];
    detail::check_keys(p, "paths", {"corpus", "checkpoint_dir", "run_log"});
    auto resolve = [&](const std::string& key, bool required) -> std::filesystem::path {
        if (!p.contains(key)) {
            if (required) throw ConfigError("config: missing 'paths." + key + "'");
            return {};
        }
        std::filesystem::path v = detail::string(p, key, "paths");
        return v.is_absolute() ? v : base_dir / v;
    };
    c.checkpoint_dir = resolve("checkpoint_dir", true);
    c.run_log = resolve("run_log", true);

    if (j.contains("data")) {
        const auto& d = j["data"];
        detail::check_keys(d, "data", {"kind", "copy_task", "template"});
        if (d.contains("kind")) {
            const auto kind = detail::string(d, "kind", "data");
            if (kind == "corpus") c.data_kind = DataKind::corpus;
            else if (kind == "copy_task") c.data_kind = DataKind::copy_task;
            else throw ConfigError("config: 'data.kind' must be corpus or copy_task, got '" + kind + "'");
        }
        if (d.contains("copy_task")) {
            const auto& t = d["copy_task"];
            detail::check_keys(t, "data.copy_task", {"symbols", "length", "count"});
            if (t.contains("symbols")) c.copy_task.task.symbols = detail::count(t, "symbols", "data.copy_task");
            if (t.contains("length")) c.copy_task.task.length = detail::count(t, "length", "data.copy_task");
            if (t.contains("count")) c.copy_task.count = detail::count(t, "count", "data.copy_task");
        }
        if (d.contains("template")) {
            detail::check_keys(d["template"], "data.template", {"name", "style", "body"});
            c.training_template = d["template"].get<data::InstructionTemplate>();
        }
    }
    c.corpus = resolve("corpus", c.data_kind == DataKind::corpus);
    if (c.data_kind == DataKind::copy_task) {
        if (c.copy_task.task.symbols < 1 || c.copy_task.task.length < 1 || c.copy_task.count < 1)
            throw ConfigError("config: copy_task symbols, length and count must be >= 1");
        if (c.model.vocab_size < c.copy_task.task.vocab_size())
            throw ConfigError("config: model.vocab_size " + std::to_string(c.model.vocab_size) + " is below the copy task's " +
                              std::to_string(c.copy_task.task.vocab_size()));
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace eduqa::cli
