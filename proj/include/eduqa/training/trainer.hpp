// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/io.hpp"
#include "eduqa/lora/attach.hpp"
#include "eduqa/model/checkpoint.hpp"
#include "eduqa/training/format.hpp"
#include "eduqa/training/optimizer.hpp"

namespace eduqa::train {

struct LossRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    double lr = 0.0;
    std::int64_t wall_ms = 0;
};

inline void to_json(nlohmann::json& j, const LossRecord& r) {
    j = nlohmann::json{{"step", r.step},   {"epoch", r.epoch},        {"train_loss", r.train_loss},
                       {"lr", r.lr},       {"wall_ms", r.wall_ms}};
    j["val_loss"] = r.val_loss ? nlohmann::json(*r.val_loss) : nlohmann::json(nullptr);
}

struct TrainOptions {
    OptimizerConfig optimizer;
    TrainMode mode = TrainMode::lora;
    lora::LoraOptions lora;  // used when the model has no adapters yet
    std::uint64_t seed = 0;
    std::optional<std::size_t> max_steps;
    bool validation_split = true;
    std::optional<std::filesystem::path> checkpoint_dir;
    std::optional<std::filesystem::path> run_log;
    std::function<void(const LossRecord&)> on_record;
};

struct TrainResult {
    std::vector<LossRecord> log;
    std::size_t steps = 0;
    std::size_t train_examples = 0;
    std::size_t val_examples = 0;
};

/// Fixed-size batch, right-padded to its longest row. Pad positions carry no
/// loss.
struct Batch {
    std::vector<std::vector<std::int64_t>> tokens;
    std::vector<std::vector<bool>> loss_mask;
    std::vector<std::size_t> lengths;
};

inline Batch make_batch(const std::vector<const TrainingExample*>& rows, std::int64_t pad) {
    Batch b;
    std::size_t width = 0;
    for (const auto* r : rows) width = std::max(width, r->tokens.size());
    for (const auto* r : rows) {
        auto t = r->tokens;
        auto m = r->loss_mask;
        b.lengths.push_back(t.size());
        t.resize(width, pad);
        m.resize(width, false);
        b.tokens.push_back(std::move(t));
        b.loss_mask.push_back(std::move(m));
    }
    return b;
}

/// Mean next-token cross-entropy over every loss position of the batch.
/// Rows run through the model one at a time; right padding sits after
/// every real token, so under the causal mask it cannot change their logits
/// and the padded tail is skipped.
template <typename T>
num::Tensor<T> batch_loss(const model::DecoderModel<T>& m, const Batch& b) {
    std::vector<num::Tensor<T>> parts;
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    for (std::size_t r = 0; r < b.tokens.size(); ++r) {
        const std::size_t len = b.lengths[r];
        if (len < 2) continue;
        TrainingExample ex;
        ex.tokens.assign(b.tokens[r].begin(), b.tokens[r].begin() + static_cast<std::ptrdiff_t>(len));
        ex.loss_mask.assign(b.loss_mask[r].begin(), b.loss_mask[r].begin() + static_cast<std::ptrdiff_t>(len));
        const auto targets = shifted_targets(ex);
        std::size_t n = 0;
        for (auto t : targets) n += t != num::kIgnoreIndex;
        if (n == 0) continue;
        const std::vector<std::int64_t> inputs(ex.tokens.begin(), ex.tokens.end() - 1);
        parts.push_back(num::cross_entropy(m.forward(inputs), targets));
        counts.push_back(n);
        total += n;
    }
    if (parts.empty()) return num::Tensor<T>::scalar(T(0));
    num::Tensor<T> loss;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        auto term = num::scale(parts[i], static_cast<T>(static_cast<double>(counts[i]) / static_cast<double>(total)));
        loss = loss.defined() ? num::add(loss, term) : term;
    }
    return loss;
}

/// Token-weighted loss over a whole dataset, without building a graph.
template <typename T>
double dataset_loss(const model::DecoderModel<T>& m, const std::vector<TrainingExample>& data, std::int64_t pad = 0) {
    num::NoGradGuard guard;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& ex : data) {
        const auto b = make_batch({&ex}, pad);
        const auto targets = shifted_targets(ex);
        std::size_t k = 0;
        for (auto t : targets) k += t != num::kIgnoreIndex;
        if (k == 0) continue;
        sum += static_cast<double>(batch_loss(m, b).item()) * static_cast<double>(k);
        n += k;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace detail {

template <typename T>
void write_checkpoints(const model::DecoderModel<T>& m, const TrainOptions& o, std::size_t epoch, std::size_t step) {
    if (!o.checkpoint_dir) return;
    nlohmann::json meta{{"epoch", epoch}, {"step", step}, {"mode", to_string(o.mode)}, {"seed", o.seed}};
    if (o.mode == TrainMode::lora) {
        ckpt::save(ckpt::adapter_checkpoint(m, meta), *o.checkpoint_dir / "adapter.ckpt");
    }
    // A LoRA run's model checkpoint holds the untouched base weights.
    ckpt::save(ckpt::model_checkpoint(m, meta), *o.checkpoint_dir / "model.ckpt");
}

}  // namespace detail

/// Runs the fine-tuning loop in place.
///
/// Full mode trains every base weight. LoRA mode attaches adapters if the
/// model has none and trains only them; the base stays bit-identical.
/// Checkpoints are written after each epoch, so a non-finite loss aborts the
/// run with the previous epoch's files intact.
template <typename T>
TrainResult train(model::DecoderModel<T>& m, const std::vector<TrainingExample>& dataset, const TrainOptions& o) {
    o.optimizer.validate();
    if (dataset.empty()) throw ContractError("train: empty dataset");
    for (const auto& ex : dataset) {
        if (ex.tokens.size() != ex.loss_mask.size()) throw ContractError("train: example '" + ex.id + "' mask length mismatch");
        if (ex.tokens.size() > o.optimizer.max_length) {
            throw LengthError("train: example '" + ex.id + "' has " + std::to_string(ex.tokens.size()) +
                              " tokens, above max_length " + std::to_string(o.optimizer.max_length));
        }
    }
    if (o.mode == TrainMode::lora) {
        if (m.adapters().empty()) lora::attach(m, o.lora);
        m.set_base_trainable(false);
    } else {
        if (!m.adapters().empty()) throw ConfigError("train: full mode on a model with adapters; merge them first");
        m.set_base_trainable(true);
    }
    if (o.checkpoint_dir) std::filesystem::create_directories(*o.checkpoint_dir);

    std::vector<const TrainingExample*> train_set;
    std::vector<TrainingExample> val_set;
    for (const auto& ex : dataset) {
        if (o.validation_split && is_validation_id(ex.id)) {
            val_set.push_back(ex);
        } else {
            train_set.push_back(&ex);
        }
    }
    if (train_set.empty()) {
        for (const auto& ex : dataset) train_set.push_back(&ex);
        val_set.clear();
    }

    TrainResult result;
    result.train_examples = train_set.size();
    result.val_examples = val_set.size();
    const std::size_t bs = o.optimizer.batch_size;
    const std::size_t per_epoch = (train_set.size() + bs - 1) / bs;
    std::size_t total = per_epoch * o.optimizer.num_epochs;
    if (o.max_steps) total = std::min(total, *o.max_steps);
    if (total == 0) return result;

    std::ostringstream log_buffer;
    const auto start = std::chrono::steady_clock::now();
    AdamWState<T> state;
    std::mt19937_64 shuffle_rng(o.seed);
    const auto trainable = m.trainable_tensors();
    m.set_training(true);

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= o.optimizer.num_epochs && step < total; ++epoch) {
        auto order = train_set;
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t b0 = 0; b0 < order.size() && step < total; b0 += bs) {
            std::vector<const TrainingExample*> rows(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b0 + bs)));
            const auto batch = make_batch(rows, 0);
            m.zero_grad();
            auto loss = batch_loss(m, batch);
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) {
                m.set_training(false);
                throw NumericError("train: non-finite loss at step " + std::to_string(step + 1) +
                                   "; last good checkpoint retained");
            }
            ++step;
            const double lr = lr_at(step, total, o.optimizer);
            if (loss.requires_grad()) {
                num::backward(loss);
                adamw_step(trainable, state, o.optimizer, step, lr);
            }
            LossRecord rec;
            rec.step = step;
            rec.epoch = epoch;
            rec.train_loss = value;
            rec.lr = lr;
            rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
            const bool epoch_end = b0 + bs >= order.size() || step == total;
            if (epoch_end && !val_set.empty()) {
                m.set_training(false);
                rec.val_loss = dataset_loss(m, val_set);
                m.set_training(true);
            }
            result.log.push_back(rec);
            if (o.on_record) o.on_record(rec);
            if (o.run_log) log_buffer << nlohmann::json(rec).dump() << '\n';
        }
        m.set_training(false);
        detail::write_checkpoints(m, o, epoch, step);
        if (o.run_log) io::atomic_write(*o.run_log, log_buffer.str());
        m.set_training(true);
    }
    m.set_training(false);
    m.zero_grad();
    result.steps = step;
    return result;
}

}  // namespace eduqa::train
