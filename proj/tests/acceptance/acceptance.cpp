// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

// Release acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "eduqa/data/quality.hpp"
#include "eduqa/eval/metrics.hpp"
#include "eduqa/kvcache/generation.hpp"
#include "eduqa/lora/attach.hpp"
#include "eduqa/model/checkpoint.hpp"
#include "eduqa/training/trainer.hpp"
#include "support/metric_oracles.hpp"
#include "support/op_gradchecks.hpp"
#include "support/stats_oracle.hpp"

namespace ckpt = eduqa::ckpt;
namespace data = eduqa::data;
namespace eval = eduqa::eval;
namespace kv = eduqa::kv;
namespace lora = eduqa::lora;
namespace train = eduqa::train;
using eduqa::model::DecoderModel;
using eduqa::model::ModelConfig;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Tokens = std::vector<std::int64_t>;

Tokens random_tokens(std::mt19937_64& rng, std::size_t len, std::size_t vocab) {
    Tokens t(len);
    for (auto& v : t) v = static_cast<std::int64_t>(rng() % vocab);
    return t;
}

template <typename T>
double max_abs_diff(const eduqa::num::Tensor<T>& a, const eduqa::num::Tensor<T>& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return d;
}

template <typename T>
std::vector<T> snapshot(const DecoderModel<T>& m) {
    std::vector<T> out;
    for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

template <typename T>
std::vector<T> last_row(const eduqa::num::Tensor<T>& logits) {
    const std::size_t V = logits.dim(1);
    auto s = logits.data().subspan((logits.dim(0) - 1) * V, V);
    return {s.begin(), s.end()};
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

train::TrainOptions copy_options(train::TrainMode mode, std::size_t steps) {
    train::TrainOptions o;
    o.mode = mode;
    o.optimizer = train::OptimizerConfig::for_mode(mode);
    o.optimizer.learning_rate = mode == train::TrainMode::full ? 3e-3 : 1e-2;
    o.optimizer.batch_size = 8;
    o.optimizer.num_epochs = 100;
    o.max_steps = steps;
    o.lora.rank = 8;
    o.lora.dropout = 0.0;
    o.seed = 5;
    return o;
}

ModelConfig copy_model(const train::CopyTask& task) { return ModelConfig::sliding(32, 2, 2, task.vocab_size(), 10, 32); }

// --- criteria ------------------------------------------------------------------

Outcome lora_neutrality() {
    const auto t0 = Clock::now();
    Outcome o;
    for (auto cfg : {ModelConfig::sliding(32, 2, 2, 37, 4), ModelConfig::alibi(32, 2, 2, 37)}) {
        DecoderModel<float> m(cfg, 11);
        std::vector<eduqa::num::Tensor<float>> before;
        std::mt19937_64 rng(1);
        std::vector<Tokens> inputs;
        for (int i = 0; i < 100; ++i) inputs.push_back(random_tokens(rng, 1 + rng() % 12, 37));
        for (const auto& in : inputs) before.push_back(m.forward(in));
        lora::LoraOptions opts;
        opts.rank = 4;
        opts.dropout = 0.1;
        opts.seed = 2;
        lora::attach(m, opts);
        m.set_training(false);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto after = m.forward(inputs[i]);
            if (after.shape() != before[i].shape() ||
                !std::equal(after.data().begin(), after.data().end(), before[i].data().begin()))
                ++changed;
        }
        if (changed) o = {false, std::to_string(changed) + " of 100 inputs changed"};
    }
    const double secs = seconds_since(t0);
    if (secs >= 5.0) o.pass = false;
    if (o.pass) o.detail = "200 inputs bit-identical";
    o.detail += ", " + fmt("%.2fs", secs);
    return o;
}

Outcome merge_equivalence() {
    train::CopyTask task;
    const auto examples = train::make_copy_task(task, 128, 3);
    DecoderModel<float> m(copy_model(task), 7);
    const auto r = train::train(m, examples, copy_options(train::TrainMode::lora, 100));
    if (r.steps != 100) return {false, "trained " + std::to_string(r.steps) + " steps"};
    m.set_training(false);
    const auto merged = lora::merge_into_base(m);
    std::mt19937_64 rng(9);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const auto in = random_tokens(rng, 1 + rng() % 20, task.vocab_size());
        worst = std::max(worst, max_abs_diff(m.forward(in), merged.forward(in)));
    }
    return {worst < 1e-5 && merged.adapters().empty(), "max deviation " + fmt("%.3e", worst)};
}

Outcome reduction_ratio() {
    const std::size_t d = 1024, k = 1024, r = 128;
    const double expected = static_cast<double>(d * k) / static_cast<double>(r * (d + k));
    const double reported = lora::reduction_factor(d, k, r);
    std::mt19937_64 rng(0);
    const auto a = lora::make_adapter<float>("w", d, k, r, static_cast<double>(r), 0.0, rng);
    const double counted = static_cast<double>(d * k) / static_cast<double>(a.up.size() + a.down.size());
    return {reported == 4.0 && expected == 4.0 && counted == 4.0,
            "reported " + fmt("%g", reported) + ", counted " + fmt("%g", counted)};
}

Outcome rolling_cache_generation() {
    const auto t0 = Clock::now();
    const auto cfg = ModelConfig::sliding(16, 2, 2, 23, 3, 64);
    DecoderModel<float> m(cfg, 4);
    const Tokens prompt{3, 17, 5, 9, 1};
    kv::GenerationParams params;
    params.max_new_tokens = 24;
    const auto traced = kv::generate_traced(m, prompt, params);
    if (traced.tokens.size() != 24) return {false, "generated " + std::to_string(traced.tokens.size()) + " tokens"};
    Tokens seq = prompt;
    double worst = 0;
    std::size_t mismatched = 0;
    for (std::size_t step = 0; step < 24; ++step) {
        const auto full = last_row(m.forward(seq));
        for (std::size_t v = 0; v < full.size(); ++v)
            worst = std::max(worst, std::abs(static_cast<double>(full[v]) - traced.step_logits[step][v]));
        const auto want = kv::argmax<float>(full);
        if (want != traced.tokens[step]) ++mismatched;
        seq.push_back(want);
    }
    const double secs = seconds_since(t0);
    return {mismatched == 0 && worst < 1e-5 && secs < 30.0,
            std::to_string(24 - mismatched) + "/24 tokens agree, max logit deviation " + fmt("%.3e", worst) + ", " +
                fmt("%.2fs", secs)};
}

Outcome chunked_prefill() {
    const auto cfg = ModelConfig::sliding(16, 2, 2, 23, 3, 64);
    DecoderModel<float> m(cfg, 5);
    const Tokens prompt{4, 8, 15, 16, 2, 22, 7};
    const auto reference = last_row(m.forward(prompt));
    double worst = 0;
    for (std::size_t chunk : {std::size_t{1}, std::size_t{2}, std::size_t{3}, prompt.size()}) {
        auto cache = m.make_cache();
        const auto got = kv::prefill(m, cache, prompt, chunk);
        for (std::size_t v = 0; v < got.size(); ++v)
            worst = std::max(worst, std::abs(static_cast<double>(got[v]) - reference[v]));
    }
    return {worst < 1e-5, "chunks {1,2,3,7}, max deviation " + fmt("%.3e", worst)};
}

Outcome retained_positions() {
    const auto cfg = ModelConfig::sliding(16, 2, 2, 23, 3, 64);
    DecoderModel<float> m(cfg, 6);
    auto cache = m.make_cache();
    for (std::int64_t t = 0; t < 7; ++t) m.forward({t + 1}, &cache);
    const std::set<std::int64_t> want{4, 5, 6};
    for (std::size_t layer = 0; layer < cfg.n_layers; ++layer) {
        const auto& tags = cache.slot_tags(layer);
        const std::set<std::int64_t> got(tags.begin(), tags.end());
        if (got != want || tags.size() != 3) {
            std::ostringstream s;
            s << "layer " << layer << " holds";
            for (auto t : tags) s << " " << t;
            return {false, s.str()};
        }
    }
    return {true, "every layer holds {4,5,6}"};
}

Outcome gradient_check() {
    const auto results = eduqa::testing::run_all_op_gradchecks();
    double worst = 0;
    std::string worst_op;
    for (const auto& r : results) {
        if (!(r.result.max_rel_error < 1e-4)) return {false, r.op + " relative error " + fmt("%.3e", r.result.max_rel_error)};
        if (r.result.max_rel_error >= worst) {
            worst = r.result.max_rel_error;
            worst_op = r.op;
        }
    }
    return {!results.empty(), std::to_string(results.size()) + " ops, worst " + worst_op + " " + fmt("%.3e", worst)};
}

Outcome copy_task_training() {
    const auto t0 = Clock::now();
    train::CopyTask task;
    const auto examples = train::make_copy_task(task, 256, 1);
    std::ostringstream detail;
    bool pass = true;
    for (auto mode : {train::TrainMode::full, train::TrainMode::lora}) {
        DecoderModel<float> m(copy_model(task), 7);
        const auto base = snapshot(m);
        const double before = train::dataset_loss(m, examples);
        const auto r = train::train(m, examples, copy_options(mode, 200));
        const double after = train::dataset_loss(m, examples);
        const bool halved = r.steps <= 200 && after < 0.5 * before;
        pass = pass && halved;
        detail << (mode == train::TrainMode::full ? "full " : "lora ") << fmt("%.3f", before) << "->"
               << fmt("%.3f", after) << " in " << r.steps << " steps; ";
        if (mode == train::TrainMode::lora) {
            const bool frozen = snapshot(m) == base;
            pass = pass && frozen;
            detail << (frozen ? "base bit-identical; " : "base changed; ");
        }
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 60.0;
    detail << fmt("%.2fs", secs);
    return {pass, detail.str()};
}

Outcome em_f1_and_overlap_metrics() {
    const auto fx = eduqa::testing::load_metric_fixture(std::string(EDUQA_TEST_DATA_DIR) + "/metrics_fixture.json");
    const auto rep = eval::score_corpus(fx.predictions, fx.gold);
    const auto mismatches = eduqa::testing::compare_with_fixture(rep, fx, 1e-9);
    if (!mismatches.empty()) return {false, "fixture: " + mismatches};
    if (rep.n != 10) return {false, "fixture scored " + std::to_string(rep.n) + " examples"};

    std::mt19937_64 rng(21);
    auto tokens = [&] {
        eval::Tokens t(rng() % 12);
        for (auto& w : t) w = "w" + std::to_string(rng() % 6);
        return t;
    };
    double worst = 0;
    for (int i = 0; i < 300; ++i) {
        const auto cand = tokens();
        std::vector<eval::Tokens> refs(1 + rng() % 3);
        for (auto& r : refs) r = tokens();
        worst = std::max(worst, std::abs(eval::bleu_tokens(cand, refs) - eduqa::testing::bleu_oracle(cand, refs, 4)));
        const auto l = eval::rouge_l_tokens(cand, refs[0]);
        const auto lo = eduqa::testing::rouge_l_oracle(cand, refs[0]);
        worst = std::max({worst, std::abs(l.precision - lo.precision), std::abs(l.recall - lo.recall),
                          std::abs(l.f1 - lo.f1)});
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto g = eval::rouge_n_tokens(cand, refs[0], n);
            const auto go = eduqa::testing::rouge_n_oracle(cand, refs[0], n);
            worst = std::max({worst, std::abs(g.precision - go.precision), std::abs(g.recall - go.recall),
                              std::abs(g.f1 - go.f1)});
        }
    }
    return {worst <= 1e-9, "10-example fixture exact; BLEU/ROUGE max oracle gap " + fmt("%.3e", worst)};
}

Outcome corpus_statistics() {
    std::mt19937_64 rng(33);
    double worst = 0;
    for (int c = 0; c < 100; ++c) {
        const auto corpus = eduqa::testing::random_corpus(rng, 1 + rng() % 40);
        const auto s = data::compute_stats(corpus);
        using E = data::QaExample;
        worst = std::max({worst,
                          eduqa::testing::stats_gap(s.context, eduqa::testing::stats_oracle(
                                                                   eduqa::testing::utf8_lengths(corpus, &E::context))),
                          eduqa::testing::stats_gap(s.question, eduqa::testing::stats_oracle(
                                                                    eduqa::testing::utf8_lengths(corpus, &E::question))),
                          eduqa::testing::stats_gap(s.answer, eduqa::testing::stats_oracle(
                                                                  eduqa::testing::utf8_lengths(corpus, &E::answer)))});
    }
    std::vector<data::QaExample> labeled;
    const std::size_t counts[5] = {631, 300, 150, 50, 18};
    for (std::size_t lvl = 0; lvl < 5; ++lvl)
        for (std::size_t i = 0; i < counts[lvl]; ++i)
            labeled.push_back({"x" + std::to_string(labeled.size()), "c", "q", "a", data::kQualityLevels[lvl],
                               data::Provenance::human_labeled});
    const auto rep = data::quality_report(labeled);
    const bool pct = rep.total == 1149 && rep.counts[0] == 631 && rep.percentages[0] == 54.92;
    return {worst <= 1e-9 && pct,
            "100 corpora max gap " + fmt("%.3e", worst) + "; 631/" + std::to_string(rep.total) + " -> " +
                fmt("%.2f", rep.percentages[0])};
}

Outcome alibi_and_embedding_norm() {
    for (std::size_t H : {1, 2, 3, 8, 12}) {
        Tokens pos(16);
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<std::int64_t>(i);
        const auto bias = eduqa::model::alibi_bias<double>(H, pos, pos);
        const std::size_t n = pos.size();
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t q = 0; q < n; ++q) {
                if (bias.data()[(h * n + q) * n + q] != 0.0) return {false, "nonzero bias at distance 0"};
                // keys from q back to 0: distance grows, bias must strictly drop
                for (std::size_t k = q; k-- > 0;)
                    if (!(bias.data()[(h * n + q) * n + k] < bias.data()[(h * n + q) * n + k + 1]))
                        return {false, "bias not strictly decreasing for head " + std::to_string(h) + " of " +
                                           std::to_string(H)};
            }
    }
    const auto cfg = ModelConfig::alibi(32, 2, 4, 41);
    DecoderModel<double> m(cfg, 12);
    std::mt19937_64 rng(13);
    double worst_mean = 0, worst_var = 0;
    for (int i = 0; i < 20; ++i) {
        eduqa::model::ForwardTrace<double> trace;
        m.forward(random_tokens(rng, 1 + rng() % 30, 41), nullptr, &trace);
        const auto& x = trace.embedding_output;
        const std::size_t rows = x.dim(0), d = x.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            double mean = 0, var = 0;
            for (std::size_t j = 0; j < d; ++j) mean += x.data()[r * d + j];
            mean /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) var += (x.data()[r * d + j] - mean) * (x.data()[r * d + j] - mean);
            var /= static_cast<double>(d);
            worst_mean = std::max(worst_mean, std::abs(mean));
            worst_var = std::max(worst_var, std::abs(var - 1.0));
        }
    }
    return {worst_mean < 1e-5 && worst_var < 1e-5,
            "bias checked for H in {1,2,3,8,12}; row |mean| " + fmt("%.2e", worst_mean) + ", |var-1| " +
                fmt("%.2e", worst_var)};
}

Outcome checkpoint_round_trip() {
    const auto dir = std::filesystem::temp_directory_path() / ("eduqa_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    Outcome o;
    for (auto cfg : {ModelConfig::sliding(16, 2, 2, 23, 3), ModelConfig::alibi(16, 2, 2, 23)}) {
        DecoderModel<float> base(cfg, 14);
        ckpt::save(ckpt::model_checkpoint(base), dir / "model.ckpt");
        const auto first = eduqa::io::read_file(dir / "model.ckpt");
        auto loaded = ckpt::model_from_checkpoint<float>(ckpt::load(dir / "model.ckpt"));
        ckpt::save(ckpt::model_checkpoint(loaded), dir / "model2.ckpt");
        if (eduqa::io::read_file(dir / "model2.ckpt") != first) {
            o = {false, "model checkpoint bytes differ after reload"};
            break;
        }

        DecoderModel<float> tuned(cfg, 14);
        lora::LoraOptions opts;
        opts.rank = 4;
        opts.dropout = 0.0;
        opts.seed = 15;
        lora::attach(tuned, opts);
        std::mt19937_64 noise(16);
        std::normal_distribution<double> g(0.0, 0.2);
        for (auto& [_, a] : tuned.mutable_adapters())
            for (auto& v : a.up.mutable_data()) v = static_cast<float>(g(noise));
        tuned.set_training(false);
        ckpt::save(ckpt::adapter_checkpoint(tuned), dir / "adapter.ckpt");
        ckpt::attach_from_checkpoint(loaded, ckpt::load(dir / "adapter.ckpt"));
        loaded.set_training(false);
        std::mt19937_64 rng(17);
        for (int i = 0; i < 20; ++i) {
            const auto in = random_tokens(rng, 1 + rng() % 10, 23);
            const auto a = tuned.forward(in), b = loaded.forward(in);
            if (!std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end())) {
                o = {false, "reattached adapters change the logits"};
                break;
            }
        }
        if (!o.pass) break;
    }
    std::filesystem::remove_all(dir);
    if (o.pass) o.detail = "save-load-save byte-identical; reattached adapters reproduce logits exactly";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"lora-neutral-at-init", lora_neutrality},
        {"lora-merge-equivalence", merge_equivalence},
        {"lora-parameter-reduction", reduction_ratio},
        {"rolling-cache-generation", rolling_cache_generation},
        {"chunked-prefill", chunked_prefill},
        {"rolling-cache-retention", retained_positions},
        {"op-gradient-check", gradient_check},
        {"copy-task-training", copy_task_training},
        {"em-f1-bleu-rouge", em_f1_and_overlap_metrics},
        {"corpus-statistics", corpus_statistics},
        {"alibi-and-embedding-norm", alibi_and_embedding_norm},
        {"checkpoint-round-trip", checkpoint_round_trip},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
