// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eduqa/cli/config.hpp"
#include "eduqa/data/client.hpp"
#include "eduqa/data/corpus.hpp"
#include "eduqa/data/prompts.hpp"
#include "eduqa/data/quality.hpp"
#include "eduqa/data/text.hpp"
#include "eduqa/eval/metrics.hpp"
#include "eduqa/io.hpp"
#include "eduqa/kvcache/generation.hpp"
#include "eduqa/lora/attach.hpp"
#include "eduqa/model/checkpoint.hpp"
#include "eduqa/model/tokenizer.hpp"
#include "eduqa/training/trainer.hpp"

namespace eduqa::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

inline constexpr const char* kApiKeyVariable = "EDUQA_API_KEY";
inline constexpr double kMergeTolerance = 1e-5;

/// Builds the live completion client from the API key. Left empty in builds
/// and tests that must not reach a network service.
using ClientFactory = std::function<std::unique_ptr<data::CompletionClient>(const std::string& api_key)>;

struct Environment {
    ClientFactory live_client;
    std::function<std::optional<std::string>(const char*)> getenv = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        return v && *v ? std::optional<std::string>(v) : std::nullopt;
    };
};

// --- command arguments -------------------------------------------------------

struct PreprocessArgs {
    fs::path input, output;
    std::size_t max_chars = 2000;
    std::uint64_t seed = 0;
};

struct StatsArgs {
    fs::path corpus;
    std::optional<fs::path> json_out;
    std::uint64_t seed = 0;
};

struct TrainArgs {
    fs::path config;
    std::string mode = "lora";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_steps;
    std::optional<fs::path> init;
    std::size_t log_every = 10;
};

struct MergeArgs {
    fs::path base, adapter, output;
    std::uint64_t seed = 0;
    std::size_t probe_batch = 4;
    std::size_t probe_length = 16;
};

struct EvalArgs {
    fs::path checkpoint, corpus;
    std::string template_spec = "default";
    std::optional<fs::path> adapter;
    std::optional<fs::path> predictions;
    fs::path records = "eval_records.jsonl";
    std::size_t max_new_tokens = 64;
    std::uint64_t seed = 0;
};

struct GenDataArgs {
    fs::path contexts;
    std::string template_spec;
    std::optional<fs::path> mock;
    fs::path output = "generated.jsonl";
    std::optional<fs::path> quarantine;
    std::size_t k_per_context = 1;
    std::size_t parallelism = 4;
    std::size_t max_attempts = 3;
    std::size_t timeout_ms = 30000;
    bool label = true;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string fixed(double v, int digits = 6) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

inline void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

/// Named builtin style, or a JSON template file.
inline data::InstructionTemplate resolve_template(const std::string& spec, bool training) {
    if (training && spec == "default") return data::default_training_template();
    for (const auto* name : {"plain", "chain_of_thought", "self_consistency_cot", "tree_of_thought"})
        if (spec == name) return data::builtin_template(spec);
    if (fs::is_regular_file(spec)) {
        try {
            return nlohmann::json::parse(io::read_file(spec)).get<data::InstructionTemplate>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("template file '" + spec + "': " + e.what());
        }
    }
    throw ConfigError("unknown template '" + spec + "' (expected " + (training ? "default, " : "") +
                      "plain, chain_of_thought, self_consistency_cot, tree_of_thought, or a template JSON file)");
}

inline void require_byte_vocab(const model::ModelConfig& c) {
    if (c.vocab_size < model::ByteTokenizer::kVocabSize)
        throw ConfigError("model vocab_size " + std::to_string(c.vocab_size) + " is below the byte tokenizer's " +
                          std::to_string(model::ByteTokenizer::kVocabSize));
}

inline model::DecoderModel<double> load_model(const fs::path& path) {
    return ckpt::model_from_checkpoint<double>(ckpt::load(path));
}

inline void attach_adapter(model::DecoderModel<double>& m, const fs::path& path) {
    const auto a = ckpt::load(path);
    if (a.kind != "adapter") throw ParseError("'" + path.string() + "' is a " + a.kind + " checkpoint, not an adapter");
    if (a.meta.contains("base_config") && a.meta["base_config"].get<model::ModelConfig>() != m.config())
        throw DimensionError("adapter '" + path.string() + "' was trained on a base with a different model config");
    ckpt::attach_from_checkpoint(m, a);
}

}  // namespace detail

// --- commands ------------------------------------------------------------------

inline int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
    out << "seed: " << a.seed << "\n";
    const auto raw = io::read_file(a.input);
    const auto contexts = data::make_contexts(data::preprocess(raw, a.max_chars));
    std::size_t chars = 0;
    for (const auto& c : contexts) chars += text::code_points(c.text);
    data::write_contexts(contexts, a.output);
    if (contexts.empty()) {
        out << "0 segments: input contains no text; wrote an empty context file to " << a.output.string() << "\n";
    } else {
        out << contexts.size() << " segments, " << chars << " chars -> " << a.output.string() << "\n";
    }
    return kExitOk;
}

inline int cmd_stats(const StatsArgs& a, std::ostream& out) {
    out << "seed: " << a.seed << "\n";
    const auto corpus = data::read_corpus(a.corpus);
    const auto stats = data::compute_stats(corpus);
    out << "Character lengths over " << corpus.size() << " examples\n" << data::format_stats(stats);
    nlohmann::json j{{"stats", data::to_json(stats)}, {"seed", a.seed}};
    std::size_t unlabeled = 0;
    for (const auto& ex : corpus) unlabeled += !ex.quality;
    if (unlabeled == 0) {
        const auto r = data::quality_report(corpus);
        out << "\nQuality\n" << data::format_quality_report(r);
        for (std::size_t i = 0; i < 5; ++i)
            j["quality"][to_string(data::kQualityLevels[i])] = {{"count", r.counts[i]}, {"percent", r.percentages[i]}};
    } else {
        out << "\nQuality: " << unlabeled << " unlabeled examples, report skipped\n";
    }
    if (a.json_out) io::atomic_write(*a.json_out, j.dump(2) + "\n");
    return kExitOk;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
    const auto cfg = load_run_config(a.config);
    const auto mode = train::train_mode_from_string(a.mode);
    const std::uint64_t seed = a.seed.value_or(cfg.seed);
    out << "seed: " << seed << "\n";

    train::TrainOptions o;
    o.mode = mode;
    o.optimizer = cfg.optimizer_for(mode);
    o.lora = cfg.lora.value_or(lora::LoraOptions{});
    o.lora.seed = seed;
    o.seed = seed;
    o.max_steps = a.max_steps;
    o.checkpoint_dir = cfg.checkpoint_dir;
    o.run_log = cfg.run_log;

    auto m = a.init ? detail::load_model(*a.init) : model::DecoderModel<double>(cfg.model, seed);
    if (a.init && m.config() != cfg.model) throw ConfigError("--init checkpoint's model config differs from the run config");

    std::vector<train::TrainingExample> dataset;
    if (cfg.data_kind == DataKind::copy_task) {
        dataset = train::make_copy_task(cfg.copy_task.task, cfg.copy_task.count, seed);
    } else {
        detail::require_byte_vocab(cfg.model);
        const model::ByteTokenizer tok;
        const auto tmpl = cfg.training_template.value_or(data::default_training_template());
        const std::size_t limit = std::min(o.optimizer.max_length, cfg.model.max_seq_len);
        std::size_t skipped = 0;
        for (const auto& ex : data::read_corpus(cfg.corpus)) {
            if (ex.context.empty() || ex.question.empty() || ex.answer.empty()) {
                ++skipped;
                continue;
            }
            dataset.push_back(train::format_training_example(ex, tmpl, tok, limit));
        }
        if (skipped) out << "skipped " << skipped << " examples with an empty field\n";
        if (dataset.empty() && o.optimizer.num_epochs > 0) throw InputError("training corpus has no usable examples");
    }
    out << "mode: " << to_string(mode) << ", examples: " << dataset.size() << ", lr: " << o.optimizer.learning_rate
        << ", batch: " << o.optimizer.batch_size << ", epochs: " << o.optimizer.num_epochs << "\n";
    if (o.optimizer.num_epochs == 0 || a.max_steps == std::optional<std::size_t>(0)) {
        out << "final: no training steps requested\n";
        return kExitOk;
    }

    detail::ensure_parent(cfg.run_log);
    std::vector<train::LossRecord> records;
    o.on_record = [&](const train::LossRecord& r) {
        records.push_back(r);
        if (r.step % std::max<std::size_t>(1, a.log_every) == 0 || r.val_loss) {
            out << "step " << r.step << " epoch " << r.epoch << " train_loss " << detail::fixed(r.train_loss) << " lr "
                << r.lr;
            if (r.val_loss) out << " val_loss " << detail::fixed(*r.val_loss);
            out << "\n";
        }
    };
    train::TrainResult result;
    try {
        result = train::train(m, dataset, o);
    } catch (const NumericError& e) {
        std::string log;
        for (const auto& r : records) log += nlohmann::json(r).dump() + "\n";
        log += nlohmann::json{{"error", e.what()}, {"step", records.size() + 1}}.dump() + "\n";
        io::atomic_write(cfg.run_log, log);
        out << "diagnostics: run log " << cfg.run_log.string() << "; last good checkpoint (if any) in "
            << cfg.checkpoint_dir.string() << "\n";
        throw;
    }
    out << "checkpoint: " << (cfg.checkpoint_dir / "model.ckpt").string() << "\n";
    if (mode == train::TrainMode::lora) out << "adapter checkpoint: " << (cfg.checkpoint_dir / "adapter.ckpt").string() << "\n";
    const auto& last = result.log.back();
    std::optional<double> val;
    for (const auto& r : result.log)
        if (r.val_loss) val = r.val_loss;
    out << "final: steps " << result.steps << " train_loss " << detail::fixed(last.train_loss) << " val_loss "
        << (val ? detail::fixed(*val) : std::string("n/a")) << "\n";
    return kExitOk;
}

/// Largest absolute logit difference between two models over random token
/// sequences.
inline double probe_deviation(const model::DecoderModel<double>& a, const model::DecoderModel<double>& b,
                              std::uint64_t seed, std::size_t batch, std::size_t length) {
    num::NoGradGuard no_grad;
    std::mt19937_64 rng(seed);
    const auto& c = a.config();
    std::uniform_int_distribution<std::int64_t> tok(0, static_cast<std::int64_t>(c.vocab_size) - 1);
    const std::size_t len = std::max<std::size_t>(1, std::min(length, c.max_seq_len));
    double worst = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        std::vector<std::int64_t> seq(len);
        for (auto& t : seq) t = tok(rng);
        const auto la = a.forward(seq), lb = b.forward(seq);
        for (std::size_t k = 0; k < la.size(); ++k) worst = std::max(worst, std::abs(la.data()[k] - lb.data()[k]));
    }
    return worst;
}

inline int cmd_merge(const MergeArgs& a, std::ostream& out) {
    out << "seed: " << a.seed << "\n";
    auto m = detail::load_model(a.base);
    detail::attach_adapter(m, a.adapter);
    m.set_training(false);
    const auto merged = lora::merge_into_base(m);
    const double dev = probe_deviation(m, merged, a.seed, a.probe_batch, a.probe_length);
    out << "adapters merged: " << m.adapters().size() << "\n";
    out << "probe max deviation: " << std::scientific << std::setprecision(3) << dev << std::defaultfloat << "\n";
    if (!(dev < kMergeTolerance)) {
        throw NumericError("merged model deviates from the adapter model by " + std::to_string(dev) + " (limit 1e-5)");
    }
    nlohmann::json meta{{"merged_from", {{"base", a.base.string()}, {"adapter", a.adapter.string()}}},
                        {"seed", a.seed},
                        {"probe_max_deviation", dev}};
    ckpt::save(ckpt::model_checkpoint(merged, meta), a.output);
    out << "wrote " << a.output.string() << "\n";
    return kExitOk;
}

inline std::vector<eval::Prediction> generate_predictions(const model::DecoderModel<double>& m,
                                                          const std::vector<data::QaExample>& corpus,
                                                          const data::InstructionTemplate& tmpl, std::size_t max_new_tokens) {
    const model::ByteTokenizer tok;
    kv::GenerationParams params;
    params.max_new_tokens = max_new_tokens;
    params.stop_token = tok.eos();
    std::vector<eval::Prediction> preds;
    std::set<std::string> seen;
    for (const auto& ex : corpus) {
        if (!seen.insert(ex.id).second) continue;
        std::vector<std::int64_t> prompt{tok.bos()};
        const auto body = tok.encode(data::render_inference_prompt(tmpl, ex.context, ex.question));
        prompt.insert(prompt.end(), body.begin(), body.end());
        auto ids = kv::generate(m, prompt, params);
        if (!ids.empty() && ids.back() == tok.eos()) ids.pop_back();
        preds.emplace_back(ex.id, data::clean_text(tok.decode(ids)));
    }
    return preds;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
    out << "seed: " << a.seed << "\n";
    const auto corpus = data::read_corpus(a.corpus);
    if (corpus.empty()) throw InputError("evaluation corpus '" + a.corpus.string() + "' is empty");
    std::vector<eval::Prediction> preds;
    if (a.predictions) {
        preds = eval::parse_predictions(io::read_file(*a.predictions));
        out << "scoring " << preds.size() << " supplied predictions\n";
    } else {
        const auto tmpl = detail::resolve_template(a.template_spec, true);
        auto m = detail::load_model(a.checkpoint);
        if (a.adapter) detail::attach_adapter(m, *a.adapter);
        m.set_training(false);
        detail::require_byte_vocab(m.config());
        preds = generate_predictions(m, corpus, tmpl, a.max_new_tokens);
        out << "generated " << preds.size() << " answers (greedy, rolling cache span " << m.config().attention_span()
            << ")\n";
    }
    const auto report = eval::score_corpus(preds, corpus);
    out << eval::format_table(report);
    std::map<std::string, std::string> text;
    for (const auto& [id, p] : preds) text[id] = p;
    std::string lines;
    for (const auto& s : report.per_example) {
        lines += nlohmann::json{{"id", s.id},         {"prediction", text.count(s.id) ? text[s.id] : ""},
                                {"em", s.em},         {"f1", s.f1},
                                {"precision", s.precision}, {"recall", s.recall}, {"seed", a.seed}}
                     .dump() +
                 "\n";
    }
    detail::ensure_parent(a.records);
    io::atomic_write(a.records, lines);
    out << "records: " << a.records.string() << "\n";
    return kExitOk;
}

inline int cmd_gen_data(const GenDataArgs& a, std::ostream& out, const Environment& env) {
    out << "seed: " << a.seed << "\n";
    const auto tmpl = detail::resolve_template(a.template_spec, false);
    std::unique_ptr<data::CompletionClient> client;
    if (a.mock) {
        client = data::MockClient::from_file(*a.mock);
        out << "client: mock (" << a.mock->string() << ")\n";
    } else {
        const auto key = env.getenv(kApiKeyVariable);
        if (!key) {
            throw ConfigError(std::string("live generation needs an API key in the ") + kApiKeyVariable +
                              " environment variable; set it, or pass --mock FIXTURE to replay scripted responses");
        }
        if (!env.live_client) throw ConfigError("this build has no live completion client; pass --mock FIXTURE");
        client = env.live_client(*key);
        out << "client: live\n";
    }
    const auto contexts = data::read_contexts(a.contexts);
    const auto prompts = data::craft_prompts(contexts, tmpl, a.k_per_context);
    data::GenerationOptions opts;
    opts.parallelism = a.parallelism;
    opts.retry.max_attempts = a.max_attempts;
    opts.retry.timeout = std::chrono::milliseconds(a.timeout_ms);
    auto batch = data::generate_candidates(*client, prompts, opts);
    if (a.label) data::label_corpus(batch.examples);

    const fs::path qpath = a.quarantine ? *a.quarantine : fs::path(a.output.string() + ".quarantine.jsonl");
    std::string qlines;
    for (const auto& q : batch.quarantine) qlines += nlohmann::json(q).dump() + "\n";
    detail::ensure_parent(a.output);
    detail::ensure_parent(qpath);
    data::write_corpus(batch.examples, a.output);
    io::atomic_write(qpath, qlines);
    out << prompts.size() << " prompts, " << batch.examples.size() << " examples, " << batch.quarantine.size()
        << " quarantined\n";
    out << "corpus: " << a.output.string() << "\nquarantine: " << qpath.string() << "\n";
    return kExitOk;
}

// --- dispatch --------------------------------------------------------------------

/// Runs `f` and maps library errors onto exit codes.
template <class F>
int guarded(F&& f, std::ostream& err) {
    try {
        return f();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const Environment& env = {}) {
    CLI::App app{"eduqa: build QA datasets from regulation text, fine-tune and evaluate small decoders"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "eduqa 0.1.0");

    PreprocessArgs pre;
    auto* c_pre = app.add_subcommand("preprocess", "Clean, formula-normalize and segment a regulation text into contexts");
    c_pre->add_option("input", pre.input, "Raw regulation text (UTF-8)")->required();
    c_pre->add_option("output", pre.output, "Context file to write (JSONL {id, context})")->required();
    c_pre->add_option("--max-chars", pre.max_chars, "Largest segment, in characters (>= 200)");
    c_pre->add_option("--seed", pre.seed, "Recorded seed (preprocessing is deterministic)");

    StatsArgs st;
    auto* c_stats = app.add_subcommand("stats", "Length statistics and quality breakdown of a QA corpus");
    c_stats->add_option("corpus", st.corpus, "Corpus file (JSONL)")->required();
    c_stats->add_option("--json", st.json_out, "Also write the statistics as JSON");
    c_stats->add_option("--seed", st.seed, "Recorded seed");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Fine-tune a model from a run config");
    c_train->add_option("--config", tr.config, "Run config (JSON)")->required();
    c_train->add_option("--mode", tr.mode, "full: every weight; lora: adapters only (lr 2e-4, batch 8; full: lr 2e-5, batch 4)")
        ->check(CLI::IsMember({"full", "lora"}));
    c_train->add_option("--seed", tr.seed, "Override the config seed");
    c_train->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps");
    c_train->add_option("--init", tr.init, "Start from this model checkpoint instead of random weights");
    c_train->add_option("--log-every", tr.log_every, "Print every n-th step");
    c_train->footer(
        "Config defaults (keys the config file may override):\n"
        "  optimizer: beta1 0.9, beta2 0.999, eps 1e-8, warmup_ratio 0.05, weight_decay 0.01,\n"
        "             max_length 1024, num_epochs 10,\n"
        "             lora mode: learning_rate 2e-4, batch_size 8; full mode: learning_rate 2e-5, batch_size 4\n"
        "  lora:      rank 128, alpha = rank, dropout 0.1, targets = every attention projection\n"
        "  data:      kind corpus, template = built-in instruction template");

    MergeArgs mg;
    auto* c_merge = app.add_subcommand("merge", "Fold a LoRA adapter checkpoint into its base model");
    c_merge->add_option("base", mg.base, "Base model checkpoint")->required();
    c_merge->add_option("adapter", mg.adapter, "Adapter checkpoint")->required();
    c_merge->add_option("output", mg.output, "Merged model checkpoint to write")->required();
    c_merge->add_option("--seed", mg.seed, "Seed of the probe batch");
    c_merge->add_option("--probe-batch", mg.probe_batch, "Probe sequences");
    c_merge->add_option("--probe-length", mg.probe_length, "Tokens per probe sequence");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Generate answers and report Exact Match and F1");
    c_eval->add_option("checkpoint", ev.checkpoint, "Model checkpoint")->required();
    c_eval->add_option("corpus", ev.corpus, "Gold corpus (JSONL)")->required();
    c_eval->add_option("template", ev.template_spec, "Instruction template: default or a template JSON file");
    c_eval->add_option("--adapter", ev.adapter, "Adapter checkpoint to attach before generating");
    c_eval->add_option("--predictions", ev.predictions, "Score these predictions (JSONL {id, prediction}) instead of generating");
    c_eval->add_option("--records", ev.records, "Per-example records to write");
    c_eval->add_option("--max-new-tokens", ev.max_new_tokens, "Generation budget per answer");
    c_eval->add_option("--seed", ev.seed, "Recorded seed (decoding is greedy)");

    GenDataArgs gd;
    auto* c_gen = app.add_subcommand("gen-data", "Generate candidate QA pairs from contexts with a completion client");
    c_gen->add_option("contexts", gd.contexts, "Context file (JSONL {id, context})")->required();
    c_gen->add_option("template", gd.template_spec,
                      "plain, chain_of_thought, self_consistency_cot, tree_of_thought, or a template JSON file")
        ->required();
    c_gen->add_option("--mock", gd.mock, "Replay scripted responses from this fixture instead of a live service");
    c_gen->add_option("--out", gd.output, "Generated corpus to write");
    c_gen->add_option("--quarantine", gd.quarantine, "Quarantine manifest (default: <out>.quarantine.jsonl)");
    c_gen->add_option("--k", gd.k_per_context, "Prompts per context");
    c_gen->add_option("--parallelism", gd.parallelism, "Requests in flight");
    c_gen->add_option("--max-attempts", gd.max_attempts, "Attempts per prompt on timeout");
    c_gen->add_option("--timeout-ms", gd.timeout_ms, "Per-request timeout");
    c_gen->add_flag("!--no-label", gd.label, "Skip provisional quality labels");
    c_gen->add_option("--seed", gd.seed, "Recorded seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    return guarded(
        [&]() -> int {
            if (*c_pre) return cmd_preprocess(pre, out);
            if (*c_stats) return cmd_stats(st, out);
            if (*c_train) return cmd_train(tr, out);
            if (*c_merge) return cmd_merge(mg, out);
            if (*c_eval) return cmd_eval(ev, out);
            if (*c_gen) return cmd_gen_data(gd, out, env);
            return kExitUsage;
        },
        err);
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Environment& env = {}) {
    std::vector<const char*> argv{"eduqa"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err, env);
}

}  // namespace eduqa::cli
