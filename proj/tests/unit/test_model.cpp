// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <unistd.h>
#include <cstring>

#include "eduqa/model/checkpoint.hpp"
#include "eduqa/model/decoder.hpp"

namespace num = eduqa::num;
using eduqa::model::AttentionMask;
using eduqa::model::DecoderModel;
using eduqa::model::ForwardTrace;
using eduqa::model::ModelConfig;

namespace {

bool same_row(const num::Tensor<double>& a, const num::Tensor<double>& b, std::size_t row) {
    for (std::size_t c = 0; c < a.cols(); ++c)
        if (a.at(row, c) != b.at(row, c)) return false;
    return true;
}

// Layered dependency graph of windowed attention: (layer l, pos i) reads
// (l-1, j) for i-W < j <= i. Returns whether input position `from` reaches
// (layer, to).
bool reachable(std::size_t W, std::size_t layer, std::size_t from, std::size_t to) {
    std::set<std::size_t> frontier{from};
    for (std::size_t l = 0; l < layer; ++l) {
        std::set<std::size_t> next;
        for (auto j : frontier)
            for (std::size_t i = j; i < j + W; ++i) next.insert(i);
        frontier = std::move(next);
    }
    return frontier.count(to) != 0;
}

}  // namespace

TEST(ModelConfig, Validation) {
    auto c = ModelConfig::sliding(30, 1, 4, 16, 2);
    EXPECT_THROW(c.validate(), eduqa::ConfigError);  // 30 % 4 != 0
    c = ModelConfig::sliding(32, 1, 4, 16, 0);
    EXPECT_THROW(c.validate(), eduqa::ConfigError);
    c = ModelConfig::alibi(32, 1, 4, 16);
    c.embedding_layernorm = false;
    EXPECT_THROW(c.validate(), eduqa::ConfigError);
    auto ok = ModelConfig::sliding(32, 1, 4, 16, 100, 8);  // W > max_seq_len is permitted
    EXPECT_NO_THROW(ok.validate());
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
    auto c = ModelConfig::alibi(16, 3, 2, 40, 50);
    nlohmann::json j = c;
    EXPECT_EQ(j.get<ModelConfig>(), c);
    j["bogus"] = 1;
    EXPECT_THROW(j.get<ModelConfig>(), eduqa::ConfigError);
}

TEST(Forward, ZeroModelGivesUniformLogits) {
    auto m = DecoderModel<double>::zeros(ModelConfig::sliding(8, 2, 2, 10, 4));
    auto logits = m.forward({3});
    for (auto v : logits.data()) EXPECT_EQ(v, logits.data()[0]);
}

TEST(Forward, WindowTwoPositionFourSeesOnlyThreeAndFour) {
    DecoderModel<double> m(ModelConfig::sliding(8, 2, 2, 10, 2), 1);
    ForwardTrace<double> trace;
    m.forward({1, 2, 3, 4, 5}, nullptr, &trace);
    ASSERT_EQ(trace.attention_weights.size(), 2u);
    for (const auto& head : trace.attention_weights[0]) {
        for (std::size_t k = 0; k < 5; ++k) {
            const double w = head.at(4, k);
            if (k == 3 || k == 4) {
                EXPECT_GT(w, 0.0);
            } else {
                EXPECT_EQ(w, 0.0) << "key " << k;
            }
        }
    }
}

TEST(Forward, WideWindowMatchesFullAttention) {
    const std::vector<std::int64_t> tokens = {1, 7, 3, 2, 9, 0};
    DecoderModel<float> windowed(ModelConfig::sliding(16, 2, 2, 10, 6, 32), 5);
    DecoderModel<float> full(ModelConfig::sliding(16, 2, 2, 10, 32, 32), 5);
    auto a = windowed.forward(tokens);
    auto b = full.forward(tokens);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-6);
}

TEST(Forward, Errors) {
    DecoderModel<float> m(ModelConfig::sliding(8, 1, 2, 10, 2, 4), 0);
    EXPECT_THROW(m.forward({10}), eduqa::IndexError);
    EXPECT_THROW(m.forward({1, 2, 3, 4, 5}), eduqa::LengthError);
    eduqa::kv::RollingKVCache<float> wrong(3, 1, 8);
    EXPECT_THROW(m.forward({1}, &wrong), eduqa::ConfigError);
    eduqa::kv::RollingKVCache<float> wrong_layers(2, 2, 8);
    EXPECT_THROW(m.forward({1}, &wrong_layers), eduqa::ConfigError);
}

TEST(Forward, CausalityUnderPerturbation) {
    for (auto config : {ModelConfig::sliding(8, 2, 2, 12, 3), ModelConfig::alibi(8, 2, 2, 12)}) {
        DecoderModel<double> m(config, 2);
        std::vector<std::int64_t> tokens = {1, 2, 3, 4, 5, 6, 7};
        auto base = m.forward(tokens);
        for (std::size_t j = 0; j < tokens.size(); ++j) {
            auto perturbed = tokens;
            perturbed[j] = 11;
            auto out = m.forward(perturbed);
            for (std::size_t i = 0; i < j; ++i) EXPECT_TRUE(same_row(base, out, i)) << "j=" << j << " i=" << i;
            EXPECT_FALSE(same_row(base, out, j));
        }
    }
}

TEST(Forward, WindowSoundnessInFirstLayer) {
    const std::size_t W = 3;
    DecoderModel<double> m(ModelConfig::sliding(8, 2, 2, 12, W), 4);
    std::vector<std::int64_t> tokens = {1, 2, 3, 4, 5, 6, 7, 8};
    ForwardTrace<double> base;
    m.forward(tokens, nullptr, &base);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        auto perturbed = tokens;
        perturbed[j] = 11;
        ForwardTrace<double> trace;
        m.forward(perturbed, nullptr, &trace);
        for (std::size_t i = j; i < tokens.size(); ++i) {
            const bool unchanged = same_row(base.attention_outputs[0], trace.attention_outputs[0], i);
            if (i - j >= W) EXPECT_TRUE(unchanged) << "i=" << i << " j=" << j;
            else EXPECT_FALSE(unchanged) << "i=" << i << " j=" << j;
        }
    }
}

TEST(Forward, CrossLayerReachMatchesReachabilityOracle) {
    const std::size_t W = 2, L = 3;
    DecoderModel<double> m(ModelConfig::sliding(8, L, 2, 12, W), 8);
    std::vector<std::int64_t> tokens = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    ForwardTrace<double> base;
    auto base_logits = m.forward(tokens, nullptr, &base);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        auto perturbed = tokens;
        perturbed[j] = 11;
        ForwardTrace<double> trace;
        auto logits = m.forward(perturbed, nullptr, &trace);
        for (std::size_t i = j; i < tokens.size(); ++i) {
            for (std::size_t l = 0; l < L; ++l) {
                const bool changed = !same_row(base.layer_outputs[l], trace.layer_outputs[l], i);
                EXPECT_EQ(changed, reachable(W, l + 1, j, i)) << "layer " << l + 1 << " j=" << j << " i=" << i;
            }
            const bool logit_changed = !same_row(base_logits, logits, i);
            EXPECT_EQ(logit_changed, reachable(W, L, j, i));
            if (logit_changed) {
                EXPECT_LT(i - j, W * L);
            }
        }
    }
    // The headline case: position 0 reaches position 3 only by the third layer.
    EXPECT_FALSE(reachable(W, 1, 0, 3));
    EXPECT_TRUE(reachable(W, 3, 0, 3));
}

TEST(Forward, DeterministicInitialisation) {
    auto c = ModelConfig::sliding(16, 2, 2, 20, 4);
    DecoderModel<float> a(c, 123), b(c, 123), other(c, 124);
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto& x = a.parameters()[i].tensor;
        const auto& y = b.parameters()[i].tensor;
        EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
    }
    const auto& e1 = a.param("tok_emb");
    const auto& e2 = other.param("tok_emb");
    EXPECT_FALSE(std::equal(e1.data().begin(), e1.data().end(), e2.data().begin()));
    auto l1 = a.forward({1, 2, 3});
    auto l2 = b.forward({1, 2, 3});
    EXPECT_TRUE(std::equal(l1.data().begin(), l1.data().end(), l2.data().begin()));
}

TEST(Forward, EmbeddingLayerNormNormalisesRows) {
    DecoderModel<double> m(ModelConfig::alibi(16, 1, 2, 20), 3);
    ForwardTrace<double> trace;
    m.forward({1, 5, 9, 19}, nullptr, &trace);
    const auto& e = trace.embedding_output;
    for (std::size_t r = 0; r < e.rows(); ++r) {
        double mean = 0, var = 0;
        for (std::size_t c = 0; c < e.cols(); ++c) mean += e.at(r, c);
        mean /= static_cast<double>(e.cols());
        for (std::size_t c = 0; c < e.cols(); ++c) var += (e.at(r, c) - mean) * (e.at(r, c) - mean);
        var /= static_cast<double>(e.cols());
        EXPECT_NEAR(mean, 0.0, 1e-5);
        EXPECT_NEAR(var, 1.0, 1e-5);
    }
}

TEST(Alibi, ZeroAtDistanceZero) {
    auto b = eduqa::model::alibi_bias(4, {0, 1, 2}, {0, 1, 2});
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(b.data()[(h * 3 + i) * 3 + i], 0.0);
}

TEST(Alibi, LinearInDistance) {
    auto b = eduqa::model::alibi_bias(4, {2}, {0, 1, 2});
    for (std::size_t h = 0; h < 4; ++h) {
        const double d1 = b.data()[h * 3 + 1], d2 = b.data()[h * 3 + 0];
        EXPECT_DOUBLE_EQ(d2, 2 * d1);
    }
}

TEST(Alibi, EightHeadSchedule) {
    // slope(h) = 2^(-8(h+1)/8) -> head 0 slope 1/2, head 7 slope 1/256.
    auto b = eduqa::model::alibi_bias(8, {1}, {0});
    EXPECT_DOUBLE_EQ(b.data()[0], -0.5);
    EXPECT_DOUBLE_EQ(b.data()[7], -1.0 / 256.0);
}

TEST(Alibi, StrictlyDecreasingWithDistanceForEveryHead) {
    for (std::size_t H : {1u, 2u, 3u, 8u, 12u}) {
        std::vector<std::int64_t> keys;
        for (int k = 0; k <= 20; ++k) keys.push_back(k);
        auto b = eduqa::model::alibi_bias(H, {20}, keys);
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t k = 1; k <= 20; ++k) {
                // key k-1 is farther than key k
                EXPECT_LT(b.data()[h * 21 + k - 1], b.data()[h * 21 + k]);
            }
    }
}

TEST(Alibi, NegativePositionRejected) {
    EXPECT_THROW(eduqa::model::alibi_bias(2, {-1}, {0}), eduqa::IndexError);
}

TEST(SlidingMask, WindowOneKeepsOnlySelf) {
    AttentionMask mask{{0, 1, 2, 3}, {0, 1, 2, 3}, 1};
    for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(mask.allowed(q, k), q == k);
}

TEST(SlidingMask, WideWindowIsPlainCausal) {
    AttentionMask windowed{{0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}, 5};
    AttentionMask causal{{0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}, std::nullopt};
    EXPECT_EQ(windowed.flat(), causal.flat());
}

TEST(SlidingMask, AppliesNegativeInfinityOutsideWindow) {
    auto scores = num::Tensor<double>::full({3, 3}, 2.0);
    auto masked = eduqa::model::apply_sliding_window_mask(scores, {0, 1, 2}, {0, 1, 2}, 2);
    EXPECT_EQ(masked.at(2, 0), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(masked.at(0, 1), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(masked.at(2, 1), 2.0);
    EXPECT_EQ(masked.at(2, 2), 2.0);
    EXPECT_THROW(eduqa::model::apply_sliding_window_mask(scores, {0, 1, 2}, {0, 1, 2}, 0), eduqa::ConfigError);
}

TEST(ParamCount, ZeroLayerModelIsEmbeddingPlusHead) {
    auto c = ModelConfig::sliding(8, 0, 2, 10, 2);
    DecoderModel<float> m(c, 0);
    // embedding 10*8, head layernorm 2*8, head projection 10*8
    EXPECT_EQ(m.param_count(), 80u + 16u + 80u);
}

TEST(ParamCount, HandTallyRegression) {
    // d=32, 2 layers, 2 heads, vocab 64, feedforward 4x:
    //   embedding 64*32 = 2048
    //   per layer: ln1 64 + attention 4*32*32 = 4096 + ln2 64 + ff 2*128*32 = 8192 -> 12416, x2 = 24832
    //   head: ln 64 + projection 64*32 = 2048 -> 2112
    DecoderModel<float> m(ModelConfig::sliding(32, 2, 2, 64, 4), 0);
    EXPECT_EQ(m.param_count(), 28992u);
    EXPECT_EQ(m.param_count(true), 28992u);
    EXPECT_EQ(eduqa::model::param_count_for(m.config()), 28992u);
}

TEST(ParamCount, AlibiAddsEmbeddingNorm) {
    auto c = ModelConfig::alibi(32, 2, 2, 64);
    EXPECT_EQ(DecoderModel<float>(c, 0).param_count(), 28992u + 64u);
}

class CheckpointTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() / ("eduqa_ckpt_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }
    std::filesystem::path dir_;
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
    DecoderModel<float> m(ModelConfig::alibi(16, 2, 2, 30), 77);
    auto first = dir_ / "a.ckpt";
    auto second = dir_ / "b.ckpt";
    eduqa::ckpt::save(eduqa::ckpt::model_checkpoint(m, {{"seed", 77}}), first);
    auto loaded_ckpt = eduqa::ckpt::load(first);
    auto loaded = eduqa::ckpt::model_from_checkpoint<float>(loaded_ckpt);
    eduqa::ckpt::save(eduqa::ckpt::model_checkpoint(loaded, loaded_ckpt.meta), second);
    EXPECT_EQ(eduqa::io::read_file(first), eduqa::io::read_file(second));
    auto a = m.forward({1, 2, 3});
    auto b = loaded.forward({1, 2, 3});
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_F(CheckpointTest, LayoutStartsWithMagicAndManifestLength) {
    DecoderModel<float> m(ModelConfig::sliding(8, 0, 2, 4, 2), 1);
    auto bytes = eduqa::ckpt::encode(eduqa::ckpt::model_checkpoint(m));
    ASSERT_GE(bytes.size(), 16u);
    EXPECT_EQ(bytes.substr(0, 8), "EDUQALM1");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    auto manifest = nlohmann::json::parse(bytes.substr(16, len));
    EXPECT_EQ(manifest["kind"], "model");
    std::size_t payload = 0;
    for (const auto& t : manifest["tensors"]) {
        EXPECT_EQ(t["dtype"], "f32");
        payload += num::numel(t["shape"].get<num::Shape>()) * 4;
    }
    EXPECT_EQ(bytes.size(), 16 + len + payload);
}

TEST_F(CheckpointTest, CorruptFilesAreParseErrors) {
    EXPECT_THROW(eduqa::ckpt::decode("not a checkpoint at all"), eduqa::ParseError);
    DecoderModel<float> m(ModelConfig::sliding(8, 0, 2, 4, 2), 1);
    auto bytes = eduqa::ckpt::encode(eduqa::ckpt::model_checkpoint(m));
    EXPECT_THROW(eduqa::ckpt::decode(bytes.substr(0, bytes.size() - 1)), eduqa::ParseError);
    EXPECT_THROW(eduqa::ckpt::decode(bytes + "x"), eduqa::ParseError);
}
