// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "eduqa/numerics/numerics.hpp"
#include "support/gradcheck.hpp"
#include "support/op_gradchecks.hpp"

using eduqa::num::Tensor;
namespace num = eduqa::num;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    auto I = Tensor<double>::matrix({{1, 0}, {0, 1}});
    auto A = Tensor<double>::matrix({{1, 2}, {3, 4}});
    auto C = num::matmul(I, A);
    EXPECT_EQ(std::vector<double>(C.data().begin(), C.data().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, HandComputedProduct) {
    auto C = num::matmul(Tensor<double>::matrix({{1, 2}, {3, 4}}), Tensor<double>::matrix({{5, 6}, {7, 8}}));
    EXPECT_EQ(std::vector<double>(C.data().begin(), C.data().end()), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({4, 5});
    try {
        num::matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const eduqa::DimensionError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
    }
}

TEST(Matmul, AssociativeOnRandomTriples) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = Tensor<float>::randn({3, 4}, 1.0f, rng);
        auto b = Tensor<float>::randn({4, 2}, 1.0f, rng);
        auto c = Tensor<float>::randn({2, 5}, 1.0f, rng);
        auto left = num::matmul(num::matmul(a, b), c);
        auto right = num::matmul(a, num::matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            const double l = left.data()[i], r = right.data()[i];
            EXPECT_LE(std::abs(l - r), 1e-5 * std::max(1.0, std::abs(l)));
        }
    }
}

TEST(Softmax, UniformRow) {
    auto y = num::softmax_rows(Tensor<double>::matrix({{0, 0, 0}}));
    for (auto v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(Softmax, LargeValuesDoNotOverflow) {
    auto y = num::softmax_rows(Tensor<float>::matrix({{1000, 1000}}));
    EXPECT_FLOAT_EQ(y.data()[0], 0.5f);
    EXPECT_FLOAT_EQ(y.data()[1], 0.5f);
}

TEST(Softmax, ClosedFormTwoEntries) {
    auto y = num::softmax_rows(Tensor<double>::matrix({{0, std::log(3.0)}}));
    EXPECT_NEAR(y.data()[0], 0.25, 1e-12);
    EXPECT_NEAR(y.data()[1], 0.75, 1e-12);
}

TEST(Softmax, NanIsNumericError) {
    EXPECT_THROW(num::softmax_rows(Tensor<double>::matrix({{0, std::nan("")}})), eduqa::NumericError);
}

TEST(Softmax, NegativeInfinityGetsZeroWeight) {
    const double ninf = -std::numeric_limits<double>::infinity();
    auto y = num::softmax_rows(Tensor<double>::matrix({{ninf, 0, 0}}));
    EXPECT_EQ(y.data()[0], 0.0);
    EXPECT_NEAR(y.data()[1], 0.5, 1e-12);
    EXPECT_THROW(num::softmax_rows(Tensor<double>::matrix({{ninf, ninf}})), eduqa::NumericError);
}

TEST(Softmax, RowsSumToOneForLargeMagnitudes) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = Tensor<float>::randn({4, 7}, 1000.0f, rng);
        auto y = num::softmax_rows(x);
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < 7; ++c) {
                EXPECT_GE(y.at(r, c), 0.0f);
                s += y.at(r, c);
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(LayerNorm, ConstantRowBecomesZero) {
    auto y = num::layer_norm(Tensor<double>::matrix({{4, 4, 4}}), Tensor<double>::full({3}, 1.0),
                             Tensor<double>::zeros({3}), 1e-5);
    for (auto v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementRow) {
    auto y = num::layer_norm(Tensor<double>::matrix({{1, 3}}), Tensor<double>::full({2}, 1.0), Tensor<double>::zeros({2}),
                             1e-5);
    EXPECT_NEAR(y.data()[0], -1.0, 1e-5);
    EXPECT_NEAR(y.data()[1], 1.0, 1e-5);
}

TEST(LayerNorm, BiasShiftsMean) {
    std::mt19937_64 rng(5);
    auto x = Tensor<double>::randn({2, 6}, 3.0, rng);
    auto y = num::layer_norm(x, Tensor<double>::full({6}, 1.0), Tensor<double>::full({6}, 5.0), 1e-5);
    for (std::size_t r = 0; r < 2; ++r) {
        double mean = 0, var = 0;
        for (std::size_t c = 0; c < 6; ++c) mean += y.at(r, c);
        mean /= 6;
        for (std::size_t c = 0; c < 6; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        EXPECT_NEAR(mean, 5.0, 1e-9);
        EXPECT_NEAR(var / 6, 1.0, 1e-5);
    }
}

TEST(LayerNorm, NonPositiveEpsIsConfigError) {
    auto x = Tensor<double>::zeros({1, 2});
    auto g = Tensor<double>::full({2}, 1.0), b = Tensor<double>::zeros({2});
    EXPECT_THROW(num::layer_norm(x, g, b, 0.0), eduqa::ConfigError);
    EXPECT_THROW(num::layer_norm(x, g, b, -1.0), eduqa::ConfigError);
}

TEST(LayerNorm, GainLengthMismatch) {
    EXPECT_THROW(num::layer_norm(Tensor<double>::zeros({1, 3}), Tensor<double>::zeros({2}), Tensor<double>::zeros({3})),
                 eduqa::DimensionError);
}

TEST(CrossEntropy, ConfidentCorrectLogitsGiveNearZeroLoss) {
    auto loss = num::cross_entropy(Tensor<double>::matrix({{100, 0, 0}, {0, 0, 100}}), {0, 2});
    EXPECT_NEAR(loss.item(), 0.0, 1e-12);
}

TEST(CrossEntropy, UniformLogitsGiveLogV) {
    auto loss = num::cross_entropy(Tensor<double>::zeros({3, 11}), {0, 5, 10});
    EXPECT_NEAR(loss.item(), std::log(11.0), 1e-12);
}

TEST(CrossEntropy, TwoPositionHandComputed) {
    // nll row0 = -(3 - ln(e + e^2 + e^3)), nll row1 = ln(2 + e); mean of both.
    auto loss = num::cross_entropy(Tensor<double>::matrix({{1, 2, 3}, {0, 0, 1}}), {2, 0});
    EXPECT_NEAR(loss.item(), 0.9795253391882155, 1e-6);
}

TEST(CrossEntropy, OutOfRangeTargetIsIndexError) {
    EXPECT_THROW(num::cross_entropy(Tensor<double>::zeros({1, 4}), {4}), eduqa::IndexError);
    EXPECT_THROW(num::cross_entropy(Tensor<double>::zeros({1, 4}), {-3}), eduqa::IndexError);
}

TEST(CrossEntropy, AllIgnoredGivesZeroLossAndZeroGradient) {
    std::mt19937_64 rng(1);
    auto logits = Tensor<double>::randn({3, 4}, 1.0, rng, true);
    auto loss = num::cross_entropy(logits, {num::kIgnoreIndex, num::kIgnoreIndex, num::kIgnoreIndex});
    EXPECT_EQ(loss.item(), 0.0);
    num::backward(loss);
    for (auto g : logits.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, SumGivesOnes) {
    auto x = Tensor<double>({3}, {1, 2, 3}, true);
    num::backward(num::sum(x));
    for (auto g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
    auto x = Tensor<double>({2}, {1, 2}, true);
    num::backward(num::sum(num::mul(x, x)));
    EXPECT_EQ(x.grad()[0], 2.0);
    EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Backward, NonScalarLossIsContractError) {
    auto x = Tensor<double>({2}, {1, 2}, true);
    EXPECT_THROW(num::backward(num::scale(x, 2.0)), eduqa::ContractError);
}

TEST(Backward, TwoLayerMlpMatchesFiniteDifferences) {
    std::mt19937_64 rng(42);
    std::vector<Tensor<double>> inputs = {Tensor<double>::randn({4, 3}, 1.0, rng, true),
                                          Tensor<double>::randn({5, 3}, 0.5, rng, true),
                                          Tensor<double>::randn({2, 5}, 0.5, rng, true)};
    auto result = eduqa::testing::grad_check(inputs, [](const std::vector<Tensor<double>>& in) {
        auto h = num::gelu(num::matmul(in[0], num::transpose(in[1])));
        auto logits = num::matmul(h, num::transpose(in[2]));
        return num::cross_entropy(logits, {0, 1, 1, 0});
    });
    EXPECT_LT(result.max_rel_error, 1e-4) << result.worst;
}

TEST(Backward, EveryOpPassesGradientCheck) {
    for (const auto& c : eduqa::testing::run_all_op_gradchecks()) {
        EXPECT_LT(c.result.max_rel_error, 1e-4) << c.op << ": " << c.result.worst;
    }
}

TEST(Backward, DeterministicAcrossRuns) {
    auto run = [] {
        std::mt19937_64 rng(9);
        auto w = Tensor<float>::randn({6, 4}, 1.0f, rng, true);
        auto x = Tensor<float>::randn({3, 4}, 1.0f, rng);
        auto loss = num::cross_entropy(num::softmax_rows(num::matmul(x, num::transpose(w))), {1, 2, 5});
        num::backward(loss);
        return std::vector<float>(w.grad().begin(), w.grad().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Backward, LeafGradientsAccumulate) {
    auto x = Tensor<double>({2}, {1, 2}, true);
    num::backward(num::sum(x));
    num::backward(num::sum(x));
    EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Tape, TopologicalOrderAndSingleVisit) {
    auto x = Tensor<double>({2, 2}, {1, 2, 3, 4}, true);
    auto y = num::matmul(x, x);           // x used twice
    auto z = num::add(y, num::scale(x, 2.0));  // diamond
    auto loss = num::sum(z);
    auto tape = num::ComputeTape<double>::record(loss);
    std::set<const void*> seen;
    for (std::size_t i = 0; i < tape.size(); ++i) {
        const auto& node = tape.nodes()[i];
        EXPECT_TRUE(seen.insert(node.get()).second) << "node visited twice";
        for (const auto& p : node->parents) {
            if (!p->requires_grad) continue;
            EXPECT_TRUE(seen.count(p.get())) << "parent recorded after child";
        }
    }
    EXPECT_EQ(tape.nodes().back().get(), loss.node().get());
    EXPECT_EQ(tape.size(), 5u);  // x, matmul, scale, add, sum
}

TEST(Tape, NoGradGuardSkipsGraph) {
    auto x = Tensor<double>({2}, {1, 2}, true);
    num::NoGradGuard guard;
    auto y = num::scale(x, 3.0);
    EXPECT_FALSE(y.requires_grad());
}

TEST(TensorType, RejectsInconsistentData) {
    EXPECT_THROW(Tensor<float>({2, 2}, {1, 2, 3}), eduqa::DimensionError);
    EXPECT_THROW(Tensor<float>({0, 2}, {}), eduqa::DimensionError);
}
