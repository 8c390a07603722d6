// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "proxyv/errors.hpp"
#include "proxyv/numerics/autodiff.hpp"
#include "proxyv/numerics/grad_check.hpp"
#include "proxyv/numerics/kernels.hpp"
#include "proxyv/numerics/mac_counter.hpp"
#include "proxyv/numerics/optimizer.hpp"
#include "test_util.hpp"

using namespace proxyv;
using proxyv::testing::max_diff;
using proxyv::testing::naive_matmul;
using proxyv::testing::random_tensor;

TEST(Gemm, MatchesNaiveProductOnRaggedShapes) {
    // Widths straddle the vector tile sizes so every tail path runs.
    const std::size_t dims[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 16}, {5, 33, 47}, {9, 64, 65}, {17, 3, 129}};
    std::uint64_t seed = 1;
    for (auto& d : dims) {
        const auto a = random_tensor<double>({d[0], d[1]}, seed++);
        const auto b = random_tensor<double>({d[1], d[2]}, seed++);
        EXPECT_LT(max_diff(matmul(a, b), naive_matmul(a, b)), 1e-12) << d[0] << "x" << d[1] << "x" << d[2];
        const auto af = a.cast<float>(), bf = b.cast<float>();
        EXPECT_LT(max_diff(matmul(af, bf), naive_matmul(af, bf)), 1e-4);
    }
}

TEST(Gemm, AccumulateAddsIntoOutput) {
    const auto a = random_tensor<double>({6, 10}, 3), b = random_tensor<double>({10, 20}, 4);
    Tensor<double> c = random_tensor<double>({6, 20}, 5);
    const Tensor<double> before = c;
    gemm(a.data(), b.data(), c.data(), 6, 10, 20, true);
    const auto ab = naive_matmul(a, b);
    for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_NEAR(c[i], before[i] + ab[i], 1e-12);
}

TEST(Gemm, TransposedVariantsAgree) {
    const auto a = random_tensor<double>({7, 9}, 6), b = random_tensor<double>({11, 9}, 7);
    EXPECT_LT(max_diff(matmul_nt(a, b), naive_matmul(a, transpose(b))), 1e-12);
    const auto c = random_tensor<double>({7, 5}, 8);
    EXPECT_LT(max_diff(matmul_tn(a, c), naive_matmul(transpose(a), c)), 1e-12);
}

TEST(Gemm, RowsAreIndependentOfBatchComposition) {
    // Each output row must be bit-identical whether computed alone or in a block.
    const auto a = random_tensor<float>({13, 40}, 10), b = random_tensor<float>({40, 37}, 11);
    const auto full = matmul(a, b);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        Tensor<float> one(Shape{1, 40});
        std::copy(a.row(r).begin(), a.row(r).end(), one.values().begin());
        const auto single = matmul(one, b);
        for (std::size_t j = 0; j < 37; ++j) EXPECT_EQ(single.at(0, j), full.at(r, j));
    }
}

TEST(Gemm, ShapeMismatchThrows) {
    EXPECT_THROW(matmul(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{4, 2})), DimensionError);
}

TEST(MacCounter, CountsProductsOnlyInsideScope) {
    const auto a = random_tensor<float>({4, 6}, 1), b = random_tensor<float>({6, 5}, 2);
    matmul(a, b);
    MacScope scope;
    matmul(a, b);
    {
        MacSuspend off;
        matmul(a, b);
    }
    EXPECT_EQ(scope.macs(), 4u * 6u * 5u);
}

TEST(Softmax, RowsSumToOneAndAreShiftInvariant) {
    auto x = random_tensor<double>({5, 9}, 3, 4.0);
    const auto s = softmax(x);
    for (std::size_t r = 0; r < 5; ++r) {
        double sum = 0.0;
        for (double v : s.row(r)) {
            EXPECT_GT(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    Tensor<double> shifted = x;
    for (std::size_t r = 0; r < 5; ++r)
        for (auto& v : shifted.row(r)) v += 100.0 * double(r + 1);
    EXPECT_LT(max_diff(softmax(shifted), s), 1e-12);
}

TEST(Softmax, ExtremeLogitsStayFinite) {
    const Tensor<float> x = Tensor<float>::matrix(1, 3, {1000.f, -1000.f, 999.f});
    const auto s = softmax(x);
    EXPECT_TRUE(s.all_finite());
    EXPECT_NEAR(s[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-6);
}

TEST(RmsNorm, MatchesDefinition) {
    const auto x = random_tensor<double>({3, 8}, 4), g = random_tensor<double>({8}, 5);
    const auto y = rms_norm(x, g, 1e-6);
    for (std::size_t r = 0; r < 3; ++r) {
        double ms = 0.0;
        for (double v : x.row(r)) ms += v * v;
        ms /= 8.0;
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(r, c), x.at(r, c) / std::sqrt(ms + 1e-6) * g[c], 1e-12);
    }
}

TEST(CrossEntropy, MatchesLogSumExp) {
    const auto x = random_tensor<double>({4, 6}, 6, 3.0);
    const std::vector<int> t{0, 5, 2, 2};
    double expected = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
        double z = 0.0;
        for (double v : x.row(r)) z += std::exp(v);
        expected += std::log(z) - x.at(r, static_cast<std::size_t>(t[r]));
    }
    EXPECT_NEAR(cross_entropy(x, t), expected / 4.0, 1e-12);
    EXPECT_THROW(cross_entropy(x, std::vector<int>{0, 6, 0, 0}), InputError);
}

TEST(GatedFfn, MatchesComposition) {
    const auto x = random_tensor<double>({3, 4}, 1), g = random_tensor<double>({4, 6}, 2),
               u = random_tensor<double>({4, 6}, 3), d = random_tensor<double>({6, 4}, 4);
    const auto gate = naive_matmul(x, g), up = naive_matmul(x, u);
    Tensor<double> h(Shape{3, 6});
    for (std::size_t i = 0; i < h.numel(); ++i) h[i] = gate[i] / (1.0 + std::exp(-gate[i])) * up[i];
    EXPECT_LT(max_diff(gated_ffn(x, g, u, d), naive_matmul(h, d)), 1e-12);
}

TEST(Rng, SameSeedSameStreamAndDerivedStreamsDiffer) {
    SeededRng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    std::set<std::uint64_t> firsts;
    for (std::uint64_t s = 0; s < 16; ++s) firsts.insert(SeededRng::derive(42, s).next_u64());
    EXPECT_EQ(firsts.size(), 16u);
}

TEST(Rng, BelowIsInRangeAndCoversIt) {
    SeededRng r(3);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = r.below(7);
        ASSERT_LT(v, 7u);
        ++hits[v];
    }
    for (int h : hits) EXPECT_GT(h, 800);
}

// Central-difference checks of every recorded primitive.
namespace {

Parameter<double> param(const char* name, Shape s, std::uint64_t seed, double scale = 1.0) {
    return Parameter<double>(name, random_tensor<double>(std::move(s), seed, scale));
}

/// Projects an output onto fixed random weights so every output coordinate matters.
Var<double> probe(Tape<double>& t, Var<double> y, std::uint64_t seed) {
    const Tensor<double> w = random_tensor<double>(y.value().shape(), seed);
    return ad::sum(ad::mul(y, t.constant(w)));
}

void expect_grad_ok(const ScalarFunction& fn, std::vector<Parameter<double>*> ps) {
    const auto report = grad_check(fn, ps);
    EXPECT_TRUE(report.passed) << report.worst_param << "[" << report.worst_index << "] analytic "
                               << report.worst_analytic << " numeric " << report.worst_numeric << " rel "
                               << report.max_rel_error;
}

}  // namespace

TEST(Autodiff, MatmulFamily) {
    auto a = param("a", {3, 4}, 1), b = param("b", {4, 5}, 2), c = param("c", {5, 4}, 3);
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::matmul(t.param(a), t.param(b)), 9); }, {&a, &b});
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::matmul_nt(t.param(a), t.param(c)), 9); }, {&a, &c});
}

TEST(Autodiff, BlockMatmulAndTranspose) {
    auto a = param("a", {6, 4}, 1), b = param("b", {8, 3}, 2), s = param("s", {4, 3}, 3);
    expect_grad_ok(
        [&](Tape<double>& t) {
            return probe(t, ad::block_matmul(t.param(a), t.param(b), 2, {.trans_a = false, .trans_b = false}), 4);
        },
        {&a, &b});
    expect_grad_ok(
        [&](Tape<double>& t) { return probe(t, ad::block_matmul(t.param(a), t.param(s), 2, {.shared_b = true}), 5); },
        {&a, &s});
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::block_transpose(t.param(a), 2), 6); }, {&a});
}

TEST(Autodiff, ElementwiseAndNorms) {
    auto x = param("x", {3, 6}, 1), y = param("y", {3, 6}, 2), g = param("g", {6}, 3);
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::silu_mul(t.param(x), t.param(y)), 4); }, {&x, &y});
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::silu(t.param(x)), 5); }, {&x});
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::rms_norm(t.param(x), t.param(g), 1e-6), 6); }, {&x, &g});
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::softmax_rows(t.param(x)), 7); }, {&x});
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::scale(ad::add(t.param(x), t.param(y)), 0.5), 8); },
                   {&x, &y});
}

TEST(Autodiff, CrossEntropyAndRowOps) {
    auto x = param("x", {4, 5}, 1), z = param("z", {2, 5}, 2), w = param("w", {4, 3}, 3);
    const std::vector<int> targets{1, 4, 0, 2};
    expect_grad_ok([&](Tape<double>& t) { return ad::cross_entropy(t.param(x), targets); }, {&x});
    const std::vector<int> rows{3, 0, 3, 1};
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::gather_rows(t.param(x), rows), 4); }, {&x});
    const std::vector<RowRef> layout{{1, 0}, {0, 2}, {1, 1}, {0, 0}, {0, 2}};
    expect_grad_ok(
        [&](Tape<double>& t) {
            const std::vector<Var<double>> src{t.param(x), t.param(z)};
            return probe(t, ad::stitch_rows<double>(src, layout), 5);
        },
        {&x, &z});
    expect_grad_ok([&](Tape<double>& t) { return probe(t, ad::concat_cols(t.param(x), t.param(w)), 6); }, {&x, &w});
}

TEST(Autodiff, ReusedNodesAccumulate) {
    auto x = param("x", {2, 2}, 1);
    expect_grad_ok(
        [&](Tape<double>& t) {
            const auto v = t.param(x);
            return probe(t, ad::matmul(v, v), 2);
        },
        {&x});
}

TEST(Autodiff, BackwardTwiceIsAnError) {
    Tape<double> t;
    auto x = param("x", {1, 1}, 1);
    const auto out = ad::sum(t.param(x));
    t.backward(out);
    EXPECT_THROW(t.backward(out), StateError);
}

TEST(Adam, FirstStepMovesEachCoordinateByLearningRate) {
    // With bias correction the first update is lr * g / (|g| + eps), i.e. lr * sign(g).
    Parameter<double> p("p", Tensor<double>(Shape{3}, std::vector<double>{1.0, -2.0, 0.5}));
    p.grad = Tensor<double>(Shape{3}, std::vector<double>{0.1, -0.3, 0.2});
    Adam<double> opt({.learning_rate = 0.01, .clip_norm = 0.0, .warmup_fraction = 0.0}, 10);
    std::vector<Parameter<double>*> ps{&p};
    opt.step(ps);
    EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(p.value[1], -2.0 + 0.01, 1e-9);
    EXPECT_NEAR(p.value[2], 0.5 - 0.01, 1e-9);
    EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Adam, ClippingScalesTheGradient) {
    Parameter<double> p("p", Tensor<double>(Shape{2}));
    p.grad = Tensor<double>(Shape{2}, std::vector<double>{3.0, 4.0});
    Adam<double> opt({.learning_rate = 1.0, .clip_norm = 1.0, .warmup_fraction = 0.0}, 1);
    std::vector<Parameter<double>*> ps{&p};
    EXPECT_DOUBLE_EQ(opt.step(ps), 5.0);
    EXPECT_NEAR(opt.first_moments()[0][0], 0.1 * 0.6, 1e-12);
}

TEST(Adam, WarmupRampsLinearly) {
    Adam<float> opt({.learning_rate = 1.0, .warmup_fraction = 0.1}, 100);
    EXPECT_DOUBLE_EQ(opt.learning_rate_at(0), 0.1);
    EXPECT_DOUBLE_EQ(opt.learning_rate_at(4), 0.5);
    EXPECT_DOUBLE_EQ(opt.learning_rate_at(10), 1.0);
}
