// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "proxyv/attention/layout.hpp"
#include "proxyv/attention/mask.hpp"
#include "proxyv/attention/mha.hpp"
#include "proxyv/errors.hpp"
#include "proxyv/numerics/kernels.hpp"
#include "test_util.hpp"

using namespace proxyv;
using proxyv::testing::max_diff;
using proxyv::testing::naive_matmul;
using proxyv::testing::random_tensor;

namespace {

TokenLayout roles(std::initializer_list<TokenRole> rs) {
    std::vector<TokenInfo> t;
    int pos = 0, v = 0;
    for (auto r : rs) {
        TokenInfo i;
        i.role = r;
        i.position = pos++;
        if (r == TokenRole::Vision) {
            i.grid = 0;
            i.row = 0;
            i.col = v++;
        }
        t.push_back(i);
    }
    return TokenLayout(std::move(t));
}

std::vector<int> iota(std::size_t n) {
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

/// Scalar-loop attention in double: per-head scores, masked softmax, weighted values,
/// interleaved-pair rotary embedding when positions are given.
Tensor<double> reference_attention(const Tensor<double>& x, const AttentionParams<double>& p,
                                   const std::vector<int>& q_idx, const std::vector<int>& kv_idx,
                                   const AttentionMask& mask, const std::vector<int>& positions) {
    const std::size_t d = p.dim(), hd = p.head_dim();
    auto q = naive_matmul(x, p.wq.value), k = naive_matmul(x, p.wk.value), v = naive_matmul(x, p.wv.value);
    const auto rotate = [&](Tensor<double>& t) {
        for (std::size_t r = 0; r < t.rows(); ++r)
            for (std::size_t h = 0; h < p.heads; ++h)
                for (std::size_t i = 0; i < hd / 2; ++i) {
                    const double th = positions[r] * std::pow(10000.0, -2.0 * double(i) / double(hd));
                    double& a = t.at(r, h * hd + 2 * i);
                    double& b = t.at(r, h * hd + 2 * i + 1);
                    const double a0 = a, b0 = b;
                    a = a0 * std::cos(th) - b0 * std::sin(th);
                    b = a0 * std::sin(th) + b0 * std::cos(th);
                }
    };
    if (!positions.empty()) {
        rotate(q);
        rotate(k);
    }
    Tensor<double> ctx(Shape{q_idx.size(), d});
    for (std::size_t h = 0; h < p.heads; ++h) {
        for (std::size_t a = 0; a < q_idx.size(); ++a) {
            std::vector<double> s(kv_idx.size(), -INFINITY);
            double mx = -INFINITY;
            for (std::size_t b = 0; b < kv_idx.size(); ++b) {
                if (!mask.allowed(a, b)) continue;
                double dot = 0.0;
                for (std::size_t j = 0; j < hd; ++j) dot += q.at(q_idx[a], h * hd + j) * k.at(kv_idx[b], h * hd + j);
                s[b] = dot / std::sqrt(double(hd));
                mx = std::max(mx, s[b]);
            }
            double z = 0.0;
            for (auto& e : s) z += (e = std::isinf(e) ? 0.0 : std::exp(e - mx));
            for (std::size_t b = 0; b < kv_idx.size(); ++b)
                for (std::size_t j = 0; j < hd; ++j) ctx.at(a, h * hd + j) += s[b] / z * v.at(kv_idx[b], h * hd + j);
        }
    }
    return naive_matmul(ctx, p.wo.value);
}

}  // namespace

TEST(TokenLayout, GridsThenTextOrdersVisionSeparatorsAndText) {
    const auto l = TokenLayout::grids_then_text(2, 3, 4);
    ASSERT_EQ(l.size(), 2u * 10u + 4u);
    EXPECT_EQ(l.role(9), TokenRole::Separator);
    EXPECT_EQ(l.role(19), TokenRole::Separator);
    EXPECT_EQ(l[4].row, 1);
    EXPECT_EQ(l[4].col, 1);
    EXPECT_EQ(l[13].grid, 1);
    EXPECT_EQ(l.vision_positions().size(), 18u);
    EXPECT_EQ(l.text_like_positions().size(), 6u);
    EXPECT_EQ(l.vision_positions_of_grid(1).front(), 10);
    EXPECT_NO_THROW(l.validate());
}

TEST(TokenLayout, ValidateRejectsMissingSeparator) {
    std::vector<TokenInfo> t = TokenLayout::grids_then_text(1, 2, 1).tokens();
    t.erase(t.begin() + 4);
    EXPECT_THROW(TokenLayout(t).validate(), InputError);
}

TEST(TokenLayout, ValidateRejectsNonRasterOrder) {
    std::vector<TokenInfo> t = TokenLayout::grids_then_text(1, 2, 1).tokens();
    std::swap(t[1].col, t[2].col);
    std::swap(t[1].row, t[2].row);
    EXPECT_THROW(TokenLayout(t).validate(), InputError);
}

TEST(Masks, CausalIsLowerTriangular) {
    const auto m = causal_mask(TokenLayout::grids_then_text(1, 2, 2));
    for (std::size_t i = 0; i < m.queries(); ++i)
        for (std::size_t j = 0; j < m.keys(); ++j) EXPECT_EQ(m.allowed(i, j), j <= i);
}

TEST(Masks, VisionQueryKeepsSelfAndPrecedingText) {
    const auto l = roles({TokenRole::Text, TokenRole::Vision, TokenRole::Vision, TokenRole::Text});
    const auto m = vision_masked_mask(l);
    EXPECT_TRUE(m.allowed(2, 0));
    EXPECT_FALSE(m.allowed(2, 1));
    EXPECT_TRUE(m.allowed(2, 2));
    EXPECT_EQ(m.permitted_in_row(2), 2u);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_TRUE(m.allowed(3, j));
}

TEST(Masks, VisionOnlyLayoutAttendsSelf) {
    const auto m = vision_masked_mask(roles({TokenRole::Vision, TokenRole::Vision}));
    EXPECT_TRUE(m.allowed(0, 0));
    EXPECT_TRUE(m.allowed(1, 1));
    EXPECT_FALSE(m.allowed(1, 0));
    EXPECT_TRUE(m.rows_nonempty());
}

TEST(Masks, NoVisionMeansCausal) {
    const auto l = roles({TokenRole::Text, TokenRole::Text, TokenRole::Separator});
    EXPECT_EQ(vision_masked_mask(l), causal_mask(l));
}

TEST(Masks, StrictVariantsAreOptIn) {
    const auto l = roles({TokenRole::Text, TokenRole::Vision, TokenRole::Vision});
    const auto m = vision_masked_mask(l, {.keep_self = true, .allow_preceding_text = false});
    EXPECT_FALSE(m.allowed(1, 0));
    EXPECT_THROW(vision_masked_mask(l, {.keep_self = false, .allow_preceding_text = false}), InputError);
}

TEST(Masks, EveryVisionQuerySeesExactlyItselfAmongVision) {
    const auto l = TokenLayout::grids_then_text(2, 3, 3);
    const auto m = vision_masked_mask(l);
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (!l.is_vision(i)) continue;
        for (std::size_t j = 0; j < l.size(); ++j) {
            if (l.is_vision(j)) {
                EXPECT_EQ(m.allowed(i, j), i == j);
            }
        }
    }
    EXPECT_TRUE(m.rows_nonempty());
}

TEST(Masks, PartialMaskCoversTheFinalLayers) {
    const auto half = partial_mask(8, 0.5);
    for (std::size_t l = 0; l < 8; ++l) EXPECT_EQ(half[l], l >= 4 ? MaskKind::VisionMasked : MaskKind::Causal);
    for (auto k : partial_mask(8, 1.0)) EXPECT_EQ(k, MaskKind::VisionMasked);
    for (auto k : partial_mask(8, 0.0)) EXPECT_EQ(k, MaskKind::Causal);
    const auto q = partial_mask(4, 0.3);
    EXPECT_EQ(q[2], MaskKind::VisionMasked);
    EXPECT_EQ(q[1], MaskKind::Causal);
    EXPECT_THROW(partial_mask(4, 1.5), InputError);
}

TEST(Mha, MatchesScalarReferenceWithRotary) {
    SeededRng rng(5);
    const auto p = AttentionParams<double>::init(8, 2, rng, 0.4, "a.");
    const auto layout = TokenLayout::grids_then_text(1, 2, 2);
    const auto x = random_tensor<double>({layout.size(), 8}, 6);
    const auto full = iota(layout.size());
    const auto mask = causal_mask(layout);
    const auto pos = layout.rope_positions();
    const auto got = mha(x, p, full, full, mask, pos);
    EXPECT_LT(max_diff(got, reference_attention(x, p, full, full, mask, pos)), 1e-12);
}

TEST(Mha, SubsetQueriesMatchReference) {
    SeededRng rng(7);
    const auto p = AttentionParams<double>::init(8, 4, rng, 0.4, "a.");
    const auto layout = TokenLayout::grids_then_text(1, 2, 3);
    const auto x = random_tensor<double>({layout.size(), 8}, 8);
    const std::vector<int> q{5, 6, 7}, kv = iota(layout.size());
    const auto mask = vision_masked_mask(layout).restrict(q, kv);
    EXPECT_LT(max_diff(mha(x, p, q, kv, mask), reference_attention(x, p, q, kv, mask, {})), 1e-12);
}

TEST(Mha, FullCausalEqualsRowWiseEvaluationBitForBit) {
    SeededRng rng(9);
    const auto p = AttentionParams<float>::init(16, 4, rng, 0.3, "a.");
    const auto layout = TokenLayout::grids_then_text(1, 3, 2);
    const auto x = random_tensor<float>({layout.size(), 16}, 10);
    const auto all = iota(layout.size());
    const auto mask = causal_mask(layout);
    const auto pos = layout.rope_positions();
    const auto full = mha(x, p, all, all, mask, pos);
    for (int i : all) {
        const std::vector<int> one{i};
        const auto row = mha(x, p, one, all, mask.restrict(one, all), pos);
        for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(row.at(0, c), full.at(static_cast<std::size_t>(i), c));
    }
}

TEST(Mha, SingleKeyWithIdentityWeightsCopiesThatValue) {
    AttentionParams<double> p;
    p.heads = 1;
    p.wq = Parameter<double>("wq", Tensor<double>::identity(4));
    p.wk = Parameter<double>("wk", Tensor<double>::identity(4));
    p.wv = Parameter<double>("wv", Tensor<double>::identity(4));
    p.wo = Parameter<double>("wo", Tensor<double>::identity(4));
    const auto x = random_tensor<double>({3, 4}, 11);
    AttentionMask m(3, 3);
    m.set(0, 2, true);
    m.set(1, 0, true);
    m.set(2, 1, true);
    const auto all = iota(3);
    const auto y = mha(x, p, all, all, m);
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_DOUBLE_EQ(y.at(0, c), x.at(2, c));
        EXPECT_DOUBLE_EQ(y.at(1, c), x.at(0, c));
        EXPECT_DOUBLE_EQ(y.at(2, c), x.at(1, c));
    }
}

TEST(Mha, EmptyMaskRowIsRejected) {
    SeededRng rng(1);
    const auto p = AttentionParams<double>::init(4, 1, rng, 0.1, "a.");
    const auto all = iota(2);
    EXPECT_THROW(mha(random_tensor<double>({2, 4}, 1), p, all, all, AttentionMask(2, 2)), InputError);
}

TEST(Mha, RotaryScoresDependOnlyOnRelativeOffset) {
    SeededRng rng(2);
    const auto p = AttentionParams<double>::init(8, 1, rng, 0.5, "a.");
    const auto x = random_tensor<double>({2, 8}, 3);
    const auto all = iota(2);
    AttentionMask m(2, 2);
    m.set(1, 0, true);
    m.set(1, 1, true);
    m.set(0, 0, true);
    const auto a = mha(x, p, all, all, m, std::vector<int>{3, 7});
    const auto b = mha(x, p, all, all, m, std::vector<int>{10, 14});
    EXPECT_LT(max_diff(a, b), 1e-12);
}
