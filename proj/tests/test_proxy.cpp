// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "proxyv/errors.hpp"
#include "proxyv/model/model.hpp"
#include "proxyv/numerics/grad_check.hpp"
#include "proxyv/numerics/kernels.hpp"
#include "proxyv/proxy/proxy.hpp"
#include "test_util.hpp"

using namespace proxyv;
using proxyv::testing::max_diff;
using proxyv::testing::naive_matmul;
using proxyv::testing::random_tensor;

TEST(ParameterCounts, ReferenceShapes) {
    EXPECT_EQ(light_mlp_parameter_count(4096, 1024), 9437184u);
    EXPECT_EQ(guided_update_parameter_count(4096, 1024), 14680064u);
}

TEST(ParameterCounts, MatchAllocatedTensors) {
    SeededRng rng(1);
    const auto g = GuidedUpdateParams<float>::init(24, 8, rng, 0.02, true, "g.");
    const auto l = LightMlpParams<float>::init(24, 8, rng, 0.02, true, "l.");
    EXPECT_EQ(g.down_full.value.numel() + g.down_proxy.value.numel() + g.hidden.value.numel() + g.out.value.numel(),
              guided_update_parameter_count(24, 8));
    EXPECT_EQ(l.in.value.numel() + l.mid.value.numel() + l.out.value.numel(), light_mlp_parameter_count(24, 8));
}

TEST(Spatial, CorrespondenceMapsWindowsToProxies) {
    const SpatialProxyConfig c{.grid_side = 4, .factor = 2};
    const auto corr = correspondence(c);
    ASSERT_EQ(corr.size(), 16u);
    const int expected[16] = {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3};
    for (int i = 0; i < 16; ++i) EXPECT_EQ(corr[i], expected[i]) << i;
}

TEST(Spatial, DownsampleIsWindowMean) {
    const SpatialProxyConfig c{.grid_side = 6, .factor = 3};
    const auto x = random_tensor<double>({36, 5}, 2);
    const auto p = downsample_spatial(x, c);
    ASSERT_EQ(p.rows(), 4u);
    for (std::size_t pr = 0; pr < 2; ++pr)
        for (std::size_t pc = 0; pc < 2; ++pc)
            for (std::size_t j = 0; j < 5; ++j) {
                double s = 0.0;
                for (std::size_t r = 0; r < 3; ++r)
                    for (std::size_t cc = 0; cc < 3; ++cc) s += x.at((pr * 3 + r) * 6 + pc * 3 + cc, j);
                EXPECT_NEAR(p.at(pr * 2 + pc, j), s / 9.0, 1e-12);
            }
}

TEST(Spatial, FactorMustDivideSide) {
    EXPECT_THROW((SpatialProxyConfig{.grid_side = 6, .factor = 4}.validate()), ConfigError);
    EXPECT_THROW(downsample_spatial(random_tensor<double>({35, 2}, 1), {.grid_side = 6, .factor = 3}), InputError);
}

TEST(GuidedUpdate, MatchesComposition) {
    SeededRng rng(3);
    const auto g = GuidedUpdateParams<double>::init(6, 3, rng, 0.5, false, "g.");
    const auto full = random_tensor<double>({4, 6}, 4), proxies = random_tensor<double>({2, 6}, 5);
    const std::vector<int> corr{0, 1, 1, 0};
    Tensor<double> guide(Shape{4, 6});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) guide.at(i, j) = proxies.at(static_cast<std::size_t>(corr[i]), j);
    const auto a = naive_matmul(full, g.down_full.value), b = naive_matmul(guide, g.down_proxy.value);
    Tensor<double> joint(Shape{4, 6});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            joint.at(i, j) = a.at(i, j);
            joint.at(i, 3 + j) = b.at(i, j);
        }
    auto h = naive_matmul(joint, g.hidden.value);
    for (auto& v : h.values()) v = v / (1.0 + std::exp(-v));
    const auto delta = naive_matmul(h, g.out.value);
    const auto got = guided_update(full, proxies, corr, g);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], full[i] + delta[i], 1e-12);
}

TEST(GuidedUpdate, ZeroOutputIsExactIdentity) {
    SeededRng rng(6);
    const auto g = GuidedUpdateParams<float>::init(8, 4, rng, 0.5, true, "g.");
    const auto full = random_tensor<float>({4, 8}, 7), proxies = random_tensor<float>({1, 8}, 8);
    EXPECT_EQ(guided_update(full, proxies, std::vector<int>{0, 0, 0, 0}, g), full);
}

TEST(GuidedUpdate, DanglingCorrespondenceThrows) {
    SeededRng rng(1);
    const auto g = GuidedUpdateParams<double>::init(4, 2, rng, 0.1, true, "g.");
    EXPECT_THROW(guided_update(random_tensor<double>({2, 4}, 1), random_tensor<double>({1, 4}, 2),
                               std::vector<int>{0, 1}, g),
                 InputError);
    EXPECT_THROW(guided_update(random_tensor<double>({2, 4}, 1), random_tensor<double>({1, 4}, 2),
                               std::vector<int>{0}, g),
                 InputError);
}

TEST(NonSpatial, GenerationIsSoftmaxPooling) {
    SeededRng rng(9);
    const auto p = NonSpatialProxyParams<double>::init(3, 6, 2, rng, 0.7, "n.");
    const auto full = random_tensor<double>({5, 6}, 10);
    const auto r = nonspatial_generate(full, p);
    const auto keys = naive_matmul(full, p.key_proj.value);
    Tensor<double> logits = naive_matmul(p.queries.value, transpose(keys));
    for (auto& v : logits.values()) v /= std::sqrt(2.0);
    EXPECT_LT(max_diff(r.logits, logits), 1e-12);
    EXPECT_LT(max_diff(r.proxies, naive_matmul(softmax(logits), full)), 1e-12);
}

TEST(NonSpatial, SplatNormalisesOverProxiesPerToken) {
    const auto logits = random_tensor<double>({3, 5}, 11), proxies = random_tensor<double>({3, 4}, 12);
    const auto g = nonspatial_splat(logits, proxies);
    for (std::size_t i = 0; i < 5; ++i) {
        double z = 0.0;
        for (std::size_t m = 0; m < 3; ++m) z += std::exp(logits.at(m, i));
        for (std::size_t j = 0; j < 4; ++j) {
            double s = 0.0;
            for (std::size_t m = 0; m < 3; ++m) s += std::exp(logits.at(m, i)) / z * proxies.at(m, j);
            EXPECT_NEAR(g.at(i, j), s, 1e-12);
        }
    }
}

TEST(NonSpatial, QueryWidthMustBeSmallerThanTokenWidth) {
    SeededRng rng(1);
    EXPECT_THROW(NonSpatialProxyParams<double>::init(2, 4, 4, rng, 0.1, "n."), ConfigError);
}

TEST(ProxyGradients, BatchedPrimitivesPassCentralDifferences) {
    SeededRng rng(13);
    auto g = GuidedUpdateParams<double>::init(6, 3, rng, 0.5, false, "g.");
    auto n = NonSpatialProxyParams<double>::init(2, 6, 3, rng, 0.5, "n.");
    Parameter<double> full("full", random_tensor<double>({2 * 4, 6}, 14));
    const SpatialProxyConfig c{.grid_side = 2, .factor = 2};
    const auto corr = correspondence(c);
    const Tensor<double> w = random_tensor<double>({8, 6}, 15);
    std::vector<Parameter<double>*> ps{&full, &g.down_full, &g.down_proxy, &g.hidden, &g.out, &n.queries, &n.key_proj};
    const auto report = grad_check(
        [&](Tape<double>& t) {
            const auto x = t.param(full);
            const auto gv = bind(t, g);
            const auto proxies = downsample_spatial(x, c, 2);
            std::vector<int> batched_corr;
            for (int b = 0; b < 2; ++b)
                for (int k : corr) batched_corr.push_back(b + k);
            const auto upd = guided_update(x, proxies, batched_corr, gv);
            const auto ns = nonspatial_generate(upd, bind(t, n), 2);
            const auto splat = nonspatial_splat(ns.logits, ns.proxies, 2);
            return ad::sum(ad::mul(guided_update_ns(upd, splat, gv), t.constant(w)));
        },
        ps);
    EXPECT_TRUE(report.passed) << report.worst_param << " " << report.max_rel_error;
}
