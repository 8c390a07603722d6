// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "proxyv/cost/cost_model.hpp"
#include "proxyv/errors.hpp"

using namespace proxyv;
using namespace proxyv::cost;

namespace {

// Per-layer MACs written out from token roles: every token projects keys and values,
// queries attend over all n tokens, the FFN is gated (three d x f products).
double oracle_layer(double queries, double n, double d, double f, double updated_by_o) {
    return 2 * n * d * d + queries * d * d + updated_by_o * d * d + 2 * queries * n * d + 3 * queries * d * f;
}

double oracle_reduction(LayerMode mode, std::uint64_t start, const ArchSpec& a, const TokenCounts& c) {
    const double d = a.width, f = a.ffn_width, nv = c.vision, nt = c.text, L = a.layers;
    const double n = nv + nt;
    const double base = oracle_layer(n, n, d, f, n);
    double variant = 0.0;
    switch (mode) {
        case LayerMode::AttnSkip: {
            const double layer = 2 * n * d * d + nt * d * d + n * d * d + 2 * nt * n * d + 3 * n * d * f;
            variant = layer;
            break;
        }
        case LayerMode::LightMlp: {
            const double h = a.light_hidden;
            variant = oracle_layer(nt, n, d, f, nt) + nv * (2 * d * h + h * h);
            break;
        }
        case LayerMode::ProxyVSpatial: {
            const double h = a.update_hidden, np = nv / (a.proxy_factor * a.proxy_factor);
            const double q = np + nt;
            variant = oracle_layer(q, n + np, d, f, q) + nv * (3 * d * h + 2 * h * h) + nv * d;
            break;
        }
        default: variant = base;
    }
    return 1.0 - (start * base + (L - start) * variant) / (L * base);
}

}  // namespace

TEST(Parameters, ReferenceCounts) {
    EXPECT_EQ(params_light_mlp(4096, 1024), 9437184u);
    EXPECT_EQ(params_guided_update(4096, 1024), 14680064u);
    const ArchSpec a;
    EXPECT_EQ(added_parameters(LayerMode::LightMlp, a), 9437184u);
    EXPECT_EQ(added_parameters(LayerMode::ProxyVSpatial, a), 14680064u);
    EXPECT_EQ(added_parameters(LayerMode::AttnSkip, a), 0u);
    EXPECT_EQ(added_parameters(LayerMode::ProxyVNonSpatial, a), 14680064u + 36u * 1024 + 4096u * 1024);
}

TEST(Baseline, LayerMacsMatchHandCount) {
    const ArchSpec a;
    const TokenCounts c;
    const std::uint64_t n = 2880 + 55, d = 4096, f = 11008;
    const auto b = layer_macs(LayerMode::Baseline, c, a);
    EXPECT_EQ(b.total(), 4 * n * d * d + 2 * n * n * d + 3 * n * d * f);
    EXPECT_EQ(b.flops(), 2 * b.total());
    EXPECT_EQ(b.module, 0u);
    EXPECT_EQ(b.additions, 0u);
}

TEST(Baseline, ReducesNothing) {
    const ArchSpec a;
    const auto r = model_report(Schedule(32, LayerMode::Baseline), TokenCounts{}, a);
    EXPECT_EQ(r.total_macs, r.baseline_macs);
    EXPECT_DOUBLE_EQ(r.reduction(), 0.0);
    EXPECT_EQ(r.added_params, 0u);
}

class SuffixOracle : public ::testing::TestWithParam<std::pair<LayerMode, std::uint64_t>> {};

TEST_P(SuffixOracle, ReductionMatchesIndependentFormula) {
    const auto [mode, start] = GetParam();
    const ArchSpec a;
    const TokenCounts c;
    const double got = model_report(suffix_schedule(32, mode, start), c, a).reduction();
    EXPECT_NEAR(got, oracle_reduction(mode, start, a, c), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(
    Modes, SuffixOracle,
    ::testing::Values(std::pair{LayerMode::AttnSkip, 0ul}, std::pair{LayerMode::AttnSkip, 16ul},
                      std::pair{LayerMode::LightMlp, 0ul}, std::pair{LayerMode::LightMlp, 12ul},
                      std::pair{LayerMode::ProxyVSpatial, 0ul}, std::pair{LayerMode::ProxyVSpatial, 16ul}));

TEST(PaperSuite, EveryRowWithinTolerance) {
    const auto rows = paper_suite();
    ASSERT_EQ(rows.size(), 13u);
    for (const auto& r : rows) EXPECT_TRUE(r.pass()) << r.label << ": " << r.measured << " vs " << r.target;
}

TEST(PaperSuite, RowsFollowTheLayerOrdering) {
    const auto rows = paper_suite();
    for (std::size_t i = 0; i < 9; i += 3) {
        EXPECT_GT(rows[i].measured, rows[i + 1].measured) << rows[i].label;
        EXPECT_GT(rows[i + 1].measured, rows[i + 2].measured) << rows[i].label;
    }
    EXPECT_GT(rows[12].measured, rows[11].measured);
    EXPECT_GT(rows[12].measured, rows[9].measured);
}

TEST(Degenerate, NoVisionOrNoTextFallsBackToBaseline) {
    const ArchSpec a;
    for (auto c : {TokenCounts{.vision = 0, .proxy = 0, .text = 40, .groups = 0},
                   TokenCounts{.vision = 576, .proxy = 0, .text = 0, .groups = 1}}) {
        const auto base = layer_macs(LayerMode::Baseline, c, a).total();
        for (LayerMode m : {LayerMode::AttnSkip, LayerMode::LightMlp, LayerMode::ProxyVSpatial,
                            LayerMode::ProxyVNonSpatial}) {
            EXPECT_EQ(layer_macs(m, counts_for_mode(m, c, a), a).total(), base) << mode_name(m);
        }
    }
}

TEST(Degenerate, InvalidCountsAreRejected) {
    const ArchSpec a;
    EXPECT_THROW(layer_macs(LayerMode::Baseline, TokenCounts{.vision = -1}, a), InputError);
    EXPECT_THROW(layer_macs(LayerMode::Baseline, TokenCounts{.vision = 10, .proxy = 0, .text = 1, .groups = 0}, a),
                 InputError);
    EXPECT_THROW(layer_macs(LayerMode::AttnSkip, TokenCounts{.vision = 10, .proxy = 2, .text = 1, .groups = 1}, a),
                 InputError);
    EXPECT_THROW(model_report(Schedule(3, LayerMode::Baseline), TokenCounts{}, a), ConfigError);
    ArchSpec bad;
    bad.width = 0;
    EXPECT_THROW(layer_macs(LayerMode::Baseline, TokenCounts{}, bad), ConfigError);
}

TEST(TokenReduction, VisionZipKeepsDominantPlusContextualPerGrid) {
    TokenReductionSpec s;
    s.kind = ReductionKind::VisionZip;
    const auto sched = token_reduction_schedule(s, TokenCounts{}, 32);
    for (const auto& c : sched) {
        EXPECT_EQ(c.vision, 5 * 400);
        EXPECT_EQ(c.text, 55);
    }
}

TEST(TokenReduction, PyramidDropHalvesAtEachStage) {
    TokenReductionSpec s;
    s.kind = ReductionKind::PyramidDrop;
    const auto sched = token_reduction_schedule(s, TokenCounts{}, 32);
    EXPECT_EQ(sched[11].vision, 2880);
    EXPECT_EQ(sched[12].vision, 1440);
    EXPECT_EQ(sched[19].vision, 1440);
    EXPECT_EQ(sched[20].vision, 720);
    EXPECT_EQ(sched[26].vision, 360);
    EXPECT_EQ(sched[31].vision, 360);
}

TEST(TokenReduction, NoneLeavesCountsAlone) {
    const auto sched = token_reduction_schedule(TokenReductionSpec{}, TokenCounts{}, 4);
    for (const auto& c : sched) EXPECT_EQ(c.vision, 2880);
    TokenReductionSpec bad;
    bad.drop_ratio = 1.5;
    EXPECT_THROW(token_reduction_schedule(bad, TokenCounts{}, 4), ConfigError);
    EXPECT_THROW(parse_reduction_kind("fastv"), ConfigError);
}

TEST(Monotonicity, LaterStartSavesLess) {
    const ArchSpec a;
    for (LayerMode m : {LayerMode::AttnSkip, LayerMode::LightMlp, LayerMode::ProxyVSpatial,
                        LayerMode::ProxyVNonSpatial}) {
        double prev = 1.0;
        for (std::uint64_t start = 0; start <= 32; start += 4) {
            const double r = model_report(suffix_schedule(32, m, start), TokenCounts{}, a).reduction();
            EXPECT_LT(r, prev) << mode_name(m) << " from " << start;
            prev = r;
        }
        EXPECT_NEAR(prev, 0.0, 1e-15);
    }
}

TEST(Monotonicity, MoreVisionTokensSaveMore) {
    const ArchSpec a;
    double prev = 0.0;
    for (std::int64_t grids = 1; grids <= 5; ++grids) {
        const TokenCounts c{.vision = 576 * grids, .proxy = 0, .text = 55, .groups = grids};
        const double r = model_report(suffix_schedule(32, LayerMode::ProxyVSpatial, 12), c, a).reduction();
        EXPECT_GT(r, prev);
        prev = r;
    }
}

TEST(Reporting, JsonCarriesTotals) {
    const ArchSpec a;
    const auto r = model_report(suffix_schedule(32, LayerMode::LightMlp, 16), TokenCounts{}, a);
    const nlohmann::json j = r;
    EXPECT_EQ(j.at("total_macs").get<std::uint64_t>(), r.total_macs);
    EXPECT_EQ(j.at("layers").size(), 32u);
    EXPECT_FALSE(format_report(r, a).empty());
    EXPECT_NE(format_paper_suite(paper_suite()).find("13/13"), std::string::npos);
}
