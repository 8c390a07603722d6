// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/cost/cost_model.hpp"

#include <algorithm>
#include <cmath>

#include "proxyv/errors.hpp"

namespace proxyv::cost {

void ArchSpec::validate() const {
    if (layers == 0 || width == 0 || ffn_width == 0 || heads == 0 || proxy_factor == 0) {
        throw ConfigError("arch: layers, width, ffn_width, heads and proxy_factor must be positive");
    }
}

void TokenCounts::validate() const {
    if (vision < 0 || proxy < 0 || text < 0 || groups < 0) {
        throw InputError("token counts must be nonnegative (vision " + std::to_string(vision) + ", proxy " +
                         std::to_string(proxy) + ", text " + std::to_string(text) + ")");
    }
    if (vision > 0 && groups == 0) throw InputError("token counts: vision tokens need at least one group");
}

TokenCounts counts_for_mode(LayerMode mode, TokenCounts counts, const ArchSpec& arch) {
    counts.validate();
    if (!is_proxy_mode(mode) || counts.vision == 0 || counts.text == 0) {
        counts.proxy = 0;
    } else if (mode == LayerMode::ProxyVSpatial) {
        counts.proxy = counts.vision / static_cast<std::int64_t>(arch.proxy_factor * arch.proxy_factor);
    } else {
        counts.proxy = counts.groups * static_cast<std::int64_t>(arch.ns_proxies_per_grid);
    }
    return counts;
}

LayerBreakdown layer_macs(LayerMode mode, const TokenCounts& counts, const ArchSpec& arch) {
    counts.validate();
    arch.validate();
    if (counts.proxy != 0 && !is_proxy_mode(mode)) {
        throw InputError("layer_macs: proxy tokens given to a " + std::string(mode_name(mode)) + " layer");
    }
    const std::uint64_t d = arch.width, f = arch.ffn_width;
    const std::uint64_t nv = static_cast<std::uint64_t>(counts.vision);
    const std::uint64_t np = static_cast<std::uint64_t>(counts.proxy);
    const std::uint64_t nt = static_cast<std::uint64_t>(counts.text);
    const std::uint64_t n = nv + np + nt;
    LayerBreakdown b;
    b.k_proj = n * d * d;
    b.v_proj = n * d * d;
    if (nv == 0 || nt == 0 || mode == LayerMode::Baseline) {
        b.q_proj = b.o_proj = n * d * d;
        b.scores = 2 * n * n * d;
        b.ffn = 3 * n * d * f;
        return b;
    }
    switch (mode) {
        case LayerMode::AttnSkip:
            b.q_proj = nt * d * d;
            b.o_proj = n * d * d;
            b.scores = 2 * nt * n * d;
            b.ffn = 3 * n * d * f;
            break;
        case LayerMode::LightMlp: {
            const std::uint64_t h = arch.light_hidden;
            b.q_proj = b.o_proj = nt * d * d;
            b.scores = 2 * nt * n * d;
            b.ffn = 3 * nt * d * f;
            b.module = nv * (d * h + h * h + h * d);
            break;
        }
        default: {
            const std::uint64_t h = arch.update_hidden, q = np + nt;
            b.q_proj = b.o_proj = q * d * d;
            b.scores = 2 * q * n * d;
            b.ffn = 3 * q * d * f;
            b.module = nv * (2 * d * h + 2 * h * h + h * d);
            if (mode == LayerMode::ProxyVSpatial) {
                b.additions = nv * d;
            } else {
                const std::uint64_t dq = arch.query_dim, groups = static_cast<std::uint64_t>(counts.groups);
                // Key projection, then per grid: logits, pooling and splat over that grid's tokens.
                b.module += nv * d * dq + (np * nv / groups) * (dq + 2 * d);
            }
            break;
        }
    }
    return b;
}

std::uint64_t params_light_mlp(std::uint64_t d, std::uint64_t h) { return d * h + h * h + h * d; }

std::uint64_t params_guided_update(std::uint64_t d, std::uint64_t h) { return 2 * d * h + 2 * h * h + h * d; }

std::uint64_t added_parameters(LayerMode mode, const ArchSpec& arch) {
    switch (mode) {
        case LayerMode::LightMlp: return params_light_mlp(arch.width, arch.light_hidden);
        case LayerMode::ProxyVSpatial: return params_guided_update(arch.width, arch.update_hidden);
        case LayerMode::ProxyVNonSpatial:
            return params_guided_update(arch.width, arch.update_hidden) +
                   arch.ns_proxies_per_grid * arch.query_dim + arch.width * arch.query_dim;
        default: return 0;
    }
}

double CostReport::reduction() const {
    if (baseline_macs == 0) return 0.0;
    return 1.0 - static_cast<double>(total_macs) / static_cast<double>(baseline_macs);
}

CostReport model_report(const Schedule& schedule, const std::vector<TokenCounts>& counts,
                        const TokenCounts& baseline_counts, const ArchSpec& arch) {
    if (schedule.size() != arch.layers || counts.size() != arch.layers) {
        throw ConfigError("model_report: schedule has " + std::to_string(schedule.size()) + " and counts " +
                          std::to_string(counts.size()) + " entries for " + std::to_string(arch.layers) +
                          " layers");
    }
    CostReport r;
    r.schedule = schedule;
    const std::uint64_t base_layer = layer_macs(LayerMode::Baseline, counts_for_mode(LayerMode::Baseline,
                                                                                      baseline_counts, arch),
                                                arch)
                                         .total();
    for (std::size_t l = 0; l < schedule.size(); ++l) {
        const TokenCounts c = counts_for_mode(schedule[l], counts[l], arch);
        r.counts.push_back(c);
        r.layers.push_back(layer_macs(schedule[l], c, arch));
        r.total_macs += r.layers.back().total();
        r.baseline_macs += base_layer;
        r.added_params += added_parameters(schedule[l], arch);
    }
    return r;
}

CostReport model_report(const Schedule& schedule, const TokenCounts& counts, const ArchSpec& arch) {
    return model_report(schedule, std::vector<TokenCounts>(arch.layers, counts), counts, arch);
}

std::string reduction_kind_name(ReductionKind k) {
    switch (k) {
        case ReductionKind::None: return "none";
        case ReductionKind::VisionZip: return "visionzip";
        case ReductionKind::PyramidDrop: return "pyramiddrop";
    }
    return "none";
}

ReductionKind parse_reduction_kind(const std::string& name) {
    for (auto k : {ReductionKind::None, ReductionKind::VisionZip, ReductionKind::PyramidDrop}) {
        if (reduction_kind_name(k) == name) return k;
    }
    throw ConfigError("unknown token reduction '" + name + "' (expected none, visionzip or pyramiddrop)");
}

void TokenReductionSpec::validate() const {
    if (dominant < 0 || contextual < 0) throw ConfigError("token reduction: kept token counts must be nonnegative");
    if (!(drop_ratio >= 0.0 && drop_ratio <= 1.0)) throw ConfigError("token reduction: drop_ratio must lie in [0, 1]");
}

std::vector<TokenCounts> token_reduction_schedule(const TokenReductionSpec& spec, const TokenCounts& base,
                                                  std::uint64_t layers) {
    spec.validate();
    base.validate();
    std::vector<TokenCounts> out(layers, base);
    if (spec.kind == ReductionKind::VisionZip) {
        for (auto& c : out) c.vision = std::min(c.vision, base.groups * (spec.dominant + spec.contextual));
    } else if (spec.kind == ReductionKind::PyramidDrop) {
        for (std::uint64_t l = 0; l < layers; ++l) {
            double v = static_cast<double>(base.vision);
            for (auto k : spec.drop_layers)
                if (l >= k) v *= 1.0 - spec.drop_ratio;
            out[l].vision = static_cast<std::int64_t>(std::llround(v));
        }
    }
    return out;
}

CostReport combined_report(const TokenReductionSpec& spec, const Schedule& schedule, const TokenCounts& base,
                           const ArchSpec& arch) {
    return model_report(schedule, token_reduction_schedule(spec, base, arch.layers), base, arch);
}

ArchSpec arch_from_config(const ModelConfig& c) {
    ArchSpec a;
    a.layers = c.layers;
    a.width = c.width;
    a.ffn_width = c.ffn_width;
    a.heads = c.heads;
    a.vocab = c.vocab;
    a.light_hidden = c.light_hidden;
    a.update_hidden = c.update_hidden;
    a.query_dim = c.query_dim;
    a.proxy_factor = c.proxy_factor;
    a.ns_proxies_per_grid = c.proxies_per_grid();
    return a;
}

TokenCounts counts_from_config(const ModelConfig& c, std::uint64_t text_len) {
    TokenCounts t;
    t.groups = static_cast<std::int64_t>(c.grids);
    t.vision = static_cast<std::int64_t>(c.grids * c.vision_per_grid());
    t.text = static_cast<std::int64_t>(text_len + c.grids);
    t.proxy = 0;
    return t;
}

bool PaperRow::pass() const { return std::abs(measured - target) <= tolerance; }

std::vector<PaperRow> paper_suite(const ArchSpec& arch, const TokenCounts& counts) {
    std::vector<PaperRow> rows;
    const auto suffix = [&](LayerMode m, std::uint64_t start) {
        return 100.0 * model_report(suffix_schedule(arch.layers, m, start), counts, arch).reduction();
    };
    const std::pair<std::uint64_t, double> skip[] = {{0, 18}, {12, 11}, {16, 9}};
    for (auto [l, t] : skip) rows.push_back({"attn_skip from layer " + std::to_string(l), suffix(LayerMode::AttnSkip, l), t, 2});
    const std::pair<std::uint64_t, double> light[] = {{0, 80}, {12, 50}, {16, 40}};
    for (auto [l, t] : light) rows.push_back({"light_mlp from layer " + std::to_string(l), suffix(LayerMode::LightMlp, l), t, 2});
    const std::pair<std::uint64_t, double> proxy[] = {{0, 73}, {12, 46}, {16, 36}};
    for (auto [l, t] : proxy) {
        rows.push_back({"proxyv_spatial from layer " + std::to_string(l), suffix(LayerMode::ProxyVSpatial, l), t, 3});
    }
    const Schedule baseline(arch.layers, LayerMode::Baseline);
    TokenReductionSpec zip;
    zip.kind = ReductionKind::VisionZip;
    TokenReductionSpec pyramid;
    pyramid.kind = ReductionKind::PyramidDrop;
    rows.push_back({"visionzip 360+40 per grid", 100.0 * combined_report(zip, baseline, counts, arch).reduction(), 32, 3});
    rows.push_back({"pyramiddrop halving at 12/20/26", 100.0 * combined_report(pyramid, baseline, counts, arch).reduction(), 42, 3});
    rows.push_back({"proxyv_nonspatial from layer 12", suffix(LayerMode::ProxyVNonSpatial, 12), 44, 4});
    rows.push_back({"visionzip + proxyv_nonspatial from layer 12",
                    100.0 * combined_report(zip, suffix_schedule(arch.layers, LayerMode::ProxyVNonSpatial, 12), counts,
                                            arch)
                                .reduction(),
                    62, 4});
    return rows;
}

}  // namespace proxyv::cost
