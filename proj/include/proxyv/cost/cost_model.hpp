// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "proxyv/model/config.hpp"

namespace proxyv::cost {

/// Decoder shape. Defaults describe a 7B-class model (32 layers, d=4096, f=11008).
struct ArchSpec {
    std::uint64_t layers = 32;
    std::uint64_t width = 4096;
    std::uint64_t ffn_width = 11008;
    std::uint64_t heads = 32;
    /// Reported only; the output head is excluded from layer totals.
    std::uint64_t vocab = 32000;
    std::uint64_t light_hidden = 1024;
    std::uint64_t update_hidden = 1024;
    std::uint64_t query_dim = 1024;
    /// Spatial downsampling factor r; spatial proxies per layer = n_v / r^2.
    std::uint64_t proxy_factor = 4;
    /// Learned queries per grid of the non-spatial variant.
    std::uint64_t ns_proxies_per_grid = 36;

    void validate() const;
};

/// Tokens entering one layer. `text` includes separators. `groups` is the
/// number of grids the vision tokens split into (non-spatial pooling is per grid).
struct TokenCounts {
    std::int64_t vision = 2880;
    std::int64_t proxy = 0;
    std::int64_t text = 55;
    std::int64_t groups = 5;

    std::uint64_t total() const { return static_cast<std::uint64_t>(vision + proxy + text); }
    void validate() const;
};

/// Multiply-accumulate counts of one layer.
struct LayerBreakdown {
    std::uint64_t q_proj = 0;
    std::uint64_t k_proj = 0;
    std::uint64_t v_proj = 0;
    std::uint64_t o_proj = 0;
    std::uint64_t scores = 0;
    std::uint64_t ffn = 0;
    /// Light MLP, guided update, or non-spatial generation and splat.
    std::uint64_t module = 0;
    /// Plain additions (proxy downsampling).
    std::uint64_t additions = 0;

    std::uint64_t total() const { return q_proj + k_proj + v_proj + o_proj + scores + ffn + module + additions; }
    std::uint64_t flops() const { return 2 * total(); }
};

/// Counts with n_p filled in for proxy modes (spatial: n_v / r^2, non-spatial:
/// groups * queries per grid), zero otherwise.
TokenCounts counts_for_mode(LayerMode mode, TokenCounts counts, const ArchSpec& arch);

/// Throws InputError on negative counts or a proxy count outside proxy modes.
LayerBreakdown layer_macs(LayerMode mode, const TokenCounts& counts, const ArchSpec& arch);

std::uint64_t params_light_mlp(std::uint64_t d, std::uint64_t h);
std::uint64_t params_guided_update(std::uint64_t d, std::uint64_t h);
/// Vision-specific parameters a layer of `mode` adds.
std::uint64_t added_parameters(LayerMode mode, const ArchSpec& arch);

struct CostReport {
    std::vector<LayerMode> schedule;
    std::vector<TokenCounts> counts;
    std::vector<LayerBreakdown> layers;
    std::uint64_t total_macs = 0;
    std::uint64_t baseline_macs = 0;
    std::uint64_t added_params = 0;

    std::uint64_t total_flops() const { return 2 * total_macs; }
    std::uint64_t baseline_flops() const { return 2 * baseline_macs; }
    /// 1 - variant / baseline.
    double reduction() const;
};

/// `counts` holds the pre-proxy counts of every layer (size = layers). The
/// baseline is the all-Baseline model on `baseline_counts`.
CostReport model_report(const Schedule& schedule, const std::vector<TokenCounts>& counts,
                        const TokenCounts& baseline_counts, const ArchSpec& arch);
CostReport model_report(const Schedule& schedule, const TokenCounts& counts, const ArchSpec& arch);

enum class ReductionKind { None, VisionZip, PyramidDrop };
std::string reduction_kind_name(ReductionKind k);
/// Throws ConfigError on an unknown name.
ReductionKind parse_reduction_kind(const std::string& name);

struct TokenReductionSpec {
    ReductionKind kind = ReductionKind::None;
    /// Kept tokens per grid.
    std::int64_t dominant = 360;
    std::int64_t contextual = 40;
    /// Layers from which the vision count is multiplied by (1 - drop_ratio).
    std::vector<std::uint64_t> drop_layers{12, 20, 26};
    double drop_ratio = 0.5;

    void validate() const;
};

/// Per-layer vision counts under a token-reduction method.
std::vector<TokenCounts> token_reduction_schedule(const TokenReductionSpec& spec, const TokenCounts& base,
                                                  std::uint64_t layers);

/// Token reduction first, then `schedule` on the reduced counts.
CostReport combined_report(const TokenReductionSpec& spec, const Schedule& schedule, const TokenCounts& base,
                           const ArchSpec& arch);

/// Toy-model shape and per-example counts for cross-checking instrumented runs.
ArchSpec arch_from_config(const ModelConfig& config);
TokenCounts counts_from_config(const ModelConfig& config, std::uint64_t text_len);

struct PaperRow {
    std::string label;
    double measured = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    bool pass() const;
};

/// The reference reduction figures on the 2880-vision / 55-text scenario, in percent.
std::vector<PaperRow> paper_suite(const ArchSpec& arch = {}, const TokenCounts& counts = {});

std::string format_report(const CostReport& report, const ArchSpec& arch);
std::string format_paper_suite(const std::vector<PaperRow>& rows);
void to_json(nlohmann::json& j, const LayerBreakdown& b);
void to_json(nlohmann::json& j, const CostReport& r);
void to_json(nlohmann::json& j, const PaperRow& r);

}  // namespace proxyv::cost
