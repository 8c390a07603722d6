// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace proxyv {

/// How a decoder layer treats vision tokens.
enum class LayerMode {
    Baseline,          ///< vision tokens take the full attention + FFN path
    AttnSkip,          ///< vision tokens are keys/values only, updated by W_o W_v
    LightMlp,          ///< vision tokens are keys/values only, updated by a small MLP
    ProxyVSpatial,     ///< pooled thumbnail proxies do the heavy work, then guide the full tokens
    ProxyVNonSpatial,  ///< learned-query proxies with logit reuse for guidance
};

std::string_view mode_name(LayerMode mode);
/// Accepts the names produced by mode_name; throws ConfigError otherwise.
LayerMode parse_mode(std::string_view name);
bool is_proxy_mode(LayerMode mode);

using Schedule = std::vector<LayerMode>;

/// Baseline for layers < start, `mode` for layers >= start. start >= layers
/// yields an all-baseline schedule.
Schedule suffix_schedule(std::size_t layers, LayerMode mode, std::size_t start);

/// Token reduction applied to each grid before the decoder stack.
enum class VisionReduction {
    None,
    UniformPrune,  ///< keep every factor-th row and column
    PoolMerge,     ///< mean-merge factor x factor windows
};

std::string_view reduction_name(VisionReduction r);
VisionReduction parse_reduction(std::string_view name);

struct ModelConfig {
    std::size_t layers = 8;
    std::size_t width = 128;
    std::size_t heads = 4;
    std::size_t ffn_width = 384;
    /// Symbol vocabulary S; the output head predicts over it.
    std::size_t vocab = 64;
    /// Extra text-only input tokens (ids vocab .. vocab+control_tokens-1).
    std::size_t control_tokens = 32;
    std::size_t grids = 1;
    std::size_t grid_side = 8;
    std::size_t proxy_factor = 2;
    std::size_t light_hidden = 32;
    std::size_t update_hidden = 32;
    /// Key/query width of non-spatial proxy generation.
    std::size_t query_dim = 32;
    Schedule schedule = Schedule(8, LayerMode::Baseline);
    bool persist_proxies = false;
    bool normalize = true;
    bool rotary = true;
    /// Learned in-grid position table added to vision embeddings.
    bool vision_position = true;
    double norm_eps = 1e-6;
    double init_std = 0.02;
    /// Final layers of guided-update and light-MLP modules start at zero.
    bool zero_init_updates = true;
    VisionReduction reduction = VisionReduction::None;
    std::size_t reduction_factor = 1;

    /// Side of each grid after reduction.
    std::size_t effective_side() const;
    std::size_t vision_per_grid() const { return effective_side() * effective_side(); }
    /// Proxies per grid in proxy layers.
    std::size_t proxies_per_grid() const;
    /// Input embedding rows: symbols, control tokens, then the separator.
    std::size_t input_vocab() const { return vocab + control_tokens + 1; }
    std::size_t separator_id() const { return vocab + control_tokens; }

    /// Throws ConfigError naming the first inconsistent field.
    void validate() const;

    /// Stable hex digest of the canonical JSON form.
    std::string hash() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace proxyv
