// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/model/config.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "proxyv/errors.hpp"

namespace proxyv {

std::string_view mode_name(LayerMode mode) {
    switch (mode) {
        case LayerMode::Baseline: return "baseline";
        case LayerMode::AttnSkip: return "attn_skip";
        case LayerMode::LightMlp: return "light_mlp";
        case LayerMode::ProxyVSpatial: return "proxyv_spatial";
        case LayerMode::ProxyVNonSpatial: return "proxyv_nonspatial";
    }
    return "?";
}

LayerMode parse_mode(std::string_view name) {
    for (auto m : {LayerMode::Baseline, LayerMode::AttnSkip, LayerMode::LightMlp, LayerMode::ProxyVSpatial,
                   LayerMode::ProxyVNonSpatial}) {
        if (mode_name(m) == name) return m;
    }
    throw ConfigError("unknown layer mode '" + std::string(name) +
                      "' (expected baseline, attn_skip, light_mlp, proxyv_spatial, proxyv_nonspatial)");
}

bool is_proxy_mode(LayerMode mode) {
    return mode == LayerMode::ProxyVSpatial || mode == LayerMode::ProxyVNonSpatial;
}

Schedule suffix_schedule(std::size_t layers, LayerMode mode, std::size_t start) {
    Schedule s(layers, LayerMode::Baseline);
    for (std::size_t l = start; l < layers; ++l) s[l] = mode;
    return s;
}

std::string_view reduction_name(VisionReduction r) {
    switch (r) {
        case VisionReduction::None: return "none";
        case VisionReduction::UniformPrune: return "uniform_prune";
        case VisionReduction::PoolMerge: return "pool_merge";
    }
    return "?";
}

VisionReduction parse_reduction(std::string_view name) {
    for (auto r : {VisionReduction::None, VisionReduction::UniformPrune, VisionReduction::PoolMerge}) {
        if (reduction_name(r) == name) return r;
    }
    throw ConfigError("unknown vision reduction '" + std::string(name) + "'");
}

std::size_t ModelConfig::effective_side() const {
    if (reduction == VisionReduction::None || reduction_factor == 0) return grid_side;
    return grid_side / reduction_factor;
}

std::size_t ModelConfig::proxies_per_grid() const {
    const std::size_t m = effective_side() / proxy_factor;
    return m * m;
}

void ModelConfig::validate() const {
    const auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("model config: " + field + " " + why);
    };
    if (layers == 0) fail("layers", "must be positive");
    if (width == 0) fail("width", "must be positive");
    if (heads == 0 || width % heads != 0) fail("heads", "must divide width");
    if (rotary && (width / heads) % 2 != 0) fail("heads", "must leave an even head dimension for rotary");
    if (ffn_width == 0) fail("ffn_width", "must be positive");
    if (vocab == 0) fail("vocab", "must be positive");
    if (grid_side == 0) fail("grid_side", "must be positive");
    if (schedule.size() != layers) {
        fail("schedule", "has " + std::to_string(schedule.size()) + " entries for " + std::to_string(layers) + " layers");
    }
    if (reduction != VisionReduction::None) {
        if (reduction_factor == 0 || grid_side % reduction_factor != 0) fail("reduction_factor", "must divide grid_side");
    }
    bool any_proxy = false, any_light = false;
    for (auto m : schedule) {
        any_proxy = any_proxy || is_proxy_mode(m);
        any_light = any_light || m == LayerMode::LightMlp;
    }
    if (any_proxy) {
        if (grids == 0) fail("grids", "must be positive when proxy layers are scheduled");
        if (proxy_factor == 0 || effective_side() % proxy_factor != 0) fail("proxy_factor", "must divide the grid side");
        if (update_hidden == 0) fail("update_hidden", "must be positive");
        if (query_dim == 0 || query_dim >= width) fail("query_dim", "must lie in [1, width)");
    }
    if (any_light && light_hidden == 0) fail("light_hidden", "must be positive");
    if (!(norm_eps > 0.0)) fail("norm_eps", "must be positive");
}

std::string ModelConfig::hash() const {
    const std::string text = nlohmann::json(*this).dump();
    // FNV-1a, 64-bit.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    std::vector<std::string> sched;
    for (auto m : c.schedule) sched.emplace_back(mode_name(m));
    j = nlohmann::json{{"layers", c.layers},
                       {"width", c.width},
                       {"heads", c.heads},
                       {"ffn_width", c.ffn_width},
                       {"vocab", c.vocab},
                       {"control_tokens", c.control_tokens},
                       {"grids", c.grids},
                       {"grid_side", c.grid_side},
                       {"proxy_factor", c.proxy_factor},
                       {"light_hidden", c.light_hidden},
                       {"update_hidden", c.update_hidden},
                       {"query_dim", c.query_dim},
                       {"schedule", sched},
                       {"persist_proxies", c.persist_proxies},
                       {"normalize", c.normalize},
                       {"rotary", c.rotary},
                       {"vision_position", c.vision_position},
                       {"norm_eps", c.norm_eps},
                       {"init_std", c.init_std},
                       {"zero_init_updates", c.zero_init_updates},
                       {"reduction", std::string(reduction_name(c.reduction))},
                       {"reduction_factor", c.reduction_factor}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    const nlohmann::json known = d;
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("model: unknown field '" + key + "'");
    }
    const auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("layers", d.layers);
    get("width", d.width);
    get("heads", d.heads);
    get("ffn_width", d.ffn_width);
    get("vocab", d.vocab);
    get("control_tokens", d.control_tokens);
    get("grids", d.grids);
    get("grid_side", d.grid_side);
    get("proxy_factor", d.proxy_factor);
    get("light_hidden", d.light_hidden);
    get("update_hidden", d.update_hidden);
    get("query_dim", d.query_dim);
    get("persist_proxies", d.persist_proxies);
    get("normalize", d.normalize);
    get("rotary", d.rotary);
    get("vision_position", d.vision_position);
    get("norm_eps", d.norm_eps);
    get("init_std", d.init_std);
    get("zero_init_updates", d.zero_init_updates);
    get("reduction_factor", d.reduction_factor);
    if (j.contains("reduction")) d.reduction = parse_reduction(j.at("reduction").get<std::string>());
    if (j.contains("schedule")) {
        d.schedule.clear();
        for (const auto& s : j.at("schedule")) d.schedule.push_back(parse_mode(s.get<std::string>()));
    } else {
        d.schedule.assign(d.layers, LayerMode::Baseline);
    }
    c = std::move(d);
}

}  // namespace proxyv
