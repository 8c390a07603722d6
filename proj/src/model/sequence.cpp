// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/model/sequence.hpp"

#include <algorithm>

#include "proxyv/attention/mask.hpp"
#include "proxyv/proxy/proxy.hpp"

namespace proxyv {

template <typename T>
std::pair<Tensor<T>, TokenLayout> assemble_sequence(std::span<const Tensor<T>> grids, const Tensor<T>& text,
                                                    const Tensor<T>& separator, std::size_t side) {
    const std::size_t d = separator.cols();
    if (separator.rows() != 1) throw DimensionError("assemble_sequence: separator must be one row");
    for (std::size_t g = 0; g < grids.size(); ++g) {
        if (grids[g].rows() != side * side || grids[g].cols() != d) {
            throw InputError("assemble_sequence: grid " + std::to_string(g) + " has shape " +
                             shape_to_string(grids[g].shape()) + ", expected " + std::to_string(side * side) + "x" +
                             std::to_string(d));
        }
    }
    if (text.cols() != d) throw DimensionError("assemble_sequence: text width differs from separator width");
    const std::size_t n_text = text.rows();
    TokenLayout layout = TokenLayout::grids_then_text(grids.size(), side, n_text);
    Tensor<T> x(Shape{layout.size(), d});
    std::size_t r = 0;
    for (const auto& g : grids) {
        std::copy_n(g.data(), g.numel(), x.data() + r * d);
        r += g.rows();
        std::copy_n(separator.data(), d, x.data() + r * d);
        ++r;
    }
    std::copy_n(text.data(), text.numel(), x.data() + r * d);
    return {std::move(x), std::move(layout)};
}

template <typename T>
Var<T> assemble_sequence(Var<T> vision, Var<T> separator, Var<T> text, const TokenLayout& layout,
                         std::size_t batch) {
    const std::vector<int> vis = layout.vision_positions();
    const std::size_t n = layout.size();
    const std::size_t nv = vis.size();
    const std::size_t nt = n - nv - layout.positions_with(TokenRole::Separator).size();
    if (vision.rows() != batch * nv) {
        throw InputError("assemble_sequence: " + std::to_string(vision.rows()) + " vision rows for " +
                         std::to_string(batch) + " examples of " + std::to_string(nv));
    }
    if (text.rows() != batch * nt) throw InputError("assemble_sequence: text row count mismatch");
    std::vector<RowRef> rows;
    rows.reserve(batch * n);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t v = 0, t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            switch (layout.role(i)) {
                case TokenRole::Vision: rows.push_back({0, static_cast<int>(b * nv + v++)}); break;
                case TokenRole::Separator: rows.push_back({1, 0}); break;
                default: rows.push_back({2, static_cast<int>(b * nt + t++)}); break;
            }
        }
    }
    const Var<T> sources[3] = {vision, separator, text};
    return ad::stitch_rows<T>(sources, rows);
}

TokenLayout extend_with_proxies(const TokenLayout& layout, std::size_t per_grid, std::size_t proxy_side) {
    std::vector<TokenInfo> out;
    out.reserve(layout.size() + per_grid * layout.grid_count());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const TokenInfo& t = layout[i];
        out.push_back(t);
        const bool last_of_grid = t.role == TokenRole::Vision &&
                                  (i + 1 == layout.size() || layout.role(i + 1) != TokenRole::Vision ||
                                   layout[i + 1].grid != t.grid);
        if (!last_of_grid) continue;
        for (std::size_t p = 0; p < per_grid; ++p) {
            TokenInfo proxy;
            proxy.role = TokenRole::Proxy;
            proxy.grid = t.grid;
            if (proxy_side > 0) {
                proxy.row = static_cast<int>(p / proxy_side);
                proxy.col = static_cast<int>(p % proxy_side);
            }
            // Proxies share the rotary position of the last full token of their grid.
            proxy.position = t.position;
            out.push_back(proxy);
        }
    }
    return TokenLayout(std::move(out));
}

SequencePlan make_sequence_plan(const TokenLayout& layout, const ModelConfig& config) {
    layout.validate();
    SequencePlan plan;
    plan.layout = layout;
    plan.grids = layout.grid_count();
    plan.side = config.effective_side();
    plan.vision_rows = layout.vision_positions();
    plan.text_rows = layout.text_like_positions();
    plan.group_rank.assign(layout.size(), -1);
    for (std::size_t i = 0; i < plan.vision_rows.size(); ++i) plan.group_rank[plan.vision_rows[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < plan.text_rows.size(); ++i) plan.group_rank[plan.text_rows[i]] = static_cast<int>(i);

    std::vector<int> all(layout.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    const AttentionMask causal = causal_mask(layout);
    plan.causal = make_plan(layout, all, all, causal, config.rotary);
    plan.vision_masked = make_plan(layout, all, all, vision_masked_mask(layout), config.rotary);
    if (!plan.text_rows.empty()) plan.text_queries = make_plan(layout, plan.text_rows, all, causal, config.rotary);

    bool any_proxy = false;
    for (auto m : config.schedule) any_proxy = any_proxy || is_proxy_mode(m);
    if (!any_proxy || plan.vision_rows.empty()) return plan;

    const std::size_t proxy_side = plan.side / config.proxy_factor;
    plan.proxies_per_grid = proxy_side * proxy_side;
    plan.extended = extend_with_proxies(layout, plan.proxies_per_grid, proxy_side);
    plan.extended.validate();
    std::vector<int> ext_queries;
    std::vector<int> ext_all(plan.extended.size());
    int proxy_counter = 0;
    std::size_t orig = 0;
    for (std::size_t i = 0; i < plan.extended.size(); ++i) {
        ext_all[i] = static_cast<int>(i);
        if (plan.extended.role(i) == TokenRole::Proxy) {
            plan.query_proxy_rank.push_back(static_cast<int>(ext_queries.size()));
            ext_queries.push_back(static_cast<int>(i));
            plan.extended_rows.push_back({1, proxy_counter++});
        } else {
            if (plan.extended.is_text_like(i)) {
                plan.query_text_rank.push_back(static_cast<int>(ext_queries.size()));
                ext_queries.push_back(static_cast<int>(i));
            }
            plan.extended_rows.push_back({0, static_cast<int>(orig++)});
        }
    }
    plan.proxy_queries = make_plan(plan.extended, ext_queries, ext_all, causal_mask(plan.extended), config.rotary);

    SpatialProxyConfig spatial{plan.side, config.proxy_factor};
    const std::vector<int> corr = correspondence(spatial);
    const std::size_t per_grid_full = plan.side * plan.side;
    if (plan.vision_rows.size() != plan.grids * per_grid_full) {
        throw ConfigError("sequence plan: vision token count does not match grids x side^2");
    }
    for (std::size_t g = 0; g < plan.grids; ++g)
        for (std::size_t i = 0; i < per_grid_full; ++i)
            plan.vision_to_proxy.push_back(static_cast<int>(g * plan.proxies_per_grid) + corr[i]);
    return plan;
}

template std::pair<Tensor<float>, TokenLayout> assemble_sequence(std::span<const Tensor<float>>, const Tensor<float>&,
                                                                 const Tensor<float>&, std::size_t);
template std::pair<Tensor<double>, TokenLayout> assemble_sequence(std::span<const Tensor<double>>,
                                                                  const Tensor<double>&, const Tensor<double>&,
                                                                  std::size_t);
template Var<float> assemble_sequence(Var<float>, Var<float>, Var<float>, const TokenLayout&, std::size_t);
template Var<double> assemble_sequence(Var<double>, Var<double>, Var<double>, const TokenLayout&, std::size_t);

}  // namespace proxyv
