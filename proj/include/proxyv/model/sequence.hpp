// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "proxyv/attention/layout.hpp"
#include "proxyv/attention/mha.hpp"
#include "proxyv/model/config.hpp"
#include "proxyv/numerics/autodiff.hpp"

namespace proxyv {

/// Concatenates grids (raster order, one separator after each) and text into
/// one sequence. Every grid must hold side^2 rows; `separator` is a 1 x d row.
template <typename T>
std::pair<Tensor<T>, TokenLayout> assemble_sequence(std::span<const Tensor<T>> grids, const Tensor<T>& text,
                                                    const Tensor<T>& separator, std::size_t side);

/// Recorded counterpart: `vision` stacks batch*grids*side^2 rows, `separator` is
/// a single row and `text` stacks batch*text_len rows. Returns batch*n rows.
template <typename T>
Var<T> assemble_sequence(Var<T> vision, Var<T> separator, Var<T> text, const TokenLayout& layout,
                         std::size_t batch);

/// Everything about a sequence layout that every layer reuses: row groups,
/// attention plans per regime, and the extended layout of proxy layers.
struct SequencePlan {
    TokenLayout layout;
    std::size_t grids = 0;
    std::size_t side = 0;
    std::vector<int> vision_rows;
    std::vector<int> text_rows;
    /// Per row of the layout: index into vision_rows or text_rows.
    std::vector<int> group_rank;

    AttentionPlan causal;
    AttentionPlan vision_masked;
    /// Text/separator queries over every key (attention-skip and light-MLP layers).
    AttentionPlan text_queries;

    // Proxy layers.
    std::size_t proxies_per_grid = 0;
    TokenLayout extended;
    /// Per extended row: source 0 = original row, source 1 = proxy row within the example.
    std::vector<RowRef> extended_rows;
    AttentionPlan proxy_queries;
    /// Positions within proxy_queries.q_idx of the proxies and of the text rows.
    std::vector<int> query_proxy_rank;
    std::vector<int> query_text_rank;
    /// Per vision row of one example: proxy index within the example.
    std::vector<int> vision_to_proxy;
};

SequencePlan make_sequence_plan(const TokenLayout& layout, const ModelConfig& config);

/// Extended layout with `per_grid` proxies inserted after each grid's vision block.
TokenLayout extend_with_proxies(const TokenLayout& layout, std::size_t per_grid, std::size_t proxy_side);

}  // namespace proxyv
