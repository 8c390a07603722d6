// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "proxyv/attention/mask.hpp"
#include "proxyv/numerics/autodiff.hpp"
#include "proxyv/numerics/rng.hpp"

namespace proxyv {

/// Projection weights of one attention block; each is d x d and split across heads.
template <typename T>
struct AttentionParams {
    Parameter<T> wq;
    Parameter<T> wk;
    Parameter<T> wv;
    Parameter<T> wo;
    std::size_t heads = 1;

    std::size_t dim() const { return wq.value.rows(); }
    std::size_t head_dim() const { return dim() / heads; }
    /// Throws ConfigError unless heads divides d and all weights are d x d.
    void validate() const;

    static AttentionParams init(std::size_t d, std::size_t heads, SeededRng& rng, double stddev,
                                const std::string& prefix);
};

template <typename T>
struct AttentionVars {
    Var<T> wq, wk, wv, wo;
    std::size_t heads = 1;
};

template <typename T>
AttentionVars<T> bind(Tape<T>& tape, AttentionParams<T>& p);

/// Query/key selection for one attention call, in per-example row indices.
struct AttentionPlan {
    std::vector<int> q_idx;
    std::vector<int> kv_idx;
    /// |q_idx| x |kv_idx| permissions.
    AttentionMask mask;
    /// Rotary position ids aligned with q_idx / kv_idx; empty disables rotary.
    std::vector<int> q_pos;
    std::vector<int> kv_pos;
};

/// Builds a plan over `layout` with the given query/key positions and mask.
AttentionPlan make_plan(const TokenLayout& layout, std::vector<int> q_idx, std::vector<int> kv_idx,
                        const AttentionMask& full_mask, bool rotary = true);

/// Global row indices of `idx` replicated over `batch` examples of `stride` rows.
std::vector<int> batched_rows(std::span<const int> idx, std::size_t stride, std::size_t batch);

/// Rotary embedding over each head's consecutive dimension pairs, base 10000.
/// `positions` holds one id per row of a single example.
template <typename T>
Var<T> rope(Var<T> x, std::span<const int> positions, std::size_t heads, std::size_t batch);

/// Scaled dot-product attention per head and example; the mask is shared by
/// all examples. Scores are computed densely for every query/key pair.
template <typename T>
Var<T> attention_core(Var<T> q, Var<T> k, Var<T> v, const AttentionMask& mask, std::size_t heads,
                      std::size_t batch);

template <typename T>
struct MhaParts {
    /// Attention output before the o-projection, batch*|q| x d.
    Var<T> context;
    /// Value projections of the key rows, batch*|kv| x d.
    Var<T> values;
};

/// Projections plus attention without the output projection. `x` holds
/// `batch` examples of `rows_per_example` rows each.
template <typename T>
MhaParts<T> attend(Var<T> x, const AttentionVars<T>& w, const AttentionPlan& plan, std::size_t rows_per_example,
                   std::size_t batch);

/// Full multi-head attention including the o-projection: batch*|q| x d.
template <typename T>
Var<T> mha(Var<T> x, const AttentionVars<T>& w, const AttentionPlan& plan, std::size_t rows_per_example,
           std::size_t batch);

/// Single-example convenience over plain tensors; `mask` is already restricted
/// to q_idx x kv_idx. Positions (one per row of x) enable rotary when given.
template <typename T>
Tensor<T> mha(const Tensor<T>& x, const AttentionParams<T>& params, std::span<const int> q_idx,
              std::span<const int> kv_idx, const AttentionMask& mask, std::span<const int> positions = {});

/// W_o(W_v(norm(x))). A null `norm_gain` skips normalisation. Residual is the caller's.
template <typename T>
Tensor<T> vision_skip_update(const Tensor<T>& x_vision, const AttentionParams<T>& params,
                             const Tensor<T>* norm_gain = nullptr, T eps = T(1e-6));

}  // namespace proxyv
