// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "proxyv/numerics/autodiff.hpp"
#include "proxyv/numerics/rng.hpp"

namespace proxyv {

/// An N x N grid of full vision tokens summarised by an M x M thumbnail, M = N / r.
struct SpatialProxyConfig {
    std::size_t grid_side = 24;
    std::size_t factor = 4;

    std::size_t proxy_side() const { return grid_side / factor; }
    std::size_t full_count() const { return grid_side * grid_side; }
    std::size_t proxy_count() const { return proxy_side() * proxy_side(); }
    /// Throws ConfigError unless r divides N and M >= 1.
    void validate() const;
};

/// Lightweight network that updates each full vision token from its guidance
/// (the corresponding proxy, or a mixture of proxies):
///   x + W_out silu(W_hidden [x W_full ; g W_proxy])
/// Shapes: W_full, W_proxy d x h; W_hidden 2h x h; W_out h x d.
template <typename T>
struct GuidedUpdateParams {
    Parameter<T> down_full;
    Parameter<T> down_proxy;
    Parameter<T> hidden;
    Parameter<T> out;

    std::size_t width() const { return down_full.value.rows(); }
    std::size_t hidden_width() const { return down_full.value.cols(); }

    /// Normal(0, stddev) weights; the output layer starts at zero when `zero_output`.
    static GuidedUpdateParams init(std::size_t d, std::size_t h, SeededRng& rng, double stddev, bool zero_output,
                                   const std::string& prefix);
};

/// 2*d*h + 2*h*h + h*d
std::uint64_t guided_update_parameter_count(std::uint64_t d, std::uint64_t h);

/// Learned-query pooling for proxies without a spatial prior.
template <typename T>
struct NonSpatialProxyParams {
    /// m x d_q learnable queries.
    Parameter<T> queries;
    /// d x d_q key projection of the full tokens.
    Parameter<T> key_proj;

    std::size_t proxy_count() const { return queries.value.rows(); }
    std::size_t query_dim() const { return queries.value.cols(); }
    double scale() const;
    void validate() const;

    static NonSpatialProxyParams init(std::size_t m, std::size_t d, std::size_t dq, SeededRng& rng, double stddev,
                                      const std::string& prefix);
};

template <typename T>
struct GuidedUpdateVars {
    Var<T> down_full, down_proxy, hidden, out;
};
template <typename T>
GuidedUpdateVars<T> bind(Tape<T>& tape, GuidedUpdateParams<T>& p);

template <typename T>
struct NonSpatialVars {
    Var<T> queries, key_proj;
    double scale = 1.0;
};
template <typename T>
NonSpatialVars<T> bind(Tape<T>& tape, NonSpatialProxyParams<T>& p);

/// Map from full-token index (raster order) to proxy index within one grid:
/// (row, col) -> (row / r, col / r).
std::vector<int> correspondence(const SpatialProxyConfig& config);

/// r x r mean pooling per grid. `vision` stacks `blocks` grids of N^2 rows;
/// the result stacks `blocks` thumbnails of M^2 rows in raster order.
template <typename T>
Var<T> downsample_spatial(Var<T> vision, const SpatialProxyConfig& config, std::size_t blocks);

/// Residual guided update with one guidance row per full row.
template <typename T>
Var<T> guided_update_ns(Var<T> full, Var<T> guidance, const GuidedUpdateVars<T>& w);

/// Guided update where full row i is guided by proxy row `corr[i]`.
template <typename T>
Var<T> guided_update(Var<T> full, Var<T> proxies, std::span<const int> corr, const GuidedUpdateVars<T>& w);

template <typename T>
struct NonSpatialProxies {
    /// blocks*m x d
    Var<T> proxies;
    /// Scaled logits A, blocks*m x n; reused by the splat.
    Var<T> logits;
};

/// A = (Q (full W_k)^T) * scale and proxies = softmax(A, over n) full, per block.
template <typename T>
NonSpatialProxies<T> nonspatial_generate(Var<T> full, const NonSpatialVars<T>& w, std::size_t blocks);

/// guidance = softmax(A^T, over m) proxies, per block.
template <typename T>
Var<T> nonspatial_splat(Var<T> logits, Var<T> proxies, std::size_t blocks);

// Single-grid tensor conveniences used by tests and tools.

template <typename T>
Tensor<T> downsample_spatial(const Tensor<T>& vision, const SpatialProxyConfig& config);

template <typename T>
Tensor<T> guided_update(const Tensor<T>& full, const Tensor<T>& proxies, std::span<const int> corr,
                        const GuidedUpdateParams<T>& params);

template <typename T>
Tensor<T> guided_update_ns(const Tensor<T>& full, const Tensor<T>& guidance, const GuidedUpdateParams<T>& params);

template <typename T>
struct NonSpatialResult {
    Tensor<T> proxies;
    Tensor<T> logits;
};

template <typename T>
NonSpatialResult<T> nonspatial_generate(const Tensor<T>& full, const NonSpatialProxyParams<T>& params);

template <typename T>
Tensor<T> nonspatial_splat(const Tensor<T>& logits, const Tensor<T>& proxies);

}  // namespace proxyv
