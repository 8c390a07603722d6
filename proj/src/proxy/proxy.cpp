// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/proxy/proxy.hpp"

#include <cmath>

#include "proxyv/numerics/kernels.hpp"
#include "proxyv/numerics/mac_counter.hpp"

namespace proxyv {

void SpatialProxyConfig::validate() const {
    if (grid_side == 0 || factor == 0 || grid_side % factor != 0) {
        throw ConfigError("spatial proxy: factor " + std::to_string(factor) + " must divide grid side " +
                          std::to_string(grid_side));
    }
}

std::uint64_t guided_update_parameter_count(std::uint64_t d, std::uint64_t h) {
    return 2 * d * h + 2 * h * h + h * d;
}

namespace {
template <typename T>
Tensor<T> normal_tensor(Shape shape, SeededRng& rng, double stddev) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(rng.normal() * stddev);
    return t;
}
}  // namespace

template <typename T>
GuidedUpdateParams<T> GuidedUpdateParams<T>::init(std::size_t d, std::size_t h, SeededRng& rng, double stddev,
                                                  bool zero_output, const std::string& prefix) {
    GuidedUpdateParams p;
    p.down_full = Parameter<T>(prefix + "down_full", normal_tensor<T>({d, h}, rng, stddev));
    p.down_proxy = Parameter<T>(prefix + "down_proxy", normal_tensor<T>({d, h}, rng, stddev));
    p.hidden = Parameter<T>(prefix + "hidden", normal_tensor<T>({2 * h, h}, rng, stddev));
    p.out = Parameter<T>(prefix + "out", zero_output ? Tensor<T>(Shape{h, d}) : normal_tensor<T>({h, d}, rng, stddev));
    return p;
}

template <typename T>
double NonSpatialProxyParams<T>::scale() const {
    return 1.0 / std::sqrt(static_cast<double>(query_dim()));
}

template <typename T>
void NonSpatialProxyParams<T>::validate() const {
    if (queries.value.rank() != 2 || key_proj.value.rank() != 2 || key_proj.value.cols() != queries.value.cols()) {
        throw ConfigError("non-spatial proxy: queries and key projection disagree on d_q");
    }
    if (query_dim() >= key_proj.value.rows()) {
        throw ConfigError("non-spatial proxy: d_q must be smaller than the token width");
    }
}

template <typename T>
NonSpatialProxyParams<T> NonSpatialProxyParams<T>::init(std::size_t m, std::size_t d, std::size_t dq, SeededRng& rng,
                                                        double stddev, const std::string& prefix) {
    NonSpatialProxyParams p;
    p.queries = Parameter<T>(prefix + "queries", normal_tensor<T>({m, dq}, rng, stddev));
    p.key_proj = Parameter<T>(prefix + "key_proj", normal_tensor<T>({d, dq}, rng, stddev));
    p.validate();
    return p;
}

template <typename T>
GuidedUpdateVars<T> bind(Tape<T>& tape, GuidedUpdateParams<T>& p) {
    return {tape.param(p.down_full), tape.param(p.down_proxy), tape.param(p.hidden), tape.param(p.out)};
}

template <typename T>
NonSpatialVars<T> bind(Tape<T>& tape, NonSpatialProxyParams<T>& p) {
    return {tape.param(p.queries), tape.param(p.key_proj), p.scale()};
}

std::vector<int> correspondence(const SpatialProxyConfig& config) {
    config.validate();
    const std::size_t n = config.grid_side, r = config.factor, m = config.proxy_side();
    std::vector<int> map(n * n);
    for (std::size_t row = 0; row < n; ++row)
        for (std::size_t col = 0; col < n; ++col) map[row * n + col] = static_cast<int>((row / r) * m + col / r);
    return map;
}

template <typename T>
Var<T> downsample_spatial(Var<T> vision, const SpatialProxyConfig& config, std::size_t blocks) {
    config.validate();
    const Tensor<T>& x = vision.value();
    const std::size_t full = config.full_count(), proxies = config.proxy_count();
    if (blocks == 0 || x.rows() != blocks * full) {
        throw InputError("downsample_spatial: expected " + std::to_string(full) + " tokens per grid x " +
                         std::to_string(blocks) + " grids, got " + std::to_string(x.rows()) + " rows");
    }
    const std::size_t d = x.cols();
    const std::vector<int> corr = correspondence(config);
    const T inv = T{1} / static_cast<T>(config.factor * config.factor);
    Tensor<T> out(Shape{blocks * proxies, d});
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t i = 0; i < full; ++i) {
            const T* src = x.data() + (b * full + i) * d;
            T* dst = out.data() + (b * proxies + static_cast<std::size_t>(corr[i])) * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    }
    count_adds(static_cast<std::uint64_t>(blocks) * full * d);
    for (auto& v : out.values()) v *= inv;
    const int ix = vision.id;
    return vision.tape->record(std::move(out), {vision}, [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> dx(Shape{blocks * full, d});
        for (std::size_t b = 0; b < blocks; ++b) {
            for (std::size_t i = 0; i < full; ++i) {
                const T* src = g.data() + (b * proxies + static_cast<std::size_t>(corr[i])) * d;
                T* dst = dx.data() + (b * full + i) * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] * inv;
            }
        }
        t.accumulate(ix, std::move(dx));
    });
}

template <typename T>
Var<T> guided_update_ns(Var<T> full, Var<T> guidance, const GuidedUpdateVars<T>& w) {
    if (full.rows() != guidance.rows()) {
        throw DimensionError("guided_update: " + std::to_string(guidance.rows()) + " guidance rows for " +
                             std::to_string(full.rows()) + " full tokens");
    }
    const Var<T> joint = ad::concat_cols(ad::matmul(full, w.down_full), ad::matmul(guidance, w.down_proxy));
    const Var<T> delta = ad::matmul(ad::silu(ad::matmul(joint, w.hidden)), w.out);
    return ad::add(full, delta);
}

template <typename T>
Var<T> guided_update(Var<T> full, Var<T> proxies, std::span<const int> corr, const GuidedUpdateVars<T>& w) {
    if (corr.size() != full.rows()) {
        throw InputError("guided_update: correspondence covers " + std::to_string(corr.size()) + " of " +
                         std::to_string(full.rows()) + " full tokens");
    }
    for (int c : corr) {
        if (c < 0 || static_cast<std::size_t>(c) >= proxies.rows()) {
            throw InputError("guided_update: dangling correspondence to proxy " + std::to_string(c));
        }
    }
    return guided_update_ns(full, ad::gather_rows(proxies, corr), w);
}

template <typename T>
NonSpatialProxies<T> nonspatial_generate(Var<T> full, const NonSpatialVars<T>& w, std::size_t blocks) {
    if (blocks == 0 || full.rows() == 0 || full.rows() % blocks != 0) {
        throw InputError("nonspatial_generate: full tokens do not split into " + std::to_string(blocks) + " blocks");
    }
    const Var<T> keys = ad::matmul(full, w.key_proj);
    const Var<T> raw = ad::block_matmul(w.queries, keys, blocks, {.trans_b = true, .shared_a = true});
    const Var<T> logits = ad::scale(raw, static_cast<T>(w.scale));
    const Var<T> proxies = ad::block_matmul(ad::softmax_rows(logits), full, blocks);
    return {proxies, logits};
}

template <typename T>
Var<T> nonspatial_splat(Var<T> logits, Var<T> proxies, std::size_t blocks) {
    if (blocks == 0 || logits.rows() != proxies.rows() || logits.rows() % blocks != 0) {
        throw DimensionError("nonspatial_splat: logits " + shape_to_string(logits.value().shape()) +
                             " do not match proxies " + shape_to_string(proxies.value().shape()));
    }
    const Var<T> weights = ad::softmax_rows(ad::block_transpose(logits, blocks));
    return ad::block_matmul(weights, proxies, blocks);
}

template <typename T>
Tensor<T> downsample_spatial(const Tensor<T>& vision, const SpatialProxyConfig& config) {
    Tape<T> tape;
    return downsample_spatial(tape.constant(vision), config, 1).value();
}

template <typename T>
Tensor<T> guided_update(const Tensor<T>& full, const Tensor<T>& proxies, std::span<const int> corr,
                        const GuidedUpdateParams<T>& params) {
    Tape<T> tape;
    GuidedUpdateParams<T> p = params;
    return guided_update(tape.constant(full), tape.constant(proxies), corr, bind(tape, p)).value();
}

template <typename T>
Tensor<T> guided_update_ns(const Tensor<T>& full, const Tensor<T>& guidance, const GuidedUpdateParams<T>& params) {
    Tape<T> tape;
    GuidedUpdateParams<T> p = params;
    return guided_update_ns(tape.constant(full), tape.constant(guidance), bind(tape, p)).value();
}

template <typename T>
NonSpatialResult<T> nonspatial_generate(const Tensor<T>& full, const NonSpatialProxyParams<T>& params) {
    Tape<T> tape;
    NonSpatialProxyParams<T> p = params;
    const auto r = nonspatial_generate(tape.constant(full), bind(tape, p), 1);
    return {r.proxies.value(), r.logits.value()};
}

template <typename T>
Tensor<T> nonspatial_splat(const Tensor<T>& logits, const Tensor<T>& proxies) {
    if (logits.rank() != 2 || proxies.rank() != 2 || logits.rows() != proxies.rows()) {
        throw DimensionError("nonspatial_splat: logits " + shape_to_string(logits.shape()) +
                             " do not match proxies " + shape_to_string(proxies.shape()));
    }
    Tape<T> tape;
    return nonspatial_splat(tape.constant(logits), tape.constant(proxies), 1).value();
}

#define PROXYV_INSTANTIATE_PROXY(T)                                                                        \
    template struct GuidedUpdateParams<T>;                                                                 \
    template struct NonSpatialProxyParams<T>;                                                              \
    template GuidedUpdateVars<T> bind(Tape<T>&, GuidedUpdateParams<T>&);                                   \
    template NonSpatialVars<T> bind(Tape<T>&, NonSpatialProxyParams<T>&);                                  \
    template Var<T> downsample_spatial(Var<T>, const SpatialProxyConfig&, std::size_t);                    \
    template Var<T> guided_update_ns(Var<T>, Var<T>, const GuidedUpdateVars<T>&);                          \
    template Var<T> guided_update(Var<T>, Var<T>, std::span<const int>, const GuidedUpdateVars<T>&);       \
    template NonSpatialProxies<T> nonspatial_generate(Var<T>, const NonSpatialVars<T>&, std::size_t);      \
    template Var<T> nonspatial_splat(Var<T>, Var<T>, std::size_t);                                         \
    template Tensor<T> downsample_spatial(const Tensor<T>&, const SpatialProxyConfig&);                    \
    template Tensor<T> guided_update(const Tensor<T>&, const Tensor<T>&, std::span<const int>,             \
                                     const GuidedUpdateParams<T>&);                                        \
    template Tensor<T> guided_update_ns(const Tensor<T>&, const Tensor<T>&, const GuidedUpdateParams<T>&); \
    template NonSpatialResult<T> nonspatial_generate(const Tensor<T>&, const NonSpatialProxyParams<T>&);   \
    template Tensor<T> nonspatial_splat(const Tensor<T>&, const Tensor<T>&);

PROXYV_INSTANTIATE_PROXY(float)
PROXYV_INSTANTIATE_PROXY(double)

}  // namespace proxyv
