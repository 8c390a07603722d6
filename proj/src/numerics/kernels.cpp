// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "proxyv/numerics/mac_counter.hpp"

namespace proxyv {

MacCounter& MacCounter::local() {
    thread_local MacCounter counter;
    return counter;
}

namespace {

// 64-byte vectors through the compiler's vector extension; the unaligned
// alias type is used for every load and store.
template <typename T>
struct Lanes {
    static constexpr std::size_t count = 64 / sizeof(T);
    typedef T vec __attribute__((vector_size(64)));
    typedef T uvec __attribute__((vector_size(64), aligned(sizeof(T)), may_alias));
};

template <typename T>
inline typename Lanes<T>::vec load(const T* p) {
    return *reinterpret_cast<const typename Lanes<T>::uvec*>(p);
}

template <typename T>
inline void add_store(T* p, typename Lanes<T>::vec v) {
    auto* q = reinterpret_cast<typename Lanes<T>::uvec*>(p);
    *q = *q + v;
}

// R rows of C by V vectors, accumulated in registers over all of k. Every
// element sums its products in ascending k, then lands on C once.
template <typename T, std::size_t R, std::size_t V>
inline void tile(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t k, std::size_t n) {
    using vec = typename Lanes<T>::vec;
    constexpr std::size_t L = Lanes<T>::count;
    vec acc[R][V];
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t q = 0; q < V; ++q) acc[r][q] = vec{};
    for (std::size_t p = 0; p < k; ++p) {
        vec bv[V];
        for (std::size_t q = 0; q < V; ++q) bv[q] = load(b + p * n + q * L);
        for (std::size_t r = 0; r < R; ++r) {
            const T s = a[r * k + p];
            for (std::size_t q = 0; q < V; ++q) acc[r][q] += s * bv[q];
        }
    }
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t q = 0; q < V; ++q) add_store(c + r * n + q * L, acc[r][q]);
}

template <typename T, std::size_t R>
inline void tail(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t k, std::size_t n,
                 std::size_t width) {
    T acc[R][Lanes<T>::count] = {};
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t r = 0; r < R; ++r) {
            const T s = a[r * k + p];
            for (std::size_t j = 0; j < width; ++j) acc[r][j] += s * b[p * n + j];
        }
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < width; ++j) c[r * n + j] += acc[r][j];
}

template <typename T, std::size_t R>
void row_block(const T* a, const T* b, T* c, std::size_t k, std::size_t n) {
    constexpr std::size_t L = Lanes<T>::count;
    std::size_t j = 0;
    for (; j + 2 * L <= n; j += 2 * L) tile<T, R, 2>(a, b + j, c + j, k, n);
    for (; j + L <= n; j += L) tile<T, R, 1>(a, b + j, c + j, k, n);
    if (j < n) tail<T, R>(a, b + j, c + j, k, n, n - j);
}

}  // namespace

template <typename T>
void gemm(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
    count_macs(static_cast<std::uint64_t>(m) * k * n);
    if (!accumulate) std::fill(c, c + m * n, T{0});
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) row_block<T, 4>(a + i * k, b, c + i * n, k, n);
    for (; i < m; ++i) row_block<T, 1>(a + i * k, b, c + i * n, k, n);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.rows(), c = a.cols();
    Tensor<T> out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
    }
    Tensor<T> c(Shape{a.rows(), b.cols()});
    gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
    return c;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()) + "^T");
    }
    return matmul(a, transpose(b));
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: incompatible shapes " + shape_to_string(a.shape()) + "^T and " +
                             shape_to_string(b.shape()));
    }
    return matmul(transpose(a), b);
}

namespace {

template <typename T>
void softmax_strided(const T* in, T* out, std::size_t len, std::size_t stride) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[i * stride]);
    T sum{0};
    for (std::size_t i = 0; i < len; ++i) {
        const T e = std::exp(in[i * stride] - mx);
        out[i * stride] = e;
        sum += e;
    }
    const T inv = T{1} / sum;
    for (std::size_t i = 0; i < len; ++i) out[i * stride] *= inv;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    if (x.rank() > 2) throw DimensionError("softmax: rank > 2 unsupported, got " + shape_to_string(x.shape()));
    const int rank = static_cast<int>(x.rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw InputError("softmax: invalid axis " + std::to_string(axis));
    Tensor<T> out(x.shape());
    if (rank == 1) {
        softmax_strided(x.data(), out.data(), x.numel(), 1);
        return out;
    }
    const std::size_t r = x.rows(), c = x.cols();
    if (axis == 1) {
        for (std::size_t i = 0; i < r; ++i) softmax_strided(x.data() + i * c, out.data() + i * c, c, 1);
    } else {
        for (std::size_t j = 0; j < c; ++j) softmax_strided(x.data() + j, out.data() + j, r, c);
    }
    return out;
}

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps) {
    if (!(eps > T{0})) throw InputError("rms_norm: eps must be positive");
    const std::size_t d = x.cols();
    if (gain.numel() != d) {
        throw DimensionError("rms_norm: gain " + shape_to_string(gain.shape()) + " does not match input " +
                             shape_to_string(x.shape()));
    }
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const T* xr = x.data() + r * d;
        T ss{0};
        for (std::size_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
        const T inv = T{1} / std::sqrt(ss / static_cast<T>(d) + eps);
        T* yr = y.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] * inv * gain[j];
    }
    return y;
}

template <typename T>
T silu(T v) {
    return v / (T{1} + std::exp(-v));
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = silu(x[i]);
    return y;
}

template <typename T>
Tensor<T> gated_ffn(const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up, const Tensor<T>& w_down) {
    require_matrix(x, "gated_ffn");
    if (w_gate.shape() != w_up.shape() || w_down.rank() != 2 || w_down.rows() != w_gate.cols() ||
        w_down.cols() != x.cols()) {
        throw DimensionError("gated_ffn: inconsistent weights gate " + shape_to_string(w_gate.shape()) + ", up " +
                             shape_to_string(w_up.shape()) + ", down " + shape_to_string(w_down.shape()) +
                             " for input " + shape_to_string(x.shape()));
    }
    Tensor<T> g = matmul(x, w_gate);
    const Tensor<T> u = matmul(x, w_up);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = silu(g[i]) * u[i];
    return matmul(g, w_down);
}

template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
    require_matrix(logits, "cross_entropy");
    if (targets.size() != logits.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(logits.rows()) + " rows");
    }
    const std::size_t classes = logits.cols();
    T total{0};
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= classes) {
            throw InputError("cross_entropy: target " + std::to_string(t) + " outside [0," +
                             std::to_string(classes) + ")");
        }
        const T* row = logits.data() + r * classes;
        const T mx = *std::max_element(row, row + classes);
        T sum{0};
        for (std::size_t j = 0; j < classes; ++j) sum += std::exp(row[j] - mx);
        total += std::log(sum) + mx - row[t];
    }
    return total / static_cast<T>(logits.rows());
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

#define PROXYV_INSTANTIATE_KERNELS(T)                                                                \
    template void gemm<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);      \
    template Tensor<T> transpose(const Tensor<T>&);                                                  \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> softmax(const Tensor<T>&, int);                                               \
    template Tensor<T> rms_norm(const Tensor<T>&, const Tensor<T>&, T);                              \
    template T silu(T);                                                                              \
    template Tensor<T> silu(const Tensor<T>&);                                                       \
    template Tensor<T> gated_ffn(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
    template T cross_entropy(const Tensor<T>&, std::span<const int>);                                \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> scale(const Tensor<T>&, T);

PROXYV_INSTANTIATE_KERNELS(float)
PROXYV_INSTANTIATE_KERNELS(double)

}  // namespace proxyv
