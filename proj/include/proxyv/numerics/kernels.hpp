// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "proxyv/numerics/tensor.hpp"

namespace proxyv {

/// C (m x n) = A (m x k) * B (k x n), all row-major. When `accumulate` is set,
/// the product is added to C instead of overwriting it. Counts m*k*n MACs.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// Matrix product; throws DimensionError naming both shapes on mismatch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a * b^T without materialising the transpose in the caller.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

/// a^T * b.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);

/// Numerically stable softmax of a rank-1 or rank-2 tensor. For rank 2, axis 1
/// normalises each row and axis 0 each column. Negative axes count from the end.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

/// y = x / sqrt(mean(x^2) + eps) * gain, over the trailing extent.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps);

template <typename T>
T silu(T v);

template <typename T>
Tensor<T> silu(const Tensor<T>& x);

/// (silu(x w_gate) * (x w_up)) w_down.
template <typename T>
Tensor<T> gated_ffn(const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up, const Tensor<T>& w_down);

/// Mean negative log-likelihood of `targets` under row-wise softmax of `logits`.
template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

}  // namespace proxyv
