// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "proxyv/numerics/rng.hpp"
#include "proxyv/numerics/tensor.hpp"

namespace proxyv::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    SeededRng rng(seed);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(scale * rng.normal());
    return t;
}

/// Plain triple loop in double, the reference for every matrix product.
template <typename T>
Tensor<double> naive_matmul(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<double> c(Shape{a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += double(a.at(i, k)) * double(b.at(k, j));
            c.at(i, j) = s;
        }
    return c;
}

template <typename A, typename B>
double max_diff(const Tensor<A>& a, const Tensor<B>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace proxyv::testing
