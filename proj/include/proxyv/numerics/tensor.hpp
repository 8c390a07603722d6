// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "proxyv/errors.hpp"

namespace proxyv {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. Value semantics; copies are deep.
///
/// Extents are always positive. Most kernels in this project operate on rank-2
/// tensors (rows x cols); rank-1 tensors are used for gains and scalars.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values);
    static Tensor identity(std::size_t n);
    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Leading extent; for rank-1 tensors this is 1 (treated as a single row).
    std::size_t rows() const;
    /// Trailing extent.
    std::size_t cols() const;

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    const std::vector<T>& storage() const { return data_; }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    void fill(T v);
    bool all_finite() const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

  private:
    Shape shape_;
    std::vector<T> data_;
};

/// Throws DimensionError unless `t` is rank 2.
template <typename T>
void require_matrix(const Tensor<T>& t, const char* what);

/// Throws DimensionError unless the shapes match exactly.
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what);

/// Maximum absolute elementwise difference; shapes must match.
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace proxyv
