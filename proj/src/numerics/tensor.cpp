// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace proxyv {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

namespace {
void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
    }
}
}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_)) {
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_to_string(shape_));
    }
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return Tensor(Shape{rows, cols}, std::vector<T>(values));
}

template <typename T>
Tensor<T> Tensor<T>::identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = T{1};
    return t;
}

template <typename T>
std::size_t Tensor<T>::rows() const {
    if (shape_.empty()) return 0;
    if (shape_.size() == 1) return 1;
    return data_.size() / shape_.back();
}

template <typename T>
std::size_t Tensor<T>::cols() const {
    return shape_.empty() ? 0 : shape_.back();
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + ": expected a matrix, got shape " + shape_to_string(t.shape()));
    }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "max_abs_diff");
    T m{0};
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template class Tensor<float>;
template class Tensor<double>;
template void require_matrix(const Tensor<float>&, const char*);
template void require_matrix(const Tensor<double>&, const char*);
template void require_same_shape(const Tensor<float>&, const Tensor<float>&, const char*);
template void require_same_shape(const Tensor<double>&, const Tensor<double>&, const char*);
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace proxyv
