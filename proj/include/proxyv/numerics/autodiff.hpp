// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "proxyv/numerics/tensor.hpp"

namespace proxyv {

/// Trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor<T>& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode recording of one forward computation.
///
/// Every op appends a node holding its output value and a closure that maps
/// the output gradient to input gradients. `backward` walks the nodes in
/// reverse and finally adds leaf gradients into the bound Parameters. A tape is
/// single-use: record, backward once, discard.
template <typename T>
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value);
    Var<T> param(Parameter<T>& p);

    /// Appends an op output. `fn` is dropped when no input needs a gradient.
    Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
    Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn);

    const Tensor<T>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

    /// Adds `g` into node `id`'s gradient (no-op for constants).
    void accumulate(int id, const Tensor<T>& g);
    void accumulate(int id, Tensor<T>&& g);
    /// Zero-initialised gradient buffer of node `id` for in-place accumulation.
    Tensor<T>& grad_buffer(int id);

    /// Backpropagates from a scalar output (seed 1).
    void backward(Var<T> out);
    void backward(Var<T> out, const Tensor<T>& seed);

    /// Gradient of the last backward output with respect to `v`, or nullptr.
    const Tensor<T>* grad(Var<T> v) const;

    std::size_t size() const { return nodes_.size(); }
    bool finished() const { return finished_; }

  private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter<T>* param = nullptr;
    };

    std::vector<Node> nodes_;
    bool finished_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape->value(id);
}

/// One output row in a stitch: copy row `row` of input `source`, or a zero row
/// when `source` is negative.
struct RowRef {
    int source = -1;
    int row = 0;
};

namespace ad {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

/// Per-block product op(A_i) * op(B_i) for i in [0, blocks). A and B are
/// stacked vertically in equal blocks; an operand with `shared` set is a single
/// block reused by every i.
struct BlockMatmulOptions {
    bool trans_a = false;
    bool trans_b = false;
    bool shared_a = false;
    bool shared_b = false;
};
template <typename T>
Var<T> block_matmul(Var<T> a, Var<T> b, std::size_t blocks, BlockMatmulOptions opts = {});

/// Transposes each of `blocks` equal vertical blocks.
template <typename T>
Var<T> block_transpose(Var<T> x, std::size_t blocks);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T s);
template <typename T>
Var<T> silu(Var<T> a);
/// silu(gate) * up
template <typename T>
Var<T> silu_mul(Var<T> gate, Var<T> up);
template <typename T>
Var<T> rms_norm(Var<T> x, Var<T> gain, T eps);
/// Softmax along each row.
template <typename T>
Var<T> softmax_rows(Var<T> x);
/// Mean cross-entropy over rows; returns a 1-element tensor.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets);
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const int> rows);
/// Builds a matrix row by row from several inputs of equal width.
template <typename T>
Var<T> stitch_rows(std::span<const Var<T>> sources, std::span<const RowRef> layout);
template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b);

}  // namespace ad

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace proxyv
