// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "proxyv/numerics/autodiff.hpp"

namespace proxyv {

struct AdamOptions {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Global gradient-norm clip; <= 0 disables.
    double clip_norm = 1.0;
    /// Linear warmup length as a fraction of total steps.
    double warmup_fraction = 0.05;
};

/// Adaptive-moment optimizer. Moments are kept in the parameter precision and
/// stored in checkpoints.
template <typename T>
class Adam {
  public:
    Adam(AdamOptions opts, std::size_t total_steps) : opts_(opts), total_steps_(total_steps) {}

    /// Learning rate applied at step index `step` (0-based).
    double learning_rate_at(std::uint64_t step) const;

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Returns the pre-clip global gradient norm.
    double step(std::span<Parameter<T>* const> params);

    std::uint64_t steps_taken() const { return t_; }
    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    const std::vector<Tensor<T>>& first_moments() const { return m_; }
    const std::vector<Tensor<T>>& second_moments() const { return v_; }
    void restore(std::uint64_t steps, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v);

    const AdamOptions& options() const { return opts_; }

  private:
    AdamOptions opts_;
    std::size_t total_steps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace proxyv
