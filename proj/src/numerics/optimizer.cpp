// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/numerics/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace proxyv {

template <typename T>
double Adam<T>::learning_rate_at(std::uint64_t step) const {
    const double warmup = std::floor(opts_.warmup_fraction * static_cast<double>(total_steps_));
    if (warmup >= 1.0 && static_cast<double>(step) < warmup) {
        return opts_.learning_rate * static_cast<double>(step + 1) / warmup;
    }
    return opts_.learning_rate;
}

template <typename T>
double Adam<T>::step(std::span<Parameter<T>* const> params) {
    if (m_.empty()) {
        for (auto* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }
    if (m_.size() != params.size()) throw StateError("Adam: parameter set changed between steps");

    double sq = 0.0;
    for (auto* p : params)
        for (auto g : p->grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    const double clip = (opts_.clip_norm > 0.0 && norm > opts_.clip_norm) ? opts_.clip_norm / norm : 1.0;

    const double lr = learning_rate_at(t_);
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(opts_.epsilon);
    const T c = static_cast<T>(clip);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter<T>& p = *params[k];
        Tensor<T>& m = m_[k];
        Tensor<T>& v = v_[k];
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const T g = p.grad[i] * c;
            m[i] = b1 * m[i] + (T{1} - b1) * g;
            v[i] = b2 * v[i] + (T{1} - b2) * g * g;
            p.value[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
        }
        p.zero_grad();
    }
    return norm;
}

template <typename T>
void Adam<T>::restore(std::uint64_t steps, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
    if (m.size() != v.size()) throw InputError("Adam::restore: moment lists differ in length");
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace proxyv
