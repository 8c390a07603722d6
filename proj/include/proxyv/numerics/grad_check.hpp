// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "proxyv/numerics/autodiff.hpp"

namespace proxyv {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    /// Lower bound of the relative-error denominator, so coordinates whose true
    /// gradient is ~0 are judged by absolute error instead.
    double floor = 1e-4;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    bool passed = true;
};

/// Builds a scalar-valued computation on the given tape. The function binds the
/// Parameters it reads via Tape::param, so perturbing Parameter::value changes
/// its output.
using ScalarFunction = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients of `fn` with central differences for every
/// coordinate of every input Parameter. Runs at 64-bit precision only. The
/// inputs' gradients are overwritten and values restored.
///
/// error(i) = |analytic - numeric| / max(|analytic|, |numeric|, floor)
GradCheckReport grad_check(const ScalarFunction& fn, std::span<Parameter<double>* const> inputs,
                           const GradCheckOptions& opts = {});

}  // namespace proxyv
