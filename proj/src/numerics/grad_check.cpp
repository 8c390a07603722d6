// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace proxyv {

namespace {

double evaluate(const ScalarFunction& fn) {
    Tape<double> tape;
    const Var<double> out = fn(tape);
    if (out.value().numel() != 1) throw DimensionError("grad_check: function must be scalar-valued");
    return out.value()[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& fn, std::span<Parameter<double>* const> inputs,
                           const GradCheckOptions& opts) {
    if (!(opts.step > 0.0)) throw InputError("grad_check: step must be positive");
    for (auto* p : inputs) {
        if (!p->value.all_finite()) throw InputError("grad_check: non-finite input " + p->name);
        p->zero_grad();
    }
    {
        Tape<double> tape;
        const Var<double> out = fn(tape);
        tape.backward(out);
    }
    std::vector<Tensor<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto* p : inputs) analytic.push_back(p->grad);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
        Parameter<double>& p = *inputs[pi];
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double original = p.value[i];
            p.value[i] = original + opts.step;
            const double up = evaluate(fn);
            p.value[i] = original - opts.step;
            const double down = evaluate(fn);
            p.value[i] = original;

            const double numeric = (up - down) / (2.0 * opts.step);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
            const double err = std::abs(a - numeric) / denom;
            ++report.coordinates;
            if (err > report.max_rel_error || report.worst_param.empty()) {
                if (err >= report.max_rel_error) {
                    report.max_rel_error = err;
                    report.worst_param = p.name;
                    report.worst_index = i;
                    report.worst_analytic = a;
                    report.worst_numeric = numeric;
                }
            }
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    return report;
}

}  // namespace proxyv
