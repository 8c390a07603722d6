// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/attention/mask.hpp"

#include <cmath>
#include <string>

#include "proxyv/errors.hpp"

namespace proxyv {

std::size_t AttentionMask::permitted_count() const {
    std::size_t n = 0;
    for (auto v : allow_) n += v;
    return n;
}

std::size_t AttentionMask::permitted_in_row(std::size_t q) const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < keys_; ++k) n += allow_[q * keys_ + k];
    return n;
}

bool AttentionMask::rows_nonempty() const {
    for (std::size_t q = 0; q < queries_; ++q)
        if (permitted_in_row(q) == 0) return false;
    return true;
}

AttentionMask AttentionMask::restrict(std::span<const int> q_idx, std::span<const int> kv_idx) const {
    AttentionMask out(q_idx.size(), kv_idx.size());
    for (std::size_t a = 0; a < q_idx.size(); ++a) {
        const auto q = static_cast<std::size_t>(q_idx[a]);
        if (q >= queries_) throw InputError("mask restrict: query index " + std::to_string(q) + " out of range");
        for (std::size_t b = 0; b < kv_idx.size(); ++b) {
            const auto k = static_cast<std::size_t>(kv_idx[b]);
            if (k >= keys_) throw InputError("mask restrict: key index " + std::to_string(k) + " out of range");
            out.set(a, b, allowed(q, k));
        }
    }
    return out;
}

AttentionMask causal_mask(const TokenLayout& layout) {
    const std::size_t n = layout.size();
    AttentionMask m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    return m;
}

AttentionMask vision_masked_mask(const TokenLayout& layout, VisionMaskOptions opts) {
    AttentionMask m = causal_mask(layout);
    const std::size_t n = layout.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!layout.is_vision(i)) continue;
        for (std::size_t j = 0; j <= i; ++j) {
            if (layout.is_vision(j)) {
                m.set(i, j, j == i && opts.keep_self);
            } else if (!opts.allow_preceding_text) {
                m.set(i, j, false);
            }
        }
        if (m.permitted_in_row(i) == 0) {
            throw InputError("vision_masked_mask: vision query at position " + std::to_string(i) +
                             " has no permitted key");
        }
    }
    return m;
}

std::vector<MaskKind> partial_mask(std::size_t layers, double masked_layer_fraction) {
    if (!(masked_layer_fraction >= 0.0 && masked_layer_fraction <= 1.0)) {
        throw InputError("partial_mask: fraction must lie in [0,1]");
    }
    const double raw = masked_layer_fraction * static_cast<double>(layers);
    // Absorb representation error so 0.5 * 8 stays 4.
    auto masked = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    if (masked > layers) masked = layers;
    std::vector<MaskKind> out(layers, MaskKind::Causal);
    for (std::size_t l = layers - masked; l < layers; ++l) out[l] = MaskKind::VisionMasked;
    return out;
}

}  // namespace proxyv
