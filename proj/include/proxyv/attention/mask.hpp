// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "proxyv/attention/layout.hpp"

namespace proxyv {

/// Dense boolean permission matrix, queries x keys.
class AttentionMask {
  public:
    AttentionMask() = default;
    AttentionMask(std::size_t queries, std::size_t keys) : queries_(queries), keys_(keys), allow_(queries * keys, 0) {}

    std::size_t queries() const { return queries_; }
    std::size_t keys() const { return keys_; }
    bool allowed(std::size_t q, std::size_t k) const { return allow_[q * keys_ + k] != 0; }
    void set(std::size_t q, std::size_t k, bool v) { allow_[q * keys_ + k] = v ? 1 : 0; }

    std::size_t permitted_count() const;
    std::size_t permitted_in_row(std::size_t q) const;
    /// True when every query row permits at least one key.
    bool rows_nonempty() const;

    /// Sub-matrix over the given query and key positions.
    AttentionMask restrict(std::span<const int> q_idx, std::span<const int> kv_idx) const;

    friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

  private:
    std::size_t queries_ = 0;
    std::size_t keys_ = 0;
    std::vector<std::uint8_t> allow_;
};

/// Query i may attend key j iff j <= i in sequence order.
AttentionMask causal_mask(const TokenLayout& layout);

struct VisionMaskOptions {
    /// A vision query keeps its own key. Disabling this can leave rows empty,
    /// which is rejected.
    bool keep_self = true;
    /// A vision query may attend earlier Text/Separator keys.
    bool allow_preceding_text = true;
};

/// Causal mask in which no Vision query attends a different Vision key.
AttentionMask vision_masked_mask(const TokenLayout& layout, VisionMaskOptions opts = {});

enum class MaskKind { Causal, VisionMasked };

/// Per-layer mask kinds: the last ceil(fraction * layers) layers are vision-masked.
std::vector<MaskKind> partial_mask(std::size_t layers, double masked_layer_fraction);

}  // namespace proxyv
