// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "proxyv/model/model.hpp"

namespace proxyv {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Writes config, parameters and optional optimizer moments. Values are
/// stored as little-endian float32 regardless of T. Layout: docs/checkpoint_format.md.
template <typename T>
void save_checkpoint(const std::string& path, Model<T>& model, const Adam<T>* optimizer = nullptr,
                     std::uint64_t seed = 0);

template <typename T>
struct LoadedCheckpoint {
    std::unique_ptr<Model<T>> model;
    std::uint64_t seed = 0;
    /// Optimizer steps taken; 0 when no optimizer state was stored.
    std::uint64_t optimizer_steps = 0;
    bool has_optimizer = false;
    std::vector<Tensor<T>> first_moments;
    std::vector<Tensor<T>> second_moments;
};

/// Throws InputError on a malformed file or a digest mismatch.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

}  // namespace proxyv
