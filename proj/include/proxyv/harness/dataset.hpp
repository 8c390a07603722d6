// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "proxyv/model/model.hpp"

namespace proxyv::harness {

enum class TaskKind {
    DenseRecall,  ///< report the symbol at a queried grid cell
    Majority,     ///< report the most frequent symbol of grid 0
    Successor,    ///< report the symbol in the raster cell after the unique occurrence of the query symbol
};

std::string task_name(TaskKind k);
TaskKind parse_task(const std::string& name);

struct TaskConfig {
    TaskKind kind = TaskKind::DenseRecall;
    std::size_t grid_side = 8;
    std::size_t symbols = 16;
    std::size_t grids = 1;
    /// Majority task: fraction of cells forced to the planted symbol.
    double majority_share = 0.25;

    void validate() const;
    /// Text tokens per example: one query token for either task.
    std::size_t text_len() const { return 1; }
    /// Text-only tokens the model must reserve beyond the symbols.
    std::size_t control_tokens() const;

    // Token ids: symbols occupy [0, symbols), then one query token per
    // (grid, row, col) cell, then the majority query.
    int cell_token(std::size_t g, std::size_t r, std::size_t c) const {
        return static_cast<int>(symbols + (g * grid_side + r) * grid_side + c);
    }
    int majority_token() const { return static_cast<int>(symbols + grids * grid_side * grid_side); }
};

struct Example {
    /// grids * side^2 symbols, raster order per grid.
    std::vector<int> vision;
    std::vector<int> text;
    int answer = 0;
};

struct Dataset {
    TaskConfig task;
    std::uint64_t seed = 0;
    std::vector<Example> train;
    std::vector<Example> val;
};

/// Deterministic in (config, sizes, seed). No example appears twice across
/// train and val.
Dataset gen_dense_recall(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed);
Dataset gen_majority(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed);
Dataset gen_successor(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed);
Dataset generate(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed);

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices);
Batch make_batch(std::span<const Example> examples, std::size_t begin, std::size_t end);

/// Best achievable DenseRecall accuracy when a fraction `keep` of cells is visible.
double pruning_ceiling(double keep, std::size_t symbols);

void to_json(nlohmann::json& j, const TaskConfig& t);
void from_json(const nlohmann::json& j, TaskConfig& t);

/// Writes train/val as JSON lines with a header record.
void save_dataset(const std::string& path, const Dataset& data);

}  // namespace proxyv::harness
