// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "proxyv/harness/dataset.hpp"
#include "proxyv/model/config.hpp"
#include "proxyv/numerics/optimizer.hpp"

namespace proxyv::harness {

/// Reference toy architecture: 4 layers, width 64, 4 heads, FFN 192,
/// module hidden widths 16, proxy factor 2.
ModelConfig toy_model();

/// Reference optimizer settings for toy runs (learning rate 3e-3).
AdamOptions toy_optimizer();

/// One training/evaluation run. JSON schema: docs/experiment_schema.json.
struct ExperimentSpec {
    std::string name = "dense_recall";
    TaskConfig task;
    /// Architecture; vocabulary, grid shape and schedule are filled from the
    /// task and the mode fields by resolved_model().
    ModelConfig model = toy_model();
    std::size_t train_size = 50000;
    std::size_t val_size = 5000;
    std::size_t steps = 1000;
    std::size_t batch_size = 32;
    std::size_t eval_batch_size = 250;
    /// Validation accuracy is logged every eval_interval steps (0: only at the end).
    std::size_t eval_interval = 0;
    std::uint64_t seed = 0;
    LayerMode mode = LayerMode::Baseline;
    /// First layer running `mode`; >= layers means all-baseline.
    std::size_t start_layer = 4;
    /// Vision-token reduction before the stack and the fraction of tokens it keeps.
    VisionReduction reduction = VisionReduction::None;
    double keep_fraction = 1.0;
    /// Fraction of final layers evaluated with vision attention masked.
    double mask_fraction = 0.0;
    AdamOptions optimizer = toy_optimizer();

    /// Throws ConfigError naming the offending field.
    void validate() const;
    ModelConfig resolved_model() const;
    /// Stable digest over the canonical JSON form.
    std::string hash() const;
    /// Human-readable id that embeds mode, start layer, fraction, seed and hash.
    std::string experiment_id() const;
    /// Fraction column of results: mask fraction when masking, keep fraction when reducing, else 0.
    double fraction() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

ExperimentSpec load_spec(const std::string& path);

/// Copy of `base` with a different schedule/reduction, used to build comparison sets.
ExperimentSpec with_mode(ExperimentSpec base, LayerMode mode, std::size_t start_layer);
ExperimentSpec with_reduction(ExperimentSpec base, VisionReduction reduction, double keep_fraction);

}  // namespace proxyv::harness
