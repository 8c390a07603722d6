// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "proxyv/harness/dataset.hpp"
#include "proxyv/harness/experiment.hpp"
#include "proxyv/model/model.hpp"

namespace proxyv::harness {

struct LogEntry {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainOutcome {
    ExperimentSpec spec;
    std::unique_ptr<Model<float>> model;
    std::vector<LogEntry> log;
    double val_acc = 0.0;
    std::size_t steps = 0;
};

/// Trains `spec` end to end on `data`. With `out_dir`, writes checkpoint.bin
/// and train_log.csv there. Throws TrainingError on a non-finite loss.
TrainOutcome run_training(const ExperimentSpec& spec, const Dataset& data,
                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Fraction of `examples` whose arg-max logit equals the answer.
double evaluate(Model<float>& model, std::span<const Example> examples, std::size_t batch_size,
                const ForwardOptions& options = {});

/// Analytical FLOPs reduction of the spec's schedule and reduction against
/// the unreduced all-baseline model on the same task.
double flops_reduction(const ExperimentSpec& spec);

struct SweepPoint {
    double fraction = 0.0;
    double accuracy = 0.0;
    double relative = 0.0;
};

/// Training-free vision-attention masking of the final `fraction` of layers.
/// Relative accuracy is against the unmasked model. Points come back sorted.
std::vector<SweepPoint> sweep_mask(Model<float>& model, std::span<const Example> examples,
                                   std::vector<double> fractions, std::size_t batch_size);

struct ResultsRow {
    std::string experiment_id;
    std::string mode;
    std::size_t start_layer = 0;
    double fraction = 0.0;
    double val_acc = 0.0;
    double rel_score = 0.0;
    double flops_reduction = 0.0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    /// Not a CSV column; carried into report.json.
    std::string config_hash;
    std::string label;
};

inline constexpr const char* kMetricsHeader =
    "experiment_id,mode,start_layer,fraction,val_acc,rel_score,flops_reduction,steps,seed";

ResultsRow make_row(const ExperimentSpec& spec, double val_acc, double baseline_acc, std::size_t steps,
                    const std::string& label);
std::string format_csv(const std::vector<ResultsRow>& rows);
std::string format_summary(const std::vector<ResultsRow>& rows, const std::string& title);
void to_json(nlohmann::json& j, const ResultsRow& r);

/// Writes metrics.csv, summary.md and report.json into `dir`.
void write_outputs(const std::filesystem::path& dir, const std::vector<ResultsRow>& rows, const std::string& title,
                   const nlohmann::json& extra);

struct ComparisonResult {
    std::vector<ResultsRow> rows;
    std::vector<std::vector<LogEntry>> logs;
};

/// For every seed: baseline, spatial proxies from the midpoint layer, uniform
/// pruning and pooling merge at `keep_fraction`. Rows are normalised by the
/// same-seed baseline. Throws ConfigError on inconsistent specs.
ComparisonResult run_comparison_suite(const ExperimentSpec& base, const std::vector<std::uint64_t>& seeds,
                                      double keep_fraction = 0.25,
                                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Specs must share task, architecture, data sizes and seed.
void check_consistent(const std::vector<ExperimentSpec>& specs);

/// SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace proxyv::harness
