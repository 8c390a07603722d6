// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: dataset generation, training, evaluation, masking
// sweeps, comparison suites and analytical cost reports.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "proxyv/attention/mask.hpp"
#include "proxyv/cost/cost_model.hpp"
#include "proxyv/errors.hpp"
#include "proxyv/harness/runner.hpp"
#include "proxyv/model/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace proxyv;
using namespace proxyv::harness;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string mode;
    std::optional<std::size_t> start_layer;
};

void add_common(CLI::App* app, Common& c, bool needs_out) {
    app->add_option("--config", c.config, "Experiment spec (JSON)")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "Override the spec seed");
    auto* out = app->add_option("--out", c.out, "Output directory");
    if (needs_out) out->required();
}

void add_schedule(CLI::App* app, Common& c) {
    app->add_option("--mode", c.mode, "Layer mode: baseline, attn_skip, light_mlp, proxyv_spatial, proxyv_nonspatial");
    app->add_option("--start-layer", c.start_layer, "First layer running --mode");
}

ExperimentSpec resolve_spec(const Common& c) {
    ExperimentSpec s = c.config.empty() ? ExperimentSpec{} : load_spec(c.config);
    if (c.seed) s.seed = *c.seed;
    if (!c.mode.empty()) {
        s.mode = parse_mode(c.mode);
        if (!c.start_layer) s.start_layer = s.mode == LayerMode::Baseline ? s.model.layers : s.model.layers / 2;
    }
    if (c.start_layer) s.start_layer = *c.start_layer;
    s.validate();
    return s;
}

/// The spec that produced a checkpoint: --config when given, else spec.json beside it.
ExperimentSpec spec_for_checkpoint(const Common& c, const std::string& checkpoint) {
    Common copy = c;
    if (copy.config.empty()) {
        const fs::path beside = fs::path(checkpoint).parent_path() / "spec.json";
        if (!fs::exists(beside)) throw ConfigError("no --config given and no spec.json next to " + checkpoint);
        copy.config = beside.string();
    }
    return resolve_spec(copy);
}

std::vector<double> parse_fractions(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size() || !(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("--fractions: '" + item + "' is not a number in [0, 1]");
        }
    }
    if (out.empty()) throw ConfigError("--fractions: no values given");
    return out;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + path.string());
    os << text;
}

int cmd_gen(const Common& c) {
    const ExperimentSpec s = resolve_spec(c);
    const Dataset d = generate(s.task, s.train_size, s.val_size, s.seed);
    fs::create_directories(c.out);
    const fs::path path = fs::path(c.out) / "dataset.jsonl";
    save_dataset(path.string(), d);
    std::cout << "wrote " << d.train.size() << " train and " << d.val.size() << " val examples to " << path.string()
              << "\n";
    return 0;
}

int cmd_train(const Common& c) {
    const ExperimentSpec s = resolve_spec(c);
    const Dataset d = generate(s.task, s.train_size, s.val_size, s.seed);
    const fs::path dir(c.out);
    const TrainOutcome o = run_training(s, d, dir);
    const bool reference = s.reduction == VisionReduction::None &&
                           (s.mode == LayerMode::Baseline || s.start_layer >= s.model.layers);
    // A lone run has no same-seed baseline unless it is the baseline itself.
    const double base = reference ? o.val_acc : std::nan("");
    std::vector<ResultsRow> rows{make_row(s, o.val_acc, base, o.steps, "train")};
    if (!reference) rows[0].rel_score = std::nan("");
    write_outputs(dir, rows, "Training run", {{"spec", s}});
    std::cout << format_summary(rows, "Training run");
    return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, double mask_fraction) {
    ExperimentSpec s = spec_for_checkpoint(c, checkpoint);
    s.mask_fraction = mask_fraction;
    const std::string before = file_digest(checkpoint);
    LoadedCheckpoint<float> ck = load_checkpoint<float>(checkpoint);
    const Dataset d = generate(s.task, s.train_size, s.val_size, s.seed);
    ForwardOptions o;
    if (mask_fraction > 0.0) o.masks = partial_mask(ck.model->config().layers, mask_fraction);
    const double acc = evaluate(*ck.model, d.val, s.eval_batch_size, o);
    if (file_digest(checkpoint) != before) throw StateError("eval: checkpoint changed on disk during evaluation");
    std::vector<ResultsRow> rows{make_row(s, acc, std::nan(""), ck.optimizer_steps, "eval")};
    rows[0].rel_score = std::nan("");
    if (!c.out.empty()) {
        write_outputs(c.out, rows, "Evaluation", {{"spec", s}, {"checkpoint", checkpoint}, {"checkpoint_sha256", before}});
    }
    std::cout << format_summary(rows, "Evaluation");
    return 0;
}

int cmd_sweep(const Common& c, const std::string& checkpoint, const std::string& fractions) {
    const ExperimentSpec s = spec_for_checkpoint(c, checkpoint);
    const std::vector<double> fr = parse_fractions(fractions);
    LoadedCheckpoint<float> ck = load_checkpoint<float>(checkpoint);
    const Dataset d = generate(s.task, s.train_size, s.val_size, s.seed);
    const std::vector<SweepPoint> curve = sweep_mask(*ck.model, d.val, fr, s.eval_batch_size);
    const double reference = curve.empty() ? 0.0 : curve.front().accuracy / curve.front().relative;
    std::vector<ResultsRow> rows;
    std::ostringstream csv;
    csv << "fraction,accuracy,relative\n";
    for (const auto& p : curve) {
        ExperimentSpec m = s;
        m.mask_fraction = p.fraction;
        rows.push_back(make_row(m, p.accuracy, reference, ck.optimizer_steps, "mask"));
        char line[96];
        std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f\n", p.fraction, p.accuracy, p.relative);
        csv << line;
    }
    if (!c.out.empty()) {
        write_outputs(c.out, rows, "Vision attention masking sweep", {{"spec", s}, {"checkpoint", checkpoint}});
        write_file(fs::path(c.out) / "sweep.csv", csv.str());
    }
    std::cout << csv.str();
    return 0;
}

int cmd_compare(const Common& c, const std::string& seeds_text, double keep) {
    const ExperimentSpec s = resolve_spec(c);
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(seeds_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            seeds.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--seeds: '" + item + "' is not an unsigned integer");
        }
    }
    if (seeds.empty()) seeds.push_back(s.seed);
    const ComparisonResult r = run_comparison_suite(s, seeds, keep, fs::path(c.out));
    std::cout << format_summary(r.rows, "Comparison suite");
    return 0;
}

struct CostArgs {
    bool paper_suite = false;
    bool json = false;
    std::string mode = "baseline";
    std::optional<std::uint64_t> start_layer;
    std::string reduction = "none";
    cost::ArchSpec arch;
    cost::TokenCounts counts;
};

int cmd_cost(const CostArgs& a) {
    a.arch.validate();
    a.counts.validate();
    if (a.paper_suite) {
        const auto rows = cost::paper_suite(a.arch, a.counts);
        if (a.json) {
            std::cout << nlohmann::json(rows).dump(2) << "\n";
        } else {
            std::cout << cost::format_paper_suite(rows);
        }
        bool ok = true;
        for (const auto& r : rows) ok = ok && r.pass();
        return ok ? 0 : 1;
    }
    const LayerMode mode = parse_mode(a.mode);
    const std::uint64_t start = a.start_layer ? *a.start_layer : (mode == LayerMode::Baseline ? a.arch.layers : a.arch.layers / 2);
    const Schedule schedule = suffix_schedule(a.arch.layers, mode, start);
    cost::TokenReductionSpec red;
    red.kind = cost::parse_reduction_kind(a.reduction);
    const cost::CostReport report = cost::combined_report(red, schedule, a.counts, a.arch);
    if (a.json) {
        std::cout << nlohmann::json(report).dump(2) << "\n";
    } else {
        std::cout << cost::format_report(report, a.arch);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ProxyV toy experiments and analytical cost model"};
    app.require_subcommand(1);

    Common gen_c, train_c, eval_c, sweep_c, compare_c;
    std::string eval_ckpt, sweep_ckpt, fractions = "0,0.25,0.5,0.75,1", seeds;
    double eval_mask = 0.0, keep = 0.25;
    CostArgs cost_a;

    auto* gen = app.add_subcommand("gen", "Generate a dataset as JSON lines");
    add_common(gen, gen_c, true);

    auto* train = app.add_subcommand("train", "Train one experiment spec");
    add_common(train, train_c, true);
    add_schedule(train, train_c);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
    add_common(eval, eval_c, false);
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint.bin")->required()->check(CLI::ExistingFile);
    eval->add_option("--mask-fraction", eval_mask, "Fraction of final layers with vision attention masked")
        ->check(CLI::Range(0.0, 1.0));

    auto* sweep = app.add_subcommand("sweep-mask", "Training-free vision attention masking sweep");
    add_common(sweep, sweep_c, false);
    sweep->add_option("--checkpoint", sweep_ckpt, "All-baseline checkpoint.bin")->required()->check(CLI::ExistingFile);
    sweep->add_option("--fractions", fractions, "Comma-separated masked-layer fractions");

    auto* compare = app.add_subcommand("compare", "Baseline, ProxyV and reduction runs per seed");
    add_common(compare, compare_c, true);
    compare->add_option("--seeds", seeds, "Comma-separated seeds (default: the spec seed)");
    compare->add_option("--keep", keep, "Vision fraction kept by the reduction baselines")->check(CLI::Range(0.0, 1.0));

    auto* cost = app.add_subcommand("cost", "Analytical FLOPs and parameter report");
    cost->add_flag("--paper-suite", cost_a.paper_suite, "Reproduce the reference reduction figures");
    cost->add_flag("--json", cost_a.json, "Machine-readable output");
    cost->add_option("--mode", cost_a.mode, "Layer mode of the suffix");
    cost->add_option("--start-layer", cost_a.start_layer, "First layer running --mode");
    cost->add_option("--reduction", cost_a.reduction, "Token reduction: none, visionzip, pyramiddrop");
    cost->add_option("--layers", cost_a.arch.layers);
    cost->add_option("--width", cost_a.arch.width);
    cost->add_option("--ffn-width", cost_a.arch.ffn_width);
    cost->add_option("--heads", cost_a.arch.heads);
    cost->add_option("--light-hidden", cost_a.arch.light_hidden);
    cost->add_option("--update-hidden", cost_a.arch.update_hidden);
    cost->add_option("--query-dim", cost_a.arch.query_dim);
    cost->add_option("--proxy-factor", cost_a.arch.proxy_factor);
    cost->add_option("--ns-proxies", cost_a.arch.ns_proxies_per_grid, "Learned queries per grid (non-spatial)");
    cost->add_option("--vision", cost_a.counts.vision, "Vision tokens");
    cost->add_option("--text", cost_a.counts.text, "Text tokens including separators");
    cost->add_option("--groups", cost_a.counts.groups, "Image grids");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen(gen_c);
        if (*train) return cmd_train(train_c);
        if (*eval) return cmd_eval(eval_c, eval_ckpt, eval_mask);
        if (*sweep) return cmd_sweep(sweep_c, sweep_ckpt, fractions);
        if (*compare) return cmd_compare(compare_c, seeds, keep);
        if (*cost) return cmd_cost(cost_a);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
