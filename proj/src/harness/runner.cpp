// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/harness/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "proxyv/cost/cost_model.hpp"
#include "proxyv/errors.hpp"
#include "proxyv/model/checkpoint.hpp"
#include "proxyv/numerics/rng.hpp"

namespace proxyv::harness {

namespace {

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + path.string());
    os << text;
}

ForwardOptions eval_options(const ExperimentSpec& spec) {
    ForwardOptions o;
    if (spec.mask_fraction > 0.0) o.masks = partial_mask(spec.model.layers, spec.mask_fraction);
    return o;
}

}  // namespace

double evaluate(Model<float>& model, std::span<const Example> examples, std::size_t batch_size,
                const ForwardOptions& options) {
    if (examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
        const Batch b = make_batch(examples, begin, std::min(begin + batch_size, examples.size()));
        const Tensor<float> logits = model.forward_prefill(b, options);
        for (std::size_t i = 0; i < b.size; ++i) {
            const auto row = logits.row(i);
            const auto best = std::max_element(row.begin(), row.end()) - row.begin();
            correct += best == b.answers[i] ? 1 : 0;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TrainOutcome run_training(const ExperimentSpec& spec, const Dataset& data,
                          const std::optional<std::filesystem::path>& out_dir) {
    spec.validate();
    if (data.train.empty() || data.val.empty()) throw ConfigError("run_training: dataset has an empty split");
    TrainOutcome out;
    out.spec = spec;
    const ModelConfig config = spec.resolved_model();
    const std::uint64_t model_seed = mix_seed(spec.seed ^ 0x6d6f64656cULL);
    out.model = std::make_unique<Model<float>>(config, model_seed);
    Adam<float> optimizer(spec.optimizer, spec.steps);
    SeededRng order = SeededRng::derive(spec.seed, 2);

    std::vector<std::size_t> perm(data.train.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::size_t cursor = perm.size();
    std::vector<std::size_t> idx(std::min(spec.batch_size, perm.size()));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t step = 1; step <= spec.steps; ++step) {
        for (auto& i : idx) {
            if (cursor == perm.size()) {
                for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[order.below(k)]);
                cursor = 0;
            }
            i = perm[cursor++];
        }
        loss_sum += static_cast<double>(out.model->train_step(make_batch(data.train, idx), optimizer));
        ++loss_count;
        const bool last = step == spec.steps;
        if (last || (spec.eval_interval > 0 && step % spec.eval_interval == 0)) {
            LogEntry e;
            e.step = step;
            e.train_loss = loss_sum / static_cast<double>(loss_count);
            e.val_acc = evaluate(*out.model, data.val, spec.eval_batch_size, eval_options(spec));
            out.log.push_back(e);
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    out.steps = spec.steps;
    out.val_acc = out.log.back().val_acc;

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        save_checkpoint(((*out_dir) / "checkpoint.bin").string(), *out.model, &optimizer, model_seed);
        std::ostringstream log;
        log << "step,train_loss,val_acc\n";
        for (const auto& e : out.log) log << e.step << ',' << fixed(e.train_loss) << ',' << fixed(e.val_acc) << '\n';
        write_text(*out_dir / "train_log.csv", log.str());
        write_text(*out_dir / "spec.json", nlohmann::json(spec).dump(2) + "\n");
    }
    return out;
}

double flops_reduction(const ExperimentSpec& spec) {
    const ModelConfig config = spec.resolved_model();
    ModelConfig full = config;
    full.reduction = VisionReduction::None;
    full.reduction_factor = 1;
    const cost::ArchSpec arch = cost::arch_from_config(config);
    const std::uint64_t text = spec.task.text_len();
    const cost::TokenCounts variant = cost::counts_from_config(config, text);
    const cost::TokenCounts baseline = cost::counts_from_config(full, text);
    return cost::model_report(config.schedule, std::vector<cost::TokenCounts>(config.layers, variant), baseline, arch)
        .reduction();
}

std::vector<SweepPoint> sweep_mask(Model<float>& model, std::span<const Example> examples,
                                   std::vector<double> fractions, std::size_t batch_size) {
    for (auto m : model.config().schedule) {
        if (m != LayerMode::Baseline) throw ConfigError("sweep_mask: the checkpoint must be an all-baseline model");
    }
    std::sort(fractions.begin(), fractions.end());
    const double reference = evaluate(model, examples, batch_size);
    std::vector<SweepPoint> out;
    for (double f : fractions) {
        ForwardOptions o;
        o.masks = partial_mask(model.config().layers, f);
        SweepPoint p;
        p.fraction = f;
        p.accuracy = f == 0.0 ? reference : evaluate(model, examples, batch_size, o);
        p.relative = reference > 0.0 ? p.accuracy / reference : 0.0;
        out.push_back(p);
    }
    return out;
}

ResultsRow make_row(const ExperimentSpec& spec, double val_acc, double baseline_acc, std::size_t steps,
                    const std::string& label) {
    ResultsRow r;
    r.experiment_id = spec.experiment_id();
    r.mode = std::string(mode_name(spec.mode));
    if (spec.reduction != VisionReduction::None) r.mode = std::string(reduction_name(spec.reduction));
    r.start_layer = spec.start_layer;
    r.fraction = spec.fraction();
    r.val_acc = val_acc;
    r.rel_score = baseline_acc > 0.0 ? val_acc / baseline_acc : 0.0;
    r.flops_reduction = flops_reduction(spec);
    r.steps = steps;
    r.seed = spec.seed;
    r.config_hash = spec.hash();
    r.label = label;
    return r;
}

std::string format_csv(const std::vector<ResultsRow>& rows) {
    std::ostringstream os;
    os << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        os << r.experiment_id << ',' << r.mode << ',' << r.start_layer << ',' << fixed(r.fraction) << ','
           << fixed(r.val_acc) << ',' << fixed(r.rel_score) << ',' << fixed(r.flops_reduction) << ',' << r.steps
           << ',' << r.seed << '\n';
    }
    return os.str();
}

std::string format_summary(const std::vector<ResultsRow>& rows, const std::string& title) {
    std::ostringstream os;
    os << "# " << title << "\n\n";
    os << "| run | mode | start layer | fraction | val acc | rel score | FLOPs reduction | steps | seed |\n";
    os << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        os << "| " << (r.label.empty() ? r.experiment_id : r.label) << " | " << r.mode << " | " << r.start_layer
           << " | " << fixed(r.fraction, 3) << " | " << fixed(r.val_acc, 4) << " | " << fixed(r.rel_score, 4) << " | "
           << fixed(100.0 * r.flops_reduction, 1) << "% | " << r.steps << " | " << r.seed << " |\n";
    }
    return os.str();
}

void to_json(nlohmann::json& j, const ResultsRow& r) {
    j = {{"experiment_id", r.experiment_id}, {"label", r.label},
         {"mode", r.mode},                   {"start_layer", r.start_layer},
         {"fraction", r.fraction},           {"val_acc", r.val_acc},
         {"rel_score", r.rel_score},         {"flops_reduction", r.flops_reduction},
         {"steps", r.steps},                 {"seed", r.seed},
         {"config_hash", r.config_hash}};
}

void write_outputs(const std::filesystem::path& dir, const std::vector<ResultsRow>& rows, const std::string& title,
                   const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    write_text(dir / "metrics.csv", format_csv(rows));
    write_text(dir / "summary.md", format_summary(rows, title));
    nlohmann::json report = extra.is_object() ? extra : nlohmann::json::object();
    report["title"] = title;
    report["rows"] = rows;
    write_text(dir / "report.json", report.dump(2) + "\n");
}

void check_consistent(const std::vector<ExperimentSpec>& specs) {
    if (specs.empty()) return;
    const nlohmann::json task0 = specs[0].task, model0 = specs[0].model;
    for (const auto& s : specs) {
        s.validate();
        if (nlohmann::json(s.task) != task0) throw ConfigError("comparison: specs disagree on the task");
        if (nlohmann::json(s.model) != model0) throw ConfigError("comparison: specs disagree on the architecture");
        if (s.seed != specs[0].seed) throw ConfigError("comparison: specs disagree on the seed");
        if (s.train_size != specs[0].train_size || s.val_size != specs[0].val_size) {
            throw ConfigError("comparison: specs disagree on dataset sizes");
        }
    }
}

ComparisonResult run_comparison_suite(const ExperimentSpec& base, const std::vector<std::uint64_t>& seeds,
                                      double keep_fraction, const std::optional<std::filesystem::path>& out_dir) {
    if (seeds.empty()) throw ConfigError("comparison: no seeds given");
    ComparisonResult result;
    const std::size_t layers = base.model.layers;
    for (std::uint64_t seed : seeds) {
        ExperimentSpec b = base;
        b.seed = seed;
        b.mask_fraction = 0.0;
        b = with_reduction(with_mode(b, LayerMode::Baseline, layers), VisionReduction::None, 1.0);
        const std::vector<std::pair<std::string, ExperimentSpec>> runs = {
            {"baseline", b},
            {"proxyv_spatial", with_mode(b, LayerMode::ProxyVSpatial, layers / 2)},
            {"uniform_prune", with_reduction(b, VisionReduction::UniformPrune, keep_fraction)},
            {"pool_merge", with_reduction(b, VisionReduction::PoolMerge, keep_fraction)},
        };
        std::vector<ExperimentSpec> specs;
        for (const auto& r : runs) specs.push_back(r.second);
        check_consistent(specs);

        const Dataset data = generate(b.task, b.train_size, b.val_size, seed);
        double baseline_acc = 0.0;
        for (const auto& [label, spec] : runs) {
            std::optional<std::filesystem::path> dir;
            if (out_dir) dir = *out_dir / spec.experiment_id();
            const TrainOutcome o = run_training(spec, data, dir);
            if (label == "baseline") baseline_acc = o.val_acc;
            result.rows.push_back(make_row(spec, o.val_acc, baseline_acc, o.steps, label));
            result.logs.push_back(o.log);
        }
    }
    if (out_dir) {
        nlohmann::json extra = {{"base_spec", base}, {"keep_fraction", keep_fraction}, {"seeds", seeds}};
        write_outputs(*out_dir, result.rows, "Comparison suite", extra);
    }
    return result;
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

}  // namespace proxyv::harness
