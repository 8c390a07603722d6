// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/harness/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "proxyv/errors.hpp"

namespace proxyv::harness {

namespace {

std::size_t reduction_factor_for(double keep) {
    const double s = 1.0 / std::sqrt(keep);
    const auto f = static_cast<std::size_t>(std::llround(s));
    if (f == 0 || std::abs(static_cast<double>(f * f) * keep - 1.0) > 1e-9) {
        throw ConfigError("keep_fraction " + std::to_string(keep) + " is not 1/s^2 for an integer stride s");
    }
    return f;
}

std::string fnv_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

ModelConfig toy_model() {
    ModelConfig m;
    m.layers = 4;
    m.width = 64;
    m.heads = 4;
    m.ffn_width = 192;
    m.proxy_factor = 2;
    m.light_hidden = 16;
    m.update_hidden = 16;
    m.query_dim = 16;
    m.schedule = Schedule(m.layers, LayerMode::Baseline);
    return m;
}

AdamOptions toy_optimizer() {
    AdamOptions o;
    o.learning_rate = 3e-3;
    return o;
}

void ExperimentSpec::validate() const {
    const auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("experiment: " + field + " " + why);
    };
    if (name.empty()) fail("name", "must not be empty");
    task.validate();
    if (train_size == 0) fail("train_size", "must be positive");
    if (val_size == 0) fail("val_size", "must be positive");
    if (steps == 0) fail("steps", "must be positive");
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (eval_batch_size == 0) fail("eval_batch_size", "must be positive");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) fail("keep_fraction", "must lie in (0, 1]");
    if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) fail("mask_fraction", "must lie in [0, 1]");
    if (reduction != VisionReduction::None) {
        const std::size_t f = reduction_factor_for(keep_fraction);
        if (task.grid_side % f != 0) fail("keep_fraction", "stride must divide the grid side");
    } else if (keep_fraction != 1.0) {
        fail("keep_fraction", "requires a reduction");
    }
    if (!(optimizer.learning_rate > 0.0)) fail("optimizer.learning_rate", "must be positive");
    resolved_model().validate();
}

ModelConfig ExperimentSpec::resolved_model() const {
    ModelConfig m = model;
    m.vocab = task.symbols;
    m.control_tokens = task.control_tokens();
    m.grid_side = task.grid_side;
    m.grids = task.grids;
    m.schedule = suffix_schedule(m.layers, mode, start_layer);
    m.reduction = reduction;
    m.reduction_factor = reduction == VisionReduction::None ? 1 : reduction_factor_for(keep_fraction);
    return m;
}

std::string ExperimentSpec::hash() const { return fnv_hex(nlohmann::json(*this).dump()); }

double ExperimentSpec::fraction() const {
    if (mask_fraction > 0.0) return mask_fraction;
    if (reduction != VisionReduction::None) return keep_fraction;
    return 0.0;
}

std::string ExperimentSpec::experiment_id() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", fraction());
    const std::string red = reduction == VisionReduction::None ? "full" : std::string(reduction_name(reduction));
    return name + "-" + std::string(mode_name(mode)) + "-L" + std::to_string(start_layer) + "-" + red + "-f" + buf +
           "-s" + std::to_string(seed) + "-" + hash().substr(0, 8);
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
    j = {{"name", s.name},
         {"task", s.task},
         {"model", s.model},
         {"train_size", s.train_size},
         {"val_size", s.val_size},
         {"steps", s.steps},
         {"batch_size", s.batch_size},
         {"eval_batch_size", s.eval_batch_size},
         {"eval_interval", s.eval_interval},
         {"seed", s.seed},
         {"mode", std::string(mode_name(s.mode))},
         {"start_layer", s.start_layer},
         {"reduction", std::string(reduction_name(s.reduction))},
         {"keep_fraction", s.keep_fraction},
         {"mask_fraction", s.mask_fraction},
         {"optimizer",
          {{"learning_rate", s.optimizer.learning_rate},
           {"beta1", s.optimizer.beta1},
           {"beta2", s.optimizer.beta2},
           {"epsilon", s.optimizer.epsilon},
           {"clip_norm", s.optimizer.clip_norm},
           {"warmup_fraction", s.optimizer.warmup_fraction}}}};
}

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
    static const char* known[] = {"name",          "task",          "model",       "train_size",  "val_size",
                                  "steps",         "batch_size",    "eval_batch_size", "eval_interval", "seed",
                                  "mode",          "start_layer",   "reduction",   "keep_fraction", "mask_fraction",
                                  "optimizer"};
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("experiment: unknown field '" + key + "'");
    }
    ExperimentSpec d;
    const auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("name", d.name);
    if (j.contains("task")) d.task = j.at("task").get<TaskConfig>();
    if (j.contains("model")) {
        // Fields absent from the file keep their toy_model() values.
        nlohmann::json base = toy_model();
        base.erase("schedule");
        base.merge_patch(j.at("model"));
        d.model = base.get<ModelConfig>();
    }
    get("train_size", d.train_size);
    get("val_size", d.val_size);
    get("steps", d.steps);
    get("batch_size", d.batch_size);
    get("eval_batch_size", d.eval_batch_size);
    get("eval_interval", d.eval_interval);
    if (!j.contains("seed")) throw ConfigError("experiment: seed is mandatory");
    get("seed", d.seed);
    if (j.contains("mode")) d.mode = parse_mode(j.at("mode").get<std::string>());
    d.start_layer = d.model.layers;
    get("start_layer", d.start_layer);
    if (j.contains("reduction")) d.reduction = parse_reduction(j.at("reduction").get<std::string>());
    get("keep_fraction", d.keep_fraction);
    get("mask_fraction", d.mask_fraction);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        static const char* known_opt[] = {"learning_rate", "beta1", "beta2", "epsilon", "clip_norm",
                                          "warmup_fraction"};
        for (const auto& [key, value] : o.items()) {
            bool ok = false;
            for (const char* k : known_opt) ok = ok || key == k;
            if (!ok) throw ConfigError("experiment: unknown optimizer field '" + key + "'");
        }
        const auto opt = [&o](const char* key, double& field) {
            if (o.contains(key)) o.at(key).get_to(field);
        };
        opt("learning_rate", d.optimizer.learning_rate);
        opt("beta1", d.optimizer.beta1);
        opt("beta2", d.optimizer.beta2);
        opt("epsilon", d.optimizer.epsilon);
        opt("clip_norm", d.optimizer.clip_norm);
        opt("warmup_fraction", d.optimizer.warmup_fraction);
    }
    s = std::move(d);
}

ExperimentSpec load_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    ExperimentSpec s;
    try {
        s = j.get<ExperimentSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    s.validate();
    return s;
}

ExperimentSpec with_mode(ExperimentSpec base, LayerMode mode, std::size_t start_layer) {
    base.mode = mode;
    base.start_layer = start_layer;
    return base;
}

ExperimentSpec with_reduction(ExperimentSpec base, VisionReduction reduction, double keep_fraction) {
    base.reduction = reduction;
    base.keep_fraction = keep_fraction;
    return base;
}

}  // namespace proxyv::harness
