// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/harness/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "proxyv/errors.hpp"
#include "proxyv/numerics/rng.hpp"

namespace proxyv::harness {

std::string task_name(TaskKind k) {
    switch (k) {
        case TaskKind::DenseRecall: return "dense_recall";
        case TaskKind::Majority: return "majority";
        case TaskKind::Successor: return "successor";
    }
    throw ConfigError("unknown task kind");
}

TaskKind parse_task(const std::string& name) {
    if (name == "dense_recall") return TaskKind::DenseRecall;
    if (name == "majority") return TaskKind::Majority;
    if (name == "successor") return TaskKind::Successor;
    throw ConfigError("unknown task '" + name + "' (expected dense_recall, majority or successor)");
}

void TaskConfig::validate() const {
    if (grid_side == 0) throw ConfigError("task: grid_side must be positive");
    if (symbols < 2) throw ConfigError("task: at least two symbols are needed");
    if (grids == 0) throw ConfigError("task: grids must be positive");
    if (!(majority_share > 0.0 && majority_share < 1.0)) throw ConfigError("task: majority_share must lie in (0, 1)");
}

std::size_t TaskConfig::control_tokens() const { return grids * grid_side * grid_side + 1; }

namespace {

std::uint64_t example_hash(const Example& e) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](int v) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
        h *= 0x100000001b3ULL;
    };
    for (int v : e.vision) mix(v);
    mix(-1);
    for (int v : e.text) mix(v);
    return h;
}

/// Draws examples until `train + val` distinct ones exist; duplicates are redrawn.
Dataset fill(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed,
             const std::function<Example(SeededRng&)>& draw) {
    task.validate();
    Dataset out;
    out.task = task;
    out.seed = seed;
    SeededRng rng(seed);
    std::unordered_set<std::uint64_t> seen;
    const auto take = [&](std::vector<Example>& dst, std::size_t count) {
        dst.reserve(count);
        std::size_t rejected = 0;
        while (dst.size() < count) {
            Example e = draw(rng);
            if (!seen.insert(example_hash(e)).second) {
                if (++rejected > 100 * (count + 1)) throw ConfigError("dataset: example space too small for request");
                continue;
            }
            dst.push_back(std::move(e));
        }
    };
    take(out.train, train);
    take(out.val, val);
    return out;
}

}  // namespace

Dataset gen_dense_recall(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed) {
    TaskConfig t = task;
    t.kind = TaskKind::DenseRecall;
    const std::size_t cells = t.grid_side * t.grid_side;
    return fill(t, train, val, seed, [t, cells](SeededRng& rng) {
        Example e;
        e.vision.resize(t.grids * cells);
        for (auto& v : e.vision) v = static_cast<int>(rng.below(t.symbols));
        const std::size_t g = rng.below(t.grids), r = rng.below(t.grid_side), c = rng.below(t.grid_side);
        e.text.push_back(t.cell_token(g, r, c));
        e.answer = e.vision[g * cells + r * t.grid_side + c];
        return e;
    });
}

Dataset gen_majority(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed) {
    TaskConfig t = task;
    t.kind = TaskKind::Majority;
    const std::size_t cells = t.grid_side * t.grid_side;
    return fill(t, train, val, seed, [t, cells](SeededRng& rng) {
        Example e;
        e.vision.resize(t.grids * cells);
        std::vector<std::size_t> counts(t.symbols);
        // Regenerate until grid 0 has a unique most frequent symbol.
        for (;;) {
            const int planted = static_cast<int>(rng.below(t.symbols));
            for (auto& v : e.vision) {
                v = rng.uniform() < t.majority_share ? planted : static_cast<int>(rng.below(t.symbols));
            }
            std::fill(counts.begin(), counts.end(), 0);
            for (std::size_t i = 0; i < cells; ++i) ++counts[static_cast<std::size_t>(e.vision[i])];
            const auto best = std::max_element(counts.begin(), counts.end());
            if (std::count(counts.begin(), counts.end(), *best) == 1) {
                e.answer = static_cast<int>(best - counts.begin());
                break;
            }
        }
        e.text.push_back(t.majority_token());
        return e;
    });
}

Dataset gen_successor(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed) {
    TaskConfig t = task;
    t.kind = TaskKind::Successor;
    const std::size_t cells = t.grid_side * t.grid_side;
    if (cells < 2) throw ConfigError("task: successor needs at least two cells per grid");
    return fill(t, train, val, seed, [t, cells](SeededRng& rng) {
        Example e;
        e.vision.resize(t.grids * cells);
        const int query = static_cast<int>(rng.below(t.symbols));
        // Every other cell avoids the query symbol, so its occurrence is unique.
        for (auto& v : e.vision) {
            v = static_cast<int>(rng.below(t.symbols - 1));
            if (v >= query) ++v;
        }
        const std::size_t at = rng.below(t.grids) * cells + rng.below(cells - 1);
        e.vision[at] = query;
        e.text.push_back(query);
        e.answer = e.vision[at + 1];
        return e;
    });
}

Dataset generate(const TaskConfig& task, std::size_t train, std::size_t val, std::uint64_t seed) {
    switch (task.kind) {
        case TaskKind::DenseRecall: return gen_dense_recall(task, train, val, seed);
        case TaskKind::Majority: return gen_majority(task, train, val, seed);
        case TaskKind::Successor: return gen_successor(task, train, val, seed);
    }
    throw ConfigError("unknown task kind");
}

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices) {
    Batch b;
    b.size = indices.size();
    if (b.size == 0) return b;
    b.text_len = examples[indices[0]].text.size();
    for (std::size_t i : indices) {
        const Example& e = examples[i];
        if (e.text.size() != b.text_len) throw InputError("make_batch: examples disagree on text length");
        b.vision.insert(b.vision.end(), e.vision.begin(), e.vision.end());
        b.text.insert(b.text.end(), e.text.begin(), e.text.end());
        b.answers.push_back(e.answer);
    }
    return b;
}

Batch make_batch(std::span<const Example> examples, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end && i < examples.size(); ++i) idx.push_back(i);
    return make_batch(examples, idx);
}

double pruning_ceiling(double keep, std::size_t symbols) {
    return keep + (1.0 - keep) / static_cast<double>(symbols);
}

void to_json(nlohmann::json& j, const TaskConfig& t) {
    j = {{"kind", task_name(t.kind)},
         {"grid_side", t.grid_side},
         {"symbols", t.symbols},
         {"grids", t.grids},
         {"majority_share", t.majority_share}};
}

void from_json(const nlohmann::json& j, TaskConfig& t) {
    for (const auto& [key, value] : j.items()) {
        if (key != "kind" && key != "grid_side" && key != "symbols" && key != "grids" && key != "majority_share") {
            throw ConfigError("task: unknown field '" + key + "'");
        }
    }
    TaskConfig d;
    if (j.contains("kind")) d.kind = parse_task(j.at("kind").get<std::string>());
    if (j.contains("grid_side")) j.at("grid_side").get_to(d.grid_side);
    if (j.contains("symbols")) j.at("symbols").get_to(d.symbols);
    if (j.contains("grids")) j.at("grids").get_to(d.grids);
    if (j.contains("majority_share")) j.at("majority_share").get_to(d.majority_share);
    t = d;
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream os(path);
    if (!os) throw InputError("save_dataset: cannot open " + path);
    os << nlohmann::json{{"task", data.task}, {"seed", data.seed}, {"train", data.train.size()},
                         {"val", data.val.size()}}
              .dump()
       << '\n';
    const auto dump = [&os](const char* split, const std::vector<Example>& xs) {
        for (const auto& e : xs) {
            os << nlohmann::json{{"split", split}, {"vision", e.vision}, {"text", e.text}, {"answer", e.answer}}.dump()
               << '\n';
        }
    };
    dump("train", data.train);
    dump("val", data.val);
}

}  // namespace proxyv::harness
