// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "proxyv/cost/cost_model.hpp"
#include "proxyv/errors.hpp"
#include "proxyv/harness/dataset.hpp"
#include "proxyv/harness/experiment.hpp"
#include "proxyv/harness/runner.hpp"

using namespace proxyv;
using namespace proxyv::harness;

namespace {

TaskConfig task_of(TaskKind kind, std::size_t side, std::size_t symbols, std::size_t grids = 1) {
    TaskConfig t;
    t.kind = kind;
    t.grid_side = side;
    t.symbols = symbols;
    t.grids = grids;
    return t;
}

ExperimentSpec smoke_spec() {
    ExperimentSpec s;
    s.name = "smoke";
    s.task = task_of(TaskKind::DenseRecall, 4, 8, 2);
    s.model.layers = 2;
    s.model.width = 16;
    s.model.heads = 2;
    s.model.ffn_width = 32;
    s.model.light_hidden = s.model.update_hidden = s.model.query_dim = 8;
    s.train_size = 200;
    s.val_size = 50;
    s.steps = 12;
    s.batch_size = 8;
    s.eval_batch_size = 25;
    s.eval_interval = 5;
    s.seed = 3;
    s.start_layer = 2;
    return s;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string key_of(const Example& e) {
    std::string k;
    for (int v : e.vision) k += std::to_string(v) + ",";
    k += "|";
    for (int v : e.text) k += std::to_string(v) + ",";
    return k;
}

}  // namespace

TEST(Dataset, SameSeedSameData) {
    const auto t = task_of(TaskKind::DenseRecall, 4, 8);
    const auto a = generate(t, 300, 50, 9), b = generate(t, 300, 50, 9), c = generate(t, 300, 50, 10);
    ASSERT_EQ(a.train.size(), 300u);
    ASSERT_EQ(a.val.size(), 50u);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(key_of(a.train[i]), key_of(b.train[i]));
        EXPECT_EQ(a.train[i].answer, b.train[i].answer);
    }
    EXPECT_NE(key_of(a.train[0]), key_of(c.train[0]));
}

TEST(Dataset, ExamplesAreUniqueAcrossSplits) {
    for (auto kind : {TaskKind::DenseRecall, TaskKind::Majority, TaskKind::Successor}) {
        const auto d = generate(task_of(kind, 3, 4), 400, 100, 1);
        std::set<std::string> keys;
        for (const auto& e : d.train) keys.insert(key_of(e));
        for (const auto& e : d.val) keys.insert(key_of(e));
        EXPECT_EQ(keys.size(), 500u) << task_name(kind);
    }
}

TEST(Dataset, TinyExampleSpaceIsRejected) {
    EXPECT_THROW(generate(task_of(TaskKind::DenseRecall, 1, 2), 100, 10, 1), ConfigError);
}

TEST(DenseRecall, AnswerIsTheQueriedCell) {
    const auto t = task_of(TaskKind::DenseRecall, 4, 8, 2);
    const auto d = generate(t, 500, 0, 2);
    for (const auto& e : d.train) {
        ASSERT_EQ(e.text.size(), 1u);
        const int q = e.text[0] - static_cast<int>(t.symbols);
        ASSERT_GE(q, 0);
        ASSERT_LT(q, 32);
        EXPECT_EQ(e.answer, e.vision[static_cast<std::size_t>(q)]);
    }
    EXPECT_EQ(t.cell_token(1, 3, 3), 8 + 31);
    EXPECT_EQ(t.majority_token(), 8 + 32);
    EXPECT_EQ(t.control_tokens(), 33u);
}

TEST(DenseRecall, QueriesAndAnswersAreRoughlyUniform) {
    const auto t = task_of(TaskKind::DenseRecall, 4, 8);
    const auto d = generate(t, 16000, 0, 4);
    std::map<int, int> queries, answers;
    for (const auto& e : d.train) {
        ++queries[e.text[0]];
        ++answers[e.answer];
    }
    ASSERT_EQ(queries.size(), 16u);
    ASSERT_EQ(answers.size(), 8u);
    for (const auto& [k, n] : queries) EXPECT_NEAR(n, 1000, 150) << k;
    for (const auto& [k, n] : answers) EXPECT_NEAR(n, 2000, 250) << k;
}

TEST(Majority, AnswerIsTheUniqueModeOfGridZero) {
    TaskConfig t = task_of(TaskKind::Majority, 4, 6, 2);
    const auto d = generate(t, 400, 0, 5);
    for (const auto& e : d.train) {
        std::vector<int> counts(t.symbols);
        for (std::size_t i = 0; i < 16; ++i) ++counts[static_cast<std::size_t>(e.vision[i])];
        const int best = *std::max_element(counts.begin(), counts.end());
        EXPECT_EQ(std::count(counts.begin(), counts.end(), best), 1);
        EXPECT_EQ(counts[static_cast<std::size_t>(e.answer)], best);
        EXPECT_EQ(e.text, std::vector<int>{t.majority_token()});
    }
}

TEST(Successor, AnswerFollowsTheUniqueQuerySymbol) {
    const auto t = task_of(TaskKind::Successor, 3, 5, 2);
    const auto d = generate(t, 500, 0, 6);
    for (const auto& e : d.train) {
        ASSERT_EQ(e.text.size(), 1u);
        const int q = e.text[0];
        const auto n = std::count(e.vision.begin(), e.vision.end(), q);
        ASSERT_EQ(n, 1);
        const auto at = static_cast<std::size_t>(std::find(e.vision.begin(), e.vision.end(), q) - e.vision.begin());
        EXPECT_NE(at % 9, 8u);
        EXPECT_EQ(e.answer, e.vision[at + 1]);
    }
    EXPECT_THROW(generate(task_of(TaskKind::Successor, 1, 5), 1, 1, 1), ConfigError);
}

TEST(Dataset, PruningCeiling) {
    EXPECT_DOUBLE_EQ(pruning_ceiling(0.25, 16), 0.25 + 0.75 / 16);
    EXPECT_DOUBLE_EQ(pruning_ceiling(1.0, 16), 1.0);
}

TEST(Dataset, BatchesConcatenateExamples) {
    const auto d = generate(task_of(TaskKind::DenseRecall, 2, 4), 5, 0, 1);
    const Batch b = make_batch(d.train, 1, 4);
    EXPECT_EQ(b.size, 3u);
    EXPECT_EQ(b.text_len, 1u);
    EXPECT_EQ(b.vision.size(), 12u);
    EXPECT_EQ(b.vision[4], d.train[2].vision[0]);
    EXPECT_EQ(b.answers[2], d.train[3].answer);
}

TEST(Spec, JsonRoundTripKeepsHashAndId) {
    const ExperimentSpec s = with_mode(smoke_spec(), LayerMode::ProxyVSpatial, 1);
    const ExperimentSpec back = nlohmann::json(s).get<ExperimentSpec>();
    EXPECT_EQ(nlohmann::json(back), nlohmann::json(s));
    EXPECT_EQ(back.hash(), s.hash());
    EXPECT_EQ(back.experiment_id(), s.experiment_id());
    EXPECT_NE(s.experiment_id().find("proxyv_spatial-L1"), std::string::npos);
    EXPECT_NE(s.experiment_id().find("-s3-"), std::string::npos);
}

TEST(Spec, RejectsUnknownFieldsAndMissingSeed) {
    nlohmann::json j = smoke_spec();
    j["colour"] = "red";
    EXPECT_THROW(j.get<ExperimentSpec>(), ConfigError);
    j = smoke_spec();
    j.erase("seed");
    EXPECT_THROW(j.get<ExperimentSpec>(), ConfigError);
    j = smoke_spec();
    j["model"]["colour"] = 1;
    EXPECT_THROW(j.get<ExperimentSpec>(), ConfigError);
    j = smoke_spec();
    j["task"]["colour"] = 1;
    EXPECT_THROW(j.get<ExperimentSpec>(), ConfigError);
    j = smoke_spec();
    j["optimizer"]["momentum"] = 0.5;
    EXPECT_THROW(j.get<ExperimentSpec>(), ConfigError);
    j = smoke_spec();
    j["mode"] = "sideways";
    EXPECT_THROW(j.get<ExperimentSpec>(), ConfigError);
}

TEST(Spec, ModelFieldsMergeOverDefaults) {
    const nlohmann::json j = {{"seed", 1}, {"model", {{"width", 32}}}};
    const auto s = j.get<ExperimentSpec>();
    EXPECT_EQ(s.model.width, 32u);
    EXPECT_EQ(s.model.layers, toy_model().layers);
}

TEST(Spec, ValidationNamesBadFields) {
    ExperimentSpec s = smoke_spec();
    s.keep_fraction = 0.0;
    s.reduction = VisionReduction::UniformPrune;
    EXPECT_THROW(s.validate(), ConfigError);
    s = smoke_spec();
    s.mask_fraction = 1.5;
    EXPECT_THROW(s.validate(), ConfigError);
    s = smoke_spec();
    s.batch_size = 0;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Spec, ResolvedModelFollowsTaskAndMode) {
    const ExperimentSpec s = with_mode(smoke_spec(), LayerMode::LightMlp, 1);
    const ModelConfig c = s.resolved_model();
    EXPECT_EQ(c.grid_side, 4u);
    EXPECT_EQ(c.grids, 2u);
    EXPECT_EQ(c.vocab, 8u);
    EXPECT_GE(c.control_tokens, s.task.control_tokens());
    EXPECT_EQ(c.schedule, (Schedule{LayerMode::Baseline, LayerMode::LightMlp}));
}

TEST(Results, CsvHeaderAndFormatting) {
    const ExperimentSpec s = smoke_spec();
    const auto row = make_row(s, 0.5, 0.8, 12, "baseline");
    const std::string csv = format_csv({row});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
    EXPECT_NE(csv.find(",0.500000,0.625000,0.000000,12,3\n"), std::string::npos) << csv;
}

TEST(Results, FlopsColumnMatchesCostModel) {
    const ExperimentSpec s = with_mode(smoke_spec(), LayerMode::ProxyVSpatial, 1);
    const ModelConfig c = s.resolved_model();
    const auto r = cost::model_report(c.schedule, cost::counts_from_config(c, 1), cost::arch_from_config(c));
    EXPECT_DOUBLE_EQ(flops_reduction(s), r.reduction());
    EXPECT_GT(flops_reduction(s), 0.0);
    EXPECT_DOUBLE_EQ(flops_reduction(smoke_spec()), 0.0);
    EXPECT_GT(flops_reduction(with_reduction(smoke_spec(), VisionReduction::UniformPrune, 0.25)), 0.5);
}

TEST(Comparison, InconsistentSpecsAreRejected) {
    const ExperimentSpec a = smoke_spec();
    ExperimentSpec b = a;
    b.seed = 4;
    EXPECT_THROW(check_consistent({a, b}), ConfigError);
    b = a;
    b.task.symbols = 6;
    EXPECT_THROW(check_consistent({a, b}), ConfigError);
    b = a;
    b.model.width = 32;
    EXPECT_THROW(check_consistent({a, b}), ConfigError);
    EXPECT_NO_THROW(check_consistent({a, with_mode(a, LayerMode::AttnSkip, 1)}));
}

TEST(Training, RerunsAreBitIdentical) {
    const auto dir = std::filesystem::temp_directory_path() / "proxyv_test_harness";
    std::filesystem::remove_all(dir);
    const ExperimentSpec s = with_mode(smoke_spec(), LayerMode::ProxyVSpatial, 1);
    const Dataset data = generate(s.task, s.train_size, s.val_size, s.seed);
    const auto a = run_training(s, data, dir / "a");
    const auto b = run_training(s, data, dir / "b");
    ASSERT_EQ(a.log.size(), 3u);
    EXPECT_EQ(a.log.back().step, 12u);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
        EXPECT_EQ(a.log[i].val_acc, b.log[i].val_acc);
    }
    for (const char* f : {"checkpoint.bin", "train_log.csv", "spec.json"})
        EXPECT_EQ(file_digest(dir / "a" / f), file_digest(dir / "b" / f)) << f;
    write_outputs(dir / "a", {make_row(s, a.val_acc, a.val_acc, a.steps, "x")}, "t", {});
    write_outputs(dir / "b", {make_row(s, b.val_acc, b.val_acc, b.steps, "x")}, "t", {});
    EXPECT_EQ(read_file(dir / "a" / "metrics.csv"), read_file(dir / "b" / "metrics.csv"));
    std::filesystem::remove_all(dir);
}

TEST(Training, EmptySplitIsAConfigError) {
    const ExperimentSpec s = smoke_spec();
    Dataset d = generate(s.task, 10, 0, 1);
    EXPECT_THROW(run_training(s, d), ConfigError);
}

TEST(Sweep, SortedWithUnitReferenceAndBaselineOnly) {
    const ExperimentSpec s = smoke_spec();
    const Dataset data = generate(s.task, s.train_size, s.val_size, s.seed);
    auto o = run_training(s, data);
    const auto pts = sweep_mask(*o.model, data.val, {1.0, 0.0, 0.5}, 25);
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_EQ(pts[0].fraction, 0.0);
    EXPECT_EQ(pts[2].fraction, 1.0);
    EXPECT_EQ(pts[0].accuracy, o.val_acc);
    if (o.val_acc > 0.0) {
        EXPECT_DOUBLE_EQ(pts[0].relative, 1.0);
    }

    auto p = run_training(with_mode(s, LayerMode::LightMlp, 1), data);
    EXPECT_THROW(sweep_mask(*p.model, data.val, {0.5}, 25), ConfigError);
}
