// Copyright 2026 The convsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "convsel/synthetic.hpp"
#include "convsel/transfer.hpp"

using namespace convsel;

namespace {

template <class Fn>
ErrorKind error_kind_of(Fn &&fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::usage;
}

// Predicts exactly one second for every column.
PerfModel constant_model(const std::vector<std::string> &columns) {
    PerfModel m;
    m.kind = ModelKind::linear;
    m.input_names = config_feature_names();
    m.output_names = columns;
    Head h;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        h.columns.push_back(c);
        h.samples.push_back(1);
    }
    h.input_norm = Normalizer {std::vector<double>(5, 0.0), std::vector<double>(5, 1.0)};
    h.output_norm = Normalizer {std::vector<double>(columns.size(), 0.0),
            std::vector<double>(columns.size(), 1.0)};
    h.linear = LinearMap {Eigen::MatrixXd::Zero(Eigen::Index(columns.size()), 6)};
    m.heads.push_back(h);
    return m;
}

ProfileDataset measured(const std::vector<std::vector<std::optional<double>>> &rows) {
    ProfileDataset ds;
    ds.columns = {"a", "b"};
    int k = 1;
    for (const auto &r : rows) ds.records.push_back({{k++, 1, 5, 3, 1}, r});
    return ds;
}

Split<Table> table_split(const ProfileDataset &ds, std::uint64_t seed) {
    auto s = split_dataset(ds, seed);
    return {to_table(s.train), to_table(s.validation), to_table(s.test)};
}

TrainConfig small_config(std::uint64_t seed = 1) {
    TrainConfig cfg = TrainConfig::for_kind(ModelKind::nn2);
    cfg.hidden = {32, 32};
    cfg.learning_rate = 3e-3;
    cfg.max_updates = 1500;
    cfg.patience = 200;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST(FitFactors, MedianOfRatios) {
    PerfModel m = constant_model({"a", "b"});
    FactorSet f = fit_factors(m, measured({{2.0, 1.0}, {2.0, 2.0}, {2.0, 4.0}}));
    EXPECT_EQ(f.factor("a"), 2.0);
    EXPECT_EQ(f.factor("b"), 2.0);
    EXPECT_TRUE(f.uncalibrated.empty());
}

TEST(FitFactors, MissingColumnFallsBackToOne) {
    PerfModel m = constant_model({"a", "b"});
    FactorSet f = fit_factors(m, measured({{3.0, std::nullopt}, {3.0, std::nullopt}}));
    EXPECT_EQ(f.factor("a"), 3.0);
    EXPECT_EQ(f.factor("b"), 1.0);
    EXPECT_EQ(f.uncalibrated, std::vector<std::string> {"b"});
}

TEST(FitFactors, Errors) {
    PerfModel m = constant_model({"a", "b"});
    EXPECT_EQ(error_kind_of([&] { fit_factors(m, measured({{-1.0, 1.0}})); }),
            ErrorKind::domain);
    EXPECT_EQ(error_kind_of([&] { fit_factors(m, measured({})); }), ErrorKind::size);
}

TEST(ApplyFactors, ScalesColumnsAndKeepsUndefinedCells) {
    ProfileDataset t = measured({{1.0, std::nullopt}, {2.0, 3.0}});
    FactorSet ones {{{"a", 1.0}, {"b", 1.0}}, {}};
    ProfileDataset same = apply_factors(t, ones);
    for (std::size_t r = 0; r < t.records.size(); ++r) EXPECT_EQ(same.records[r].times, t.records[r].times);
    FactorSet doubled {{{"a", 2.0}}, {}};
    ProfileDataset d = apply_factors(t, doubled);
    EXPECT_EQ(*d.records[0].times[0], 2.0);
    EXPECT_EQ(*d.records[1].times[0], 4.0);
    EXPECT_FALSE(d.records[0].times[1]);
    EXPECT_EQ(*d.records[1].times[1], 3.0);
}

TEST(FactorFile, RoundTrip) {
    FactorSet f {{{"im2col-copy", 1.5}, {"kn2row", 0.25}}, {}};
    FactorSet back = factors_from_json(factors_to_json(f));
    EXPECT_EQ(back.factors, f.factors);
    EXPECT_EQ(error_kind_of([] { factors_from_json(nlohmann::json::parse(R"({"a":-1})")); }),
            ErrorKind::domain);
    EXPECT_EQ(error_kind_of([] { factors_from_json(nlohmann::json::parse("[1]")); }),
            ErrorKind::io);
}

TEST(FactorCorrection, RecoversConstantScaling) {
    auto configs = synthetic::random_configs(600, 21);
    auto a = synthetic::platform_a(configs, 21);
    auto factors = synthetic::platform_factors(22);
    auto b = synthetic::platform_b(a, factors, 23, 0.0);
    auto split_a = table_split(a, 24);
    PerfModel m = fit_linear(split_a);

    auto parts_b = split_dataset(b, 25);
    auto samples = sample_fraction(parts_b.train, 0.1, 26);
    FactorSet f = fit_factors(m, samples);
    EXPECT_TRUE(f.uncalibrated.empty());
    for (const auto &[name, v] : f.factors)
        EXPECT_NEAR(v / factors.at(name), 1.0, 0.3) << name;

    std::vector<LayerConfig> test_cfgs;
    for (const auto &r : parts_b.test.records) test_cfgs.push_back(r.config);
    auto raw = predict_costs(m, test_cfgs);
    auto corrected = apply_factors(raw, f);
    auto score = [&](const ProfileDataset &pred) {
        std::vector<double> p, t;
        for (std::size_t r = 0; r < pred.records.size(); ++r)
            for (std::size_t c = 0; c < pred.columns.size(); ++c)
                if (pred.records[r].times[c] && parts_b.test.records[r].times[c]) {
                    p.push_back(*pred.records[r].times[c]);
                    t.push_back(*parts_b.test.records[r].times[c]);
                }
        return mdrae(p, t);
    };
    EXPECT_LE(score(corrected), score(raw));
}

TEST(FineTune, ZeroLearningRateKeepsPredictions) {
    auto ds = synthetic::platform_a(synthetic::random_configs(200, 31), 31);
    auto split = table_split(ds, 31);
    TrainConfig cfg = small_config();
    cfg.max_updates = 100;
    PerfModel m = train_model(ModelKind::nn2, split, cfg);
    cfg.learning_rate = 0.0;
    PerfModel tuned = fine_tune(m, split, cfg, false);
    std::vector<std::vector<double>> rows;
    for (const auto &r : split.test.records) rows.push_back(r.inputs);
    auto a = m.predict(rows), b = tuned.predict(rows);
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (!std::isnan(a(i))) EXPECT_EQ(a(i), b(i));
    EXPECT_EQ(tuned.config.learning_rate, 0.0);
}

TEST(FineTune, OwnDataDoesNotDegrade) {
    auto ds = synthetic::platform_a(synthetic::random_configs(300, 32), 32);
    auto split = table_split(ds, 32);
    TrainConfig cfg = small_config(2);
    PerfModel m = train_model(ModelKind::nn2, split, cfg);
    PerfModel tuned = fine_tune(m, split, cfg);
    EXPECT_LE(evaluate(tuned, split.validation).pooled,
            evaluate(m, split.validation).pooled + 0.01);
}

TEST(FineTune, SchemaMismatchIsRejected) {
    auto ds = synthetic::platform_a(synthetic::random_configs(60, 33), 33);
    auto split = table_split(ds, 33);
    TrainConfig cfg = small_config();
    cfg.max_updates = 5;
    PerfModel m = train_model(ModelKind::nn2, split, cfg);
    Split<Table> other = split;
    other.train.output_names.back() = "something-else";
    EXPECT_EQ(error_kind_of([&] { fine_tune(m, other, cfg); }), ErrorKind::compatibility);
}

TEST(FineTune, BeatsScratchOnSmallTargetData) {
    auto configs = synthetic::random_configs(800, 34);
    auto a = synthetic::platform_a(configs, 34);
    auto b = synthetic::platform_b(a, synthetic::platform_factors(35), 36);
    PerfModel source = train_model(ModelKind::nn2, table_split(a, 37), small_config(3));

    auto parts = split_dataset(b, 38);
    Split<ProfileDataset> few {sample_fraction(parts.train, 0.01, 39),
            sample_fraction(parts.validation, 0.01, 40), parts.test};
    PerfModel tuned = fine_tune(source, few, small_config(4));
    PerfModel scratch = train_model(ModelKind::nn2, few, small_config(4));
    const Table test = to_table(parts.test);
    EXPECT_LT(evaluate(tuned, test).pooled, evaluate(scratch, test).pooled);
}

TEST(FamilyTransfer, MatrixShapeAndWinogradCorrelation) {
    // Tuning on 3x3 Winograd should help 5x5 Winograd most in most draws.
    const auto w3 = std::size_t(Family::wino3), w5 = std::size_t(Family::wino5);
    int closest = 0;
    for (std::uint64_t seed : {41, 51, 61, 71, 81}) {
        auto configs = synthetic::random_configs(700, seed);
        auto a = synthetic::platform_a(configs, seed);
        auto b = synthetic::platform_b(a, synthetic::platform_factors(seed + 1), seed + 2);
        TrainConfig src_cfg = small_config(5);
        PerfModel source = train_model(ModelKind::nn2, table_split(a, seed + 3), src_cfg);
        TrainConfig cfg = small_config(6);
        cfg.max_updates = 300;
        FamilyMatrix m = family_transfer_matrix(source, b, cfg);
        for (std::size_t r = 0; r < m.size(); ++r) {
            EXPECT_EQ(m[r][r], 1.0);
            for (double v : m[r]) EXPECT_GE(v, 0.0);
        }
        bool best = true;
        for (std::size_t c = 0; c < m.size(); ++c)
            if (c != w3 && c != w5 && m[w3][c] <= m[w3][w5]) best = false;
        closest += best;
    }
    EXPECT_GE(closest, 4);
}

TEST(FamilyTransfer, MissingFamilyIsCoverageError) {
    auto configs = synthetic::random_configs(200, 45);
    std::erase_if(configs, [](const LayerConfig &c) { return c.f == 5; });
    auto a = synthetic::platform_a(configs, 45);
    PerfModel m = fit_linear(table_split(a, 46));
    EXPECT_EQ(error_kind_of([&] { family_transfer_matrix(m, a, small_config()); }),
            ErrorKind::coverage);
}
