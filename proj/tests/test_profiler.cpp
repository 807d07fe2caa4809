// Copyright 2026 The convsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "convsel/profiler.hpp"

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

std::vector<double> ms(std::initializer_list<double> v) {
    std::vector<double> out;
    for (double x : v) out.push_back(x * 1e-3);
    return out;
}

const LayerConfig small {2, 2, 6, 3, 1};

std::filesystem::path temp_path(const std::string &name) {
    auto dir = std::filesystem::temp_directory_path() / "convsel_profiler_test";
    std::filesystem::create_directories(dir);
    auto p = dir / name;
    std::filesystem::remove(p);
    return p;
}

std::string read_file(const std::filesystem::path &p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string to_csv(const ProfileDataset &ds) {
    std::ostringstream os;
    write_profile_csv(os, ds);
    return os.str();
}

std::string to_csv(const DltDataset &ds) {
    std::ostringstream os;
    write_dlt_csv(os, ds);
    return os.str();
}

} // namespace

TEST(TimePrimitive, MedianOfOddReps) {
    std::vector<double> d;
    for (int i = 1; i <= 25; ++i) d.push_back(i * 1e-3);
    ScriptedClock clock(d);
    EXPECT_NEAR(time_primitive(PrimitiveId::direct_sum2d, small, 25, 0, 1, clock),
            13e-3, 1e-12);
}

TEST(TimePrimitive, EvenRepsTakeLowerMiddle) {
    ScriptedClock clock(ms({5, 1, 9, 3}));
    EXPECT_NEAR(time_primitive(PrimitiveId::im2col_copy, small, 4, 3, 1, clock),
            3e-3, 1e-12);
}

TEST(TimePrimitive, PermutationDoesNotChangeMedian) {
    std::vector<double> d;
    for (int i = 1; i <= 9; ++i) d.push_back(i * 1e-3);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(d.begin(), d.end(), rng);
        ScriptedClock clock(d);
        EXPECT_NEAR(time_primitive(PrimitiveId::direct_sum2d, small, 9, 0, 1, clock),
                5e-3, 1e-12);
    }
}

TEST(TimePrimitive, RealClockIsPositive) {
    SteadyClock clock;
    const double t = time_primitive(PrimitiveId::winograd_3x3, {8, 8, 16, 3, 1},
            25, 3, 7, clock);
    EXPECT_TRUE(std::isfinite(t));
    EXPECT_GT(t, 0.0);
}

TEST(TimePrimitive, Errors) {
    ScriptedClock clock(ms({1}));
    EXPECT_EQ(error_kind_of([&] {
        time_primitive(PrimitiveId::winograd_5x5, small, 1, 0, 1, clock);
    }), ErrorKind::applicability);
    EXPECT_EQ(error_kind_of([&] {
        time_primitive(PrimitiveId::direct_sum2d, small, 0, 0, 1, clock);
    }), ErrorKind::size);
}

TEST(LayoutTransforms, ConstantClock) {
    ScriptedClock clock(ms({2}));
    DltRecord r = profile_layout_transforms(4, 5, 3, clock);
    EXPECT_EQ(r.c, 4);
    EXPECT_EQ(r.im, 5);
    ASSERT_EQ(r.seconds.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_NEAR(r.seconds[i][j], i == j ? 0.0 : 2e-3, 1e-12);
}

TEST(LayoutTransforms, RealClockDiagonalIsZero) {
    SteadyClock clock;
    DltRecord r = profile_layout_transforms(16, 20, 5, clock);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            if (i == j) EXPECT_EQ(r.seconds[i][j], 0.0);
            else EXPECT_GT(r.seconds[i][j], 0.0);
        }
}

TEST(GenerateGrid, Counts) {
    EXPECT_EQ(generate_grid({{3, 64, 224}}, {1, 3}, {1, 2}).size(), 4u);
    auto tiny = generate_grid({{512, 512, 7}}, {1, 3, 5, 7, 9, 11}, {1});
    ASSERT_EQ(tiny.size(), 4u);
    for (const auto &cfg : tiny) EXPECT_LE(cfg.f, 7);
    EXPECT_EQ(generate_grid({{64, 64, 56}, {512, 512, 7}}, {1, 3, 5, 7, 9, 11}, {1, 2, 4})
                      .size(),
            30u);
}

TEST(GenerateGrid, OrderIsTripletThenFilterThenStride) {
    auto g = generate_grid({{3, 8, 10}, {4, 9, 12}}, {1, 3}, {1, 2});
    ASSERT_EQ(g.size(), 8u);
    EXPECT_EQ(g[0], (LayerConfig {8, 3, 10, 1, 1}));
    EXPECT_EQ(g[1], (LayerConfig {8, 3, 10, 1, 2}));
    EXPECT_EQ(g[2], (LayerConfig {8, 3, 10, 3, 1}));
    EXPECT_EQ(g[4], (LayerConfig {9, 4, 12, 1, 1}));
}

TEST(GenerateGrid, DeskGridCoversEveryFamily) {
    auto grid = desk_grid();
    EXPECT_EQ(grid.size(), desk_triplets().size() * 6);
    for (const auto &spec : primitive_registry)
        EXPECT_TRUE(std::any_of(grid.begin(), grid.end(),
                [&](const LayerConfig &c) { return applicable(spec.id, c); }))
                << to_string(spec.id);
}

TEST(BuildDataset, ApplicabilityAndTransformPairs) {
    ScriptedClock clock(ms({1, 2, 3}));
    ProfileOptions opt {3, 0, 9};
    auto one = build_dataset({{2, 2, 9, 7, 1}}, opt, clock);
    ASSERT_EQ(one.primitives.records.size(), 1u);
    const auto &times = one.primitives.records[0].times;
    EXPECT_EQ(std::count_if(times.begin(), times.end(), [](auto &t) { return t.has_value(); }), 6);
    EXPECT_EQ(one.transforms.records.size(), 1u);

    std::vector<LayerConfig> grid {{2, 2, 9, 3, 1}, {4, 2, 9, 1, 1}, {2, 3, 9, 3, 1},
            {2, 3, 8, 1, 2}};
    auto res = build_dataset(grid, opt, clock);
    EXPECT_EQ(res.primitives.records.size(), 4u);
    EXPECT_EQ(res.transforms.records.size(), 3u);
    for (const auto &r : res.primitives.records)
        for (const auto &t : r.times)
            if (t) EXPECT_GT(*t, 0.0);
    for (const auto &r : res.transforms.records)
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.seconds[i][i], 0.0);
    EXPECT_EQ(error_kind_of([&] { build_dataset({}, opt, clock); }), ErrorKind::size);
}

TEST(BuildDataset, ScriptedClockIsDeterministic) {
    std::vector<LayerConfig> grid = generate_grid({{2, 3, 8}, {3, 2, 7}}, {1, 3}, {1, 2});
    ProfileOptions opt {5, 1, 42};
    ScriptedClock c1(ms({1, 4, 2, 8, 5, 7}));
    ScriptedClock c2(ms({1, 4, 2, 8, 5, 7}));
    auto a = build_dataset(grid, opt, c1);
    auto b = build_dataset(grid, opt, c2);
    EXPECT_EQ(to_csv(a.primitives), to_csv(b.primitives));
    EXPECT_EQ(to_csv(a.transforms), to_csv(b.transforms));
}

TEST(BuildDataset, ResumesFromPartialFiles) {
    auto prim = temp_path("resume_prim.csv");
    auto dlt = temp_path("resume_dlt.csv");
    std::vector<LayerConfig> grid = generate_grid({{2, 3, 8}, {3, 2, 7}}, {1, 3}, {1});
    ProfileOptions opt {3, 0, 1};

    ScriptedClock first(ms({1}));
    build_dataset({grid[0], grid[1]}, opt, first, {prim, dlt, {}});

    ScriptedClock second(ms({2}));
    std::size_t calls = 0;
    auto res = build_dataset(grid, opt, second, {prim, dlt, [&](std::size_t, std::size_t) { ++calls; }});
    EXPECT_EQ(calls, grid.size() + 2);
    ASSERT_EQ(res.primitives.records.size(), grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto &times = res.primitives.records[i].times;
        const double expect = i < 2 ? 1e-3 : 2e-3;
        for (const auto &t : times)
            if (t) EXPECT_NEAR(*t, expect, 1e-12) << i;
    }
    auto on_disk = load_profile_csv(prim);
    EXPECT_EQ(to_csv(on_disk), to_csv(res.primitives));
    auto dlt_disk = load_dlt_csv(dlt);
    EXPECT_EQ(dlt_disk.records.size(), 2u);
    EXPECT_NEAR(dlt_disk.records[0].seconds[0][1], 1e-3, 1e-12);
    EXPECT_NEAR(dlt_disk.records[1].seconds[0][1], 2e-3, 1e-12);
}

TEST(ProfileCsv, RoundTripWithUndefinedCells) {
    ProfileDataset ds;
    ds.columns = primitive_names();
    ProfileRecord r {{4, 3, 9, 3, 2}, {}};
    for (std::size_t i = 0; i < ds.columns.size(); ++i)
        r.times.push_back(i % 3 == 0 ? std::nullopt : std::optional(1.25e-4 * double(i + 1)));
    ds.records.push_back(r);
    const std::string text = to_csv(ds);
    EXPECT_EQ(text.rfind("k,c,im,f,s,", 0), 0u);
    EXPECT_NE(text.find(",NA"), std::string::npos);
    std::istringstream is(text);
    ProfileDataset back = read_profile_csv(is, "memory");
    EXPECT_EQ(back.columns, ds.columns);
    ASSERT_EQ(back.records.size(), 1u);
    EXPECT_EQ(back.records[0].config, r.config);
    EXPECT_EQ(back.records[0].times, r.times);
    EXPECT_EQ(to_csv(back), text);
}

TEST(ProfileCsv, MalformedIsIoError) {
    std::istringstream bad("k,c,im,f,s,a\n1,2,3\n");
    EXPECT_EQ(error_kind_of([&] { read_profile_csv(bad, "memory"); }), ErrorKind::io);
    EXPECT_EQ(error_kind_of([&] { load_profile_csv(temp_path("missing.csv")); }),
            ErrorKind::io);
}

TEST(DltCsv, RoundTrip) {
    DltDataset ds;
    DltRecord r {16, 20, {}};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) r.seconds[i][j] = 1e-5 * double(1 + 3 * i + j);
    ds.records.push_back(r);
    auto p = temp_path("dlt.csv");
    save_dlt_csv(p, ds);
    DltDataset back = load_dlt_csv(p);
    ASSERT_EQ(back.records.size(), 1u);
    EXPECT_EQ(back.records[0].c, 16);
    EXPECT_EQ(back.records[0].im, 20);
    EXPECT_EQ(back.records[0].seconds, r.seconds);
    EXPECT_EQ(read_file(p), to_csv(ds));
}
