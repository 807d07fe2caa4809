// Copyright 2026 The convsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "convsel/selector.hpp"
#include "test_graphs.hpp"

using namespace convsel;
using namespace testing_graphs;

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

// Every applicable primitive at every layer costs 1 ms + 0.1 ms * index.
ProfileDataset flat_costs(const NetworkGraph &net) {
    ProfileDataset ds;
    ds.columns = primitive_names();
    for (const auto &l : net.layers()) {
        if (ds.find(l.config)) continue;
        ProfileRecord r {l.config, {}};
        for (std::size_t i = 0; i < primitive_registry.size(); ++i)
            if (applicable(primitive_registry[i].id, l.config))
                r.times.emplace_back(1e-3 + 1e-4 * double(i));
            else
                r.times.emplace_back(std::nullopt);
        ds.records.push_back(r);
    }
    return ds;
}

// dlt(from, to) = 1 ms * (1 + 3 * from + to) off the diagonal.
DltDataset flat_dlt(const NetworkGraph &net) {
    DltDataset ds;
    for (const auto &l : net.layers()) {
        if (ds.find(l.config.c, l.config.im)) continue;
        DltRecord r {l.config.c, l.config.im, {}};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (i != j) r.seconds[i][j] = 1e-3 * (1 + 3 * i + j);
        ds.records.push_back(r);
    }
    return ds;
}

NetworkGraph small_net() {
    return NetworkGraph::chain({{8, 4, 12, 3, 1}, {8, 8, 10, 3, 1}, {4, 8, 8, 1, 1}});
}

std::vector<std::size_t> indices_of(const CostGraph &g, const Assignment &a) {
    std::vector<std::size_t> idx;
    for (const auto &n : g.nodes) idx.push_back(detail::choice_index(n, a));
    return idx;
}

} // namespace

// ---------------------------------------------------------------------------
// Cost graph construction

TEST(BuildCostGraph, EdgeEntriesFollowLayouts) {
    NetworkGraph net = small_net();
    CostGraph g = build_cost_graph(net, flat_costs(net), flat_dlt(net));
    ASSERT_EQ(g.nodes.size(), 3u);
    ASSERT_EQ(g.edges.size(), 2u);
    for (const auto &e : g.edges) {
        const CostNode &a = g.nodes[e.from], &b = g.nodes[e.to];
        ASSERT_EQ(e.costs.rows, a.choices.size());
        ASSERT_EQ(e.costs.cols, b.choices.size());
        for (std::size_t i = 0; i < e.costs.rows; ++i)
            for (std::size_t j = 0; j < e.costs.cols; ++j) {
                const auto from = index_of(spec_of(a.choices[i]).output_layout);
                const auto to = index_of(spec_of(b.choices[j]).input_layout);
                const double expect = from == to ? 0.0 : 1e-3 * double(1 + 3 * from + to);
                EXPECT_EQ(e.costs(i, j), expect);
            }
    }
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        EXPECT_EQ(g.nodes[i].choices, applicable_primitives(net.layers()[i].config));
}

TEST(BuildCostGraph, HwcToChwUsesTableEntry) {
    NetworkGraph net = NetworkGraph::chain({{8, 4, 12, 1, 1}, {8, 8, 12, 3, 1}});
    DltDataset dlt = flat_dlt(net);
    for (auto &r : dlt.records)
        r.seconds[index_of(Layout::hwc)][index_of(Layout::chw)] = 4e-3;
    CostGraph g = build_cost_graph(net, flat_costs(net), dlt);
    const CostNode &a = g.nodes[0], &b = g.nodes[1];
    auto ia = std::find(a.choices.begin(), a.choices.end(), PrimitiveId::conv_1x1_gemm)
            - a.choices.begin();
    auto ib = std::find(b.choices.begin(), b.choices.end(), PrimitiveId::direct_sum2d)
            - b.choices.begin();
    EXPECT_EQ(g.edges[0].costs(std::size_t(ia), std::size_t(ib)), 4e-3);
}

TEST(BuildCostGraph, MissingCostsAreListed) {
    NetworkGraph net = small_net();
    ProfileDataset costs = flat_costs(net);
    costs.records[1].times[0].reset();
    try {
        build_cost_graph(net, costs, flat_dlt(net));
        FAIL() << "expected coverage error";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::coverage);
        EXPECT_NE(std::string(e.what()).find("direct-sum2d"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
    }
    DltDataset dlt = flat_dlt(net);
    dlt.records.pop_back();
    EXPECT_EQ(error_kind_of([&] { build_cost_graph(net, flat_costs(net), dlt); }),
            ErrorKind::coverage);
    ProfileDataset fewer = flat_costs(net);
    fewer.columns.pop_back();
    for (auto &r : fewer.records) r.times.pop_back();
    EXPECT_EQ(error_kind_of([&] { build_cost_graph(net, fewer, flat_dlt(net)); }),
            ErrorKind::coverage);
}

// ---------------------------------------------------------------------------
// Solvers on fixed instances

TEST(SolveChain, SingleLayerArgmin) {
    CostGraph g;
    g.nodes.push_back({0, first_choices(3), {5.0, 3.0, 7.0}});
    SolveReport r = solve_chain(g);
    EXPECT_EQ(r.assignment.choice.at(0), primitive_registry[1].id);
    EXPECT_EQ(r.assignment.total_cost, 3.0);
    EXPECT_TRUE(r.optimal);
    EXPECT_EQ(r.method, "chain-dp");
}

TEST(SolveChain, TwoLayerExample) {
    CostGraph g = two_layer_example();
    for (const SolveReport &r : {solve_chain(g), solve_pbqp(g), brute_force(g)}) {
        EXPECT_EQ(r.assignment.choice.at(0), PrimitiveId::im2col_copy);
        EXPECT_EQ(r.assignment.choice.at(1), PrimitiveId::direct_sum2d);
        EXPECT_EQ(r.assignment.total_cost, 8.0);
    }
}

TEST(SolveChain, ThreeByThreeMatchesExhaustiveSearch) {
    std::mt19937_64 rng(27);
    for (int trial = 0; trial < 20; ++trial) {
        CostGraph g = random_chain(rng, 3, 3, 3, false);
        EXPECT_EQ(solve_chain(g).assignment.total_cost, brute_minimum(g));
    }
}

TEST(SolveChain, RejectsNonChains) {
    std::mt19937_64 rng(1);
    CostGraph g = diamond(rng, true);
    EXPECT_EQ(error_kind_of([&] { solve_chain(g); }), ErrorKind::shape);
    CostGraph two_roots = random_chain(rng, 3, 2, 2, true);
    two_roots.edges[1] = {2, 1, random_matrix(rng, 2, 2, true)};
    EXPECT_EQ(error_kind_of([&] { solve_chain(two_roots); }), ErrorKind::shape);
}

TEST(SolveChain, TiesGoToLowestIndex) {
    std::mt19937_64 rng(2);
    CostGraph g = random_chain(rng, 4, 3, 3, true);
    for (auto &n : g.nodes) std::fill(n.costs.begin(), n.costs.end(), 1.0);
    for (auto &e : g.edges) std::fill(e.costs.data.begin(), e.costs.data.end(), 0.0);
    for (const SolveReport &r : {solve_chain(g), solve_pbqp(g), brute_force(g)})
        for (const auto &n : g.nodes) EXPECT_EQ(r.assignment.choice.at(n.id), n.choices[0]);
}

TEST(SolvePbqp, DiamondMatchesSixteenAssignments) {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 50; ++trial) {
        CostGraph g = diamond(rng, true);
        SolveReport r = solve_pbqp(g);
        EXPECT_EQ(r.assignment.total_cost, brute_minimum(g));
        EXPECT_TRUE(r.optimal);
    }
}

TEST(SolvePbqp, StarIsSolvedByReductions) {
    std::mt19937_64 rng(5);
    CostGraph g = star(rng, 5, false);
    SolveReport r = solve_pbqp(g);
    EXPECT_TRUE(r.optimal);
    EXPECT_EQ(r.assignment.total_cost, brute_minimum(g));
}

TEST(SolvePbqp, DenseGraphUsesHeuristic) {
    std::mt19937_64 rng(8);
    CostGraph g = random_dag(rng, 7, 3, 1.0, false);
    SolveReport r = solve_pbqp(g);
    EXPECT_FALSE(r.optimal);
    EXPECT_GE(r.assignment.total_cost, brute_minimum(g) - 1e-12);
}

TEST(SolvePbqp, RejectsCycles) {
    std::mt19937_64 rng(3);
    CostGraph g = random_chain(rng, 3, 2, 2, true);
    g.edges.push_back({2, 0, random_matrix(rng, 2, 2, true)});
    EXPECT_EQ(error_kind_of([&] { solve_pbqp(g); }), ErrorKind::shape);
}

TEST(BruteForce, EmptyGraph) {
    CostGraph g;
    for (const SolveReport &r : {solve_chain(g), solve_pbqp(g), brute_force(g)}) {
        EXPECT_TRUE(r.assignment.choice.empty());
        EXPECT_EQ(r.assignment.total_cost, 0.0);
    }
}

TEST(BruteForce, LimitIsEnforced) {
    std::mt19937_64 rng(4);
    CostGraph g = random_chain(rng, 6, 4, 4, true);
    EXPECT_EQ(error_kind_of([&] { brute_force(g, 1000); }), ErrorKind::size);
    EXPECT_NO_THROW(brute_force(g, 4096));
}

TEST(BruteForce, MatchesChainOnFourByFour) {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 10; ++trial) {
        CostGraph g = random_chain(rng, 4, 4, 4, false);
        EXPECT_EQ(brute_force(g).assignment.total_cost,
                solve_chain(g).assignment.total_cost);
    }
}

// ---------------------------------------------------------------------------
// Properties

TEST(SolverProperties, ChainsAgreeWithBruteForce) {
    std::mt19937_64 rng(200);
    std::uniform_int_distribution<std::size_t> layers(1, 6);
    for (int trial = 0; trial < 200; ++trial) {
        CostGraph g = random_chain(rng, layers(rng), 1, 4, trial % 2 == 0);
        const double best = brute_force(g).assignment.total_cost;
        SolveReport chain = solve_chain(g), pbqp = solve_pbqp(g);
        EXPECT_EQ(chain.assignment.total_cost, best) << "chain " << trial;
        EXPECT_EQ(pbqp.assignment.total_cost, best) << "chain " << trial;
        EXPECT_TRUE(pbqp.optimal);
    }
}

TEST(SolverProperties, DagsNeverBeatBruteForce) {
    std::mt19937_64 rng(100);
    std::uniform_int_distribution<std::size_t> nodes(2, 8);
    std::uniform_real_distribution<double> density(0.2, 0.8);
    int optimal = 0, heuristic = 0;
    for (int trial = 0; trial < 100; ++trial) {
        CostGraph g = random_dag(rng, nodes(rng), 4, density(rng), trial % 2 == 0);
        const double best = brute_force(g).assignment.total_cost;
        SolveReport r = solve_pbqp(g);
        if (r.optimal) {
            ++optimal;
            EXPECT_EQ(r.assignment.total_cost, best) << "dag " << trial;
        } else {
            ++heuristic;
            EXPECT_GE(r.assignment.total_cost, best - 1e-12) << "dag " << trial;
        }
    }
    EXPECT_GT(optimal, 0);
    EXPECT_GT(heuristic, 0);
}

TEST(SolverProperties, ScalingKeepsAssignments) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        CostGraph g = random_dag(rng, 6, 3, 0.4, false);
        CostGraph scaled = g;
        for (auto &n : scaled.nodes)
            for (double &c : n.costs) c *= 3.7;
        for (auto &e : scaled.edges)
            for (double &c : e.costs.data) c *= 3.7;
        EXPECT_EQ(solve_pbqp(g).assignment.choice, solve_pbqp(scaled).assignment.choice);
        EXPECT_EQ(brute_force(g).assignment.choice, brute_force(scaled).assignment.choice);
    }
}

TEST(SolverProperties, ReportedTotalIsRecomputable) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 30; ++trial) {
        CostGraph g = random_dag(rng, 6, 4, 0.5, false);
        SolveReport r = solve_pbqp(g);
        EXPECT_EQ(r.assignment.total_cost, total_cost(g, r.assignment));
        EXPECT_EQ(r.assignment.total_cost, total_cost(g, indices_of(g, r.assignment)));
    }
}

// ---------------------------------------------------------------------------
// Files

TEST(NetworkFile, RoundTrip) {
    NetworkGraph net({{1, {16, 3, 32, 3, 1}}, {2, {16, 16, 30, 3, 1}},
                             {3, {16, 16, 30, 3, 1}}, {4, {8, 32, 28, 3, 1}}},
            {{1, 2}, {1, 3}, {2, 4}, {3, 4}});
    auto j = network_to_json(net);
    EXPECT_EQ(network_to_json(network_from_json(j)).dump(), j.dump());
    EXPECT_EQ(error_kind_of([] { network_from_json(nlohmann::json::parse("{}")); }),
            ErrorKind::io);
    EXPECT_EQ(error_kind_of([] {
        network_from_json(nlohmann::json::parse(
                R"({"layers":[{"id":0,"k":1,"c":1,"im":3,"f":5,"s":1}]})"));
    }),
            ErrorKind::invalid_config);
}

TEST(ReportFile, BreakdownAddsUp) {
    NetworkGraph net = small_net();
    CostGraph g = build_cost_graph(net, flat_costs(net), flat_dlt(net));
    SolveReport r = solve_chain(g);
    auto j = report_to_json(g, r);
    double sum = 0.0;
    for (const auto &l : j.at("layers"))
        sum += l.at("primitive_cost").get<double>()
                + l.at("incoming_transform_cost").get<double>();
    EXPECT_NEAR(sum, j.at("total_cost").get<double>(), 1e-15);
    EXPECT_EQ(j.at("layers").size(), 3u);
    EXPECT_EQ(j.at("method"), "chain-dp");
}
