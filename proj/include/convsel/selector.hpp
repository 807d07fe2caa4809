/*******************************************************************************
* Copyright 2026 The convsel Authors
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*******************************************************************************/

#ifndef CONVSEL_SELECTOR_HPP
#define CONVSEL_SELECTOR_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convsel/core.hpp"
#include "convsel/dataset.hpp"

namespace convsel {

struct SolveReport {
    Assignment assignment;
    std::string method; // chain-dp | pbqp-heuristic | brute-force
    bool optimal = false;
};

// ---------------------------------------------------------------------------
// Cost graph construction

// Nodes carry the cost of every applicable primitive; an edge entry is the
// layout transformation from the producer choice's output layout to the
// consumer choice's input layout, priced at the consumer's (c, im).
inline CostGraph build_cost_graph(const NetworkGraph &net,
        const ProfileDataset &prim_costs, const DltDataset &dlt_costs) {
    std::vector<std::string> gaps;
    CostGraph g;
    for (const auto &layer : net.layers()) {
        CostNode node;
        node.id = layer.id;
        const ProfileRecord *rec = prim_costs.find(layer.config);
        for (PrimitiveId p : applicable_primitives(layer.config)) {
            auto col = prim_costs.column_index(to_string(p));
            if (!rec || !col || !rec->times.at(*col)) {
                gaps.push_back("layer " + std::to_string(layer.id) + " ("
                        + layer.config.str() + ") " + to_string(p));
                continue;
            }
            node.choices.push_back(p);
            node.costs.push_back(*rec->times[*col]);
        }
        g.nodes.push_back(std::move(node));
    }
    std::set<std::pair<int, int>> missing_dlt;
    for (auto [u, v] : net.edges()) {
        const std::size_t ui = net.index_of_id(u), vi = net.index_of_id(v);
        const LayerConfig &consumer = net.layers()[vi].config;
        const CostNode &a = g.nodes[ui];
        const CostNode &b = g.nodes[vi];
        CostEdge e {ui, vi, CostMatrix(a.choices.size(), b.choices.size())};
        const DltRecord *rec = dlt_costs.find(consumer.c, consumer.im);
        for (std::size_t i = 0; i < a.choices.size(); ++i)
            for (std::size_t j = 0; j < b.choices.size(); ++j) {
                const Layout from = spec_of(a.choices[i]).output_layout;
                const Layout to = spec_of(b.choices[j]).input_layout;
                if (from == to) continue;
                if (!rec) {
                    missing_dlt.insert({consumer.c, consumer.im});
                    continue;
                }
                e.costs(i, j) = rec->seconds[index_of(from)][index_of(to)];
            }
        g.edges.push_back(std::move(e));
    }
    for (auto [c, im] : missing_dlt)
        gaps.push_back("layout transforms at c=" + std::to_string(c)
                + " im=" + std::to_string(im));
    if (!gaps.empty()) {
        std::string msg = "missing costs:";
        for (const auto &s : gaps) msg += "\n  " + s;
        fail(ErrorKind::coverage, msg);
    }
    g.check();
    return g;
}

// ---------------------------------------------------------------------------
// Solvers

namespace detail {

// Node order along the path when the graph is a simple directed path.
inline std::optional<std::vector<std::size_t>> path_order(const CostGraph &g) {
    const std::size_t n = g.nodes.size();
    if (n == 0) return std::vector<std::size_t> {};
    if (g.edges.size() != n - 1) return std::nullopt;
    std::vector<int> indeg(n, 0), outdeg(n, 0);
    std::vector<std::size_t> next(n, n);
    for (const auto &e : g.edges) {
        if (e.from == e.to) return std::nullopt;
        ++indeg[e.to];
        ++outdeg[e.from];
        next[e.from] = e.to;
    }
    std::size_t start = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (indeg[i] > 1 || outdeg[i] > 1) return std::nullopt;
        if (indeg[i] == 0) {
            if (start != n) return std::nullopt;
            start = i;
        }
    }
    if (start == n) return std::nullopt;
    std::vector<std::size_t> order;
    for (std::size_t at = start; at != n; at = next[at]) order.push_back(at);
    if (order.size() != n) return std::nullopt;
    return order;
}

inline std::size_t argmin_first(const std::vector<double> &v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best]) best = i;
    return best;
}

inline void check_acyclic(const CostGraph &g) {
    std::vector<int> indeg(g.nodes.size(), 0);
    std::vector<std::vector<std::size_t>> out(g.nodes.size());
    for (const auto &e : g.edges) {
        ++indeg[e.to];
        out[e.from].push_back(e.to);
    }
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < indeg.size(); ++i)
        if (indeg[i] == 0) ready.push_back(i);
    std::size_t seen = 0;
    while (!ready.empty()) {
        std::size_t u = ready.back();
        ready.pop_back();
        ++seen;
        for (std::size_t v : out[u])
            if (--indeg[v] == 0) ready.push_back(v);
    }
    if (seen != g.nodes.size()) fail(ErrorKind::shape, "cost graph has a cycle");
}

inline SolveReport finish(const CostGraph &g, const std::vector<std::size_t> &idx,
        std::string method, bool optimal) {
    return {make_assignment(g, idx), std::move(method), optimal};
}

} // namespace detail

inline bool is_chain(const CostGraph &g) {
    return detail::path_order(g).has_value();
}

// Exact forward dynamic programming over a path.
inline SolveReport solve_chain(const CostGraph &g) {
    g.check();
    auto order = detail::path_order(g);
    if (!order) fail(ErrorKind::shape, "cost graph is not a chain");
    const std::size_t n = order->size();
    std::vector<std::size_t> idx(g.nodes.size(), 0);
    if (n == 0) return detail::finish(g, idx, "chain-dp", true);

    std::vector<const CostEdge *> edge_into(g.nodes.size(), nullptr);
    for (const auto &e : g.edges) edge_into[e.to] = &e;

    std::vector<std::vector<double>> best(n);
    std::vector<std::vector<std::size_t>> from(n);
    best[0] = g.nodes[(*order)[0]].costs;
    for (std::size_t t = 1; t < n; ++t) {
        const CostNode &node = g.nodes[(*order)[t]];
        const CostEdge &e = *edge_into[(*order)[t]];
        best[t].assign(node.costs.size(), 0.0);
        from[t].assign(node.costs.size(), 0);
        for (std::size_t j = 0; j < node.costs.size(); ++j) {
            std::size_t arg = 0;
            double low = best[t - 1][0] + e.costs(0, j);
            for (std::size_t i = 1; i < best[t - 1].size(); ++i) {
                const double v = best[t - 1][i] + e.costs(i, j);
                if (v < low) {
                    low = v;
                    arg = i;
                }
            }
            best[t][j] = low + node.costs[j];
            from[t][j] = arg;
        }
    }
    std::size_t choice = detail::argmin_first(best[n - 1]);
    for (std::size_t t = n; t-- > 0;) {
        idx[(*order)[t]] = choice;
        if (t > 0) choice = from[t][choice];
    }
    return detail::finish(g, idx, "chain-dp", true);
}

// PBQP reduction solver: R0, RI and RII are exact; when only nodes of
// degree three or more remain, RN fixes the highest-degree node to its
// locally cheapest choice and the result is flagged non-optimal.
inline SolveReport solve_pbqp(const CostGraph &g) {
    g.check();
    detail::check_acyclic(g);
    const std::size_t n = g.nodes.size();

    std::vector<std::vector<double>> cost(n);
    for (std::size_t i = 0; i < n; ++i) cost[i] = g.nodes[i].costs;

    // Undirected interaction matrices keyed by (low, high) node index, rows
    // indexing the lower node's choices. Parallel edges are summed.
    std::map<std::pair<std::size_t, std::size_t>, CostMatrix> mat;
    std::vector<std::set<std::size_t>> adj(n);
    auto add_matrix = [&](std::size_t a, std::size_t b, const CostMatrix &m_ab) {
        const std::size_t lo = std::min(a, b), hi = std::max(a, b);
        CostMatrix m(cost[lo].size(), cost[hi].size());
        for (std::size_t i = 0; i < m_ab.rows; ++i)
            for (std::size_t j = 0; j < m_ab.cols; ++j) {
                if (a == lo)
                    m(i, j) = m_ab(i, j);
                else
                    m(j, i) = m_ab(i, j);
            }
        auto [it, fresh] = mat.try_emplace({lo, hi}, m);
        if (!fresh)
            for (std::size_t k = 0; k < m.data.size(); ++k) it->second.data[k] += m.data[k];
        adj[lo].insert(hi);
        adj[hi].insert(lo);
    };
    for (const auto &e : g.edges) add_matrix(e.from, e.to, e.costs);

    // Cost of choice i at u and j at v.
    auto between = [&](std::size_t u, std::size_t i, std::size_t v, std::size_t j) {
        return u < v ? mat.at({u, v})(i, j) : mat.at({v, u})(j, i);
    };

    // Reduced nodes remember their vector and their matrices towards the
    // neighbors (rows = the reduced node's choices) for back-propagation.
    struct Record {
        std::size_t node;
        std::vector<double> cost;
        std::vector<std::pair<std::size_t, CostMatrix>> towards;
        std::optional<std::size_t> fixed; // RN choice
    };
    std::vector<Record> stack;
    std::vector<bool> alive(n, true);
    auto oriented = [&](std::size_t u, std::size_t v) {
        CostMatrix m(cost[u].size(), cost[v].size());
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = between(u, i, v, j);
        return m;
    };
    auto reduce = [&](std::size_t u, std::optional<std::size_t> fixed) {
        Record r {u, cost[u], {}, fixed};
        for (std::size_t v : adj[u]) r.towards.emplace_back(v, oriented(u, v));
        for (std::size_t v : adj[u]) {
            adj[v].erase(u);
            mat.erase({std::min(u, v), std::max(u, v)});
        }
        adj[u].clear();
        alive[u] = false;
        stack.push_back(std::move(r));
    };
    bool optimal = true;

    for (std::size_t left = n; left > 0; --left) {
        std::size_t u = n;
        for (std::size_t deg = 0; deg <= 2 && u == n; ++deg)
            for (std::size_t x = 0; x < n && u == n; ++x)
                if (alive[x] && adj[x].size() == deg) u = x;
        if (u == n) {
            // RN on the highest-degree node, lowest index on ties.
            for (std::size_t x = 0; x < n; ++x)
                if (alive[x] && (u == n || adj[x].size() > adj[u].size())) u = x;
            std::vector<double> local(cost[u]);
            for (std::size_t i = 0; i < local.size(); ++i)
                for (std::size_t v : adj[u]) {
                    double low = std::numeric_limits<double>::infinity();
                    for (std::size_t j = 0; j < cost[v].size(); ++j)
                        low = std::min(low, between(u, i, v, j) + cost[v][j]);
                    local[i] += low;
                }
            const std::size_t choice = detail::argmin_first(local);
            for (std::size_t v : adj[u])
                for (std::size_t j = 0; j < cost[v].size(); ++j)
                    cost[v][j] += between(u, choice, v, j);
            reduce(u, choice);
            optimal = false;
            continue;
        }
        const std::size_t deg = adj[u].size();
        if (deg == 1) {
            const std::size_t v = *adj[u].begin();
            for (std::size_t j = 0; j < cost[v].size(); ++j) {
                double low = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < cost[u].size(); ++i)
                    low = std::min(low, cost[u][i] + between(u, i, v, j));
                cost[v][j] += low;
            }
            reduce(u, std::nullopt);
        } else if (deg == 2) {
            auto it = adj[u].begin();
            const std::size_t v = *it++;
            const std::size_t w = *it; // v < w
            CostMatrix fold(cost[v].size(), cost[w].size());
            for (std::size_t j = 0; j < cost[v].size(); ++j)
                for (std::size_t k = 0; k < cost[w].size(); ++k) {
                    double low = std::numeric_limits<double>::infinity();
                    for (std::size_t i = 0; i < cost[u].size(); ++i)
                        low = std::min(low,
                                cost[u][i] + between(u, i, v, j) + between(u, i, w, k));
                    fold(j, k) = low;
                }
            reduce(u, std::nullopt);
            add_matrix(v, w, fold);
        } else {
            reduce(u, std::nullopt);
        }
    }

    std::vector<std::size_t> idx(n, 0);
    for (auto r = stack.rbegin(); r != stack.rend(); ++r) {
        if (r->fixed) {
            idx[r->node] = *r->fixed;
            continue;
        }
        std::vector<double> local(r->cost);
        for (const auto &[v, m] : r->towards)
            for (std::size_t i = 0; i < local.size(); ++i) local[i] += m(i, idx[v]);
        idx[r->node] = detail::argmin_first(local);
    }
    return detail::finish(g, idx, "pbqp-heuristic", optimal);
}

// Exhaustive search; returns the lexicographically first minimum (node 0
// most significant).
inline SolveReport brute_force(const CostGraph &g, double limit = 1e6) {
    g.check();
    double count = 1.0;
    for (const auto &node : g.nodes) count *= double(node.choices.size());
    if (count > limit)
        fail(ErrorKind::size,
                "brute force would enumerate " + std::to_string(count)
                        + " assignments, limit " + std::to_string(limit));
    const std::size_t n = g.nodes.size();
    std::vector<std::size_t> idx(n, 0), best(n, 0);
    double best_cost = std::numeric_limits<double>::infinity();
    while (true) {
        const double c = total_cost(g, idx);
        if (c < best_cost) {
            best_cost = c;
            best = idx;
        }
        bool done = true;
        for (std::size_t pos = n; pos-- > 0;) {
            if (++idx[pos] < g.nodes[pos].choices.size()) {
                done = false;
                break;
            }
            idx[pos] = 0;
        }
        if (done) break;
    }
    return detail::finish(g, best, "brute-force", true);
}

enum class SolverKind { chain, pbqp, brute };

inline SolverKind parse_solver(std::string_view s) {
    if (s == "chain") return SolverKind::chain;
    if (s == "pbqp") return SolverKind::pbqp;
    if (s == "brute") return SolverKind::brute;
    fail(ErrorKind::usage, "unknown solver '" + std::string(s) + "'");
}

inline SolveReport solve(const CostGraph &g, SolverKind kind) {
    switch (kind) {
        case SolverKind::chain: return solve_chain(g);
        case SolverKind::pbqp: return solve_pbqp(g);
        case SolverKind::brute: return brute_force(g);
    }
    return solve_pbqp(g);
}

// Chain graphs go to the exact dynamic program, everything else to PBQP.
inline SolverKind default_solver(const CostGraph &g) {
    return is_chain(g) ? SolverKind::chain : SolverKind::pbqp;
}

struct OverheadReport {
    SolveReport chosen;        // solved on the predicted graph
    SolveReport best;          // solved on the measured graph
    double chosen_measured = 0.0;
    double overhead = 0.0;     // chosen_measured / best total - 1
};

// Prices the assignment picked from predicted costs with measured costs and
// compares it to the assignment picked from the measured costs directly.
// Both graphs must come from the same network.
inline OverheadReport measure_overhead(const CostGraph &predicted,
        const CostGraph &measured, SolverKind kind) {
    if (predicted.nodes.size() != measured.nodes.size())
        fail(ErrorKind::shape, "predicted and measured graphs differ");
    for (std::size_t i = 0; i < predicted.nodes.size(); ++i)
        if (predicted.nodes[i].id != measured.nodes[i].id
                || predicted.nodes[i].choices != measured.nodes[i].choices)
            fail(ErrorKind::shape, "predicted and measured graphs differ at layer "
                            + std::to_string(predicted.nodes[i].id));
    OverheadReport r;
    r.chosen = solve(predicted, kind);
    r.best = solve(measured, kind);
    r.chosen_measured = total_cost(measured, r.chosen.assignment);
    if (!(r.best.assignment.total_cost > 0.0))
        fail(ErrorKind::domain, "measured optimum is not positive");
    r.overhead = r.chosen_measured / r.best.assignment.total_cost - 1.0;
    return r;
}

// ---------------------------------------------------------------------------
// Files

inline nlohmann::json network_to_json(const NetworkGraph &net) {
    nlohmann::json layers = nlohmann::json::array(), edges = nlohmann::json::array();
    for (const auto &l : net.layers())
        layers.push_back({{"id", l.id}, {"k", l.config.k}, {"c", l.config.c},
                {"im", l.config.im}, {"f", l.config.f}, {"s", l.config.s}});
    for (auto [u, v] : net.edges()) edges.push_back({u, v});
    return {{"layers", layers}, {"edges", edges}};
}

inline NetworkGraph network_from_json(const nlohmann::json &j) {
    try {
        std::vector<Layer> layers;
        for (const auto &l : j.at("layers"))
            layers.push_back({l.at("id").get<int>(),
                    {l.at("k").get<int>(), l.at("c").get<int>(), l.at("im").get<int>(),
                            l.at("f").get<int>(), l.at("s").get<int>()}});
        std::vector<std::pair<int, int>> edges;
        if (j.contains("edges"))
            for (const auto &e : j.at("edges")) {
                if (!e.is_array() || e.size() != 2)
                    fail(ErrorKind::io, "edges must be [producer, consumer] pairs");
                edges.emplace_back(e[0].get<int>(), e[1].get<int>());
            }
        return NetworkGraph(std::move(layers), std::move(edges));
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::io, std::string("malformed network file: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::io, "cannot read " + path.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::io, path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path &path, const nlohmann::json &j) {
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    os << j.dump(2) << '\n';
    if (!os) fail(ErrorKind::io, "write failed for " + path.string());
}

inline NetworkGraph load_network(const std::filesystem::path &path) {
    return network_from_json(read_json_file(path));
}

inline void save_network(const std::filesystem::path &path, const NetworkGraph &net) {
    write_json_file(path, network_to_json(net));
}

// Assignment with the per-layer breakdown: node cost plus the cost of the
// transforms on its incoming edges.
inline nlohmann::json report_to_json(const CostGraph &g, const SolveReport &r) {
    std::vector<std::size_t> idx(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        idx[i] = detail::choice_index(g.nodes[i], r.assignment);
    std::vector<double> incoming(g.nodes.size(), 0.0);
    nlohmann::json edges = nlohmann::json::array();
    for (const auto &e : g.edges) {
        const double c = e.costs(idx[e.from], idx[e.to]);
        incoming[e.to] += c;
        edges.push_back({{"from", g.nodes[e.from].id}, {"to", g.nodes[e.to].id},
                {"transform_cost", c}});
    }
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        layers.push_back({{"id", g.nodes[i].id},
                {"primitive", to_string(g.nodes[i].choices[idx[i]])},
                {"primitive_cost", g.nodes[i].costs[idx[i]]},
                {"incoming_transform_cost", incoming[i]}});
    return {{"method", r.method}, {"optimal", r.optimal},
            {"total_cost", r.assignment.total_cost}, {"layers", layers},
            {"edges", edges}};
}

} // namespace convsel

#endif // CONVSEL_SELECTOR_HPP
