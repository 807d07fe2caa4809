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

#ifndef CONVSEL_CORE_HPP
#define CONVSEL_CORE_HPP

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "convsel/error.hpp"

namespace convsel {

// One convolutional layer: k kernels of size f x f over a c x im x im input,
// applied with stride s and no padding.
struct LayerConfig {
    int k = 1;
    int c = 1;
    int im = 1;
    int f = 1;
    int s = 1;

    auto operator<=>(const LayerConfig &) const = default;

    bool is_valid() const {
        return k >= 1 && c >= 1 && im >= 1 && f >= 1 && s >= 1 && f % 2 == 1
                && f <= im && s <= im;
    }

    // Table ranges commonly seen in ImageNet-class networks. Only used to
    // steer grid generation.
    bool in_common_range() const {
        static constexpr std::array strides {1, 2, 4};
        return is_valid() && k <= 2048 && c <= 2048 && im >= 7 && im <= 299
                && f <= 11
                && std::find(strides.begin(), strides.end(), s)
                != strides.end();
    }

    std::string str() const {
        return "(k=" + std::to_string(k) + ", c=" + std::to_string(c)
                + ", im=" + std::to_string(im) + ", f=" + std::to_string(f)
                + ", s=" + std::to_string(s) + ")";
    }
};

inline void validate(const LayerConfig &cfg) {
    if (!cfg.is_valid()) fail(ErrorKind::invalid_config, cfg.str());
}

// Output spatial size of a valid (unpadded) convolution.
inline int output_dims(const LayerConfig &cfg) {
    if (cfg.f > cfg.im)
        fail(ErrorKind::invalid_config,
                "kernel larger than input " + cfg.str());
    validate(cfg);
    return (cfg.im - cfg.f) / cfg.s + 1;
}

enum class Layout { chw, hcw, hwc };

inline constexpr std::array<Layout, 3> all_layouts {
        Layout::chw, Layout::hcw, Layout::hwc};

inline constexpr std::size_t index_of(Layout l) {
    return static_cast<std::size_t>(l);
}

inline const char *to_string(Layout l) {
    switch (l) {
        case Layout::chw: return "chw";
        case Layout::hcw: return "hcw";
        case Layout::hwc: return "hwc";
    }
    return "?";
}

inline Layout parse_layout(std::string_view name) {
    for (Layout l : all_layouts)
        if (name == to_string(l)) return l;
    fail(ErrorKind::lookup, "unknown layout '" + std::string(name) + "'");
}

enum class Family { direct, im2, kn2, wino3, wino5, conv1x1, mec };

inline constexpr std::array<Family, 7> all_families {Family::direct,
        Family::im2, Family::kn2, Family::wino3, Family::wino5,
        Family::conv1x1, Family::mec};

inline const char *to_string(Family f) {
    switch (f) {
        case Family::direct: return "direct";
        case Family::im2: return "im2";
        case Family::kn2: return "kn2";
        case Family::wino3: return "wino3";
        case Family::wino5: return "wino5";
        case Family::conv1x1: return "conv-1x1";
        case Family::mec: return "mec";
    }
    return "?";
}

inline Family parse_family(std::string_view name) {
    for (Family f : all_families)
        if (name == to_string(f)) return f;
    fail(ErrorKind::lookup, "unknown family '" + std::string(name) + "'");
}

enum class PrimitiveId {
    direct_sum2d,
    im2col_copy,
    im2row_copy,
    kn2row,
    kn2col,
    winograd_3x3,
    winograd_5x5,
    conv_1x1_gemm,
    mec_col,
};

struct PrimitiveSpec {
    PrimitiveId id;
    std::string_view name;
    Family family;
    Layout input_layout;
    Layout output_layout;
};

inline constexpr std::array<PrimitiveSpec, 9> primitive_registry {{
        {PrimitiveId::direct_sum2d, "direct-sum2d", Family::direct,
                Layout::chw, Layout::chw},
        {PrimitiveId::im2col_copy, "im2col-copy", Family::im2, Layout::chw,
                Layout::chw},
        {PrimitiveId::im2row_copy, "im2row-copy", Family::im2, Layout::hwc,
                Layout::hwc},
        {PrimitiveId::kn2row, "kn2row", Family::kn2, Layout::chw,
                Layout::chw},
        {PrimitiveId::kn2col, "kn2col", Family::kn2, Layout::hwc,
                Layout::hwc},
        {PrimitiveId::winograd_3x3, "winograd-2x2-3x3", Family::wino3,
                Layout::chw, Layout::chw},
        {PrimitiveId::winograd_5x5, "winograd-2x2-5x5", Family::wino5,
                Layout::chw, Layout::chw},
        {PrimitiveId::conv_1x1_gemm, "conv-1x1-gemm", Family::conv1x1,
                Layout::hwc, Layout::hwc},
        {PrimitiveId::mec_col, "mec-col", Family::mec, Layout::hcw,
                Layout::hwc},
}};

inline constexpr std::size_t index_of(PrimitiveId p) {
    return static_cast<std::size_t>(p);
}

inline const PrimitiveSpec &spec_of(PrimitiveId p) {
    return primitive_registry.at(index_of(p));
}

inline std::string to_string(PrimitiveId p) {
    return std::string(spec_of(p).name);
}

inline std::optional<PrimitiveId> find_primitive(std::string_view name) {
    for (const auto &spec : primitive_registry)
        if (spec.name == name) return spec.id;
    return std::nullopt;
}

inline PrimitiveId parse_primitive(std::string_view name) {
    if (auto p = find_primitive(name)) return *p;
    fail(ErrorKind::lookup, "unknown primitive '" + std::string(name) + "'");
}

inline std::vector<std::string> primitive_names() {
    std::vector<std::string> names;
    for (const auto &spec : primitive_registry)
        names.emplace_back(spec.name);
    return names;
}

inline bool applicable(PrimitiveId p, const LayerConfig &cfg) {
    if (!cfg.is_valid()) return false;
    switch (spec_of(p).family) {
        case Family::direct:
        case Family::im2:
        case Family::mec: return true;
        case Family::kn2: return cfg.s == 1;
        case Family::wino3: return cfg.f == 3 && cfg.s == 1;
        case Family::wino5: return cfg.f == 5 && cfg.s == 1;
        case Family::conv1x1: return cfg.f == 1;
    }
    return false;
}

inline bool applicable(std::string_view primitive, const LayerConfig &cfg) {
    return applicable(parse_primitive(primitive), cfg);
}

inline std::vector<PrimitiveId> applicable_primitives(const LayerConfig &cfg) {
    std::vector<PrimitiveId> out;
    for (const auto &spec : primitive_registry)
        if (applicable(spec.id, cfg)) out.push_back(spec.id);
    return out;
}

// ---------------------------------------------------------------------------
// Network description

struct Layer {
    int id = 0;
    LayerConfig config;
};

class NetworkGraph {
public:
    NetworkGraph() = default;

    // Throws shape / invalid-config errors when the graph is malformed.
    NetworkGraph(std::vector<Layer> layers,
            std::vector<std::pair<int, int>> edges)
        : layers_(std::move(layers)), edges_(std::move(edges)) {
        check();
    }

    static NetworkGraph chain(const std::vector<LayerConfig> &configs) {
        std::vector<Layer> layers;
        std::vector<std::pair<int, int>> edges;
        for (std::size_t i = 0; i < configs.size(); ++i) {
            layers.push_back({static_cast<int>(i), configs[i]});
            if (i > 0)
                edges.emplace_back(static_cast<int>(i - 1),
                        static_cast<int>(i));
        }
        return NetworkGraph(std::move(layers), std::move(edges));
    }

    const std::vector<Layer> &layers() const { return layers_; }
    const std::vector<std::pair<int, int>> &edges() const { return edges_; }

    std::size_t index_of_id(int id) const {
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (layers_[i].id == id) return i;
        fail(ErrorKind::lookup, "no layer with id " + std::to_string(id));
    }

    const Layer &layer(int id) const { return layers_[index_of_id(id)]; }

private:
    void check() const {
        std::set<int> ids;
        for (const auto &l : layers_) {
            validate(l.config);
            if (!ids.insert(l.id).second)
                fail(ErrorKind::shape,
                        "duplicate layer id " + std::to_string(l.id));
        }
        std::map<int, std::vector<int>> producers;
        for (auto [u, v] : edges_) {
            if (!ids.count(u) || !ids.count(v))
                fail(ErrorKind::shape,
                        "edge references unknown layer ("
                                + std::to_string(u) + ", " + std::to_string(v)
                                + ")");
            if (u == v)
                fail(ErrorKind::shape, "self loop on " + std::to_string(u));
            producers[v].push_back(u);
        }
        // Inputs either match every producer (element-wise merge) or the sum
        // of producer channels (concatenation).
        for (const auto &[consumer, prods] : producers) {
            const LayerConfig &cc = layer(consumer).config;
            int channel_sum = 0;
            bool all_match = true;
            for (int p : prods) {
                const LayerConfig &pc = layer(p).config;
                if (output_dims(pc) != cc.im)
                    fail(ErrorKind::shape,
                            "layer " + std::to_string(consumer)
                                    + " input size " + std::to_string(cc.im)
                                    + " does not match producer "
                                    + std::to_string(p) + " output "
                                    + std::to_string(output_dims(pc)));
                channel_sum += pc.k;
                all_match = all_match && pc.k == cc.c;
            }
            if (!all_match && channel_sum != cc.c)
                fail(ErrorKind::shape,
                        "layer " + std::to_string(consumer)
                                + " channel count inconsistent with "
                                  "producers");
        }
        if (!is_acyclic()) fail(ErrorKind::shape, "network graph has a cycle");
    }

    bool is_acyclic() const {
        std::map<int, int> indeg;
        std::map<int, std::vector<int>> out;
        for (const auto &l : layers_) indeg[l.id] = 0;
        for (auto [u, v] : edges_) {
            ++indeg[v];
            out[u].push_back(v);
        }
        std::vector<int> ready;
        for (auto [id, d] : indeg)
            if (d == 0) ready.push_back(id);
        std::size_t seen = 0;
        while (!ready.empty()) {
            int id = ready.back();
            ready.pop_back();
            ++seen;
            for (int v : out[id])
                if (--indeg[v] == 0) ready.push_back(v);
        }
        return seen == layers_.size();
    }

    std::vector<Layer> layers_;
    std::vector<std::pair<int, int>> edges_;
};

// ---------------------------------------------------------------------------
// Cost graph and assignments

struct CostNode {
    int id = 0;
    std::vector<PrimitiveId> choices;
    std::vector<double> costs; // seconds, aligned with choices
};

// Row-major rows x cols matrix: rows index the producer's choices, columns
// the consumer's.
struct CostMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    CostMatrix() = default;
    CostMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double &operator()(std::size_t i, std::size_t j) {
        return data[i * cols + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        return data[i * cols + j];
    }
};

struct CostEdge {
    std::size_t from = 0; // node index
    std::size_t to = 0;
    CostMatrix costs;
};

struct CostGraph {
    std::vector<CostNode> nodes;
    std::vector<CostEdge> edges;

    std::size_t node_index(int id) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].id == id) return i;
        fail(ErrorKind::lookup, "no node with id " + std::to_string(id));
    }

    // Throws on malformed vectors/matrices or negative costs.
    void check() const {
        for (const auto &n : nodes) {
            if (n.choices.size() != n.costs.size() || n.choices.empty())
                fail(ErrorKind::shape,
                        "node " + std::to_string(n.id)
                                + " has an empty or ragged cost vector");
            for (double c : n.costs)
                if (!(c >= 0.0))
                    fail(ErrorKind::domain,
                            "negative node cost at " + std::to_string(n.id));
        }
        for (const auto &e : edges) {
            if (e.from >= nodes.size() || e.to >= nodes.size())
                fail(ErrorKind::shape, "edge references a missing node");
            if (e.costs.rows != nodes[e.from].choices.size()
                    || e.costs.cols != nodes[e.to].choices.size()
                    || e.costs.data.size() != e.costs.rows * e.costs.cols)
                fail(ErrorKind::shape, "edge matrix size mismatch");
            for (double c : e.costs.data)
                if (!(c >= 0.0))
                    fail(ErrorKind::domain, "negative edge cost");
        }
    }
};

struct Assignment {
    std::map<int, PrimitiveId> choice; // node id -> primitive
    double total_cost = 0.0;
};

namespace detail {
inline std::size_t choice_index(const CostNode &node, const Assignment &a) {
    auto it = a.choice.find(node.id);
    if (it == a.choice.end())
        fail(ErrorKind::invalid_assignment,
                "node " + std::to_string(node.id) + " is unassigned");
    auto pos = std::find(node.choices.begin(), node.choices.end(), it->second);
    if (pos == node.choices.end())
        fail(ErrorKind::invalid_assignment,
                to_string(it->second) + " is not applicable at node "
                        + std::to_string(node.id));
    return static_cast<std::size_t>(pos - node.choices.begin());
}
} // namespace detail

// Sum of node costs followed by edge costs, in graph order. Solvers report
// exactly this value so re-evaluation is bit-identical.
inline double total_cost(const CostGraph &graph, const Assignment &a) {
    if (a.choice.size() != graph.nodes.size())
        fail(ErrorKind::invalid_assignment,
                "assignment covers " + std::to_string(a.choice.size())
                        + " nodes, graph has "
                        + std::to_string(graph.nodes.size()));
    std::vector<std::size_t> idx(graph.nodes.size());
    double total = 0.0;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        idx[i] = detail::choice_index(graph.nodes[i], a);
        total += graph.nodes[i].costs[idx[i]];
    }
    for (const auto &e : graph.edges)
        total += e.costs(idx[e.from], idx[e.to]);
    return total;
}

// Index-based variant used by the solvers' inner loops.
inline double total_cost(
        const CostGraph &graph, std::span<const std::size_t> idx) {
    double total = 0.0;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i)
        total += graph.nodes[i].costs[idx[i]];
    for (const auto &e : graph.edges)
        total += e.costs(idx[e.from], idx[e.to]);
    return total;
}

inline Assignment make_assignment(
        const CostGraph &graph, std::span<const std::size_t> idx) {
    Assignment a;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i)
        a.choice[graph.nodes[i].id] = graph.nodes[i].choices.at(idx[i]);
    a.total_cost = total_cost(graph, a);
    return a;
}

inline std::uint64_t mix_seed(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace convsel

#endif // CONVSEL_CORE_HPP
