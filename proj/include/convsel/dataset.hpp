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

#ifndef CONVSEL_DATASET_HPP
#define CONVSEL_DATASET_HPP

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "convsel/core.hpp"

namespace convsel {

// ---------------------------------------------------------------------------
// Primitive timing dataset: config -> seconds per primitive column.

struct ProfileRecord {
    LayerConfig config;
    std::vector<std::optional<double>> times; // aligned with columns
};

struct ProfileDataset {
    std::vector<std::string> columns; // primitive ids
    std::vector<ProfileRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        return std::nullopt;
    }

    const ProfileRecord *find(const LayerConfig &cfg) const {
        for (const auto &r : records)
            if (r.config == cfg) return &r;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Data-layout transformation dataset: (c, im) -> 3x3 seconds.

using DltMatrix = std::array<std::array<double, 3>, 3>;

struct DltRecord {
    int c = 0;
    int im = 0;
    DltMatrix seconds {}; // [from][to]; diagonal is exactly zero
};

struct DltDataset {
    std::vector<DltRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    const DltRecord *find(int c, int im) const {
        for (const auto &r : records)
            if (r.c == c && r.im == im) return &r;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Generic modelling table: positive raw inputs -> optional positive targets.

struct TableRow {
    std::vector<double> inputs;
    std::vector<std::optional<double>> targets;
};

struct Table {
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::vector<TableRow> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

inline std::vector<std::string> config_feature_names() {
    return {"k", "c", "im", "f", "s"};
}

inline std::vector<double> config_features(const LayerConfig &cfg) {
    return {double(cfg.k), double(cfg.c), double(cfg.im), double(cfg.f),
            double(cfg.s)};
}

inline std::vector<std::string> dlt_output_names() {
    std::vector<std::string> out;
    for (Layout from : all_layouts)
        for (Layout to : all_layouts)
            out.push_back(std::string(to_string(from)) + ">" + to_string(to));
    return out;
}

inline Table to_table(const ProfileDataset &ds) {
    Table t;
    t.input_names = config_feature_names();
    t.output_names = ds.columns;
    for (const auto &r : ds.records)
        t.records.push_back({config_features(r.config), r.times});
    return t;
}

// Diagonal (identity) transforms are left undefined so they never enter a
// loss.
inline Table to_table(const DltDataset &ds) {
    Table t;
    t.input_names = {"c", "im"};
    t.output_names = dlt_output_names();
    for (const auto &r : ds.records) {
        TableRow row;
        row.inputs = {double(r.c), double(r.im)};
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                row.targets.push_back(i == j ? std::nullopt
                                             : std::optional(r.seconds[i][j]));
        t.records.push_back(std::move(row));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Subsets, splits and samples (any dataset type with a `records` vector).

template <class Dataset>
Dataset subset(const Dataset &ds, const std::vector<std::size_t> &indices) {
    Dataset out = ds;
    out.records.clear();
    out.records.reserve(indices.size());
    for (std::size_t i : indices) out.records.push_back(ds.records.at(i));
    return out;
}

template <class Dataset>
struct Split {
    Dataset train;
    Dataset validation;
    Dataset test;
};

inline std::vector<std::size_t> shuffled_indices(
        std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t {0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

// Seeded shuffle, then floor(0.8n) / floor(0.1n) / remainder.
template <class Dataset>
Split<Dataset> split_dataset(const Dataset &ds, std::uint64_t seed) {
    const std::size_t n = ds.records.size();
    if (n < 10)
        fail(ErrorKind::size,
                "need at least 10 records to split, have " + std::to_string(n));
    auto idx = shuffled_indices(n, seed);
    const std::size_t n_train = n * 8 / 10;
    const std::size_t n_val = n / 10;
    std::vector<std::size_t> a(idx.begin(), idx.begin() + n_train);
    std::vector<std::size_t> b(
            idx.begin() + n_train, idx.begin() + n_train + n_val);
    std::vector<std::size_t> c(idx.begin() + n_train + n_val, idx.end());
    return {subset(ds, a), subset(ds, b), subset(ds, c)};
}

// Uniform sample without replacement of max(1, round(frac * n)) records,
// kept in original order.
template <class Dataset>
Dataset sample_fraction(const Dataset &ds, double frac, std::uint64_t seed) {
    if (ds.records.empty()) fail(ErrorKind::size, "sampling an empty dataset");
    if (!(frac > 0.0 && frac <= 1.0))
        fail(ErrorKind::domain, "fraction must lie in (0, 1]");
    const std::size_t n = ds.records.size();
    std::size_t count = static_cast<std::size_t>(std::llround(frac * double(n)));
    count = std::clamp<std::size_t>(count, 1, n);
    auto idx = shuffled_indices(n, seed);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return subset(ds, idx);
}

// ---------------------------------------------------------------------------
// CSV encoding

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
            cell.pop_back();
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string &s, const std::string &where) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorKind::io, "bad number '" + s + "' in " + where);
    return v;
}

inline int parse_int(const std::string &s, const std::string &where) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorKind::io, "bad integer '" + s + "' in " + where);
    return v;
}

} // namespace detail

inline std::string profile_csv_header(const std::vector<std::string> &columns) {
    std::string h = "k,c,im,f,s";
    for (const auto &c : columns) h += "," + c;
    return h;
}

inline std::string profile_csv_row(const ProfileRecord &r) {
    const auto &c = r.config;
    std::string line = std::to_string(c.k) + "," + std::to_string(c.c) + ","
            + std::to_string(c.im) + "," + std::to_string(c.f) + ","
            + std::to_string(c.s);
    for (const auto &t : r.times) line += "," + (t ? format_double(*t) : "NA");
    return line;
}

inline void write_profile_csv(std::ostream &os, const ProfileDataset &ds) {
    os << profile_csv_header(ds.columns) << '\n';
    for (const auto &r : ds.records) os << profile_csv_row(r) << '\n';
}

inline ProfileDataset read_profile_csv(std::istream &is, const std::string &name) {
    std::string line;
    if (!std::getline(is, line)) fail(ErrorKind::io, name + ": empty file");
    auto header = detail::split_csv_line(line);
    const std::vector<std::string> fixed {"k", "c", "im", "f", "s"};
    if (header.size() < 5 || !std::equal(fixed.begin(), fixed.end(), header.begin()))
        fail(ErrorKind::io, name + ": header must start with k,c,im,f,s");
    ProfileDataset ds;
    ds.columns.assign(header.begin() + 5, header.end());
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        const std::string where = name + ":" + std::to_string(lineno);
        if (cells.size() != header.size())
            fail(ErrorKind::io, where + ": expected "
                            + std::to_string(header.size()) + " cells");
        ProfileRecord r;
        r.config = {detail::parse_int(cells[0], where),
                detail::parse_int(cells[1], where),
                detail::parse_int(cells[2], where),
                detail::parse_int(cells[3], where),
                detail::parse_int(cells[4], where)};
        for (std::size_t i = 5; i < cells.size(); ++i)
            r.times.push_back(cells[i] == "NA"
                            ? std::nullopt
                            : std::optional(detail::parse_double(cells[i], where)));
        ds.records.push_back(std::move(r));
    }
    return ds;
}

inline void save_profile_csv(
        const std::filesystem::path &path, const ProfileDataset &ds) {
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    write_profile_csv(os, ds);
    if (!os) fail(ErrorKind::io, "write failed for " + path.string());
}

inline ProfileDataset load_profile_csv(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::io, "cannot read " + path.string());
    return read_profile_csv(is, path.string());
}

inline void write_dlt_csv(std::ostream &os, const DltDataset &ds) {
    os << "c,im,from,to,seconds\n";
    for (const auto &r : ds.records)
        for (Layout from : all_layouts)
            for (Layout to : all_layouts)
                os << r.c << ',' << r.im << ',' << to_string(from) << ','
                   << to_string(to) << ','
                   << format_double(r.seconds[index_of(from)][index_of(to)])
                   << '\n';
}

inline DltDataset read_dlt_csv(std::istream &is, const std::string &name) {
    std::string line;
    if (!std::getline(is, line) || detail::split_csv_line(line)
                    != std::vector<std::string> {"c", "im", "from", "to", "seconds"})
        fail(ErrorKind::io, name + ": header must be c,im,from,to,seconds");
    DltDataset ds;
    std::map<std::pair<int, int>, std::size_t> pos;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const std::string where = name + ":" + std::to_string(lineno);
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 5) fail(ErrorKind::io, where + ": expected 5 cells");
        int c = detail::parse_int(cells[0], where);
        int im = detail::parse_int(cells[1], where);
        auto key = std::make_pair(c, im);
        if (!pos.count(key)) {
            pos[key] = ds.records.size();
            ds.records.push_back({c, im, {}});
        }
        auto &rec = ds.records[pos[key]];
        Layout from = parse_layout(cells[2]);
        Layout to = parse_layout(cells[3]);
        double v = detail::parse_double(cells[4], where);
        if (from == to && v != 0.0)
            fail(ErrorKind::io, where + ": identity transform must cost 0");
        rec.seconds[index_of(from)][index_of(to)] = v;
    }
    return ds;
}

inline void save_dlt_csv(const std::filesystem::path &path, const DltDataset &ds) {
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    write_dlt_csv(os, ds);
    if (!os) fail(ErrorKind::io, "write failed for " + path.string());
}

inline DltDataset load_dlt_csv(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::io, "cannot read " + path.string());
    return read_dlt_csv(is, path.string());
}

} // namespace convsel

#endif // CONVSEL_DATASET_HPP
