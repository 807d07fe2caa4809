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

#ifndef CONVSEL_PROFILER_HPP
#define CONVSEL_PROFILER_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <new>
#include <set>
#include <tuple>
#include <vector>

#if defined(__linux__)
#include <sched.h>
#endif

#include "convsel/core.hpp"
#include "convsel/dataset.hpp"
#include "convsel/primitives.hpp"
#include "convsel/stats.hpp"
#include "convsel/tensor.hpp"

namespace convsel {

// Monotonic time source in seconds.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;
};

class SteadyClock final : public Clock {
public:
    double now() override {
        using namespace std::chrono;
        return duration<double>(steady_clock::now().time_since_epoch()).count();
    }
};

// Deterministic clock for tests: consecutive start/stop reads are separated
// by the next scripted duration (cycling), so every timed region measures
// exactly one script entry.
class ScriptedClock final : public Clock {
public:
    explicit ScriptedClock(std::vector<double> durations)
        : durations_(std::move(durations)) {
        if (durations_.empty())
            fail(ErrorKind::size, "scripted clock needs durations");
    }

    double now() override {
        if (reads_++ % 2 == 1) {
            t_ += durations_[next_];
            next_ = (next_ + 1) % durations_.size();
        }
        return t_;
    }

private:
    std::vector<double> durations_;
    std::size_t next_ = 0;
    std::uint64_t reads_ = 0;
    double t_ = 0.0;
};

inline std::uint64_t config_seed(std::uint64_t seed, const LayerConfig &cfg) {
    std::uint64_t h = mix_seed(seed);
    for (int v : {cfg.k, cfg.c, cfg.im, cfg.f, cfg.s})
        h = mix_seed(h ^ static_cast<std::uint64_t>(v));
    return h;
}

// Best effort; profiling continues unpinned when the OS refuses.
inline bool pin_to_single_core() {
#if defined(__linux__)
    cpu_set_t current;
    CPU_ZERO(&current);
    if (sched_getaffinity(0, sizeof(current), &current) == 0) {
        for (int cpu = 0; cpu < CPU_SETSIZE; ++cpu)
            if (CPU_ISSET(cpu, &current)) {
                cpu_set_t one;
                CPU_ZERO(&one);
                CPU_SET(cpu, &one);
                if (sched_setaffinity(0, sizeof(one), &one) == 0) return true;
                break;
            }
    }
#endif
    warn("could not pin the profiling thread to one core");
    return false;
}

namespace detail {
inline volatile float timing_sink = 0.f;

template <class Fn>
double median_timing(int reps, int warmups, Clock &clock, Fn &&fn) {
    if (reps < 1) fail(ErrorKind::size, "reps must be at least 1");
    if (warmups < 0) fail(ErrorKind::size, "warmups must be non-negative");
    try {
        for (int i = 0; i < warmups; ++i) timing_sink = fn();
        std::vector<double> samples;
        samples.reserve(static_cast<std::size_t>(reps));
        for (int i = 0; i < reps; ++i) {
            const double t0 = clock.now();
            const float r = fn();
            const double t1 = clock.now();
            timing_sink = r;
            samples.push_back(t1 - t0);
        }
        return lower_median(std::move(samples));
    } catch (const std::bad_alloc &) {
        fail(ErrorKind::resource, "out of memory while profiling");
    }
}
} // namespace detail

// Median wall time of `reps` runs of primitive p, after `warmups` untimed
// runs. Input and kernels are drawn from N(0, 1) once and reused.
inline double time_primitive(PrimitiveId p, const LayerConfig &cfg, int reps,
        int warmups, std::uint64_t seed, Clock &clock) {
    validate(cfg);
    if (!applicable(p, cfg))
        fail(ErrorKind::applicability,
                to_string(p) + " cannot run " + cfg.str());
    Tensor3 input;
    KernelSet kernels;
    try {
        input = transform_layout(random_tensor(Layout::chw, cfg.c, cfg.im, seed),
                spec_of(p).input_layout);
        kernels = random_kernels(cfg.k, cfg.c, cfg.f, mix_seed(seed));
    } catch (const std::bad_alloc &) {
        fail(ErrorKind::resource, "cannot allocate buffers for " + cfg.str());
    }
    return detail::median_timing(reps, warmups, clock, [&] {
        Tensor3 out = run_primitive(p, input, kernels, cfg);
        return out.data().front();
    });
}

// 3x3 transform costs for a c x im x im tensor. The diagonal is zero and
// never executed.
inline DltRecord profile_layout_transforms(int c, int im, int reps,
        Clock &clock, int warmups = 3, std::uint64_t seed = 0) {
    if (c < 1 || im < 1)
        fail(ErrorKind::invalid_config, "layout transform needs c, im >= 1");
    DltRecord rec {c, im, {}};
    for (Layout from : all_layouts) {
        Tensor3 t;
        try {
            t = random_tensor(from, c, im, mix_seed(seed ^ index_of(from)));
        } catch (const std::bad_alloc &) {
            fail(ErrorKind::resource, "cannot allocate layout tensor");
        }
        for (Layout to : all_layouts) {
            if (from == to) continue;
            rec.seconds[index_of(from)][index_of(to)]
                    = detail::median_timing(reps, warmups, clock, [&] {
                          Tensor3 u = transform_layout(t, to);
                          return u.data().back();
                      });
        }
    }
    return rec;
}

struct ShapeTriplet {
    int c = 1;
    int k = 1;
    int im = 1;
};

// Cartesian product of triplets x f_set x s_set, triplet-major, dropping
// impossible combinations such as f > im.
inline std::vector<LayerConfig> generate_grid(
        const std::vector<ShapeTriplet> &triplets, const std::vector<int> &f_set,
        const std::vector<int> &s_set) {
    std::vector<LayerConfig> grid;
    for (const auto &t : triplets)
        for (int f : f_set)
            for (int s : s_set) {
                LayerConfig cfg {t.k, t.c, t.im, f, s};
                if (cfg.is_valid()) grid.push_back(cfg);
            }
    return grid;
}

// Channel/size triplets typical of small and mid-size image networks,
// scaled so one full profiling pass stays in the tens of minutes on a
// single core.
inline std::vector<ShapeTriplet> desk_triplets() {
    return {
            {3, 32, 56}, {3, 64, 48}, {3, 16, 40}, {16, 32, 40},
            {32, 32, 48}, {32, 64, 28}, {32, 16, 32}, {48, 48, 24},
            {64, 64, 24}, {64, 32, 20}, {64, 128, 14}, {96, 96, 14},
            {128, 64, 14}, {128, 128, 12}, {24, 48, 30}, {16, 16, 56},
            {48, 96, 18}, {96, 48, 20}, {32, 128, 16}, {128, 32, 16},
            {8, 24, 52}, {24, 8, 44}, {40, 40, 28}, {80, 80, 16},
            {16, 64, 34}, {64, 16, 30}, {12, 12, 48}, {56, 112, 12},
            {112, 56, 13}, {20, 40, 38}, {40, 20, 24}, {72, 36, 19},
            {36, 72, 21}, {88, 88, 11},
    };
}

inline std::vector<LayerConfig> desk_grid() {
    return generate_grid(desk_triplets(), {1, 3, 5}, {1, 2});
}

struct ProfileOptions {
    int reps = 25;
    int warmups = 3;
    std::uint64_t seed = 0;
};

struct ProfileResult {
    ProfileDataset primitives;
    DltDataset transforms;
};

inline ProfileRecord profile_config(const LayerConfig &cfg,
        const ProfileOptions &opt, Clock &clock) {
    ProfileRecord rec {cfg, {}};
    const std::uint64_t seed = config_seed(opt.seed, cfg);
    for (const auto &spec : primitive_registry) {
        if (applicable(spec.id, cfg))
            rec.times.emplace_back(time_primitive(
                    spec.id, cfg, opt.reps, opt.warmups, seed, clock));
        else
            rec.times.emplace_back(std::nullopt);
    }
    return rec;
}

struct ProfileSinks {
    std::filesystem::path primitives_csv; // empty: keep in memory only
    std::filesystem::path transforms_csv;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

// Profiles every grid config plus one layout-transform record per distinct
// (c, im). With sink paths set, rows already present in those files are
// reused and new rows are appended and flushed one by one, so an
// interrupted run can be resumed.
inline ProfileResult build_dataset(const std::vector<LayerConfig> &grid,
        const ProfileOptions &opt, Clock &clock, const ProfileSinks &sinks = {}) {
    if (grid.empty()) fail(ErrorKind::size, "empty profiling grid");
    ProfileResult res;
    res.primitives.columns = primitive_names();

    ProfileDataset existing;
    if (!sinks.primitives_csv.empty() && std::filesystem::exists(sinks.primitives_csv)) {
        existing = load_profile_csv(sinks.primitives_csv);
        if (existing.columns != res.primitives.columns)
            fail(ErrorKind::io, sinks.primitives_csv.string()
                            + ": columns differ from the primitive registry");
    }
    DltDataset existing_dlt;
    if (!sinks.transforms_csv.empty() && std::filesystem::exists(sinks.transforms_csv))
        existing_dlt = load_dlt_csv(sinks.transforms_csv);

    std::ofstream prim_out;
    if (!sinks.primitives_csv.empty()) {
        const bool fresh = existing.records.empty();
        prim_out.open(sinks.primitives_csv, fresh ? std::ios::trunc : std::ios::app);
        if (!prim_out) fail(ErrorKind::io, "cannot write " + sinks.primitives_csv.string());
        if (fresh) prim_out << profile_csv_header(res.primitives.columns) << '\n' << std::flush;
    }
    std::ofstream dlt_out;
    if (!sinks.transforms_csv.empty()) {
        const bool fresh = existing_dlt.records.empty();
        dlt_out.open(sinks.transforms_csv, fresh ? std::ios::trunc : std::ios::app);
        if (!dlt_out) fail(ErrorKind::io, "cannot write " + sinks.transforms_csv.string());
        if (fresh) dlt_out << "c,im,from,to,seconds\n" << std::flush;
    }

    std::vector<std::pair<int, int>> pairs;
    std::set<std::pair<int, int>> seen_pairs;
    for (const auto &cfg : grid)
        if (seen_pairs.insert({cfg.c, cfg.im}).second) pairs.emplace_back(cfg.c, cfg.im);

    const std::size_t total = grid.size() + pairs.size();
    std::size_t done = 0;
    for (const auto &cfg : grid) {
        validate(cfg);
        if (const ProfileRecord *r = existing.find(cfg)) {
            res.primitives.records.push_back(*r);
        } else {
            res.primitives.records.push_back(profile_config(cfg, opt, clock));
            if (prim_out.is_open()) {
                prim_out << profile_csv_row(res.primitives.records.back()) << '\n' << std::flush;
                if (!prim_out) fail(ErrorKind::io, "write failed for " + sinks.primitives_csv.string());
            }
        }
        if (sinks.progress) sinks.progress(++done, total);
    }
    for (auto [c, im] : pairs) {
        if (const DltRecord *r = existing_dlt.find(c, im)) {
            res.transforms.records.push_back(*r);
        } else {
            res.transforms.records.push_back(profile_layout_transforms(c, im,
                    opt.reps, clock, opt.warmups,
                    config_seed(opt.seed, {1, c, im, 1, 1})));
            if (dlt_out.is_open()) {
                DltDataset one;
                one.records.push_back(res.transforms.records.back());
                std::ostringstream row;
                write_dlt_csv(row, one);
                const std::string text = row.str();
                dlt_out << text.substr(text.find('\n') + 1) << std::flush;
                if (!dlt_out) fail(ErrorKind::io, "write failed for " + sinks.transforms_csv.string());
            }
        }
        if (sinks.progress) sinks.progress(++done, total);
    }
    return res;
}

} // namespace convsel

#endif // CONVSEL_PROFILER_HPP
