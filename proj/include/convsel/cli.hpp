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

#ifndef CONVSEL_CLI_HPP
#define CONVSEL_CLI_HPP

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "convsel/dataset.hpp"
#include "convsel/perfmodel.hpp"
#include "convsel/profiler.hpp"
#include "convsel/selector.hpp"
#include "convsel/transfer.hpp"

namespace convsel::cli {

inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::io:
        case ErrorKind::resource: return 2;
        case ErrorKind::training: return 4;
        default: return 3;
    }
}

// One per run. Everything except `durations` is a pure function of the
// command line and the input files.
struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json paths = nlohmann::json::object();
    nlohmann::json durations = nlohmann::json::object();
    nlohmann::json results = nlohmann::json::object();
    int exit_code = 0;

    nlohmann::json to_json() const {
        return {{"format", "convsel-manifest/1"}, {"command", command}, {"argv", argv},
                {"seed", seed}, {"config", config}, {"paths", paths},
                {"results", results}, {"durations", durations},
                {"exit_code", exit_code}};
    }
};

struct Context {
    std::filesystem::path data_dir;
    std::ostream &out;
    std::ostream &err;
    Manifest manifest;

    // Relative paths are taken from the data directory.
    std::filesystem::path resolve(const std::string &p) const {
        if (p.empty()) return {};
        std::filesystem::path path(p);
        return path.is_absolute() ? path : data_dir / path;
    }

    std::filesystem::path input(const std::string &key, const std::string &p) {
        auto path = resolve(p);
        manifest.paths[key] = path.string();
        return path;
    }

    template <class Fn>
    auto timed(const std::string &stage, Fn &&fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto stop = [&] {
            const double s = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0).count();
            manifest.durations[stage] = manifest.durations.value(stage, 0.0) + s;
        };
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            stop();
        } else {
            auto r = fn();
            stop();
            return r;
        }
    }
};

// ---------------------------------------------------------------------------
// Flags shared by several subcommands

struct TrainFlags {
    CLI::Option *lr = nullptr, *wd = nullptr, *batch = nullptr, *patience = nullptr,
                *max_updates = nullptr, *hidden = nullptr;
    double lr_v = 0, wd_v = 0;
    std::size_t batch_v = 0;
    int patience_v = 0, max_updates_v = 0;
    std::vector<int> hidden_v;
    bool progress = false;

    void add(CLI::App *app) {
        lr = app->add_option("--learning-rate", lr_v, "Adam learning rate");
        wd = app->add_option("--weight-decay", wd_v, "L2 weight decay");
        batch = app->add_option("--batch-size", batch_v, "records per update");
        patience = app->add_option("--patience", patience_v,
                "updates without validation improvement before stopping");
        max_updates = app->add_option("--max-updates", max_updates_v, "hard cap on updates");
        hidden = app->add_option("--hidden", hidden_v, "hidden layer widths, e.g. 128,512,512,128")
                         ->delimiter(',');
        app->add_flag("--progress", progress, "print training progress to stderr");
    }

    TrainConfig config(ModelKind kind, std::uint64_t seed, std::ostream &err) const {
        TrainConfig c = TrainConfig::for_kind(kind);
        if (lr->count()) c.learning_rate = lr_v;
        if (wd->count()) c.weight_decay = wd_v;
        if (batch->count()) c.batch_size = batch_v;
        if (patience->count()) c.patience = patience_v;
        if (max_updates->count()) c.max_updates = max_updates_v;
        if (hidden->count()) c.hidden = hidden_v;
        for (int h : c.hidden)
            if (h < 1) fail(ErrorKind::usage, "hidden widths must be positive");
        c.seed = seed;
        c.check();
        if (progress)
            c.progress = [&err](int update, double loss, double score) {
                if (update % 100 == 0)
                    err << "update " << update << " loss " << loss << " val-mdrae "
                        << score << '\n';
            };
        return c;
    }
};

inline std::vector<LayerConfig> network_configs(const NetworkGraph &net) {
    std::vector<LayerConfig> out;
    for (const auto &l : net.layers()) out.push_back(l.config);
    return out;
}

inline std::vector<LayerConfig> distinct(const std::vector<LayerConfig> &cfgs) {
    std::vector<LayerConfig> out;
    for (const auto &c : cfgs)
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    return out;
}

inline std::vector<std::pair<int, int>> transform_pairs(const std::vector<LayerConfig> &cfgs) {
    std::vector<std::pair<int, int>> out;
    std::set<std::pair<int, int>> seen;
    for (const auto &c : cfgs)
        if (seen.insert({c.c, c.im}).second) out.emplace_back(c.c, c.im);
    return out;
}

inline std::vector<LayerConfig> smoke_grid() {
    return generate_grid({{3, 8, 12}, {8, 8, 10}}, {1, 3, 5}, {1, 2});
}

inline std::unique_ptr<Clock> make_clock(bool fake) {
    if (fake) return std::make_unique<ScriptedClock>(std::vector<double> {1e-3, 2e-3, 3e-3});
    return std::make_unique<SteadyClock>();
}

inline std::filesystem::path default_dlt_path(const std::filesystem::path &out) {
    auto p = out;
    p.replace_filename(out.stem().string() + "-dlt.csv");
    return p;
}

inline bool is_dlt_model(const PerfModel &m) {
    return m.input_names == std::vector<std::string> {"c", "im"};
}

// Seeded split of a profile or transform CSV, as used by `train`.
inline Split<Table> load_split(const std::filesystem::path &path, bool dlt, std::uint64_t seed) {
    if (dlt) {
        auto s = split_dataset(load_dlt_csv(path), seed);
        return {to_table(s.train), to_table(s.validation), to_table(s.test)};
    }
    auto s = split_dataset(load_profile_csv(path), seed);
    return {to_table(s.train), to_table(s.validation), to_table(s.test)};
}

inline void write_text(Context &ctx, const std::filesystem::path &path,
        const std::string &text) {
    if (path.empty()) {
        ctx.out << text;
        return;
    }
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    os << text;
    if (!os) fail(ErrorKind::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// profile

struct ProfileCmd {
    std::string grid = "desk";
    std::string network;
    std::string out;
    std::string dlt_out;
    int reps = 25;
    int warmups = 3;
    bool fake_clock = false;
    bool no_pin = false;
    bool progress = false;

    void add(CLI::App *app) {
        app->add_option("--grid", grid, "built-in grid: desk or smoke")
                ->check(CLI::IsMember({"desk", "smoke"}));
        app->add_option("--network", network, "profile the layers of this network instead");
        app->add_option("--out", out, "primitive timing CSV")->required();
        app->add_option("--dlt-out", dlt_out, "layout transform CSV (default: <out>-dlt.csv)");
        app->add_option("--reps", reps, "timed runs per measurement")->check(CLI::PositiveNumber);
        app->add_option("--warmups", warmups, "untimed runs before timing")
                ->check(CLI::NonNegativeNumber);
        app->add_flag("--fake-clock", fake_clock, "deterministic scripted clock");
        app->add_flag("--no-pin", no_pin, "do not pin to one core");
        app->add_flag("--progress", progress, "print progress to stderr");
    }

    void run(Context &ctx) const {
        std::vector<LayerConfig> cfgs;
        if (!network.empty())
            cfgs = distinct(network_configs(load_network(ctx.input("network", network))));
        else
            cfgs = grid == "smoke" ? smoke_grid() : desk_grid();
        const auto out_path = ctx.input("out", out);
        const auto dlt_path = dlt_out.empty() ? default_dlt_path(out_path) : ctx.resolve(dlt_out);
        ctx.manifest.paths["dlt_out"] = dlt_path.string();
        ctx.manifest.config = {{"grid", network.empty() ? grid : "network"},
                {"configs", cfgs.size()}, {"reps", reps}, {"warmups", warmups},
                {"fake_clock", fake_clock}};
        if (!fake_clock && !no_pin) pin_to_single_core();
        auto clock = make_clock(fake_clock);
        ProfileSinks sinks {out_path, dlt_path, {}};
        if (progress)
            sinks.progress = [&ctx](std::size_t done, std::size_t total) {
                ctx.err << "profiled " << done << '/' << total << '\n';
            };
        auto res = ctx.timed("profile", [&] {
            return build_dataset(cfgs, {reps, warmups, ctx.manifest.seed}, *clock, sinks);
        });
        ctx.manifest.results = {{"records", res.primitives.size()},
                {"transform_records", res.transforms.size()}};
        ctx.out << "profiled " << res.primitives.size() << " configs and "
                << res.transforms.size() << " layout pairs\n";
    }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
    std::string kind = "nn2";
    std::string data;
    std::string out;
    std::string metrics;
    TrainFlags flags;

    void add(CLI::App *app) {
        app->add_option("--kind", kind, "nn1, nn2, dlt or linear")
                ->check(CLI::IsMember({"nn1", "nn2", "dlt", "linear"}));
        app->add_option("--data", data,
                   "profile CSV, or layout transform CSV for --kind dlt")
                ->required();
        app->add_option("--out", out, "model JSON")->required();
        app->add_option("--metrics", metrics, "per-output test MdRAE CSV");
        flags.add(app);
    }

    void run(Context &ctx) const {
        const ModelKind k = parse_model_kind(kind);
        TrainConfig cfg = flags.config(k, ctx.manifest.seed, ctx.err);
        const auto split = ctx.timed("load", [&] {
            return load_split(ctx.input("data", data), k == ModelKind::dlt, ctx.manifest.seed);
        });
        if (k != ModelKind::dlt && split.train.input_names != config_feature_names())
            fail(ErrorKind::usage, "--kind " + kind + " needs a profile CSV");
        ctx.manifest.config = {{"kind", kind}, {"train", train_config_json(cfg)}};
        PerfModel model = ctx.timed("train", [&] { return train_model(k, split, cfg); });
        const auto out_path = ctx.input("out", out);
        save_model(out_path, model);
        Evaluation ev = evaluate(model, split.test);
        if (!metrics.empty()) {
            std::ostringstream os;
            write_metrics_csv(os, model, ev);
            write_text(ctx, ctx.input("metrics", metrics), os.str());
        }
        int updates = 0;
        for (const auto &t : model.training) updates += t.updates;
        nlohmann::json summary = {{"kind", kind},
                {"train_records", split.train.size()}, {"test_records", split.test.size()},
                {"test_mdrae", detail::nan_to_null(ev.pooled)}, {"updates", updates}};
        ctx.manifest.results = summary;
        ctx.out << summary.dump(2) << '\n';
    }
};

// ---------------------------------------------------------------------------
// predict

struct PredictCmd {
    std::string model;
    std::string network;
    std::string data;
    std::vector<std::string> configs;
    std::string out;

    void add(CLI::App *app) {
        app->add_option("--model", model, "model JSON")->required();
        app->add_option("--network", network, "predict for the layers of this network");
        app->add_option("--data", data, "predict for the configs of this profile CSV");
        app->add_option("--config", configs, "k,c,im,f,s (repeatable)");
        app->add_option("--out", out, "output CSV (default: stdout)");
    }

    static LayerConfig parse_config(const std::string &s) {
        auto parts = detail::split_csv_line(s);
        if (parts.size() != 5) fail(ErrorKind::usage, "--config needs k,c,im,f,s: " + s);
        LayerConfig c {detail::parse_int(parts[0], s), detail::parse_int(parts[1], s),
                detail::parse_int(parts[2], s), detail::parse_int(parts[3], s),
                detail::parse_int(parts[4], s)};
        validate(c);
        return c;
    }

    void run(Context &ctx) const {
        PerfModel m = load_model(ctx.input("model", model));
        std::vector<LayerConfig> cfgs;
        if (!network.empty())
            cfgs = distinct(network_configs(load_network(ctx.input("network", network))));
        if (!data.empty())
            for (const auto &r : load_profile_csv(ctx.input("data", data)).records)
                cfgs.push_back(r.config);
        for (const auto &s : configs) cfgs.push_back(parse_config(s));
        if (cfgs.empty()) fail(ErrorKind::usage, "give --network, --data or --config");
        ctx.manifest.config = {{"configs", cfgs.size()}, {"model_kind", to_string(m.kind)}};
        std::ostringstream os;
        ctx.timed("predict", [&] {
            if (is_dlt_model(m))
                write_dlt_csv(os, predict_dlt(m, transform_pairs(cfgs)));
            else
                write_profile_csv(os, predict_costs(m, cfgs));
        });
        if (!out.empty()) ctx.manifest.paths["out"] = ctx.resolve(out).string();
        write_text(ctx, ctx.resolve(out), os.str());
    }
};

// ---------------------------------------------------------------------------
// select

struct SelectCmd {
    std::string network;
    std::string costs = "model";
    std::string model;
    std::string dlt_model;
    std::string profile;
    std::string dlt;
    std::string solver = "auto";
    std::string out;
    bool measure = false;
    int reps = 25;
    int warmups = 3;
    bool fake_clock = false;
    bool no_pin = false;
    std::string measure_out;

    void add(CLI::App *app) {
        app->add_option("--network", network, "network JSON")->required();
        app->add_option("--costs", costs, "model or profile")
                ->check(CLI::IsMember({"model", "profile"}));
        app->add_option("--model", model, "primitive cost model JSON");
        app->add_option("--dlt-model", dlt_model, "layout transform model JSON");
        app->add_option("--profile", profile, "measured primitive CSV (--costs profile)");
        app->add_option("--dlt", dlt, "measured layout transform CSV");
        app->add_option("--solver", solver, "auto, chain, pbqp or brute")
                ->check(CLI::IsMember({"auto", "chain", "pbqp", "brute"}));
        app->add_option("--out", out, "also write the result JSON here");
        app->add_flag("--measure", measure,
                "profile the network on this host and price the assignment");
        app->add_option("--reps", reps, "timed runs for --measure")->check(CLI::PositiveNumber);
        app->add_option("--warmups", warmups, "untimed runs for --measure")
                ->check(CLI::NonNegativeNumber);
        app->add_flag("--fake-clock", fake_clock, "deterministic clock for --measure");
        app->add_flag("--no-pin", no_pin, "do not pin to one core");
        app->add_option("--measure-out", measure_out,
                "keep the --measure timings in this CSV (and <name>-dlt.csv)");
    }

    void run(Context &ctx) const {
        const NetworkGraph net = load_network(ctx.input("network", network));
        const auto cfgs = distinct(network_configs(net));
        ctx.manifest.config = {{"costs", costs}, {"solver", solver}, {"measure", measure},
                {"layers", net.layers().size()}};
        ProfileDataset prim;
        DltDataset transforms;
        if (costs == "model") {
            if (model.empty()) fail(ErrorKind::usage, "--costs model needs --model");
            PerfModel m = load_model(ctx.input("model", model));
            std::optional<PerfModel> dm;
            if (!dlt_model.empty()) dm = load_model(ctx.input("dlt_model", dlt_model));
            else if (dlt.empty()) fail(ErrorKind::usage, "give --dlt-model or --dlt");
            else transforms = load_dlt_csv(ctx.input("dlt", dlt));
            ctx.timed("predict", [&] {
                prim = predict_costs(m, cfgs);
                if (dm) transforms = predict_dlt(*dm, transform_pairs(cfgs));
            });
        } else {
            if (profile.empty() || dlt.empty())
                fail(ErrorKind::usage, "--costs profile needs --profile and --dlt");
            prim = load_profile_csv(ctx.input("profile", profile));
            transforms = load_dlt_csv(ctx.input("dlt", dlt));
        }
        const CostGraph g = build_cost_graph(net, prim, transforms);
        const SolverKind kind = solver == "auto" ? default_solver(g) : parse_solver(solver);
        SolveReport rep = ctx.timed("solve", [&] { return solve(g, kind); });

        nlohmann::json result = {{"assignment", report_to_json(g, rep)},
                {"predicted_total", rep.assignment.total_cost}};
        if (measure) {
            if (!fake_clock && !no_pin) pin_to_single_core();
            auto clock = make_clock(fake_clock);
            ProfileSinks sinks;
            if (!measure_out.empty()) {
                sinks.primitives_csv = ctx.input("measure_out", measure_out);
                sinks.transforms_csv = default_dlt_path(sinks.primitives_csv);
            }
            auto measured = ctx.timed("measure", [&] {
                return build_dataset(cfgs, {reps, warmups, ctx.manifest.seed}, *clock, sinks);
            });
            const CostGraph mg = build_cost_graph(net, measured.primitives, measured.transforms);
            const double chosen = total_cost(mg, rep.assignment);
            const SolveReport best = solve(mg, default_solver(mg));
            result["measured_total"] = chosen;
            result["measured_optimal_total"] = best.assignment.total_cost;
            result["overhead"] = chosen / best.assignment.total_cost - 1.0;
        }
        ctx.manifest.results = {{"predicted_total", result["predicted_total"]},
                {"method", rep.method}, {"optimal", rep.optimal}};
        if (measure) {
            ctx.manifest.results["measured_total"] = result["measured_total"];
            ctx.manifest.results["overhead"] = result["overhead"];
        }
        const std::string text = result.dump(2) + "\n";
        ctx.out << text;
        if (!out.empty()) write_text(ctx, ctx.input("out", out), text);
    }
};

// ---------------------------------------------------------------------------
// transfer

struct TransferCmd {
    std::string mode = "finetune";
    std::string model;
    std::string data;
    std::vector<double> fractions {0.01};
    int repeats = 10;
    std::string out;
    std::string network;
    std::string dlt;
    std::string factors_out;
    TrainFlags flags;

    void add(CLI::App *app) {
        app->add_option("--mode", mode, "factor or finetune")
                ->check(CLI::IsMember({"factor", "finetune"}));
        app->add_option("--model", model, "source model JSON")->required();
        app->add_option("--data", data, "target platform profile CSV")->required();
        app->add_option("--fraction", fractions, "fractions of the target training data")
                ->delimiter(',')
                ->check(CLI::Range(1e-9, 1.0));
        app->add_option("--repeats", repeats, "seeded repeats per fraction")
                ->check(CLI::PositiveNumber);
        app->add_option("--out", out, "results CSV (default: stdout)");
        app->add_option("--network", network,
                "network whose layers --data covers; enables the overhead column");
        app->add_option("--dlt", dlt, "layout transform CSV for --network");
        app->add_option("--factors-out", factors_out,
                "factor mode: factors fitted on the first fraction, repeat 0");
        flags.add(app);
    }

    void run(Context &ctx) const {
        PerfModel source = load_model(ctx.input("model", model));
        ProfileDataset target = load_profile_csv(ctx.input("data", data));
        TransferOptions opt;
        opt.mode = parse_transfer_mode(mode);
        opt.fractions = fractions;
        opt.repeats = repeats;
        opt.seed = ctx.manifest.seed;
        opt.train = flags.config(source.kind, ctx.manifest.seed, ctx.err);
        std::optional<OverheadProbe> probe;
        if (!network.empty()) {
            if (dlt.empty()) fail(ErrorKind::usage, "--network needs --dlt");
            probe = OverheadProbe {load_network(ctx.input("network", network)), target,
                    load_dlt_csv(ctx.input("dlt", dlt))};
        }
        ctx.manifest.config = {{"mode", mode}, {"fractions", fractions},
                {"repeats", repeats}, {"train", train_config_json(opt.train)}};
        auto rows = ctx.timed("transfer",
                [&] { return run_transfer_experiment(source, target, opt, probe); });
        std::ostringstream os;
        write_transfer_csv(os, rows);
        if (!out.empty()) ctx.manifest.paths["out"] = ctx.resolve(out).string();
        write_text(ctx, ctx.resolve(out), os.str());
        if (!factors_out.empty()) {
            if (opt.mode != TransferMode::factor)
                fail(ErrorKind::usage, "--factors-out needs --mode factor");
            auto parts = split_dataset(target, opt.seed);
            const std::uint64_t s = mix_seed(mix_seed(opt.seed ^ 1) ^ 0);
            FactorSet f = fit_factors(source, sample_fraction(parts.train, fractions[0], s));
            write_json_file(ctx.input("factors_out", factors_out), factors_to_json(f));
        }
    }
};

// ---------------------------------------------------------------------------
// report

struct ReportCmd {
    std::string what = "metrics";
    std::string model;
    std::string data;
    std::string split = "test";
    std::string out;
    TrainFlags flags;

    void add(CLI::App *app) {
        app->add_option("--what", what,
                   "metrics (per-output MdRAE), scatter (measured vs predicted) "
                   "or family (cross-family fine-tuning matrix)")
                ->check(CLI::IsMember({"metrics", "scatter", "family"}));
        app->add_option("--model", model, "model JSON")->required();
        app->add_option("--data", data, "profile or layout transform CSV")->required();
        app->add_option("--split", split, "test (same seed as train) or all")
                ->check(CLI::IsMember({"test", "all"}));
        app->add_option("--out", out, "output CSV (default: stdout)");
        flags.add(app);
    }

    static std::string scatter_csv(const PerfModel &m, const Table &t) {
        std::vector<std::vector<double>> rows;
        for (const auto &r : t.records) rows.push_back(r.inputs);
        Eigen::MatrixXd pred = m.predict(rows);
        std::ostringstream os;
        for (const auto &n : t.input_names) os << n << ',';
        os << "output,measured,predicted\n";
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < t.output_names.size(); ++c) {
                const auto &truth = t.records[r].targets[c];
                if (!truth) continue;
                for (double v : rows[r]) os << format_double(v) << ',';
                const double p = pred(Eigen::Index(r), Eigen::Index(c));
                os << t.output_names[c] << ',' << format_double(*truth) << ','
                   << (std::isfinite(p) ? format_double(p) : "NA") << '\n';
            }
        return os.str();
    }

    static std::string family_csv(const FamilyMatrix &m) {
        std::ostringstream os;
        os << "family";
        for (Family f : all_families) os << ',' << to_string(f);
        os << '\n';
        for (std::size_t r = 0; r < all_families.size(); ++r) {
            os << to_string(all_families[r]);
            for (double v : m[r]) os << ',' << format_double(v);
            os << '\n';
        }
        return os.str();
    }

    void run(Context &ctx) const {
        PerfModel m = load_model(ctx.input("model", model));
        const auto data_path = ctx.input("data", data);
        ctx.manifest.config = {{"what", what}, {"split", split}};
        std::string text;
        if (what == "family") {
            if (is_dlt_model(m)) fail(ErrorKind::usage, "family report needs a primitive model");
            TrainConfig cfg = flags.config(m.kind, ctx.manifest.seed, ctx.err);
            ctx.manifest.config["train"] = train_config_json(cfg);
            FamilyMatrix fm = ctx.timed("family", [&] {
                return family_transfer_matrix(m, load_profile_csv(data_path), cfg);
            });
            text = family_csv(fm);
        } else {
            Table t;
            if (split == "test") {
                t = load_split(data_path, is_dlt_model(m), ctx.manifest.seed).test;
            } else {
                t = is_dlt_model(m) ? to_table(load_dlt_csv(data_path))
                                    : to_table(load_profile_csv(data_path));
            }
            if (what == "metrics") {
                Evaluation ev = evaluate(m, t);
                std::ostringstream os;
                write_metrics_csv(os, m, ev);
                text = os.str();
                ctx.manifest.results = {{"pooled_mdrae", detail::nan_to_null(ev.pooled)}};
            } else {
                if (t.input_names != m.input_names || t.output_names != m.output_names)
                    fail(ErrorKind::compatibility, "data columns do not match the model");
                text = scatter_csv(m, t);
            }
        }
        if (!out.empty()) ctx.manifest.paths["out"] = ctx.resolve(out).string();
        write_text(ctx, ctx.resolve(out), text);
    }
};

// ---------------------------------------------------------------------------
// Entry point

// Runs one command. Errors go to `err` as one JSON object; the manifest is
// written to --manifest, or to <data dir>/<command>.manifest.json.
inline int run(const std::vector<std::string> &args, std::ostream &out = std::cout,
        std::ostream &err = std::cerr) {
    CLI::App app {"Convolution primitive selection: profile, model, select, transfer",
            "convsel"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    std::string manifest_path;
    std::string data_dir;
    app.add_option("--seed", seed, "seed for every random choice");
    app.add_option("--manifest", manifest_path, "run manifest JSON path");
    app.add_option("--data-dir", data_dir, "base for relative paths")
            ->envname("CONVSEL_DATA_DIR");

    ProfileCmd profile;
    TrainCmd train;
    PredictCmd predict;
    SelectCmd select;
    TransferCmd transfer;
    ReportCmd report;
    profile.add(app.add_subcommand("profile", "time primitives and layout transforms"));
    train.add(app.add_subcommand("train", "fit a performance model"));
    predict.add(app.add_subcommand("predict", "predict costs with a model"));
    select.add(app.add_subcommand("select", "choose a primitive for every layer"));
    transfer.add(app.add_subcommand("transfer", "adapt a model to another platform"));
    report.add(app.add_subcommand("report", "plot-ready CSV for models and data"));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError &e) {
        err << nlohmann::json {{"error", "usage"}, {"message", e.what()}, {"exit_code", 1}}
                        .dump()
            << '\n';
        return 1;
    }

    Context ctx {data_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(data_dir),
            out, err, {}};
    CLI::App *sub = app.get_subcommands().front();
    ctx.manifest.command = sub->get_name();
    ctx.manifest.argv = args;
    ctx.manifest.seed = seed;
    ctx.manifest.paths["data_dir"] = ctx.data_dir.string();

    int code = 0;
    try {
        ctx.timed("total", [&] {
            const std::string &name = ctx.manifest.command;
            if (name == "profile") profile.run(ctx);
            else if (name == "train") train.run(ctx);
            else if (name == "predict") predict.run(ctx);
            else if (name == "select") select.run(ctx);
            else if (name == "transfer") transfer.run(ctx);
            else report.run(ctx);
        });
    } catch (const Error &e) {
        code = exit_code(e.kind());
        err << nlohmann::json {{"error", to_string(e.kind())}, {"message", e.what()},
                       {"exit_code", code}}
                        .dump()
            << '\n';
    } catch (const std::bad_alloc &) {
        code = exit_code(ErrorKind::resource);
        err << nlohmann::json {{"error", "resource"}, {"message", "out of memory"},
                       {"exit_code", code}}
                        .dump()
            << '\n';
    }
    ctx.manifest.exit_code = code;
    const auto mpath = manifest_path.empty()
            ? ctx.data_dir / (ctx.manifest.command + ".manifest.json")
            : ctx.resolve(manifest_path);
    try {
        write_json_file(mpath, ctx.manifest.to_json());
    } catch (const Error &e) {
        err << nlohmann::json {{"error", "io"}, {"message", e.what()}, {"exit_code", 2}}.dump()
            << '\n';
        if (code == 0) code = 2;
    }
    return code;
}

inline int run(int argc, char **argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

} // namespace convsel::cli

#endif // CONVSEL_CLI_HPP
