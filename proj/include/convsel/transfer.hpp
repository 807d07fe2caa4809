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

#ifndef CONVSEL_TRANSFER_HPP
#define CONVSEL_TRANSFER_HPP

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "convsel/core.hpp"
#include "convsel/dataset.hpp"
#include "convsel/perfmodel.hpp"
#include "convsel/selector.hpp"
#include "convsel/stats.hpp"

namespace convsel {

// ---------------------------------------------------------------------------
// Factor correction

struct FactorSet {
    std::map<std::string, double> factors;
    std::vector<std::string> uncalibrated; // columns that fell back to 1

    double factor(const std::string &column) const {
        auto it = factors.find(column);
        return it == factors.end() ? 1.0 : it->second;
    }
};

// Per column, the median of measured / predicted over the samples.
inline FactorSet fit_factors(const PerfModel &model, const ProfileDataset &samples) {
    if (samples.empty()) fail(ErrorKind::size, "no calibration samples");
    std::vector<LayerConfig> configs;
    for (const auto &r : samples.records) configs.push_back(r.config);
    ProfileDataset pred = predict_costs(model, configs);
    FactorSet out;
    for (std::size_t c = 0; c < model.output_names.size(); ++c) {
        const std::string &name = model.output_names[c];
        std::vector<double> ratios;
        if (auto col = samples.column_index(name))
            for (std::size_t r = 0; r < samples.records.size(); ++r) {
                const auto &measured = samples.records[r].times[*col];
                if (!measured) continue;
                if (!(*measured > 0.0))
                    fail(ErrorKind::domain, "non-positive measurement for " + name);
                if (const auto &p = pred.records[r].times[c])
                    ratios.push_back(*measured / *p);
            }
        if (ratios.empty()) {
            out.factors[name] = 1.0;
            out.uncalibrated.push_back(name);
            warn("no calibration samples for '" + name + "'; factor 1");
            continue;
        }
        out.factors[name] = lower_median(std::move(ratios));
    }
    return out;
}

inline ProfileDataset apply_factors(ProfileDataset table, const FactorSet &factors) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        const double f = factors.factor(table.columns[c]);
        for (auto &r : table.records)
            if (r.times[c]) *r.times[c] *= f;
    }
    return table;
}

inline nlohmann::json factors_to_json(const FactorSet &f) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto &[name, v] : f.factors) j[name] = v;
    return j;
}

inline FactorSet factors_from_json(const nlohmann::json &j) {
    if (!j.is_object()) fail(ErrorKind::io, "factor file must be a JSON object");
    FactorSet f;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number())
            fail(ErrorKind::io, "factor for '" + it.key() + "' is not a number");
        const double v = it.value().get<double>();
        if (!(v > 0.0)) fail(ErrorKind::domain, "factor for '" + it.key() + "' must be positive");
        f.factors[it.key()] = v;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Fine-tuning

namespace detail {

inline void require_same_schema(const PerfModel &model, const Table &t) {
    if (t.input_names != model.input_names || t.output_names != model.output_names)
        fail(ErrorKind::compatibility,
                "data columns do not match the model's inputs and outputs");
}

// Moves each column's output mean so the median log residual on `data`
// becomes zero; the spread is kept. Columns without samples move by the
// median residual of all sampled columns in the head.
inline void shift_output_normalizer(Head &head, const Table &data) {
    HeadData hd = make_head_data(data, head.columns, head);
    if (hd.samples() == 0) return;
    Eigen::MatrixXd z = head.forward_normalized(hd.x);
    std::vector<std::vector<double>> residuals(head.columns.size());
    std::vector<double> pooled;
    for (std::size_t c = 0; c < head.columns.size(); ++c) {
        if (head.samples.at(c) == 0) continue;
        for (Eigen::Index j = 0; j < hd.samples(); ++j)
            if (hd.mask(Eigen::Index(c), j) != 0.0) {
                const double r = std::log(hd.truth(Eigen::Index(c), j))
                        - std::log(head.output_norm.invert(c, z(Eigen::Index(c), j)));
                residuals[c].push_back(r);
                pooled.push_back(r);
            }
    }
    if (pooled.empty()) return;
    const double fallback = lower_median(pooled);
    for (std::size_t c = 0; c < head.columns.size(); ++c) {
        if (head.samples.at(c) == 0) continue;
        head.output_norm.mean[c] += residuals[c].empty()
                ? fallback
                : lower_median(std::move(residuals[c]));
    }
}

} // namespace detail

// Continues training from the model's weights at a tenth of the learning
// rate, with early stopping on data.validation. The input normalizer is
// reused; with refit_output the output normalizer is first re-centred on
// the new targets.
inline PerfModel fine_tune(const PerfModel &model, const Split<Table> &data,
        const TrainConfig &cfg, bool refit_output = true) {
    cfg.check();
    detail::require_same_schema(model, data.train);
    detail::require_same_schema(model, data.validation);
    if (data.train.empty()) fail(ErrorKind::size, "empty fine-tuning partition");
    detail::check_targets_positive(data.train);
    detail::check_targets_positive(data.validation);
    PerfModel out = model;
    out.config = cfg;
    out.config.learning_rate = cfg.learning_rate / 10.0;
    out.training.clear();
    for (std::size_t h = 0; h < out.heads.size(); ++h) {
        Head &head = out.heads[h];
        if (refit_output) detail::shift_output_normalizer(head, data.train);
        if (!head.mlp) {
            out.training.push_back({});
            continue;
        }
        auto train_data = detail::make_head_data(data.train, head.columns, head);
        auto val_data = detail::make_head_data(data.validation, head.columns, head);
        out.training.push_back(detail::fit_mlp(head, train_data, val_data, cfg,
                out.config.learning_rate, mix_seed(cfg.seed ^ (0xf1e7ULL + h))));
    }
    return out;
}

inline PerfModel fine_tune(const PerfModel &model, const Split<ProfileDataset> &data,
        const TrainConfig &cfg, bool refit_output = true) {
    return fine_tune(model,
            Split<Table> {to_table(data.train), to_table(data.validation),
                    to_table(data.test)},
            cfg, refit_output);
}

// ---------------------------------------------------------------------------
// Cross-family transfer

using FamilyMatrix = std::array<std::array<double, all_families.size()>, all_families.size()>;

namespace detail {

inline std::vector<std::optional<Family>> column_families(const std::vector<std::string> &cols) {
    std::vector<std::optional<Family>> out;
    for (const auto &name : cols) {
        auto p = find_primitive(name);
        out.push_back(p ? std::optional(spec_of(*p).family) : std::nullopt);
    }
    return out;
}

// Targets outside `keep` are blanked; rows left without targets are dropped.
inline Table only_family(const Table &t, const std::vector<std::optional<Family>> &fam,
        Family keep) {
    Table out = t;
    out.records.clear();
    for (auto row : t.records) {
        bool any = false;
        for (std::size_t c = 0; c < row.targets.size(); ++c) {
            if (fam[c] != keep) row.targets[c].reset();
            any = any || row.targets[c].has_value();
        }
        if (any) out.records.push_back(std::move(row));
    }
    return out;
}

} // namespace detail

// Row r: fine-tune on family r only, then MdRAE on each family's test
// cells, divided by the row's own-family MdRAE.
inline FamilyMatrix family_transfer_matrix(const PerfModel &model,
        const ProfileDataset &target, const TrainConfig &cfg) {
    auto parts = split_dataset(target, cfg.seed);
    Split<Table> data {to_table(parts.train), to_table(parts.validation), to_table(parts.test)};
    detail::require_same_schema(model, data.train);
    auto fam = detail::column_families(data.train.output_names);

    std::vector<std::string> missing;
    for (Family f : all_families) {
        auto has = [&](const Table &t) {
            return !detail::only_family(t, fam, f).empty();
        };
        if (!has(data.train) || !has(data.test))
            missing.push_back(to_string(f));
    }
    if (!missing.empty()) {
        std::string msg = "target data lacks families:";
        for (const auto &m : missing) msg += " " + m;
        fail(ErrorKind::coverage, msg);
    }

    FamilyMatrix out {};
    for (std::size_t r = 0; r < all_families.size(); ++r) {
        const Family row = all_families[r];
        Split<Table> only {detail::only_family(data.train, fam, row),
                detail::only_family(data.validation, fam, row), data.test};
        PerfModel tuned = fine_tune(model, only, cfg);
        std::vector<std::vector<double>> rows;
        for (const auto &rec : data.test.records) rows.push_back(rec.inputs);
        Eigen::MatrixXd pred = tuned.predict(rows);
        for (std::size_t c = 0; c < all_families.size(); ++c) {
            std::vector<double> p, t;
            for (std::size_t col = 0; col < fam.size(); ++col) {
                if (fam[col] != all_families[c]) continue;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    const auto &truth = data.test.records[i].targets[col];
                    const double v = pred(Eigen::Index(i), Eigen::Index(col));
                    if (truth && std::isfinite(v)) {
                        p.push_back(v);
                        t.push_back(*truth);
                    }
                }
            }
            out[r][c] = mdrae(p, t);
        }
        const double diag = out[r][r];
        if (!(diag > 0.0))
            fail(ErrorKind::domain, std::string("zero own-family error for ") + to_string(row));
        for (double &v : out[r]) v /= diag;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Small-data experiment

enum class TransferMode { factor, finetune };

inline const char *to_string(TransferMode m) {
    return m == TransferMode::factor ? "factor" : "finetune";
}

inline TransferMode parse_transfer_mode(std::string_view s) {
    if (s == "factor") return TransferMode::factor;
    if (s == "finetune") return TransferMode::finetune;
    fail(ErrorKind::usage, "unknown transfer mode '" + std::string(s) + "'");
}

// Target-platform costs for one network, used to price each adapted
// model's selection against the measured optimum.
struct OverheadProbe {
    NetworkGraph network;
    ProfileDataset measured;
    DltDataset transforms;
};

struct TransferRow {
    std::string method; // source | factor | finetune | scratch
    double fraction = 0.0;
    int repeat = 0;
    double mdrae = 0.0;
    std::optional<double> inference_overhead;
};

struct TransferOptions {
    TransferMode mode = TransferMode::finetune;
    std::vector<double> fractions {0.01};
    int repeats = 10;
    std::uint64_t seed = 0;
    TrainConfig train;
    std::function<void(const TransferRow &)> progress;
};

namespace detail {

// MdRAE of each prediction table over the cells that are defined in the
// truth and in every table, so all methods are scored on the same cells.
inline std::vector<double> common_cell_mdrae(const ProfileDataset &truth,
        const std::vector<ProfileDataset> &preds) {
    std::vector<std::vector<double>> p(preds.size());
    std::vector<double> t;
    std::vector<std::optional<std::size_t>> cols;
    for (const auto &name : truth.columns) {
        std::optional<std::size_t> shared;
        bool everywhere = true;
        for (const auto &pred : preds) {
            auto c = pred.column_index(name);
            everywhere = everywhere && c.has_value();
            shared = c;
        }
        cols.push_back(everywhere ? shared : std::nullopt);
    }
    for (std::size_t r = 0; r < truth.records.size(); ++r)
        for (std::size_t c = 0; c < truth.columns.size(); ++c) {
            const auto &v = truth.records[r].times[c];
            if (!v || !cols[c]) continue;
            bool all = true;
            for (const auto &pred : preds)
                all = all && pred.records[r].times[*cols[c]].has_value();
            if (!all) continue;
            t.push_back(*v);
            for (std::size_t m = 0; m < preds.size(); ++m)
                p[m].push_back(*preds[m].records[r].times[*cols[c]]);
        }
    if (t.empty()) fail(ErrorKind::coverage, "no test cells shared by all predictions");
    std::vector<double> out;
    for (const auto &pm : p) out.push_back(mdrae(pm, t));
    return out;
}

inline std::optional<double> probe_overhead(const std::optional<OverheadProbe> &probe,
        const PerfModel &model, const FactorSet *factors) {
    if (!probe) return std::nullopt;
    std::vector<LayerConfig> cfgs;
    for (const auto &l : probe->network.layers()) cfgs.push_back(l.config);
    ProfileDataset pred = predict_costs(model, cfgs);
    if (factors) pred = apply_factors(pred, *factors);
    CostGraph predicted = build_cost_graph(probe->network, pred, probe->transforms);
    CostGraph measured = build_cost_graph(probe->network, probe->measured, probe->transforms);
    return measure_overhead(predicted, measured, default_solver(measured)).overhead;
}

} // namespace detail

// Splits the target data with opt.seed; for every fraction and repeat,
// draws that fraction of the training and validation partitions and scores
// the adapted models on the full test partition. Factor mode reports the
// raw source model and its factor-corrected version; fine-tune mode reports
// the fine-tuned source model and a model of the same kind trained from
// scratch on the same records.
inline std::vector<TransferRow> run_transfer_experiment(const PerfModel &source,
        const ProfileDataset &target, const TransferOptions &opt,
        const std::optional<OverheadProbe> &probe = std::nullopt) {
    if (opt.repeats < 1) fail(ErrorKind::usage, "repeats must be at least 1");
    if (opt.fractions.empty()) fail(ErrorKind::usage, "no fractions given");
    auto parts = split_dataset(target, opt.seed);
    detail::require_same_schema(source, to_table(parts.train));
    std::vector<LayerConfig> test_cfgs;
    for (const auto &r : parts.test.records) test_cfgs.push_back(r.config);

    std::vector<TransferRow> rows;
    auto emit = [&](TransferRow row) {
        if (opt.progress) opt.progress(row);
        rows.push_back(std::move(row));
    };
    for (std::size_t fi = 0; fi < opt.fractions.size(); ++fi) {
        const double frac = opt.fractions[fi];
        for (int rep = 0; rep < opt.repeats; ++rep) {
            const std::uint64_t s = mix_seed(mix_seed(opt.seed ^ (fi + 1)) ^ std::uint64_t(rep));
            ProfileDataset few = sample_fraction(parts.train, frac, s);
            ProfileDataset few_val = sample_fraction(parts.validation, frac, mix_seed(s));
            if (opt.mode == TransferMode::factor) {
                FactorSet f = fit_factors(source, few);
                ProfileDataset raw = predict_costs(source, test_cfgs);
                auto scores = detail::common_cell_mdrae(parts.test, {raw, apply_factors(raw, f)});
                emit({"source", frac, rep, scores[0], detail::probe_overhead(probe, source, nullptr)});
                emit({"factor", frac, rep, scores[1], detail::probe_overhead(probe, source, &f)});
                continue;
            }
            TrainConfig cfg = opt.train;
            cfg.seed = s;
            Split<ProfileDataset> data {few, few_val, parts.test};
            PerfModel tuned = fine_tune(source, data, cfg);
            PerfModel scratch = source.kind == ModelKind::linear
                    ? fit_linear(Split<Table> {to_table(few), to_table(few_val), to_table(parts.test)})
                    : train_model(source.kind, data, cfg);
            auto scores = detail::common_cell_mdrae(parts.test,
                    {predict_costs(tuned, test_cfgs), predict_costs(scratch, test_cfgs)});
            emit({"finetune", frac, rep, scores[0], detail::probe_overhead(probe, tuned, nullptr)});
            emit({"scratch", frac, rep, scores[1], detail::probe_overhead(probe, scratch, nullptr)});
        }
    }
    return rows;
}

inline void write_transfer_csv(std::ostream &os, const std::vector<TransferRow> &rows) {
    os << "method,fraction,repeat,mdrae,inference_overhead\n";
    for (const auto &r : rows)
        os << r.method << ',' << format_double(r.fraction) << ',' << r.repeat << ','
           << format_double(r.mdrae) << ','
           << (r.inference_overhead ? format_double(*r.inference_overhead) : "NA") << '\n';
}

} // namespace convsel

#endif // CONVSEL_TRANSFER_HPP
