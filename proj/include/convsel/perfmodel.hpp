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

#ifndef CONVSEL_PERFMODEL_HPP
#define CONVSEL_PERFMODEL_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "convsel/core.hpp"
#include "convsel/dataset.hpp"
#include "convsel/mlp.hpp"
#include "convsel/stats.hpp"

namespace convsel {

enum class ModelKind { nn1, nn2, dlt, linear };

inline const char *to_string(ModelKind k) {
    switch (k) {
        case ModelKind::nn1: return "nn1";
        case ModelKind::nn2: return "nn2";
        case ModelKind::dlt: return "dlt";
        case ModelKind::linear: return "linear";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
    for (ModelKind k : {ModelKind::nn1, ModelKind::nn2, ModelKind::dlt,
                 ModelKind::linear})
        if (s == to_string(k)) return k;
    fail(ErrorKind::usage, "unknown model kind '" + std::string(s) + "'");
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    std::size_t batch_size = 1024;
    int patience = 250;
    // Hard cap on batch updates, on top of early stopping.
    int max_updates = 20000;
    std::uint64_t seed = 0;
    std::vector<int> hidden {128, 512, 512, 128};
    // Called after every update with (update, batch loss, validation MdRAE).
    std::function<void(int, double, double)> progress;

    static TrainConfig for_kind(ModelKind kind) {
        TrainConfig c;
        switch (kind) {
            case ModelKind::nn1:
                c.learning_rate = 3e-3;
                c.weight_decay = 0.0;
                c.hidden = {16, 64, 64, 16};
                break;
            case ModelKind::dlt: c.hidden = {32, 128, 32}; break;
            case ModelKind::nn2:
            case ModelKind::linear: break;
        }
        return c;
    }

    void check() const {
        if (!(learning_rate >= 0.0))
            fail(ErrorKind::domain, "learning rate must be non-negative");
        if (patience < 1) fail(ErrorKind::domain, "patience must be >= 1");
        if (batch_size < 1) fail(ErrorKind::domain, "batch size must be >= 1");
    }
};

struct LinearMap {
    Eigen::MatrixXd coef; // outputs x (inputs + 1), last column is the intercept
};

// One predictor covering a subset of the model's output columns, with its
// own normalizers.
struct Head {
    std::vector<std::size_t> columns;
    std::vector<std::size_t> samples; // training cells per column; 0 = untrained
    Normalizer input_norm;
    Normalizer output_norm; // one dimension per entry of `columns`
    std::optional<Mlp> mlp;
    std::optional<LinearMap> linear;

    Eigen::MatrixXd normalize_inputs(
            const std::vector<std::vector<double>> &rows) const {
        Eigen::MatrixXd x(Eigen::Index(input_norm.dims()), Eigen::Index(rows.size()));
        for (std::size_t j = 0; j < rows.size(); ++j)
            for (std::size_t i = 0; i < input_norm.dims(); ++i)
                x(Eigen::Index(i), Eigen::Index(j)) = input_norm.apply(i, rows[j].at(i));
        return x;
    }

    Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd &x) const {
        if (mlp) return mlp->forward(x);
        Eigen::MatrixXd z = linear->coef.leftCols(x.rows()) * x;
        z.colwise() += linear->coef.col(x.rows());
        return z;
    }
};

struct TrainSummary {
    int updates = 0;
    int best_update = 0;
    double best_validation_mdrae = std::numeric_limits<double>::quiet_NaN();
};

struct PerfModel {
    ModelKind kind = ModelKind::nn2;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::vector<Head> heads;
    TrainConfig config;
    std::vector<TrainSummary> training;

    // Predicted seconds, one row per input row; NaN for columns no head
    // was trained on.
    Eigen::MatrixXd predict(const std::vector<std::vector<double>> &rows) const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Constant(Eigen::Index(rows.size()),
                Eigen::Index(output_names.size()),
                std::numeric_limits<double>::quiet_NaN());
        if (rows.empty()) return out;
        for (const auto &h : heads) {
            Eigen::MatrixXd z = h.forward_normalized(h.normalize_inputs(rows));
            for (std::size_t c = 0; c < h.columns.size(); ++c) {
                if (h.samples.at(c) == 0) continue;
                for (std::size_t r = 0; r < rows.size(); ++r)
                    out(Eigen::Index(r), Eigen::Index(h.columns[c]))
                            = h.output_norm.invert(c, z(Eigen::Index(c), Eigen::Index(r)));
            }
        }
        return out;
    }
};

namespace detail {

struct HeadData {
    Eigen::MatrixXd x;     // normalized inputs, one column per sample
    Eigen::MatrixXd t;     // normalized targets (0 where undefined)
    Eigen::MatrixXd mask;  // 1 where defined
    Eigen::MatrixXd truth; // raw seconds (0 where undefined)

    Eigen::Index samples() const { return x.cols(); }
    bool has_targets() const { return mask.sum() > 0.0; }
};

// Rows of `table` with at least one defined target among `columns`.
inline HeadData make_head_data(const Table &table,
        const std::vector<std::size_t> &columns, const Head &head) {
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < table.records.size(); ++r)
        for (std::size_t c : columns)
            if (table.records[r].targets.at(c)) {
                keep.push_back(r);
                break;
            }
    const auto n = Eigen::Index(keep.size());
    const auto d = Eigen::Index(head.input_norm.dims());
    const auto m = Eigen::Index(columns.size());
    HeadData hd;
    hd.x.resize(d, n);
    hd.t = Eigen::MatrixXd::Zero(m, n);
    hd.mask = Eigen::MatrixXd::Zero(m, n);
    hd.truth = Eigen::MatrixXd::Zero(m, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const TableRow &row = table.records[keep[std::size_t(j)]];
        for (Eigen::Index i = 0; i < d; ++i)
            hd.x(i, j) = head.input_norm.apply(std::size_t(i), row.inputs.at(std::size_t(i)));
        for (Eigen::Index c = 0; c < m; ++c)
            if (const auto &v = row.targets.at(columns[std::size_t(c)])) {
                hd.t(c, j) = head.output_norm.apply(std::size_t(c), *v);
                hd.mask(c, j) = 1.0;
                hd.truth(c, j) = *v;
            }
    }
    return hd;
}

inline Normalizer fit_input_normalizer(const Table &table) {
    std::vector<std::vector<double>> cols(table.input_names.size());
    for (const auto &r : table.records)
        for (std::size_t i = 0; i < cols.size(); ++i) cols[i].push_back(r.inputs.at(i));
    return fit_normalizer(cols);
}

inline Normalizer fit_output_normalizer(const Table &table,
        const std::vector<std::size_t> &columns, std::vector<std::size_t> &samples) {
    std::vector<std::vector<double>> cols(columns.size());
    for (const auto &r : table.records)
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (const auto &v = r.targets.at(columns[c])) cols[c].push_back(*v);
    samples.clear();
    for (const auto &c : cols) samples.push_back(c.size());
    return fit_normalizer(cols);
}

// Pooled MdRAE of the head's predictions over every defined cell.
inline double head_mdrae(const Head &head, const HeadData &data,
        const Eigen::MatrixXd &z) {
    std::vector<double> pred, truth;
    for (Eigen::Index j = 0; j < data.samples(); ++j)
        for (Eigen::Index c = 0; c < data.mask.rows(); ++c)
            if (data.mask(c, j) != 0.0) {
                pred.push_back(head.output_norm.invert(std::size_t(c), z(c, j)));
                truth.push_back(data.truth(c, j));
            }
    if (truth.empty()) return std::numeric_limits<double>::quiet_NaN();
    return mdrae(pred, truth);
}

inline Eigen::MatrixXd columns_of(const Eigen::MatrixXd &m,
        const std::vector<Eigen::Index> &idx, Eigen::Index begin, Eigen::Index end) {
    Eigen::MatrixXd out(m.rows(), end - begin);
    for (Eigen::Index j = begin; j < end; ++j)
        out.col(j - begin) = m.col(idx[std::size_t(j)]);
    return out;
}

// Adam on mini-batches with validation MdRAE after every update. Returns
// the weights with the best validation score seen, including the starting
// weights.
inline TrainSummary fit_mlp(Head &head, const HeadData &train,
        const HeadData &validation, const TrainConfig &cfg, double lr,
        std::uint64_t seed) {
    cfg.check();
    const HeadData &monitor = validation.has_targets() ? validation : train;
    Mlp &net = *head.mlp;
    Adam adam(net);
    Mlp best = net;
    TrainSummary summary;
    summary.best_validation_mdrae
            = head_mdrae(head, monitor, net.forward(monitor.x));
    if (!train.has_targets()) return summary;

    const Eigen::Index n = train.samples();
    const Eigen::Index batch = std::min<Eigen::Index>(n, Eigen::Index(cfg.batch_size));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index {0});
    std::mt19937_64 rng(seed);
    Eigen::Index pos = n;
    int since_best = 0;
    Mlp::Gradients grads;
    Eigen::MatrixXd xb, tb, mb;
    for (int update = 1; update <= cfg.max_updates; ++update) {
        if (batch == n) {
            if (update == 1) {
                xb = train.x;
                tb = train.t;
                mb = train.mask;
            }
        } else {
            if (pos >= n) {
                std::shuffle(order.begin(), order.end(), rng);
                pos = 0;
            }
            const Eigen::Index end = std::min(n, pos + batch);
            xb = columns_of(train.x, order, pos, end);
            tb = columns_of(train.t, order, pos, end);
            mb = columns_of(train.mask, order, pos, end);
            pos = end;
        }
        const double loss = net.loss_and_gradient(xb, tb, mb, cfg.weight_decay, grads);
        if (!std::isfinite(loss))
            fail(ErrorKind::training,
                    "loss diverged at update " + std::to_string(update));
        adam.step(net, grads, lr);
        summary.updates = update;

        const double score = head_mdrae(head, monitor, net.forward(monitor.x));
        if (cfg.progress) cfg.progress(update, loss, score);
        if (!std::isfinite(score))
            fail(ErrorKind::training,
                    "validation error diverged at update " + std::to_string(update));
        if (score < summary.best_validation_mdrae) {
            summary.best_validation_mdrae = score;
            summary.best_update = update;
            best = net;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    net = std::move(best);
    return summary;
}

inline std::vector<int> layer_sizes(
        std::size_t inputs, const std::vector<int> &hidden, std::size_t outputs) {
    std::vector<int> sizes {int(inputs)};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(int(outputs));
    return sizes;
}

inline void check_targets_positive(const Table &t) {
    for (const auto &r : t.records) {
        for (const auto &v : r.targets)
            if (v && !(*v > 0.0))
                fail(ErrorKind::domain, "non-positive target time");
        for (double x : r.inputs)
            if (!(x > 0.0)) fail(ErrorKind::domain, "non-positive input value");
    }
}

} // namespace detail

// Least squares per output column in the normalized log domain.
inline PerfModel fit_linear(const Split<Table> &split) {
    const Table &train = split.train;
    if (train.empty()) fail(ErrorKind::size, "empty training partition");
    detail::check_targets_positive(train);
    PerfModel model;
    model.kind = ModelKind::linear;
    model.input_names = train.input_names;
    model.output_names = train.output_names;
    model.config = TrainConfig::for_kind(ModelKind::linear);

    Head head;
    head.columns.resize(train.output_names.size());
    std::iota(head.columns.begin(), head.columns.end(), std::size_t {0});
    head.input_norm = detail::fit_input_normalizer(train);
    head.output_norm = detail::fit_output_normalizer(train, head.columns, head.samples);
    const auto d = Eigen::Index(train.input_names.size());
    LinearMap lin;
    lin.coef = Eigen::MatrixXd::Zero(Eigen::Index(head.columns.size()), d + 1);
    detail::HeadData data = detail::make_head_data(train, head.columns, head);
    for (Eigen::Index c = 0; c < lin.coef.rows(); ++c) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index j = 0; j < data.samples(); ++j)
            if (data.mask(c, j) != 0.0) rows.push_back(j);
        if (rows.empty()) continue;
        Eigen::MatrixXd x(Eigen::Index(rows.size()), d + 1);
        Eigen::VectorXd y(Eigen::Index(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            x.row(Eigen::Index(r)).head(d) = data.x.col(rows[r]).transpose();
            x(Eigen::Index(r), d) = 1.0;
            y(Eigen::Index(r)) = data.t(c, rows[r]);
        }
        Eigen::MatrixXd gram = x.transpose() * x;
        Eigen::VectorXd rhs = x.transpose() * y;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        if (lu.rank() < gram.rows()) {
            warn("singular design matrix for '" + train.output_names[std::size_t(c)]
                    + "'; using ridge 1e-8");
            gram += 1e-8 * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
        }
        lin.coef.row(c) = gram.ldlt().solve(rhs).transpose();
    }
    head.linear = std::move(lin);
    model.heads.push_back(std::move(head));
    model.training.push_back({});
    return model;
}

// Trains an NN1 (one small network per output column), NN2 / DLT (one
// network for all columns) or linear model.
inline PerfModel train_model(
        ModelKind kind, const Split<Table> &split, const TrainConfig &cfg) {
    if (kind == ModelKind::linear) return fit_linear(split);
    cfg.check();
    const Table &train = split.train;
    if (train.empty()) fail(ErrorKind::size, "empty training partition");
    detail::check_targets_positive(train);
    detail::check_targets_positive(split.validation);
    PerfModel model;
    model.kind = kind;
    model.input_names = train.input_names;
    model.output_names = train.output_names;
    model.config = cfg;

    std::vector<std::vector<std::size_t>> groups;
    if (kind == ModelKind::nn1) {
        for (std::size_t c = 0; c < train.output_names.size(); ++c) groups.push_back({c});
    } else {
        groups.emplace_back(train.output_names.size());
        std::iota(groups[0].begin(), groups[0].end(), std::size_t {0});
    }

    for (std::size_t g = 0; g < groups.size(); ++g) {
        Head head;
        head.columns = groups[g];
        Table rows = train;
        if (kind == ModelKind::nn1) {
            // NN1 trains on rows where its primitive is defined only.
            std::erase_if(rows.records, [&](const TableRow &r) {
                return !r.targets.at(groups[g][0]);
            });
        }
        if (rows.empty()) {
            warn("no training data for '" + train.output_names[groups[g][0]] + "'");
            head.input_norm = detail::fit_input_normalizer(train);
            head.output_norm = Normalizer {{0.0}, {1.0}};
            head.samples = {0};
            head.mlp = Mlp(detail::layer_sizes(train.input_names.size(), cfg.hidden, 1),
                    mix_seed(cfg.seed + g));
            model.heads.push_back(std::move(head));
            model.training.push_back({});
            continue;
        }
        head.input_norm = detail::fit_input_normalizer(rows);
        head.output_norm = detail::fit_output_normalizer(rows, head.columns, head.samples);
        head.mlp = Mlp(detail::layer_sizes(train.input_names.size(), cfg.hidden,
                               head.columns.size()),
                mix_seed(cfg.seed * 7919 + g));
        auto train_data = detail::make_head_data(rows, head.columns, head);
        auto val_data = detail::make_head_data(split.validation, head.columns, head);
        model.training.push_back(detail::fit_mlp(head, train_data, val_data, cfg,
                cfg.learning_rate, mix_seed(cfg.seed ^ (0xabcdULL + g))));
        model.heads.push_back(std::move(head));
    }
    return model;
}

inline PerfModel train_model(
        ModelKind kind, const Split<ProfileDataset> &split, const TrainConfig &cfg) {
    return train_model(kind,
            Split<Table> {to_table(split.train), to_table(split.validation),
                    to_table(split.test)},
            cfg);
}

// ---------------------------------------------------------------------------
// Inference

inline void require_config_inputs(const PerfModel &model) {
    if (model.input_names != config_feature_names())
        fail(ErrorKind::compatibility,
                "model does not take layer configurations as input");
}

// Table of predicted seconds per config and model column. Cells for
// primitives that cannot run a config stay undefined.
inline ProfileDataset predict_costs(
        const PerfModel &model, const std::vector<LayerConfig> &configs) {
    require_config_inputs(model);
    std::vector<std::vector<double>> rows;
    for (const auto &cfg : configs) {
        validate(cfg);
        rows.push_back(config_features(cfg));
    }
    Eigen::MatrixXd pred = model.predict(rows);
    std::vector<std::optional<PrimitiveId>> prims;
    for (const auto &name : model.output_names) prims.push_back(find_primitive(name));
    ProfileDataset out;
    out.columns = model.output_names;
    for (std::size_t r = 0; r < configs.size(); ++r) {
        ProfileRecord rec {configs[r], {}};
        for (std::size_t c = 0; c < model.output_names.size(); ++c) {
            const double v = pred(Eigen::Index(r), Eigen::Index(c));
            const bool runs = !prims[c] || applicable(*prims[c], configs[r]);
            if (runs && std::isfinite(v))
                rec.times.emplace_back(v);
            else
                rec.times.emplace_back(std::nullopt);
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

inline DltDataset predict_dlt(
        const PerfModel &model, const std::vector<std::pair<int, int>> &pairs) {
    if (model.input_names != std::vector<std::string> {"c", "im"}
            || model.output_names != dlt_output_names())
        fail(ErrorKind::compatibility, "model does not predict layout transforms");
    std::vector<std::vector<double>> rows;
    for (auto [c, im] : pairs) rows.push_back({double(c), double(im)});
    Eigen::MatrixXd pred = model.predict(rows);
    DltDataset out;
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        DltRecord rec {pairs[r].first, pairs[r].second, {}};
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                if (i == j) continue;
                const double v = pred(Eigen::Index(r), Eigen::Index(i * 3 + j));
                if (!std::isfinite(v))
                    fail(ErrorKind::coverage, "transform model lacks column "
                                    + model.output_names[i * 3 + j]);
                rec.seconds[i][j] = v;
            }
        out.records.push_back(rec);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
    double pooled = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::optional<double>> per_column;
    std::vector<std::size_t> counts;
};

inline Evaluation evaluate(const PerfModel &model, const Table &table) {
    if (table.output_names != model.output_names || table.input_names != model.input_names)
        fail(ErrorKind::compatibility, "table schema does not match the model");
    std::vector<std::vector<double>> rows;
    for (const auto &r : table.records) rows.push_back(r.inputs);
    Eigen::MatrixXd pred = model.predict(rows);
    Evaluation ev;
    std::vector<double> all_p, all_t;
    for (std::size_t c = 0; c < model.output_names.size(); ++c) {
        std::vector<double> p, t;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto &truth = table.records[r].targets[c];
            const double v = pred(Eigen::Index(r), Eigen::Index(c));
            if (!truth || !std::isfinite(v)) continue;
            p.push_back(v);
            t.push_back(*truth);
        }
        ev.counts.push_back(t.size());
        ev.per_column.push_back(t.empty() ? std::nullopt : std::optional(mdrae(p, t)));
        all_p.insert(all_p.end(), p.begin(), p.end());
        all_t.insert(all_t.end(), t.begin(), t.end());
    }
    if (!all_t.empty()) ev.pooled = mdrae(all_p, all_t);
    return ev;
}

// Masked MSE in each head's normalized units, pooled over every defined cell.
inline double training_loss(const PerfModel &model, const Table &table) {
    double sum = 0.0;
    double count = 0.0;
    for (const auto &h : model.heads) {
        auto data = detail::make_head_data(table, h.columns, h);
        if (!data.has_targets()) continue;
        Eigen::MatrixXd z = h.forward_normalized(data.x);
        sum += ((z - data.t).cwiseProduct(data.mask)).squaredNorm();
        count += data.mask.sum();
    }
    if (count == 0.0) fail(ErrorKind::size, "no defined targets");
    return sum / count;
}

// ---------------------------------------------------------------------------
// Model file (JSON)

namespace detail {

inline nlohmann::json normalizer_json(const Normalizer &n) {
    return {{"mean", n.mean}, {"std", n.stddev}};
}

inline Normalizer normalizer_from(const nlohmann::json &j) {
    Normalizer n;
    n.mean = j.at("mean").get<std::vector<double>>();
    n.stddev = j.at("std").get<std::vector<double>>();
    if (n.mean.size() != n.stddev.size())
        fail(ErrorKind::io, "normalizer mean/std lengths differ");
    return n;
}

inline std::vector<double> flatten(const Eigen::MatrixXd &m) {
    std::vector<double> v;
    v.reserve(std::size_t(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
    return v;
}

inline Eigen::MatrixXd unflatten(const std::vector<double> &v, int rows, int cols) {
    if (v.size() != std::size_t(rows) * std::size_t(cols))
        fail(ErrorKind::io, "weight array length does not match layer sizes");
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = v[std::size_t(i) * cols + j];
    return m;
}

inline nlohmann::json nan_to_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

} // namespace detail

inline nlohmann::json train_config_json(const TrainConfig &c) {
    return {{"optimizer", "adam"}, {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
            {"patience", c.patience}, {"max_updates", c.max_updates},
            {"seed", c.seed}, {"hidden", c.hidden}};
}

inline TrainConfig train_config_from(const nlohmann::json &j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.patience = j.at("patience").get<int>();
    c.max_updates = j.at("max_updates").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    return c;
}

inline nlohmann::json model_to_json(const PerfModel &m) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto &h : m.heads) {
        nlohmann::json jh {{"columns", h.columns}, {"samples", h.samples},
                {"input_norm", detail::normalizer_json(h.input_norm)},
                {"output_norm", detail::normalizer_json(h.output_norm)}};
        if (h.mlp) {
            nlohmann::json w = nlohmann::json::array(), b = nlohmann::json::array();
            for (std::size_t l = 0; l < h.mlp->layers(); ++l) {
                w.push_back(detail::flatten(h.mlp->weights()[l]));
                b.push_back(std::vector<double>(h.mlp->biases()[l].data(),
                        h.mlp->biases()[l].data() + h.mlp->biases()[l].size()));
            }
            jh["mlp"] = {{"sizes", h.mlp->sizes()}, {"weights", w}, {"biases", b}};
        }
        if (h.linear)
            jh["linear"] = {{"rows", h.linear->coef.rows()},
                    {"cols", h.linear->coef.cols()},
                    {"coef", detail::flatten(h.linear->coef)}};
        heads.push_back(std::move(jh));
    }
    nlohmann::json training = nlohmann::json::array();
    for (const auto &t : m.training)
        training.push_back({{"updates", t.updates}, {"best_update", t.best_update},
                {"best_validation_mdrae", detail::nan_to_null(t.best_validation_mdrae)}});
    return {{"format", "convsel-model/1"}, {"kind", to_string(m.kind)},
            {"inputs", m.input_names}, {"outputs", m.output_names},
            {"train_config", train_config_json(m.config)}, {"training", training},
            {"heads", heads}};
}

inline PerfModel model_from_json(const nlohmann::json &j) {
    try {
        if (j.at("format").get<std::string>() != "convsel-model/1")
            fail(ErrorKind::io, "unsupported model format");
        PerfModel m;
        m.kind = parse_model_kind(j.at("kind").get<std::string>());
        m.input_names = j.at("inputs").get<std::vector<std::string>>();
        m.output_names = j.at("outputs").get<std::vector<std::string>>();
        m.config = train_config_from(j.at("train_config"));
        for (const auto &t : j.at("training")) {
            TrainSummary s;
            s.updates = t.at("updates").get<int>();
            s.best_update = t.at("best_update").get<int>();
            if (!t.at("best_validation_mdrae").is_null())
                s.best_validation_mdrae = t.at("best_validation_mdrae").get<double>();
            m.training.push_back(s);
        }
        for (const auto &jh : j.at("heads")) {
            Head h;
            h.columns = jh.at("columns").get<std::vector<std::size_t>>();
            h.samples = jh.at("samples").get<std::vector<std::size_t>>();
            h.input_norm = detail::normalizer_from(jh.at("input_norm"));
            h.output_norm = detail::normalizer_from(jh.at("output_norm"));
            if (h.samples.size() != h.columns.size()
                    || h.output_norm.dims() != h.columns.size()
                    || h.input_norm.dims() != m.input_names.size())
                fail(ErrorKind::io, "head dimensions are inconsistent");
            for (std::size_t c : h.columns)
                if (c >= m.output_names.size())
                    fail(ErrorKind::io, "head column out of range");
            if (jh.contains("mlp")) {
                const auto &jm = jh.at("mlp");
                auto sizes = jm.at("sizes").get<std::vector<int>>();
                if (sizes.size() < 2) fail(ErrorKind::io, "bad layer sizes");
                std::vector<Eigen::MatrixXd> w;
                std::vector<Eigen::VectorXd> b;
                for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
                    w.push_back(detail::unflatten(
                            jm.at("weights").at(l).get<std::vector<double>>(),
                            sizes[l + 1], sizes[l]));
                    auto bv = jm.at("biases").at(l).get<std::vector<double>>();
                    b.push_back(Eigen::Map<Eigen::VectorXd>(bv.data(), Eigen::Index(bv.size())));
                }
                h.mlp = Mlp(sizes, std::move(w), std::move(b));
                if (h.mlp->inputs() != int(m.input_names.size())
                        || h.mlp->outputs() != int(h.columns.size()))
                    fail(ErrorKind::io, "network shape does not match head");
            } else if (jh.contains("linear")) {
                const auto &jl = jh.at("linear");
                LinearMap lin;
                lin.coef = detail::unflatten(jl.at("coef").get<std::vector<double>>(),
                        jl.at("rows").get<int>(), jl.at("cols").get<int>());
                if (lin.coef.rows() != Eigen::Index(h.columns.size())
                        || lin.coef.cols() != Eigen::Index(m.input_names.size() + 1))
                    fail(ErrorKind::io, "linear map shape does not match head");
                h.linear = std::move(lin);
            } else {
                fail(ErrorKind::io, "head has neither network nor linear map");
            }
            m.heads.push_back(std::move(h));
        }
        return m;
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::io, std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(const std::filesystem::path &path, const PerfModel &m) {
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    os << model_to_json(m).dump() << '\n';
    if (!os) fail(ErrorKind::io, "write failed for " + path.string());
}

inline PerfModel load_model(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::io, "cannot read " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::io, path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

inline void write_metrics_csv(
        std::ostream &os, const PerfModel &model, const Evaluation &ev) {
    os << "output,mdrae,count\n";
    for (std::size_t c = 0; c < model.output_names.size(); ++c)
        os << model.output_names[c] << ','
           << (ev.per_column[c] ? format_double(*ev.per_column[c]) : "NA") << ','
           << ev.counts[c] << '\n';
    os << "pooled," << (std::isfinite(ev.pooled) ? format_double(ev.pooled) : "NA")
       << ',' << std::accumulate(ev.counts.begin(), ev.counts.end(), std::size_t {0})
       << '\n';
}

} // namespace convsel

#endif // CONVSEL_PERFMODEL_HPP
