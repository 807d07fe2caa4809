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

#ifndef CONVSEL_MLP_HPP
#define CONVSEL_MLP_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "convsel/error.hpp"

namespace convsel {

// ---------------------------------------------------------------------------
// Log-domain standardization: x -> (log(x) - mean) / std.

struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t dims() const { return mean.size(); }

    double apply(std::size_t dim, double x) const {
        if (!(x > 0.0))
            fail(ErrorKind::domain, "normalizer input must be positive");
        return (std::log(x) - mean.at(dim)) / stddev.at(dim);
    }

    double invert(std::size_t dim, double z) const {
        return std::exp(z * stddev.at(dim) + mean.at(dim));
    }
};

// One vector of values per dimension. Statistics use the population
// standard deviation; a degenerate dimension gets std 1.
inline Normalizer fit_normalizer(const std::vector<std::vector<double>> &columns) {
    Normalizer n;
    for (const auto &col : columns) {
        double sum = 0.0;
        for (double v : col) {
            if (!(v > 0.0))
                fail(ErrorKind::domain,
                        "cannot log-normalize a non-positive value");
            sum += std::log(v);
        }
        const double mean = col.empty() ? 0.0 : sum / double(col.size());
        double var = 0.0;
        for (double v : col) var += (std::log(v) - mean) * (std::log(v) - mean);
        double sd = col.empty() ? 1.0 : std::sqrt(var / double(col.size()));
        if (!(sd > 1e-12)) sd = 1.0;
        n.mean.push_back(mean);
        n.stddev.push_back(sd);
    }
    return n;
}

// ---------------------------------------------------------------------------
// Masked mean squared error.

struct MaskedLoss {
    double loss = 0.0;
    Eigen::MatrixXd grad; // d loss / d pred, zero wherever the mask is zero
};

// Mean over masked-in entries only; masked-out targets are never read.
inline MaskedLoss masked_mse(const Eigen::MatrixXd &pred,
        const Eigen::MatrixXd &target, const Eigen::MatrixXd &mask) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()
            || pred.rows() != mask.rows() || pred.cols() != mask.cols())
        fail(ErrorKind::size, "masked_mse: shape mismatch");
    MaskedLoss out;
    out.grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
    double count = 0.0;
    for (Eigen::Index j = 0; j < pred.cols(); ++j)
        for (Eigen::Index i = 0; i < pred.rows(); ++i)
            if (mask(i, j) != 0.0) {
                const double d = pred(i, j) - target(i, j);
                out.loss += d * d;
                out.grad(i, j) = d;
                count += 1.0;
            }
    if (count == 0.0) fail(ErrorKind::size, "masked_mse: mask selects nothing");
    out.loss /= count;
    out.grad *= 2.0 / count;
    return out;
}

inline MaskedLoss masked_mse(std::span<const double> pred,
        std::span<const double> target, std::span<const double> mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        fail(ErrorKind::size, "masked_mse: length mismatch");
    const auto n = static_cast<Eigen::Index>(pred.size());
    Eigen::MatrixXd p(n, 1), t(n, 1), m(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        p(i, 0) = pred[std::size_t(i)];
        m(i, 0) = mask[std::size_t(i)];
        t(i, 0) = m(i, 0) != 0.0 ? target[std::size_t(i)] : 0.0;
    }
    return masked_mse(p, t, m);
}

// ---------------------------------------------------------------------------
// Fully connected network: ReLU on hidden layers, identity output.
// Batches are column-major: one sample per column.

class Mlp {
public:
    Mlp() = default;

    // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Mlp(std::vector<int> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2)
            fail(ErrorKind::size, "network needs at least two layer sizes");
        std::mt19937_64 rng(seed);
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            if (sizes_[l] < 1 || sizes_[l + 1] < 1)
                fail(ErrorKind::size, "layer sizes must be positive");
            const double b = 1.0 / std::sqrt(double(sizes_[l]));
            std::uniform_real_distribution<double> dist(-b, b);
            Eigen::MatrixXd w(sizes_[l + 1], sizes_[l]);
            Eigen::VectorXd bias(sizes_[l + 1]);
            // Unit by unit, so appending an output unit keeps earlier draws.
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
                bias(i) = dist(rng);
            }
            weights_.push_back(std::move(w));
            biases_.push_back(std::move(bias));
        }
    }

    Mlp(std::vector<int> sizes, std::vector<Eigen::MatrixXd> weights,
            std::vector<Eigen::VectorXd> biases)
        : sizes_(std::move(sizes))
        , weights_(std::move(weights))
        , biases_(std::move(biases)) {
        if (sizes_.size() < 2 || weights_.size() + 1 != sizes_.size()
                || biases_.size() != weights_.size())
            fail(ErrorKind::size, "inconsistent network layers");
        for (std::size_t l = 0; l < weights_.size(); ++l)
            if (weights_[l].rows() != sizes_[l + 1]
                    || weights_[l].cols() != sizes_[l]
                    || biases_[l].size() != sizes_[l + 1])
                fail(ErrorKind::size, "layer shape does not match sizes");
    }

    const std::vector<int> &sizes() const { return sizes_; }
    int inputs() const { return sizes_.front(); }
    int outputs() const { return sizes_.back(); }
    std::size_t layers() const { return weights_.size(); }

    std::vector<Eigen::MatrixXd> &weights() { return weights_; }
    const std::vector<Eigen::MatrixXd> &weights() const { return weights_; }
    std::vector<Eigen::VectorXd> &biases() { return biases_; }
    const std::vector<Eigen::VectorXd> &biases() const { return biases_; }

    Eigen::MatrixXd forward(const Eigen::MatrixXd &x) const {
        Eigen::MatrixXd a = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Eigen::MatrixXd z = weights_[l] * a;
            z.colwise() += biases_[l];
            if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);
            a = std::move(z);
        }
        return a;
    }

    struct Gradients {
        std::vector<Eigen::MatrixXd> dw;
        std::vector<Eigen::VectorXd> db;
    };

    // Masked MSE of the batch plus 0.5 * weight_decay * |W|^2; fills the
    // gradient of that total.
    double loss_and_gradient(const Eigen::MatrixXd &x, const Eigen::MatrixXd &target,
            const Eigen::MatrixXd &mask, double weight_decay, Gradients &g) const {
        const std::size_t nl = weights_.size();
        std::vector<Eigen::MatrixXd> acts;
        acts.reserve(nl + 1);
        acts.push_back(x);
        for (std::size_t l = 0; l < nl; ++l) {
            Eigen::MatrixXd z = weights_[l] * acts.back();
            z.colwise() += biases_[l];
            if (l + 1 < nl) z = z.cwiseMax(0.0);
            acts.push_back(std::move(z));
        }
        MaskedLoss ml = masked_mse(acts.back(), target, mask);
        double loss = ml.loss;
        g.dw.resize(nl);
        g.db.resize(nl);
        Eigen::MatrixXd delta = std::move(ml.grad);
        for (std::size_t l = nl; l-- > 0;) {
            g.dw[l].noalias() = delta * acts[l].transpose();
            g.db[l] = delta.rowwise().sum();
            if (weight_decay != 0.0) {
                g.dw[l] += weight_decay * weights_[l];
                loss += 0.5 * weight_decay * weights_[l].squaredNorm();
            }
            if (l > 0) {
                Eigen::MatrixXd back = weights_[l].transpose() * delta;
                // ReLU derivative, read off the stored activation.
                delta = back.cwiseProduct(
                        (acts[l].array() > 0.0).cast<double>().matrix());
            }
        }
        return loss;
    }

private:
    std::vector<int> sizes_;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(const Mlp &net, AdamParams p = {}) : p_(p) {
        for (std::size_t l = 0; l < net.layers(); ++l) {
            const auto &w = net.weights()[l];
            mw_.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            vw_.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            mb_.push_back(Eigen::VectorXd::Zero(w.rows()));
            vb_.push_back(Eigen::VectorXd::Zero(w.rows()));
        }
    }

    void step(Mlp &net, const Mlp::Gradients &g, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(p_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(p_.beta2, double(t_));
        for (std::size_t l = 0; l < net.layers(); ++l) {
            update(net.weights()[l], mw_[l], vw_[l], g.dw[l], lr, c1, c2);
            update(net.biases()[l], mb_[l], vb_[l], g.db[l], lr, c1, c2);
        }
    }

private:
    template <class P, class G>
    void update(P &param, P &m, P &v, const G &grad, double lr, double c1,
            double c2) const {
        m = p_.beta1 * m + (1.0 - p_.beta1) * grad;
        v = p_.beta2 * v + (1.0 - p_.beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1)
                / ((v.array() / c2).sqrt() + p_.eps);
    }

    AdamParams p_;
    long t_ = 0;
    std::vector<Eigen::MatrixXd> mw_, vw_;
    std::vector<Eigen::VectorXd> mb_, vb_;
};

} // namespace convsel

#endif // CONVSEL_MLP_HPP
