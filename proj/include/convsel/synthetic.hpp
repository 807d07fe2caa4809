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

// Analytic cost generators used to test the models without hardware noise.

#ifndef CONVSEL_SYNTHETIC_HPP
#define CONVSEL_SYNTHETIC_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "convsel/core.hpp"
#include "convsel/dataset.hpp"

namespace convsel::synthetic {

inline double flops(const LayerConfig &cfg) {
    const double o = output_dims(cfg);
    return double(cfg.k) * cfg.c * o * o * cfg.f * cfg.f;
}

// Multiplicative cost law 1e-9 * k * c * im^2 * f^2 / s^2.
inline double product_oracle(const LayerConfig &cfg) {
    return 1e-9 * cfg.k * cfg.c * double(cfg.im) * cfg.im * cfg.f * cfg.f
            / (double(cfg.s) * cfg.s);
}

// Sum of two product terms; no longer linear after taking logs.
inline double two_term_oracle(const LayerConfig &cfg) {
    return product_oracle(cfg) + 1e-6 * cfg.c * double(cfg.im) * cfg.im;
}

// Distinct valid configs with k, c and im log-uniform, f in {1,3,5},
// s in {1,2}.
inline std::vector<LayerConfig> random_configs(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto log_int = [&](int lo, int hi) {
        std::uniform_real_distribution<double> u(std::log(lo), std::log(hi + 1.0));
        return std::min(hi, int(std::exp(u(rng))));
    };
    std::uniform_int_distribution<int> pick_f(0, 2), pick_s(1, 2);
    std::set<LayerConfig> seen;
    std::vector<LayerConfig> out;
    while (out.size() < n) {
        LayerConfig cfg;
        cfg.k = log_int(1, 512);
        cfg.c = log_int(1, 512);
        cfg.f = 2 * pick_f(rng) + 1;
        cfg.s = pick_s(rng);
        cfg.im = log_int(std::max(cfg.f, cfg.s), 128);
        if (!cfg.is_valid() || !seen.insert(cfg).second) continue;
        out.push_back(cfg);
    }
    return out;
}

// One column named `column`, times = law(cfg) * (1 + noise * N(0,1)).
inline ProfileDataset oracle_dataset(const std::vector<LayerConfig> &configs,
        const std::function<double(const LayerConfig &)> &law, double noise,
        std::uint64_t seed, const std::string &column = "oracle") {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    ProfileDataset ds;
    ds.columns = {column};
    for (const auto &cfg : configs) {
        const double t = law(cfg) * std::max(0.5, 1.0 + noise * z(rng));
        ds.records.push_back({cfg, {t}});
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Multi-primitive platforms.

// Smooth per-primitive cost law: a compute term, a data-movement term and
// a fixed call overhead. Undefined where the primitive cannot run.
inline double platform_a_seconds(PrimitiveId p, const LayerConfig &cfg) {
    const double o = output_dims(cfg);
    const double fl = flops(cfg);
    const double k = cfg.k, c = cfg.c, f = cfg.f, im = cfg.im;
    switch (p) {
        case PrimitiveId::direct_sum2d: return 1.0e-9 * fl * (1.0 + 4.0 / f) + 1e-6;
        case PrimitiveId::im2col_copy: return 2.0e-10 * fl + 1.0e-9 * c * f * f * o * o + 2e-6;
        case PrimitiveId::im2row_copy: return 2.2e-10 * fl + 0.8e-9 * c * f * f * o * o + 2e-6;
        case PrimitiveId::kn2row: return 2.5e-10 * fl + 2.0e-9 * k * f * f * o * o + 3e-6;
        case PrimitiveId::kn2col: return 2.8e-10 * fl + 1.5e-9 * k * f * f * o * o + 3e-6;
        case PrimitiveId::winograd_3x3: return 1.2e-10 * fl + 3.0e-9 * (c + k) * o * o + 4e-6;
        case PrimitiveId::winograd_5x5: return 0.9e-10 * fl + 5.0e-9 * (c + k) * o * o + 4e-6;
        case PrimitiveId::conv_1x1_gemm: return 1.5e-10 * fl + 1.0e-9 * c * im * im + 1e-6;
        case PrimitiveId::mec_col: return 1.8e-10 * fl + 1.0e-9 * c * f * im * o + 2e-6;
    }
    return 0.0;
}

// All nine primitives as columns, with 1% multiplicative noise.
inline ProfileDataset platform_a(
        const std::vector<LayerConfig> &configs, std::uint64_t seed, double noise = 0.01) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    ProfileDataset ds;
    ds.columns = primitive_names();
    for (const auto &cfg : configs) {
        ProfileRecord rec {cfg, {}};
        for (const auto &spec : primitive_registry) {
            const double eps = z(rng);
            if (applicable(spec.id, cfg))
                rec.times.emplace_back(platform_a_seconds(spec.id, cfg)
                        * std::max(0.5, 1.0 + noise * eps));
            else
                rec.times.emplace_back(std::nullopt);
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

// Per-family scale factors, log-uniform in [lo, hi]. Primitives of one
// family share a factor, and both Winograd families share one as well.
inline std::map<std::string, double> platform_factors(
        std::uint64_t seed, double lo = 0.5, double hi = 4.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    std::array<double, all_families.size()> fam {};
    for (auto &v : fam) v = std::exp(u(rng));
    fam[std::size_t(Family::wino5)] = fam[std::size_t(Family::wino3)];
    std::map<std::string, double> out;
    for (const auto &spec : primitive_registry)
        out[std::string(spec.name)] = fam[std::size_t(spec.family)];
    return out;
}

// Smooth config-dependent multiplier in [1 - amplitude, 1 + amplitude].
inline double perturbation(const LayerConfig &cfg, std::size_t column,
        std::uint64_t seed, double amplitude) {
    const double phase = double(mix_seed(seed + column) % 6283) / 1000.0;
    return 1.0
            + amplitude
            * std::sin(1.3 * std::log(double(cfg.k)) + 0.7 * std::log(double(cfg.c))
                    - 0.9 * std::log(double(cfg.im)) + 0.5 * cfg.f + phase);
}

// Second platform: each column of `a` scaled by its factor and by a 5%
// config-dependent perturbation.
inline ProfileDataset platform_b(const ProfileDataset &a,
        const std::map<std::string, double> &factors, std::uint64_t seed,
        double amplitude = 0.05) {
    ProfileDataset b = a;
    for (auto &rec : b.records)
        for (std::size_t c = 0; c < b.columns.size(); ++c) {
            if (!rec.times[c]) continue;
            auto it = factors.find(b.columns[c]);
            const double scale = it == factors.end() ? 1.0 : it->second;
            *rec.times[c] *= scale * perturbation(rec.config, c, seed, amplitude);
        }
    return b;
}

} // namespace convsel::synthetic

#endif // CONVSEL_SYNTHETIC_HPP
