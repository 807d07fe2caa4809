// Copyright 2026 The convsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "convsel/primitives.hpp"
#include "test_support.hpp"

using namespace convsel;

namespace {

Tensor3 prepare(const Tensor3 &chw, PrimitiveId p) {
    return transform_layout(chw, spec_of(p).input_layout);
}

} // namespace

TEST(DirectConv, ScalarProduct) {
    LayerConfig cfg {1, 1, 1, 1, 1};
    auto out = direct_conv(Tensor3(Layout::chw, 1, 1, {3.f}),
            KernelSet(1, 1, 1, {4.f}), cfg);
    ASSERT_EQ(out.data().size(), 1u);
    EXPECT_EQ(out.data()[0], 12.f);
}

TEST(DirectConv, SumOfOnes) {
    LayerConfig cfg {1, 1, 3, 3, 1};
    auto out = direct_conv(Tensor3(Layout::chw, 1, 3, std::vector<float>(9, 1.f)),
            KernelSet(1, 1, 3, std::vector<float>(9, 1.f)), cfg);
    ASSERT_EQ(out.size(), 1);
    EXPECT_EQ(out.data()[0], 9.f);
}

TEST(DirectConv, SlidingWindowSums) {
    std::vector<float> in(16);
    std::iota(in.begin(), in.end(), 1.f);
    LayerConfig cfg {1, 1, 4, 3, 1};
    auto out = direct_conv(Tensor3(Layout::chw, 1, 4, in),
            KernelSet(1, 1, 3, std::vector<float>(9, 1.f)), cfg);
    EXPECT_EQ(out.data(), (std::vector<float> {54.f, 63.f, 90.f, 99.f}));
}

TEST(DirectConv, ShapeMismatch) {
    LayerConfig cfg {1, 2, 4, 3, 1};
    try {
        direct_conv(Tensor3(Layout::chw, 1, 4), KernelSet(1, 2, 3), cfg);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape);
    }
    EXPECT_THROW(direct_conv(Tensor3(Layout::chw, 2, 4), KernelSet(2, 2, 3),
                         cfg),
            Error);
}

TEST(RunPrimitive, MatchesDirectOnRandomConfigs) {
    std::mt19937_64 rng(2024);
    for (const auto &spec : primitive_registry) {
        for (int trial = 0; trial < 50; ++trial) {
            LayerConfig cfg = testing_support::random_applicable_config(spec.id, rng);
            auto in = random_tensor(Layout::chw, cfg.c, cfg.im, rng());
            auto ker = random_kernels(cfg.k, cfg.c, cfg.f, rng());
            auto ref = direct_conv(in, ker, cfg);
            auto out = run_primitive(spec.id, prepare(in, spec.id), ker, cfg);
            EXPECT_EQ(out.layout(), spec.output_layout);
            EXPECT_EQ(out.channels(), cfg.k);
            EXPECT_EQ(out.size(), output_dims(cfg));
            EXPECT_LE(relative_max_abs_error(out, ref), 1e-4)
                    << spec.name << " " << cfg.str();
        }
    }
}

TEST(RunPrimitive, WinogradSmallestTile) {
    LayerConfig cfg {1, 1, 4, 3, 1};
    auto in = random_tensor(Layout::chw, 1, 4, 11);
    auto ker = random_kernels(1, 1, 3, 12);
    auto out = run_primitive(PrimitiveId::winograd_3x3, in, ker, cfg);
    EXPECT_LE(relative_max_abs_error(out, direct_conv(in, ker, cfg)), 1e-4);
}

TEST(RunPrimitive, WinogradOddOutputUsesDirectTail) {
    for (auto p : {PrimitiveId::winograd_3x3, PrimitiveId::winograd_5x5}) {
        int f = spec_of(p).family == Family::wino3 ? 3 : 5;
        LayerConfig cfg {3, 2, f + 4, f, 1}; // output 5x5: two tiles + tail
        auto in = random_tensor(Layout::chw, 2, cfg.im, 5);
        auto ker = random_kernels(3, 2, f, 6);
        auto out = run_primitive(p, in, ker, cfg);
        EXPECT_LE(relative_max_abs_error(out, direct_conv(in, ker, cfg)), 1e-4);
    }
}

TEST(RunPrimitive, Strided1x1Subsamples) {
    LayerConfig cfg {5, 7, 13, 1, 2};
    auto in = random_tensor(Layout::chw, 7, 13, 99);
    auto ker = random_kernels(5, 7, 1, 98);
    auto out = run_primitive(PrimitiveId::conv_1x1_gemm,
            transform_layout(in, Layout::hwc), ker, cfg);
    EXPECT_EQ(out.size(), 7);
    EXPECT_LE(relative_max_abs_error(out, direct_conv(in, ker, cfg)), 1e-4);
}

TEST(RunPrimitive, WinogradExactOnLinearSignals) {
    for (auto p : {PrimitiveId::winograd_3x3, PrimitiveId::winograd_5x5}) {
        int f = spec_of(p).family == Family::wino3 ? 3 : 5;
        LayerConfig cfg {2, 2, 12, f, 1};
        Tensor3 in(Layout::chw, 2, 12);
        for (int ch = 0; ch < 2; ++ch)
            for (int y = 0; y < 12; ++y)
                for (int x = 0; x < 12; ++x)
                    in.at(ch, y, x) = 0.5f + 0.25f * ch + 0.125f * y - 0.0625f * x;
        auto ker = random_kernels(2, 2, f, 3);
        auto out = run_primitive(p, in, ker, cfg);
        // Reference in double precision.
        const int o = output_dims(cfg);
        double worst = 0, scale = 0;
        for (int kk = 0; kk < 2; ++kk)
            for (int y = 0; y < o; ++y)
                for (int x = 0; x < o; ++x) {
                    double acc = 0;
                    for (int ch = 0; ch < 2; ++ch)
                        for (int fy = 0; fy < f; ++fy)
                            for (int fx = 0; fx < f; ++fx)
                                acc += double(in.at(ch, y + fy, x + fx))
                                        * ker.at(kk, ch, fy, fx);
                    worst = std::max(worst, std::abs(acc - out.at(kk, y, x)));
                    scale = std::max(scale, std::abs(acc));
                }
        EXPECT_LE(worst / scale, 2e-6) << spec_of(p).name;
    }
}

TEST(RunPrimitive, Errors) {
    LayerConfig strided {2, 2, 9, 3, 2};
    auto in = random_tensor(Layout::chw, 2, 9, 1);
    auto ker = random_kernels(2, 2, 3, 2);
    try {
        run_primitive(PrimitiveId::winograd_3x3, in, ker, strided);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::applicability);
    }
    try {
        run_primitive(PrimitiveId::im2row_copy, in, ker, strided);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::layout);
    }
}

TEST(Winograd, TransformsAreExactForCorrelation) {
    for (const auto *t : {&winograd_f2x3(), &winograd_f2x5()}) {
        std::mt19937_64 rng(t->r);
        std::normal_distribution<double> n(0, 1);
        std::vector<double> d(t->alpha), g(t->r);
        for (auto &v : d) v = n(rng);
        for (auto &v : g) v = n(rng);
        for (int i = 0; i < t->m; ++i) {
            double ref = 0;
            for (int k = 0; k < t->r; ++k) ref += d[i + k] * g[k];
            double got = 0;
            for (int j = 0; j < t->alpha; ++j) {
                double gg = 0, dd = 0;
                for (int k = 0; k < t->r; ++k) gg += t->G[j * t->r + k] * g[k];
                for (int l = 0; l < t->alpha; ++l)
                    dd += t->BT[j * t->alpha + l] * d[l];
                got += t->AT[i * t->alpha + j] * gg * dd;
            }
            EXPECT_NEAR(got, ref, 1e-5);
        }
    }
}

TEST(TransformLayout, IdentityAndKnownPermutation) {
    Tensor3 t(Layout::chw, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    EXPECT_EQ(transform_layout(t, Layout::chw).data(), t.data());
    auto hwc = transform_layout(t, Layout::hwc);
    EXPECT_EQ(hwc.layout(), Layout::hwc);
    EXPECT_EQ(hwc.data(), (std::vector<float> {1, 5, 2, 6, 3, 7, 4, 8}));
    EXPECT_EQ(transform_layout(hwc, Layout::chw).data(), t.data());
}

TEST(TransformLayout, BijectionsPreserveValues) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        int c = std::uniform_int_distribution<int>(1, 9)(rng);
        int im = std::uniform_int_distribution<int>(1, 9)(rng);
        for (Layout from : all_layouts) {
            auto t = random_tensor(from, c, im, rng());
            for (Layout to : all_layouts) {
                auto u = transform_layout(t, to);
                for (int ch = 0; ch < c; ++ch)
                    for (int y = 0; y < im; ++y)
                        for (int x = 0; x < im; ++x)
                            ASSERT_EQ(u.at(ch, y, x), t.at(ch, y, x));
                EXPECT_EQ(transform_layout(u, from).data(), t.data());
                auto a = t.data(), b = u.data();
                std::sort(a.begin(), a.end());
                std::sort(b.begin(), b.end());
                EXPECT_EQ(a, b);
            }
        }
    }
}

TEST(Tensor3, MalformedData) {
    EXPECT_THROW(Tensor3(Layout::chw, 2, 2, std::vector<float>(7)), Error);
    EXPECT_THROW(KernelSet(2, 2, 3, std::vector<float>(17)), Error);
}
