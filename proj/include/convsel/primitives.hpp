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

#ifndef CONVSEL_PRIMITIVES_HPP
#define CONVSEL_PRIMITIVES_HPP

#include <cstddef>
#include <vector>

#include "convsel/core.hpp"
#include "convsel/gemm.hpp"
#include "convsel/tensor.hpp"
#include "convsel/winograd.hpp"

namespace convsel {

namespace detail {

inline void check_shapes(const Tensor3 &input, const KernelSet &kernels,
        const LayerConfig &cfg) {
    if (input.channels() != cfg.c || input.size() != cfg.im)
        fail(ErrorKind::shape,
                "input is " + std::to_string(input.channels()) + "x"
                        + std::to_string(input.size()) + "x"
                        + std::to_string(input.size()) + ", config expects "
                        + cfg.str());
    if (kernels.count() != cfg.k || kernels.channels() != cfg.c
            || kernels.size() != cfg.f)
        fail(ErrorKind::shape, "kernel set does not match " + cfg.str());
}

inline Tensor3 conv_im2col(
        const Tensor3 &in, const KernelSet &ker, const LayerConfig &cfg) {
    const int o = output_dims(cfg);
    const int f = cfg.f, s = cfg.s, c = cfg.c, im = cfg.im;
    const int rows = c * f * f;
    const int cols = o * o;
    std::vector<float> col(std::size_t(rows) * cols);
    const float *src = in.raw();
    for (int ch = 0; ch < c; ++ch)
        for (int fy = 0; fy < f; ++fy)
            for (int fx = 0; fx < f; ++fx) {
                float *dst = col.data()
                        + std::size_t((ch * f + fy) * f + fx) * cols;
                for (int y = 0; y < o; ++y) {
                    const float *row
                            = src + (std::size_t(ch) * im + y * s + fy) * im + fx;
                    for (int x = 0; x < o; ++x)
                        *dst++ = row[x * s];
                }
            }
    Tensor3 out(Layout::chw, cfg.k, o);
    gemm(cfg.k, cols, rows, ker.data().data(), rows, col.data(), cols,
            out.raw(), cols);
    return out;
}

inline Tensor3 conv_im2row(
        const Tensor3 &in, const KernelSet &ker, const LayerConfig &cfg) {
    const int o = output_dims(cfg);
    const int f = cfg.f, s = cfg.s, c = cfg.c, im = cfg.im, k = cfg.k;
    const int width = f * f * c;
    std::vector<float> rowmat(std::size_t(o) * o * width);
    const float *src = in.raw();
    float *dst = rowmat.data();
    for (int y = 0; y < o; ++y)
        for (int x = 0; x < o; ++x)
            for (int fy = 0; fy < f; ++fy) {
                const float *p
                        = src + (std::size_t(y * s + fy) * im + x * s) * c;
                std::copy(p, p + std::size_t(f) * c, dst);
                dst += std::size_t(f) * c;
            }
    std::vector<float> w(std::size_t(width) * k);
    for (int kk = 0; kk < k; ++kk)
        for (int ch = 0; ch < c; ++ch)
            for (int fy = 0; fy < f; ++fy)
                for (int fx = 0; fx < f; ++fx)
                    w[std::size_t((fy * f + fx) * c + ch) * k + kk]
                            = ker.at(kk, ch, fy, fx);
    Tensor3 out(Layout::hwc, k, o);
    gemm(o * o, k, width, rowmat.data(), width, w.data(), k, out.raw(), k);
    return out;
}

inline Tensor3 conv_kn2row(
        const Tensor3 &in, const KernelSet &ker, const LayerConfig &cfg) {
    const int o = output_dims(cfg);
    const int f = cfg.f, c = cfg.c, im = cfg.im, k = cfg.k;
    const int plane = im * im;
    std::vector<float> slice(std::size_t(k) * c);
    std::vector<float> partial(std::size_t(k) * plane);
    Tensor3 out(Layout::chw, k, o);
    float *dst = out.raw();
    for (int fy = 0; fy < f; ++fy)
        for (int fx = 0; fx < f; ++fx) {
            for (int kk = 0; kk < k; ++kk)
                for (int ch = 0; ch < c; ++ch)
                    slice[std::size_t(kk) * c + ch] = ker.at(kk, ch, fy, fx);
            gemm(k, plane, c, slice.data(), c, in.raw(), plane,
                    partial.data(), plane);
            // Shift-add the 1x1 partial result into the output.
            for (int kk = 0; kk < k; ++kk) {
                const float *p = partial.data() + std::size_t(kk) * plane;
                float *q = dst + std::size_t(kk) * o * o;
                for (int y = 0; y < o; ++y) {
                    const float *pr = p + std::size_t(y + fy) * im + fx;
                    float *qr = q + std::size_t(y) * o;
                    for (int x = 0; x < o; ++x) qr[x] += pr[x];
                }
            }
        }
    return out;
}

inline Tensor3 conv_kn2col(
        const Tensor3 &in, const KernelSet &ker, const LayerConfig &cfg) {
    const int o = output_dims(cfg);
    const int f = cfg.f, c = cfg.c, im = cfg.im, k = cfg.k;
    const int pixels = im * im;
    std::vector<float> slice(std::size_t(c) * k);
    std::vector<float> partial(std::size_t(pixels) * k);
    Tensor3 out(Layout::hwc, k, o);
    float *dst = out.raw();
    for (int fy = 0; fy < f; ++fy)
        for (int fx = 0; fx < f; ++fx) {
            for (int ch = 0; ch < c; ++ch)
                for (int kk = 0; kk < k; ++kk)
                    slice[std::size_t(ch) * k + kk] = ker.at(kk, ch, fy, fx);
            gemm(pixels, k, c, in.raw(), c, slice.data(), k, partial.data(),
                    k);
            for (int y = 0; y < o; ++y)
                for (int x = 0; x < o; ++x) {
                    const float *p = partial.data()
                            + (std::size_t(y + fy) * im + x + fx) * k;
                    float *q = dst + (std::size_t(y) * o + x) * k;
                    for (int kk = 0; kk < k; ++kk) q[kk] += p[kk];
                }
        }
    return out;
}

inline Tensor3 conv_1x1(
        const Tensor3 &in, const KernelSet &ker, const LayerConfig &cfg) {
    const int o = output_dims(cfg);
    const int c = cfg.c, k = cfg.k, s = cfg.s, im = cfg.im;
    std::vector<float> sub;
    const float *x = in.raw();
    if (s != 1) {
        sub.resize(std::size_t(o) * o * c);
        float *dst = sub.data();
        for (int y = 0; y < o; ++y)
            for (int xx = 0; xx < o; ++xx) {
                const float *p = in.raw() + (std::size_t(y * s) * im + xx * s) * c;
                std::copy(p, p + c, dst);
                dst += c;
            }
        x = sub.data();
    }
    std::vector<float> w(std::size_t(c) * k);
    for (int kk = 0; kk < k; ++kk)
        for (int ch = 0; ch < c; ++ch)
            w[std::size_t(ch) * k + kk] = ker.at(kk, ch, 0, 0);
    Tensor3 out(Layout::hwc, k, o);
    gemm(o * o, k, c, x, c, w.data(), k, out.raw(), k);
    return out;
}

// Memory-efficient lowering: one lowered row per output column, shared by
// every output row through an offset view into the same buffer.
inline Tensor3 conv_mec(
        const Tensor3 &in, const KernelSet &ker, const LayerConfig &cfg) {
    const int o = output_dims(cfg);
    const int f = cfg.f, s = cfg.s, c = cfg.c, im = cfg.im, k = cfg.k;
    const int lda = im * c * f;
    std::vector<float> lowered(std::size_t(o) * lda);
    const float *src = in.raw();
    for (int x = 0; x < o; ++x) {
        float *dst = lowered.data() + std::size_t(x) * lda;
        for (int yy = 0; yy < im; ++yy)
            for (int ch = 0; ch < c; ++ch) {
                const float *p
                        = src + (std::size_t(yy) * c + ch) * im + x * s;
                std::copy(p, p + f, dst);
                dst += f;
            }
    }
    const int depth = f * c * f;
    std::vector<float> w(std::size_t(depth) * k);
    for (int kk = 0; kk < k; ++kk)
        for (int ch = 0; ch < c; ++ch)
            for (int fy = 0; fy < f; ++fy)
                for (int fx = 0; fx < f; ++fx)
                    w[std::size_t((fy * c + ch) * f + fx) * k + kk]
                            = ker.at(kk, ch, fy, fx);
    Tensor3 out(Layout::hwc, k, o);
    for (int y = 0; y < o; ++y)
        gemm(o, k, depth, lowered.data() + std::size_t(y) * s * c * f, lda,
                w.data(), k, out.raw() + std::size_t(y) * o * k, k);
    return out;
}

inline float direct_point(const Tensor3 &in, const KernelSet &ker,
        const LayerConfig &cfg, int kk, int y, int x) {
    float acc = 0.f;
    for (int ch = 0; ch < cfg.c; ++ch)
        for (int fy = 0; fy < cfg.f; ++fy)
            for (int fx = 0; fx < cfg.f; ++fx)
                acc += in.at(ch, y * cfg.s + fy, x * cfg.s + fx)
                        * ker.at(kk, ch, fy, fx);
    return acc;
}

inline Tensor3 conv_winograd(const Tensor3 &in, const KernelSet &ker,
        const LayerConfig &cfg, const WinogradTransform &wt) {
    const int o = output_dims(cfg);
    const int c = cfg.c, k = cfg.k, im = cfg.im;
    const int m = wt.m, r = wt.r, a = wt.alpha;
    const int a2 = a * a;
    const int tiles1 = o / m;
    const int tiles = tiles1 * tiles1;
    Tensor3 out(Layout::chw, k, o);

    if (tiles > 0) {
        // U[xi][kk][ch] = (G g G^T)[xi]
        std::vector<float> u(std::size_t(a2) * k * c);
        std::vector<float> tmp(std::size_t(a) * r);
        for (int kk = 0; kk < k; ++kk)
            for (int ch = 0; ch < c; ++ch) {
                for (int i = 0; i < a; ++i)
                    for (int j = 0; j < r; ++j) {
                        float acc = 0.f;
                        for (int l = 0; l < r; ++l)
                            acc += wt.G[i * r + l] * ker.at(kk, ch, l, j);
                        tmp[i * r + j] = acc;
                    }
                for (int i = 0; i < a; ++i)
                    for (int j = 0; j < a; ++j) {
                        float acc = 0.f;
                        for (int l = 0; l < r; ++l)
                            acc += tmp[i * r + l] * wt.G[j * r + l];
                        u[(std::size_t(i * a + j) * k + kk) * c + ch] = acc;
                    }
            }

        // V[xi][ch][t] = (BT d B)[xi]
        std::vector<float> v(std::size_t(a2) * c * tiles);
        std::vector<float> d(static_cast<std::size_t>(a2));
        std::vector<float> td(static_cast<std::size_t>(a2));
        for (int ch = 0; ch < c; ++ch)
            for (int ty = 0; ty < tiles1; ++ty)
                for (int tx = 0; tx < tiles1; ++tx) {
                    const int t = ty * tiles1 + tx;
                    for (int i = 0; i < a; ++i)
                        for (int j = 0; j < a; ++j)
                            d[i * a + j] = in.at(ch, ty * m + i, tx * m + j);
                    for (int i = 0; i < a; ++i)
                        for (int j = 0; j < a; ++j) {
                            float acc = 0.f;
                            for (int l = 0; l < a; ++l)
                                acc += wt.BT[i * a + l] * d[l * a + j];
                            td[i * a + j] = acc;
                        }
                    for (int i = 0; i < a; ++i)
                        for (int j = 0; j < a; ++j) {
                            float acc = 0.f;
                            for (int l = 0; l < a; ++l)
                                acc += td[i * a + l] * wt.BT[j * a + l];
                            v[(std::size_t(i * a + j) * c + ch) * tiles + t]
                                    = acc;
                        }
                }

        // One (k x c) * (c x tiles) product per transform-domain point.
        std::vector<float> prod(std::size_t(a2) * k * tiles);
        for (int xi = 0; xi < a2; ++xi)
            gemm(k, tiles, c, u.data() + std::size_t(xi) * k * c, c,
                    v.data() + std::size_t(xi) * c * tiles, tiles,
                    prod.data() + std::size_t(xi) * k * tiles, tiles);

        // Y = AT M A
        std::vector<float> mt(static_cast<std::size_t>(a2));
        std::vector<float> half(std::size_t(m) * a);
        for (int kk = 0; kk < k; ++kk)
            for (int t = 0; t < tiles; ++t) {
                for (int xi = 0; xi < a2; ++xi)
                    mt[xi] = prod[(std::size_t(xi) * k + kk) * tiles + t];
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < a; ++j) {
                        float acc = 0.f;
                        for (int l = 0; l < a; ++l)
                            acc += wt.AT[i * a + l] * mt[l * a + j];
                        half[i * a + j] = acc;
                    }
                const int ty = t / tiles1, tx = t % tiles1;
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < m; ++j) {
                        float acc = 0.f;
                        for (int l = 0; l < a; ++l)
                            acc += half[i * a + l] * wt.AT[j * a + l];
                        out.at(kk, ty * m + i, tx * m + j) = acc;
                    }
            }
    }

    // Partial trailing tiles fall back to direct computation.
    const int covered = tiles1 * m;
    for (int kk = 0; kk < k; ++kk)
        for (int y = 0; y < o; ++y)
            for (int x = 0; x < o; ++x)
                if (y >= covered || x >= covered)
                    out.at(kk, y, x) = direct_point(in, ker, cfg, kk, y, x);
    return out;
}

} // namespace detail

// Reference convolution: six nested loops over a CHW input.
inline Tensor3 direct_conv(
        const Tensor3 &input, const KernelSet &kernels, const LayerConfig &cfg) {
    validate(cfg);
    detail::check_shapes(input, kernels, cfg);
    if (input.layout() != Layout::chw)
        fail(ErrorKind::layout, "direct convolution expects chw input");
    const int o = output_dims(cfg);
    const int c = cfg.c, f = cfg.f, s = cfg.s, im = cfg.im;
    Tensor3 out(Layout::chw, cfg.k, o);
    const float *src = input.raw();
    const float *w = kernels.data().data();
    float *dst = out.raw();
    for (int kk = 0; kk < cfg.k; ++kk)
        for (int y = 0; y < o; ++y)
            for (int x = 0; x < o; ++x) {
                float acc = 0.f;
                for (int ch = 0; ch < c; ++ch)
                    for (int fy = 0; fy < f; ++fy)
                        for (int fx = 0; fx < f; ++fx)
                            acc += src[(std::size_t(ch) * im + y * s + fy) * im
                                           + x * s + fx]
                                    * w[((std::size_t(kk) * c + ch) * f + fy)
                                                    * f
                                            + fx];
                dst[(std::size_t(kk) * o + y) * o + x] = acc;
            }
    return out;
}

// Runs primitive `p`. The input must already be in p's input layout; the
// result comes back in p's output layout.
inline Tensor3 run_primitive(PrimitiveId p, const Tensor3 &input,
        const KernelSet &kernels, const LayerConfig &cfg) {
    validate(cfg);
    const PrimitiveSpec &spec = spec_of(p);
    if (!applicable(p, cfg))
        fail(ErrorKind::applicability,
                to_string(p) + " cannot run " + cfg.str());
    if (input.layout() != spec.input_layout)
        fail(ErrorKind::layout,
                to_string(p) + " expects " + to_string(spec.input_layout)
                        + " input, got " + to_string(input.layout()));
    detail::check_shapes(input, kernels, cfg);
    switch (p) {
        case PrimitiveId::direct_sum2d: return direct_conv(input, kernels, cfg);
        case PrimitiveId::im2col_copy:
            return detail::conv_im2col(input, kernels, cfg);
        case PrimitiveId::im2row_copy:
            return detail::conv_im2row(input, kernels, cfg);
        case PrimitiveId::kn2row: return detail::conv_kn2row(input, kernels, cfg);
        case PrimitiveId::kn2col: return detail::conv_kn2col(input, kernels, cfg);
        case PrimitiveId::winograd_3x3:
            return detail::conv_winograd(input, kernels, cfg, winograd_f2x3());
        case PrimitiveId::winograd_5x5:
            return detail::conv_winograd(input, kernels, cfg, winograd_f2x5());
        case PrimitiveId::conv_1x1_gemm:
            return detail::conv_1x1(input, kernels, cfg);
        case PrimitiveId::mec_col: return detail::conv_mec(input, kernels, cfg);
    }
    fail(ErrorKind::lookup, "unhandled primitive");
}

} // namespace convsel

#endif // CONVSEL_PRIMITIVES_HPP
