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

#ifndef CONVSEL_TENSOR_HPP
#define CONVSEL_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "convsel/core.hpp"

namespace convsel {

// Square c x im x im activation tensor stored in one of three layouts.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(Layout layout, int channels, int size)
        : layout_(layout), c_(channels), im_(size) {
        if (channels < 1 || size < 1)
            fail(ErrorKind::shape, "tensor dimensions must be positive");
        data_.assign(static_cast<std::size_t>(channels) * size * size, 0.f);
    }
    Tensor3(Layout layout, int channels, int size, std::vector<float> data)
        : layout_(layout), c_(channels), im_(size), data_(std::move(data)) {
        if (channels < 1 || size < 1
                || data_.size()
                        != static_cast<std::size_t>(channels) * size * size)
            fail(ErrorKind::shape, "tensor data length does not match dims");
    }

    Layout layout() const { return layout_; }
    int channels() const { return c_; }
    int size() const { return im_; }

    std::size_t offset(int ch, int y, int x) const {
        return offset(layout_, c_, im_, ch, y, x);
    }

    static std::size_t offset(Layout l, int c, int im, int ch, int y, int x) {
        using sz = std::size_t;
        switch (l) {
            case Layout::chw: return (sz(ch) * im + y) * im + x;
            case Layout::hcw: return (sz(y) * c + ch) * im + x;
            case Layout::hwc: return (sz(y) * im + x) * c + ch;
        }
        return 0;
    }

    float &at(int ch, int y, int x) { return data_[offset(ch, y, x)]; }
    float at(int ch, int y, int x) const { return data_[offset(ch, y, x)]; }

    std::vector<float> &data() { return data_; }
    const std::vector<float> &data() const { return data_; }
    float *raw() { return data_.data(); }
    const float *raw() const { return data_.data(); }

private:
    Layout layout_ = Layout::chw;
    int c_ = 0;
    int im_ = 0;
    std::vector<float> data_;
};

// k kernels of shape c x f x f, stored [k][c][fy][fx].
class KernelSet {
public:
    KernelSet() = default;
    KernelSet(int kernels, int channels, int size)
        : k_(kernels), c_(channels), f_(size) {
        if (kernels < 1 || channels < 1 || size < 1)
            fail(ErrorKind::shape, "kernel dimensions must be positive");
        data_.assign(static_cast<std::size_t>(kernels) * channels * size * size,
                0.f);
    }
    KernelSet(int kernels, int channels, int size, std::vector<float> data)
        : k_(kernels), c_(channels), f_(size), data_(std::move(data)) {
        if (data_.size()
                != static_cast<std::size_t>(kernels) * channels * size * size)
            fail(ErrorKind::shape, "kernel data length does not match dims");
    }

    int count() const { return k_; }
    int channels() const { return c_; }
    int size() const { return f_; }

    float &at(int kk, int ch, int fy, int fx) {
        return data_[((std::size_t(kk) * c_ + ch) * f_ + fy) * f_ + fx];
    }
    float at(int kk, int ch, int fy, int fx) const {
        return data_[((std::size_t(kk) * c_ + ch) * f_ + fy) * f_ + fx];
    }

    const std::vector<float> &data() const { return data_; }
    std::vector<float> &data() { return data_; }

private:
    int k_ = 0;
    int c_ = 0;
    int f_ = 0;
    std::vector<float> data_;
};

inline Tensor3 transform_layout(const Tensor3 &t, Layout to) {
    if (t.layout() == to) return t;
    Tensor3 out(to, t.channels(), t.size());
    const int c = t.channels();
    const int im = t.size();
    const float *src = t.raw();
    float *dst = out.raw();
    // Walk the destination contiguously; the source side is strided.
    switch (to) {
        case Layout::chw:
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < im; ++y)
                    for (int x = 0; x < im; ++x)
                        *dst++ = src[Tensor3::offset(
                                t.layout(), c, im, ch, y, x)];
            break;
        case Layout::hcw:
            for (int y = 0; y < im; ++y)
                for (int ch = 0; ch < c; ++ch)
                    for (int x = 0; x < im; ++x)
                        *dst++ = src[Tensor3::offset(
                                t.layout(), c, im, ch, y, x)];
            break;
        case Layout::hwc:
            for (int y = 0; y < im; ++y)
                for (int x = 0; x < im; ++x)
                    for (int ch = 0; ch < c; ++ch)
                        *dst++ = src[Tensor3::offset(
                                t.layout(), c, im, ch, y, x)];
            break;
    }
    return out;
}

// Values drawn from a standard normal distribution.
inline Tensor3 random_tensor(Layout layout, int c, int im, std::uint64_t seed) {
    Tensor3 t(layout, c, im);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.f, 1.f);
    for (float &v : t.data()) v = dist(rng);
    return t;
}

inline KernelSet random_kernels(int k, int c, int f, std::uint64_t seed) {
    KernelSet ks(k, c, f);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.f, 1.f);
    for (float &v : ks.data()) v = dist(rng);
    return ks;
}

// max |a - b| / max |b|, after bringing both to b's layout.
inline double relative_max_abs_error(const Tensor3 &a, const Tensor3 &b) {
    if (a.channels() != b.channels() || a.size() != b.size())
        fail(ErrorKind::shape, "comparing tensors of different shape");
    Tensor3 an = transform_layout(a, b.layout());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < b.data().size(); ++i) {
        num = std::max(num,
                std::abs(double(an.data()[i]) - double(b.data()[i])));
        den = std::max(den, std::abs(double(b.data()[i])));
    }
    if (den == 0.0) return num;
    return num / den;
}

} // namespace convsel

#endif // CONVSEL_TENSOR_HPP
