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

#ifndef CONVSEL_WINOGRAD_HPP
#define CONVSEL_WINOGRAD_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "convsel/error.hpp"

namespace convsel {

// Transform matrices for the minimal-filtering algorithm F(m, r):
//   y = AT * [(G * g) .* (BT * d)]
// computes the m outputs of a 1-D correlation of an (m + r - 1)-long input
// d with an r-tap filter g. Nested twice for the 2-D case.
struct WinogradTransform {
    int m = 0;
    int r = 0;
    int alpha = 0;
    std::vector<float> AT; // m x alpha
    std::vector<float> G;  // alpha x r
    std::vector<float> BT; // alpha x alpha
};

// Toom-Cook construction over the finite interpolation points `points`
// plus the point at infinity. AT and G are the usual Vandermonde forms; BT
// is the unique solution of the correlation identity, found by least
// squares and checked to be exact.
inline WinogradTransform make_winograd(
        int m, int r, const std::vector<double> &points) {
    const int alpha = m + r - 1;
    if (static_cast<int>(points.size()) != alpha - 1)
        fail(ErrorKind::size, "winograd needs alpha - 1 finite points");

    Eigen::MatrixXd at = Eigen::MatrixXd::Zero(m, alpha);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(alpha, r);
    for (int j = 0; j < alpha - 1; ++j) {
        double norm = 1.0;
        for (int l = 0; l < alpha - 1; ++l)
            if (l != j) norm *= points[j] - points[l];
        for (int i = 0; i < m; ++i) at(i, j) = std::pow(points[j], i);
        for (int k = 0; k < r; ++k) g(j, k) = std::pow(points[j], k) / norm;
    }
    at(m - 1, alpha - 1) = 1.0;
    g(alpha - 1, r - 1) = 1.0;

    // Row (i, k) of E holds AT(i, j) * G(j, k); column l of BT must satisfy
    // E * BT(:, l) = [l == i + k].
    Eigen::MatrixXd e(m * r, alpha);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m * r, alpha);
    for (int i = 0; i < m; ++i)
        for (int k = 0; k < r; ++k) {
            for (int j = 0; j < alpha; ++j)
                e(i * r + k, j) = at(i, j) * g(j, k);
            rhs(i * r + k, i + k) = 1.0;
        }
    Eigen::MatrixXd bt = e.colPivHouseholderQr().solve(rhs);
    if ((e * bt - rhs).cwiseAbs().maxCoeff() > 1e-9)
        fail(ErrorKind::domain, "winograd points do not yield an exact "
                                "transform");

    WinogradTransform t;
    t.m = m;
    t.r = r;
    t.alpha = alpha;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < alpha; ++j)
            t.AT.push_back(static_cast<float>(at(i, j)));
    for (int j = 0; j < alpha; ++j)
        for (int k = 0; k < r; ++k)
            t.G.push_back(static_cast<float>(g(j, k)));
    for (int j = 0; j < alpha; ++j)
        for (int l = 0; l < alpha; ++l) {
            double v = bt(j, l);
            if (std::abs(v) < 1e-12) v = 0.0;
            t.BT.push_back(static_cast<float>(v));
        }
    return t;
}

inline const WinogradTransform &winograd_f2x3() {
    static const WinogradTransform t = make_winograd(2, 3, {0.0, 1.0, -1.0});
    return t;
}

inline const WinogradTransform &winograd_f2x5() {
    static const WinogradTransform t
            = make_winograd(2, 5, {0.0, 1.0, -1.0, 2.0, -2.0});
    return t;
}

} // namespace convsel

#endif // CONVSEL_WINOGRAD_HPP
