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

#ifndef CONVSEL_STATS_HPP
#define CONVSEL_STATS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "convsel/error.hpp"

namespace convsel {

// Median with the lower-middle element for even lengths, so the result is
// always one of the inputs.
inline double lower_median(std::vector<double> values) {
    if (values.empty()) fail(ErrorKind::size, "median of an empty sequence");
    auto mid = values.begin() + (values.size() - 1) / 2;
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

// Median relative absolute error, |pred - truth| / truth.
inline double mdrae(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size())
        fail(ErrorKind::size, "mdrae: prediction and truth lengths differ");
    if (truth.empty()) fail(ErrorKind::size, "mdrae of an empty set");
    std::vector<double> rel;
    rel.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!(truth[i] > 0.0))
            fail(ErrorKind::domain, "mdrae: non-positive ground truth");
        rel.push_back(std::abs(pred[i] - truth[i]) / truth[i]);
    }
    return lower_median(std::move(rel));
}

} // namespace convsel

#endif // CONVSEL_STATS_HPP
