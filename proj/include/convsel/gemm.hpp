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

#ifndef CONVSEL_GEMM_HPP
#define CONVSEL_GEMM_HPP

#include <algorithm>
#include <cstddef>

namespace convsel {

// C[M x N] (+)= A[M x K] * B[K x N], all row-major with explicit leading
// dimensions. Plain blocked i-k-j loops; the innermost loop runs along
// contiguous rows of B and C so the compiler can vectorize it.
inline void gemm(int M, int N, int K, const float *A, int lda, const float *B,
        int ldb, float *C, int ldc, bool accumulate = false) {
    constexpr int kb = 128;
    constexpr int nb = 512;
    if (!accumulate)
        for (int i = 0; i < M; ++i)
            std::fill(C + std::size_t(i) * ldc, C + std::size_t(i) * ldc + N,
                    0.f);
    for (int n0 = 0; n0 < N; n0 += nb) {
        const int n1 = std::min(N, n0 + nb);
        for (int k0 = 0; k0 < K; k0 += kb) {
            const int k1 = std::min(K, k0 + kb);
            for (int i = 0; i < M; ++i) {
                float *c = C + std::size_t(i) * ldc;
                const float *a = A + std::size_t(i) * lda;
                for (int p = k0; p < k1; ++p) {
                    const float av = a[p];
                    const float *b = B + std::size_t(p) * ldb;
                    for (int j = n0; j < n1; ++j)
                        c[j] += av * b[j];
                }
            }
        }
    }
}

} // namespace convsel

#endif // CONVSEL_GEMM_HPP
