#pragma once

#include <cstdint>

namespace terra::ad::detail {

// C[M,N] += A[M,K] * B[K,N], all row-major. Each output element accumulates
// its K products in increasing k; zero-padding K therefore leaves results
// bit-identical.
template <typename T>
inline void gemm_acc(int64_t m, int64_t n, int64_t k, const T* __restrict a, const T* __restrict b,
                     T* __restrict c) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
inline void transpose(int64_t rows, int64_t cols, const T* __restrict src, T* __restrict dst) {
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace terra::ad::detail
