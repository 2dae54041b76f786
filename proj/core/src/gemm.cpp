#include "aal/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace aal {

namespace {

// One 64-byte SIMD register worth of T.
template <typename T>
using Vec [[gnu::vector_size(64)]] = T;

template <typename T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
inline void store(T* p, Vec<T> v) {
  std::memcpy(p, &v, sizeof v);
}

// C[i0:i0+MR, j0:j0+NV*W] += A[i0:i0+MR, :] · B[:, j0:j0+NV*W] with the
// tile held in registers; p runs in ascending order for every element.
template <typename T, std::size_t MR, std::size_t NV>
void tile(std::size_t n, std::size_t k, const T* __restrict a, const T* __restrict b, T* __restrict c) {
  constexpr std::size_t W = 64 / sizeof(T);
  Vec<T> acc[MR][NV];
#pragma GCC unroll 8
  for (std::size_t r = 0; r < MR; ++r)
#pragma GCC unroll 2
    for (std::size_t v = 0; v < NV; ++v) acc[r][v] = load<T>(c + r * n + v * W);
  for (std::size_t p = 0; p < k; ++p) {
    Vec<T> bv[NV];
#pragma GCC unroll 2
    for (std::size_t v = 0; v < NV; ++v) bv[v] = load<T>(b + p * n + v * W);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < MR; ++r) {
      const T av = a[r * k + p];
#pragma GCC unroll 2
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
    }
  }
#pragma GCC unroll 8
  for (std::size_t r = 0; r < MR; ++r)
#pragma GCC unroll 2
    for (std::size_t v = 0; v < NV; ++v) store<T>(c + r * n + v * W, acc[r][v]);
}

template <typename T, std::size_t NV>
void column_panel(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  constexpr std::size_t MR = 6;
  std::size_t i0 = 0;
  for (; i0 + MR <= m; i0 += MR) tile<T, MR, NV>(n, k, a + i0 * k, b, c + i0 * n);
  const T* ar = a + i0 * k;
  T* cr = c + i0 * n;
  switch (m - i0) {
    case 5: tile<T, 5, NV>(n, k, ar, b, cr); break;
    case 4: tile<T, 4, NV>(n, k, ar, b, cr); break;
    case 3: tile<T, 3, NV>(n, k, ar, b, cr); break;
    case 2: tile<T, 2, NV>(n, k, ar, b, cr); break;
    case 1: tile<T, 1, NV>(n, k, ar, b, cr); break;
    default: break;
  }
}

// Scalar fallback for the last columns, same per-element order.
template <typename T>
void edge(std::size_t rows, std::size_t cols, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      for (std::size_t j = 0; j < cols; ++j) c[i * n + j] += av * b[p * n + j];
    }
  }
}

// c (+)= a[m,k] · b[k,n], all row-major.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr std::size_t W = 64 / sizeof(T);
  if (!accumulate) std::fill(c, c + m * n, T(0));
  std::size_t j0 = 0;
  for (; j0 + 2 * W <= n; j0 += 2 * W) column_panel<T, 2>(m, n, k, a, b + j0, c + j0);
  if (j0 + W <= n) {
    column_panel<T, 1>(m, n, k, a, b + j0, c + j0);
    j0 += W;
  }
  if (j0 < n) edge(m, n - j0, n, k, a, b + j0, c + j0);
}

}  // namespace

template <typename T>
void transpose2d(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    const std::size_t r1 = std::min(rows, r0 + tile);
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    return;
  }
  std::vector<T> at, bt;
  if (trans_a) {
    at.resize(m * k);
    transpose2d(k, m, a, at.data());
    a = at.data();
  }
  if (trans_b) {
    bt.resize(k * n);
    transpose2d(n, k, b, bt.data());
    b = bt.data();
  }
  gemm_nn(m, n, k, a, b, c, accumulate);
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                          const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*,
                           const double*, double*, bool);
template void transpose2d<float>(std::size_t, std::size_t, const float*, float*);
template void transpose2d<double>(std::size_t, std::size_t, const double*, double*);

}  // namespace aal
