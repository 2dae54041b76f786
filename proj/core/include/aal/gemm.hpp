#pragma once

#include <cstddef>

namespace aal {

/// Row-major C[m,n] = op(A)·op(B) (or += when accumulate). op(A) is [m,k];
/// with trans_a the buffer holds A as [k,m], likewise for B as [n,k].
/// Each output element is reduced over k in ascending order.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

/// out[cols,rows] = transpose of in[rows,cols].
template <typename T>
void transpose2d(std::size_t rows, std::size_t cols, const T* in, T* out);

}  // namespace aal
