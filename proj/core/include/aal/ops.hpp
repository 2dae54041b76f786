#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aal/tensor.hpp"

// Differentiable primitives. Each op records its backward rule on the
// thread's active Tape when any input requires grad; otherwise it is a plain
// forward evaluation. Instantiated for float and double.
namespace aal {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kL2NormalizeEps = 1e-12;

/// Batched matrix product a[..,i,k] · b[..,k,j] with numpy-style broadcasting
/// of the leading (batch) dimensions.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..,in] · w[in,out] + bias[out]; bias may be an undefined tensor.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

// Elementwise binary ops. Shapes must match, or one shape must be a trailing
// suffix of the other (e.g. [B,L,D] + [L,D]).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// tanh approximation: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Max-subtracted softmax along `axis` (negative counts from the end).
/// Throws NumericError on NaN input.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Normalizes over the last axis, then applies gamma/beta of that size.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(kNormEps));

/// Per-channel normalization of x[B,C,...]. In training mode uses batch
/// statistics and updates the running buffers in place (unbiased variance);
/// otherwise normalizes with the running buffers.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     T momentum = T(kBatchNormMomentum), T eps = T(kNormEps));

/// Cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,kh,kw]; bias[Cout] may
/// be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t padding = 0);

/// 2x2 window, stride 2; odd trailing rows/columns are dropped.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x);

/// [B,C,H,W] -> [B,C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Gathers rows of table[V,D]; result is [indices.size(), D].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::size_t> indices);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);

/// Half-open range [begin, end) along one axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::ptrdiff_t axis, std::size_t begin, std::size_t end);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis);

/// Divides each map by (its l2 norm + eps). A map is the block of the trailing
/// `map_rank` axes; map_rank == 0 treats the whole tensor as one map.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(kL2NormalizeEps), std::size_t map_rank = 0);

/// Euclidean norm of each trailing-`map_rank` map; the result has the
/// leading shape ([1] when nothing leads). The gradient at a zero map is 0.
template <typename T>
Tensor<T> map_norm(const Tensor<T>& x, std::size_t map_rank);

/// Mean over the batch of -log softmax(logits)[label]. logits is [B,K].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace aal
