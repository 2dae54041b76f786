#pragma once

#include "aal/tensor.hpp"

namespace aal {

/// Bicubic resampling of the two trailing axes of x[..,h,w].
///
/// Uses the Catmull-Rom kernel (a = -0.5) with half-pixel centers: output
/// pixel i samples the input at (i + 0.5) * in/out - 0.5, and taps outside
/// the input are clamped to the nearest edge. Same-size resizes reproduce
/// the input exactly and the kernel weights always sum to one. The result is
/// a constant (never on a tape).
///
/// Throws ConfigError for non-positive target sizes.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, int out_h, int out_w);

}  // namespace aal
