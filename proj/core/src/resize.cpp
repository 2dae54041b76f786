#include "aal/resize.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace aal {

namespace {

constexpr double kCubicA = -0.5;

double cubic(double t) {
  t = std::abs(t);
  if (t <= 1.0) return ((kCubicA + 2.0) * t - (kCubicA + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((kCubicA * t - 5.0 * kCubicA) * t + 8.0 * kCubicA) * t - 4.0 * kCubicA;
  return 0.0;
}

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> make_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto pos = static_cast<std::ptrdiff_t>(base) + k - 1;
      const std::ptrdiff_t clamped = std::min<std::ptrdiff_t>(std::max<std::ptrdiff_t>(pos, 0),
                                                              static_cast<std::ptrdiff_t>(in) - 1);
      taps[i].index[k] = static_cast<std::size_t>(clamped);
      taps[i].weight[k] = cubic(t - static_cast<double>(k - 1));
    }
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) {
    throw ConfigError("bicubic_resize: target size " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                      " must be positive");
  }
  if (x.rank() < 2) throw DimensionError("bicubic_resize needs [..,h,w], got " + shape_str(x.shape()));
  const std::size_t h = x.dim(-2), w = x.dim(-1), oh = static_cast<std::size_t>(out_h),
                    ow = static_cast<std::size_t>(out_w), planes = x.numel() / (h * w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  Tensor<T> out(shape);
  if (h == oh && w == ow) {
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
    return out;
  }
  const auto rows = make_taps(h, oh);
  const auto cols = make_taps(w, ow);
  std::vector<double> tmp(h * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t j = 0; j < ow; ++j) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += cols[j].weight[k] * static_cast<double>(src[y * w + cols[j].index[k]]);
        tmp[y * ow + j] = s;
      }
    T* dst = out.ptr() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += rows[i].weight[k] * tmp[rows[i].index[k] * ow + j];
        dst[i * ow + j] = static_cast<T>(s);
      }
  }
  return out;
}

template Tensor<float> bicubic_resize(const Tensor<float>&, int, int);
template Tensor<double> bicubic_resize(const Tensor<double>&, int, int);

}  // namespace aal
