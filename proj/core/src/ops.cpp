#include "aal/ops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <numbers>
#include <string>

#include "aal/gemm.hpp"

namespace aal {

namespace {

template <typename T>
Tape<T>* recorder(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

std::size_t resolve_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
Shape binary_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (is_suffix(a.shape(), b.shape())) return a.shape();
  if (is_suffix(b.shape(), a.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

template <typename T>
void check_finite_input(std::span<const T> v, const char* op) {
  bool nan = false;
  for (T x : v) nan |= x != x;
  if (nan) throw NumericError(std::string(op) + ": NaN in input");
}

// exp for float in a branch-free form the compiler can vectorize (Cephes
// polynomial, about 1 ulp on [-87, 88]); double keeps std::exp.
template <typename T>
inline T exp_of(T x) {
  if constexpr (std::is_same_v<T, float>) {
    x = x < -87.0f ? -87.0f : x;
    x = x > 88.0f ? 88.0f : x;
    const float n = (x * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
    float r = x - n * 0.693359375f;
    r = r - n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    const float y = p * r * r + r + 1.0f;
    return y * std::bit_cast<float>((static_cast<std::int32_t>(n) + 127) << 23);
  } else {
    return std::exp(x);
  }
}

template <typename T>
inline T tanh_of(T x) {
  if constexpr (std::is_same_v<T, float>) {
    return 1.0f - 2.0f / (1.0f + exp_of(2.0f * x));
  } else {
    return std::tanh(x);
  }
}

template <typename T>
void softmax_row(const T* __restrict x, T* __restrict y, std::size_t len) {
  T mx = x[0];
  for (std::size_t j = 1; j < len; ++j) mx = x[j] > mx ? x[j] : mx;
  for (std::size_t j = 0; j < len; ++j) y[j] = exp_of(x[j] - mx);
  T s = 0;
  for (std::size_t j = 0; j < len; ++j) s += y[j];
  const T inv = T(1) / s;
  for (std::size_t j = 0; j < len; ++j) y[j] *= inv;
}

// Row-wise reductions/elementwise helpers over [rows, n] views.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const Shape ba(a.shape().begin(), a.shape().end() - 2);
  const Shape bb(b.shape().begin(), b.shape().end() - 2);
  const std::size_t br = std::max(ba.size(), bb.size());
  Shape batch(br, 1);
  for (std::size_t i = 0; i < br; ++i) {
    const std::size_t da = i < br - ba.size() ? 1 : ba[i - (br - ba.size())];
    const std::size_t db = i < br - bb.size() ? 1 : bb[i - (br - bb.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("matmul: batch dimensions not broadcastable for " + shape_str(a.shape()) +
                           " x " + shape_str(b.shape()));
    }
    batch[i] = std::max(da, db);
  }
  const std::size_t nbatch = shape_numel(batch);

  // Matrix offsets of each output batch entry in a and b.
  std::vector<std::size_t> aoff(nbatch), boff(nbatch);
  {
    std::vector<std::size_t> idx(br, 0);
    for (std::size_t t = 0; t < nbatch; ++t) {
      std::size_t oa = 0, ob = 0;
      for (std::size_t i = 0; i < br; ++i) {
        if (i >= br - ba.size()) {
          const std::size_t d = ba[i - (br - ba.size())];
          oa = oa * d + (d == 1 ? 0 : idx[i]);
        }
        if (i >= br - bb.size()) {
          const std::size_t d = bb[i - (br - bb.size())];
          ob = ob * d + (d == 1 ? 0 : idx[i]);
        }
      }
      aoff[t] = oa;
      boff[t] = ob;
      for (std::size_t i = br; i-- > 0;) {
        if (++idx[i] < batch[i]) break;
        idx[i] = 0;
      }
    }
  }

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  // Shared right operand with a contiguous left batch collapses to one product.
  const bool flat = shape_numel(bb) == 1 && shape_numel(ba) == nbatch;
  if (flat) {
    gemm<T>(false, false, nbatch * m, n, k, a.ptr(), b.ptr(), out.ptr(), false);
  } else {
    for (std::size_t t = 0; t < nbatch; ++t) {
      gemm<T>(false, false, m, n, k, a.ptr() + aoff[t] * m * k, b.ptr() + boff[t] * k * n,
              out.ptr() + t * m * n, false);
    }
  }

  if (auto* tape = recorder<T>({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, {a, b}, [a, b, out, m, n, k, nbatch, flat, aoff, boff]() mutable {
      const T* dc = out.grad().data();
      if (flat) {
        if (a.requires_grad()) gemm<T>(false, true, nbatch * m, k, n, dc, b.ptr(), a.grad().data(), true);
        if (b.requires_grad()) gemm<T>(true, false, k, n, nbatch * m, a.ptr(), dc, b.grad().data(), true);
        return;
      }
      for (std::size_t t = 0; t < nbatch; ++t) {
        const T* dct = dc + t * m * n;
        if (a.requires_grad()) {
          gemm<T>(false, true, m, k, n, dct, b.ptr() + boff[t] * k * n, a.grad().data() + aoff[t] * m * k,
                  true);
        }
        if (b.requires_grad()) {
          gemm<T>(true, false, k, n, m, a.ptr() + aoff[t] * m * k, dct, b.grad().data() + boff[t] * k * n,
                  true);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0), outd = w.dim(1), rows = x.numel() / in;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  Shape shape = x.shape();
  shape.back() = outd;
  Tensor<T> out(shape);
  gemm<T>(false, false, rows, outd, in, x.ptr(), w.ptr(), out.ptr(), false);
  if (bias.defined()) {
    T* o = out.ptr();
    const T* bp = bias.ptr();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outd; ++j) o[r * outd + j] += bp[j];
  }
  if (auto* tape = recorder<T>({&x, &w, &bias})) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    tape->record(out, std::move(inputs), [x, w, bias, out, rows, in, outd]() mutable {
      const T* dy = out.grad().data();
      if (x.requires_grad()) gemm<T>(false, true, rows, in, outd, dy, w.ptr(), x.grad().data(), true);
      if (w.requires_grad()) gemm<T>(true, false, in, outd, rows, x.ptr(), dy, w.grad().data(), true);
      if (bias.defined() && bias.requires_grad()) {
        T* db = bias.grad().data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < outd; ++j) db[j] += dy[r * outd + j];
      }
    });
  }
  return out;
}

// ------------------------------------------------------- elementwise binary

namespace {

enum class BinOp { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinOp op, const char* name) {
  Tensor<T> out(binary_shape(a, b, name));
  const std::size_t n = out.numel(), na = a.numel(), nb = b.numel();
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = pa[na == n ? i : i % na];
    const T y = pb[nb == n ? i : i % nb];
    po[i] = op == BinOp::kAdd ? x + y : op == BinOp::kSub ? x - y : x * y;
  }
  if (auto* tape = recorder<T>({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, {a, b}, [a, b, out, op, n, na, nb]() mutable {
      const T* dy = out.grad().data();
      if (a.requires_grad()) {
        T* da = a.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
          const T g = op == BinOp::kMul ? dy[i] * b[nb == n ? i : i % nb] : dy[i];
          da[na == n ? i : i % na] += g;
        }
      }
      if (b.requires_grad()) {
        T* db = b.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
          const T g = op == BinOp::kMul ? dy[i] * a[na == n ? i : i % na]
                      : op == BinOp::kSub ? -dy[i]
                                          : dy[i];
          db[nb == n ? i : i % nb] += g;
        }
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::kAdd, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::kSub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::kMul, "mul");
}

// ------------------------------------------------------------ elementwise

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * factor;
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, factor]() mutable {
      auto dx = x.grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out]() mutable {
      auto dx = x.grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T c = T(0.044715);
  const T k = std::sqrt(T(2) / std::numbers::pi_v<T>);
  Tensor<T> out(x.shape());
  std::vector<T> th(x.numel());
  const T* px = x.ptr();
  T* py = out.ptr();
  T* pt = th.data();
  for (std::size_t i = 0; i < th.size(); ++i) {
    const T v = px[i];
    pt[i] = tanh_of(k * (v + c * v * v * v));
    py[i] = T(0.5) * v * (T(1) + pt[i]);
  }
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, th = std::move(th), k]() mutable {
      T* dx = x.grad().data();
      const T* dy = out.grad().data();
      const T* px = x.ptr();
      const T* pt = th.data();
      for (std::size_t i = 0; i < th.size(); ++i) {
        const T v = px[i];
        const T t = pt[i];
        const T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
        dx[i] += dy[i] * d;
      }
    });
  }
  return out;
}

// --------------------------------------------------------------- softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis) {
  const std::size_t ax = resolve_axis(axis, x.rank());
  check_finite_input<T>(x.data(), "softmax");
  const std::size_t outer = prod(x.shape(), 0, ax), len = x.shape()[ax],
                    inner = prod(x.shape(), ax + 1, x.rank());
  Tensor<T> out(x.shape());
  const T* px = x.ptr();
  T* py = out.ptr();
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) softmax_row(px + o * len, py + o * len, len);
  }
  for (std::size_t o = 0; o < outer && inner > 1; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = px[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
      for (std::size_t j = 0; j < len; ++j) py[base + j * inner] = exp_of(px[base + j * inner] - mx);
      T s = 0;
      for (std::size_t j = 0; j < len; ++j) s += py[base + j * inner];
      const T inv = T(1) / s;
      for (std::size_t j = 0; j < len; ++j) py[base + j * inner] *= inv;
    }
  }
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, outer, len, inner]() mutable {
      const T* y = out.ptr();
      const T* dy = out.grad().data();
      T* dx = x.grad().data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T s = 0;
          for (std::size_t j = 0; j < len; ++j) s += dy[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t p = base + j * inner;
            dx[p] += y[p] * (dy[p] - s);
          }
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------ reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  Tensor<T> out = Tensor<T>::scalar(s);
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out]() mutable {
      const T g = out.grad()[0];
      for (T& d : x.grad()) d += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  Tensor<T> out = Tensor<T>::scalar(s * inv);
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, inv]() mutable {
      const T g = out.grad()[0] * inv;
      for (T& d : x.grad()) d += g;
    });
  }
  return out;
}

// ---------------------------------------------------------- normalization

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: scale/shift " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.numel()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gamma[j] + beta[j];
    }
  }
  if (auto* tape = recorder<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record(out, {x, gamma, beta},
                 [x, gamma, beta, out, xhat = std::move(xhat), rstd = std::move(rstd), rows, d]() mutable {
                   const T* dy = out.grad().data();
                   std::vector<T> dh(d);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const T* dyr = dy + r * d;
                     const T* hr = xhat.data() + r * d;
                     if (gamma.requires_grad()) {
                       T* dg = gamma.grad().data();
                       for (std::size_t j = 0; j < d; ++j) dg[j] += dyr[j] * hr[j];
                     }
                     if (beta.requires_grad()) {
                       T* db = beta.grad().data();
                       for (std::size_t j = 0; j < d; ++j) db[j] += dyr[j];
                     }
                     if (x.requires_grad()) {
                       T m1 = 0, m2 = 0;
                       for (std::size_t j = 0; j < d; ++j) {
                         dh[j] = dyr[j] * gamma[j];
                         m1 += dh[j];
                         m2 += dh[j] * hr[j];
                       }
                       m1 /= static_cast<T>(d);
                       m2 /= static_cast<T>(d);
                       T* dx = x.grad().data() + r * d;
                       for (std::size_t j = 0; j < d; ++j) dx[j] += rstd[r] * (dh[j] - m1 - hr[j] * m2);
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                     T eps) {
  if (x.rank() < 2) throw DimensionError("batch_norm needs [B,C,...], got " + shape_str(x.shape()));
  const std::size_t nb = x.dim(0), c = x.dim(1), sp = x.numel() / (nb * c);
  for (const Tensor<T>* t : {&gamma, &beta, static_cast<const Tensor<T>*>(&running_mean),
                             static_cast<const Tensor<T>*>(&running_var)}) {
    if (t->numel() != c) {
      throw DimensionError("batch_norm: per-channel tensor " + shape_str(t->shape()) + " does not match input " +
                           shape_str(x.shape()));
    }
  }
  const std::size_t count = nb * sp;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.numel()), rstd(c);
  const T* px = x.ptr();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mu, var;
    if (training) {
      mu = 0;
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t s = 0; s < sp; ++s) mu += px[(b * c + ch) * sp + s];
      mu /= static_cast<T>(count);
      var = 0;
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t s = 0; s < sp; ++s) {
          const T dlt = px[(b * c + ch) * sp + s] - mu;
          var += dlt * dlt;
        }
      var /= static_cast<T>(count);
      const T unbiased = count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    rstd[ch] = T(1) / std::sqrt(var + eps);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t s = 0; s < sp; ++s) {
        const std::size_t p = (b * c + ch) * sp + s;
        xhat[p] = (px[p] - mu) * rstd[ch];
        out[p] = xhat[p] * gamma[ch] + beta[ch];
      }
  }
  if (auto* tape = recorder<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record(out, {x, gamma, beta},
                 [x, gamma, beta, out, xhat = std::move(xhat), rstd = std::move(rstd), nb, c, sp, count,
                  training]() mutable {
                   const T* dy = out.grad().data();
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     T sdy = 0, sdyh = 0;
                     for (std::size_t b = 0; b < nb; ++b)
                       for (std::size_t s = 0; s < sp; ++s) {
                         const std::size_t p = (b * c + ch) * sp + s;
                         sdy += dy[p];
                         sdyh += dy[p] * xhat[p];
                       }
                     if (gamma.requires_grad()) gamma.grad()[ch] += sdyh;
                     if (beta.requires_grad()) beta.grad()[ch] += sdy;
                     if (!x.requires_grad()) continue;
                     T* dx = x.grad().data();
                     const T g = gamma[ch] * rstd[ch];
                     const T m1 = sdy / static_cast<T>(count), m2 = sdyh / static_cast<T>(count);
                     for (std::size_t b = 0; b < nb; ++b)
                       for (std::size_t s = 0; s < sp; ++s) {
                         const std::size_t p = (b * c + ch) * sp + s;
                         dx[p] += training ? g * (dy[p] - m1 - xhat[p] * m2) : g * dy[p];
                       }
                   }
                 });
  }
  return out;
}

// ------------------------------------------------------------ convolution

namespace {

struct ConvGeom {
  std::size_t nb, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const ConvGeom& g, const T* x, T* cols) {
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((ci * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.wo + ox] = inside ? x[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* cols, T* dx) {
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((ci * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " incompatible with kernel " +
                         shape_str(w.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, padding, 0, 0};
  const std::size_t hp = g.h + 2 * padding, wp = g.w + 2 * padding;
  if (g.kh > hp || g.kw > wp) {
    throw ConfigError("conv2d: kernel " + shape_str(w.shape()) + " does not fit padded input " +
                      shape_str(x.shape()));
  }
  if ((hp - g.kh) % stride != 0 || (wp - g.kw) % stride != 0) {
    throw ConfigError("conv2d: non-integral output size for input " + shape_str(x.shape()) + ", kernel " +
                      shape_str(w.shape()) + ", stride " + std::to_string(stride) + ", padding " +
                      std::to_string(padding));
  }
  g.ho = (hp - g.kh) / stride + 1;
  g.wo = (wp - g.kw) / stride + 1;
  if (bias.defined() && bias.numel() != g.cout) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernel " +
                         shape_str(w.shape()));
  }

  Tensor<T> out(Shape{g.nb, g.cout, g.ho, g.wo});
  std::vector<T> cols(g.direct() ? 0 : g.patch() * g.pixels());
  for (std::size_t b = 0; b < g.nb; ++b) {
    const T* xb = x.ptr() + b * g.cin * g.h * g.w;
    const T* src = xb;
    if (!g.direct()) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    T* ob = out.ptr() + b * g.cout * g.pixels();
    gemm<T>(false, false, g.cout, g.pixels(), g.patch(), w.ptr(), src, ob, false);
    if (bias.defined()) {
      for (std::size_t co = 0; co < g.cout; ++co)
        for (std::size_t p = 0; p < g.pixels(); ++p) ob[co * g.pixels() + p] += bias[co];
    }
  }

  if (auto* tape = recorder<T>({&x, &w, &bias})) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    tape->record(out, std::move(inputs), [x, w, bias, out, g]() mutable {
      std::vector<T> cols(g.direct() ? 0 : g.patch() * g.pixels());
      std::vector<T> dcols(g.direct() ? 0 : g.patch() * g.pixels());
      const T* dy = out.grad().data();
      for (std::size_t b = 0; b < g.nb; ++b) {
        const T* xb = x.ptr() + b * g.cin * g.h * g.w;
        const T* dyb = dy + b * g.cout * g.pixels();
        if (w.requires_grad()) {
          const T* src = xb;
          if (!g.direct()) {
            im2col(g, xb, cols.data());
            src = cols.data();
          }
          gemm<T>(false, true, g.cout, g.patch(), g.pixels(), dyb, src, w.grad().data(), true);
        }
        if (x.requires_grad()) {
          T* dxb = x.grad().data() + b * g.cin * g.h * g.w;
          if (g.direct()) {
            gemm<T>(true, false, g.patch(), g.pixels(), g.cout, w.ptr(), dyb, dxb, true);
          } else {
            gemm<T>(true, false, g.patch(), g.pixels(), g.cout, w.ptr(), dyb, dcols.data(), false);
            col2im_add(g, dcols.data(), dxb);
          }
        }
        if (bias.defined() && bias.requires_grad()) {
          T* db = bias.grad().data();
          for (std::size_t co = 0; co < g.cout; ++co)
            for (std::size_t p = 0; p < g.pixels(); ++p) db[co] += dyb[co * g.pixels() + p];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw DimensionError("max_pool2d needs [B,C,H>=2,W>=2], got " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), ho = h / 2, wo = w / 2;
  Tensor<T> out(Shape{x.dim(0), x.dim(1), ho, wo});
  std::vector<std::size_t> arg(out.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = x.ptr() + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t q = (2 * oy + dy) * w + 2 * ox + dx;
            if (xp[q] > xp[best]) best = q;
          }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = xp[best];
        arg[o] = p * h * w + best;
      }
  }
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, arg = std::move(arg)]() mutable {
      auto dx = x.grad();
      auto dy = out.grad();
      for (std::size_t o = 0; o < arg.size(); ++o) dx[arg[o]] += dy[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool needs [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(Shape{x.dim(0), x.dim(1)});
  const T inv = T(1) / static_cast<T>(hw);
  for (std::size_t p = 0; p < planes; ++p) {
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += x[p * hw + i];
    out[p] = s * inv;
  }
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, planes, hw, inv]() mutable {
      auto dx = x.grad();
      auto dy = out.grad();
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < hw; ++i) dx[p * hw + i] += dy[p] * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------- data movement

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::size_t> indices) {
  if (table.rank() != 2) throw DimensionError("embedding table must be [V,D], got " + shape_str(table.shape()));
  if (indices.empty()) throw InputError("embedding: empty index list");
  const std::size_t v = table.dim(0), d = table.dim(1);
  Tensor<T> out(Shape{indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= v) {
      throw InputError("embedding: index " + std::to_string(indices[r]) + " out of range for " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(table.ptr() + indices[r] * d, d, out.ptr() + r * d);
  }
  if (auto* tape = recorder<T>({&table})) {
    out.set_requires_grad(true);
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    tape->record(out, {table}, [table, out, idx = std::move(idx), d]() mutable {
      T* dt = table.grad().data();
      const T* dy = out.grad().data();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) dt[idx[r] * d + j] += dy[r * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out]() mutable {
      auto dx = x.grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

namespace {

// Calls fn(out_index, in_index) for every element of the permuted layout.
template <typename Fn>
void for_each_permuted(const Shape& in_shape, const std::vector<std::size_t>& perm, Fn&& fn) {
  const std::size_t r = in_shape.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[perm[i]];
    step[i] = in_stride[perm[i]];
  }
  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  const std::size_t last = r - 1;
  for (std::size_t o = 0; o < n;) {
    // Innermost axis as a tight loop.
    const std::size_t len = out_shape[last], st = step[last];
    for (std::size_t j = 0; j < len; ++j) fn(o + j, src + j * st);
    o += len;
    for (std::size_t i = last; i-- > 0;) {
      src += step[i];
      if (++idx[i] < out_shape[i]) break;
      src -= step[i] * out_shape[i];
      idx[i] = 0;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  std::vector<bool> seen(r, false);
  if (perm.size() != r) throw DimensionError("permute: permutation size does not match rank of " + shape_str(x.shape()));
  for (auto p : perm) {
    if (p >= r || seen[p]) throw DimensionError("permute: invalid permutation for " + shape_str(x.shape()));
    seen[p] = true;
  }
  Shape shape(r);
  for (std::size_t i = 0; i < r; ++i) shape[i] = x.shape()[perm[i]];
  Tensor<T> out(shape);
  const T* px = x.ptr();
  T* po = out.ptr();
  for_each_permuted(x.shape(), perm, [&](std::size_t o, std::size_t i) { po[o] = px[i]; });
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, perm]() mutable {
      T* dx = x.grad().data();
      const T* dy = out.grad().data();
      for_each_permuted(x.shape(), perm, [&](std::size_t o, std::size_t i) { dx[i] += dy[o]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::ptrdiff_t axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = resolve_axis(axis, x.rank());
  const std::size_t len = x.shape()[ax];
  if (begin >= end || end > len) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis of size " + std::to_string(len));
  }
  const std::size_t outer = prod(x.shape(), 0, ax), inner = prod(x.shape(), ax + 1, x.rank()),
                    span = end - begin;
  Shape shape = x.shape();
  shape[ax] = span;
  Tensor<T> out(shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.ptr() + (o * len + begin) * inner, span * inner, out.ptr() + o * span * inner);
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, outer, inner, len, begin, span]() mutable {
      T* dx = x.grad().data();
      const T* dy = out.grad().data();
      for (std::size_t o = 0; o < outer; ++o) {
        T* dst = dx + (o * len + begin) * inner;
        const T* src = dy + o * span * inner;
        for (std::size_t i = 0; i < span * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw InputError("concat: no tensors");
  const std::size_t ax = resolve_axis(axis, parts[0].rank());
  Shape shape = parts[0].shape();
  shape[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != shape.size()) throw DimensionError("concat: rank mismatch at " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != parts[0].shape()[i]) {
        throw DimensionError("concat: shapes " + shape_str(parts[0].shape()) + " and " + shape_str(p.shape()) +
                             " differ off axis " + std::to_string(ax));
      }
    }
    shape[ax] += p.shape()[ax];
  }
  const std::size_t outer = prod(shape, 0, ax), inner = prod(shape, ax + 1, shape.size()), total = shape[ax];
  Tensor<T> out(shape);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[ax];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.ptr() + o * len * inner, len * inner, out.ptr() + (o * total + offset) * inner);
    offsets.push_back(offset);
    offset += len;
  }
  Tape<T>* tape = Tape<T>::active();
  const bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor<T>& p) { return p.requires_grad(); });
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    tape->record(out, parts, [parts, out, offsets, outer, inner, total, ax]() mutable {
      const T* dy = out.grad().data();
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (!parts[k].requires_grad()) continue;
        const std::size_t len = parts[k].shape()[ax];
        T* dx = parts[k].grad().data();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = dy + (o * total + offsets[k]) * inner;
          T* dst = dx + o * len * inner;
          for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------ map norms

namespace {

std::size_t map_size(const Shape& shape, std::size_t map_rank) {
  if (map_rank > shape.size()) {
    throw DimensionError("map rank " + std::to_string(map_rank) + " exceeds rank of " + shape_str(shape));
  }
  if (map_rank == 0) return shape_numel(shape);
  return prod(shape, shape.size() - map_rank, shape.size());
}

}  // namespace

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps, std::size_t map_rank) {
  const std::size_t ms = map_size(x.shape(), map_rank), maps = x.numel() / ms;
  Tensor<T> out(x.shape());
  std::vector<T> norms(maps);
  for (std::size_t m = 0; m < maps; ++m) {
    const T* xm = x.ptr() + m * ms;
    norms[m] = std::sqrt(dot(xm, xm, ms));
    const T inv = T(1) / (norms[m] + eps);
    for (std::size_t i = 0; i < ms; ++i) out[m * ms + i] = xm[i] * inv;
  }
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, norms = std::move(norms), ms, maps, eps]() mutable {
      const T* dy = out.grad().data();
      T* dx = x.grad().data();
      for (std::size_t m = 0; m < maps; ++m) {
        const T* xm = x.ptr() + m * ms;
        const T* dym = dy + m * ms;
        const T n = norms[m], ne = n + eps;
        const T coef = n > T(0) ? dot(dym, xm, ms) / (ne * ne * n) : T(0);
        for (std::size_t i = 0; i < ms; ++i) dx[m * ms + i] += dym[i] / ne - xm[i] * coef;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> map_norm(const Tensor<T>& x, std::size_t map_rank) {
  const std::size_t ms = map_size(x.shape(), map_rank), maps = x.numel() / ms;
  Shape shape(x.shape().begin(), x.shape().end() - static_cast<std::ptrdiff_t>(map_rank == 0 ? x.rank() : map_rank));
  if (shape.empty()) shape = {1};
  Tensor<T> out(shape);
  for (std::size_t m = 0; m < maps; ++m) {
    const T* xm = x.ptr() + m * ms;
    out[m] = std::sqrt(dot(xm, xm, ms));
  }
  if (auto* tape = recorder<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(out, {x}, [x, out, ms, maps]() mutable {
      const T* dy = out.grad().data();
      T* dx = x.grad().data();
      for (std::size_t m = 0; m < maps; ++m) {
        const T r = out[m];
        if (r <= T(0)) continue;
        const T g = dy[m] / r;
        for (std::size_t i = 0; i < ms; ++i) dx[m * ms + i] += g * x[m * ms + i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------- cross entropy

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [B,K], got " + shape_str(logits.shape()));
  const std::size_t nb = logits.dim(0), k = logits.dim(1);
  if (labels.size() != nb) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InputError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    }
  }
  check_finite_input<T>(logits.data(), "cross_entropy");
  std::vector<T> prob(logits.numel());
  T total = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    const T* z = logits.ptr() + b * k;
    T mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) {
      prob[b * k + j] = std::exp(z[j] - mx);
      s += prob[b * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) prob[b * k + j] /= s;
    total += (mx + std::log(s)) - z[labels[b]];
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(nb));
  if (auto* tape = recorder<T>({&logits})) {
    out.set_requires_grad(true);
    std::vector<int> ys(labels.begin(), labels.end());
    tape->record(out, {logits}, [logits, out, prob = std::move(prob), ys = std::move(ys), nb, k]() mutable {
      const T g = out.grad()[0] / static_cast<T>(nb);
      T* dz = logits.grad().data();
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t j = 0; j < k; ++j) {
          const T onehot = static_cast<std::size_t>(ys[b]) == j ? T(1) : T(0);
          dz[b * k + j] += g * (prob[b * k + j] - onehot);
        }
    });
  }
  return out;
}

#define AAL_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                            \
  template Tensor<T> gelu(const Tensor<T>&);                                                            \
  template Tensor<T> softmax(const Tensor<T>&, std::ptrdiff_t);                                         \
  template Tensor<T> sum(const Tensor<T>&);                                                             \
  template Tensor<T> mean(const Tensor<T>&);                                                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);               \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,       \
                                Tensor<T>&, bool, T, T);                                                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,          \
                            std::size_t);                                                               \
  template Tensor<T> max_pool2d(const Tensor<T>&);                                                      \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                 \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::size_t>);                         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                        \
  template Tensor<T> slice(const Tensor<T>&, std::ptrdiff_t, std::size_t, std::size_t);                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::ptrdiff_t);                             \
  template Tensor<T> l2_normalize(const Tensor<T>&, T, std::size_t);                                    \
  template Tensor<T> map_norm(const Tensor<T>&, std::size_t);                                           \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

AAL_INSTANTIATE_OPS(float)
AAL_INSTANTIATE_OPS(double)

#undef AAL_INSTANTIATE_OPS

}  // namespace aal
