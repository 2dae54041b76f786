#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "aal/gradcheck_suite.hpp"
#include "aal/ops.hpp"
#include "aal/resize.hpp"
#include "test_util.hpp"

using namespace aal;
using aal::test::random_tensor;

namespace {

Tensor<double> identity(std::size_t n) {
  Tensor<double> t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

// Direct seven-loop cross-correlation.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                          int pad) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (H + 2 * pad - kh) / stride + 1, ow = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> y({std::size_t(B), std::size_t(O), std::size_t(oh), std::size_t(ow)});
  for (int n = 0; n < B; ++n)
    for (int o = 0; o < O; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          long double s = b[o];
          for (int c = 0; c < C; ++c)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int yy = i * stride + u - pad, xx = j * stride + v - pad;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                s += static_cast<long double>(x[((n * C + c) * H + yy) * W + xx]) * w[((o * C + c) * kh + u) * kw + v];
              }
          y[((n * O + o) * oh + i) * ow + j] = static_cast<double>(s);
        }
  return y;
}

double cubic(double t) {
  const double a = -0.5;
  t = std::abs(t);
  if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0;
}

}  // namespace

TEST(Matmul, IdentityAndZeros) {
  Rng rng(1);
  const auto m = random_tensor(rng, {3, 4});
  const auto y = matmul(identity(3), m);
  for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_EQ(y[i], m[i]);
  const auto z = matmul(m, Tensor<double>({4, 2}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, BroadcastsBatchAgainstLongDoubleLoop) {
  Rng rng(2);
  const auto a = random_tensor(rng, {2, 5, 7}), b = random_tensor(rng, {7, 3});
  const auto y = matmul(a, b);
  ASSERT_EQ(y.shape(), (Shape{2, 5, 3}));
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) {
        long double s = 0;
        for (int k = 0; k < 7; ++k) s += static_cast<long double>(a[(n * 5 + i) * 7 + k]) * b[k * 3 + j];
        EXPECT_NEAR(y[(n * 5 + i) * 3 + j], static_cast<double>(s), 1e-13);
      }
}

TEST(Matmul, LargeFloatAgainstDouble) {
  Rng rng(3);
  const auto a = random_tensor<float>(rng, {67, 129}), b = random_tensor<float>(rng, {129, 45});
  const auto y = matmul(a, b);
  for (int i = 0; i < 67; ++i)
    for (int j = 0; j < 45; ++j) {
      double s = 0;
      for (int k = 0; k < 129; ++k) s += double(a[i * 129 + k]) * b[k * 45 + j];
      EXPECT_NEAR(y[i * 45 + j], s, 1e-4);
    }
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor<double>({2, 3}), Tensor<double>({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformOnEqualLogits) {
  const auto y = softmax(Tensor<double>({4}, 0.0), 0);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, MatchesLongDoubleOracleOnEveryAxis) {
  Rng rng(4);
  const auto x = random_tensor(rng, {3, 5, 4}, -20, 20);
  for (int axis = 0; axis < 3; ++axis) {
    const auto y = softmax(x, axis);
    const std::size_t stride = axis == 0 ? 20 : axis == 1 ? 4 : 1, len = x.dim(axis);
    for (std::size_t p = 0; p < x.numel(); ++p) {
      const std::size_t base = p - ((p / stride) % len) * stride;
      long double mx = -1e300L, s = 0;
      for (std::size_t j = 0; j < len; ++j) mx = std::max<long double>(mx, x[base + j * stride]);
      for (std::size_t j = 0; j < len; ++j) s += std::exp(static_cast<long double>(x[base + j * stride]) - mx);
      EXPECT_NEAR(y[p], static_cast<double>(std::exp(x[p] - mx) / s), 1e-15);
    }
  }
}

TEST(Softmax, FloatSlicesSumToOneAndStayInsideUnitInterval) {
  Rng rng(5);
  const auto x = random_tensor<float>(rng, {64, 65}, -30, 30);
  const auto y = softmax(x, -1);
  for (int r = 0; r < 64; ++r) {
    double s = 0;
    for (int j = 0; j < 65; ++j) {
      const float v = y[r * 65 + j];
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Softmax, FloatExpCloseToStdExp) {
  Tensor<float> x({2, 200});
  for (int i = 0; i < 200; ++i) {
    x[i] = -87.0f + i * 0.43f;
    x[200 + i] = 0.0f;
  }
  x[200] = 0.0f;
  const auto y = softmax(x, -1);
  double mx = x[199];
  long double s = 0;
  for (int i = 0; i < 200; ++i) s += std::exp(static_cast<long double>(x[i]) - mx);
  for (int i = 0; i < 200; ++i) {
    const double want = static_cast<double>(std::exp(static_cast<long double>(x[i]) - mx) / s);
    EXPECT_NEAR(y[i], want, 1e-6 * want + 1e-30);
  }
}

TEST(Softmax, NaNIsNumericError) {
  Tensor<double> x({3}, 0.0);
  x[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(softmax(x, 0), NumericError);
}

TEST(Conv2d, MatchesNaiveLoop) {
  Rng rng(6);
  for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    const auto x = random_tensor(rng, {2, 3, 7, 7}), w = random_tensor(rng, {4, 3, 3, 3}), b = random_tensor(rng, {4});
    const auto y = conv2d(x, w, b, stride, pad);
    const auto want = naive_conv(x, w, b, stride, pad);
    ASSERT_EQ(y.shape(), want.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], want[i], 1e-13);
  }
}

TEST(Conv2d, NonIntegralOutputIsConfigError) {
  EXPECT_THROW(conv2d(Tensor<double>({1, 1, 6, 6}), Tensor<double>({1, 1, 3, 3}), Tensor<double>(), 2, 0),
               ConfigError);
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(conv2d(Tensor<double>({1, 2, 4, 4}), Tensor<double>({1, 3, 1, 1}), Tensor<double>()), DimensionError);
}

TEST(Primitives, ReluOfNegationTimesReluIsZero) {
  Rng rng(7);
  const auto x = random_tensor(rng, {50});
  const auto p = mul(relu(scale(x, -1.0)), relu(x));
  for (double v : p.data()) EXPECT_EQ(v, 0.0);
}

TEST(Primitives, LayerNormOfConstantIsZero) {
  const auto y = layer_norm(Tensor<double>({2, 5}, 3.5), Tensor<double>({5}, 1.0), Tensor<double>({5}, 0.0));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Primitives, GeluTanhForm) {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    const double want = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
    EXPECT_NEAR(gelu(Tensor<double>({1}, x))[0], want, 1e-15);
    EXPECT_NEAR(gelu(Tensor<float>({1}, float(x)))[0], want, 2e-6);
  }
}

TEST(Primitives, BatchNormInferenceUsesRunningStatsAndTrainingUpdatesThem) {
  Rng rng(8);
  const auto x = random_tensor(rng, {4, 2, 3, 3});
  Tensor<double> g({2}, 1.0), b({2}, 0.0), m({2}, 0.5), v({2}, 4.0);
  const auto y = batch_norm(x, g, b, m, v, false);
  EXPECT_NEAR(y[0], (x[0] - 0.5) / std::sqrt(4.0 + 1e-5), 1e-15);
  EXPECT_EQ(m[0], 0.5);
  batch_norm(x, g, b, m, v, true);
  double mean0 = 0;
  for (int n = 0; n < 4; ++n)
    for (int p = 0; p < 9; ++p) mean0 += x[n * 18 + p];
  mean0 /= 36;
  EXPECT_NEAR(m[0], 0.9 * 0.5 + 0.1 * mean0, 1e-15);
}

TEST(Primitives, MaxPoolAndGlobalAveragePool) {
  Tensor<double> x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 8, 1});
  const auto p = max_pool2d(x);
  EXPECT_EQ(p.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(p[0], 5);
  EXPECT_EQ(p[1], 8);
  EXPECT_DOUBLE_EQ(global_avg_pool(x)[0], 3.0);
}

TEST(L2Normalize, UnitNormInputIsUnchanged) {
  Tensor<double> x({4}, std::vector<double>{0.6, 0.0, -0.8, 0.0});
  const auto y = l2_normalize(x);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-9);
}

TEST(L2Normalize, ZeroMapStaysFinite) {
  const auto y = l2_normalize(Tensor<double>({2, 3, 3}), 1e-12, 2);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Bicubic, IdentitySizeAndConstantsAreExact) {
  Rng rng(9);
  const auto x = random_tensor(rng, {2, 3, 5, 4});
  const auto same = bicubic_resize(x, 5, 4);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same[i], x[i]);
  const auto c = bicubic_resize(Tensor<double>({1, 1, 3, 3}, 0.7), 8, 5);
  for (double v : c.data()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Bicubic, TwoByTwoToFourByFourMatchesScalarOracle) {
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 5});
  const auto y = bicubic_resize(x, 4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double sy = (i + 0.5) * 0.5 - 0.5, sx = (j + 0.5) * 0.5 - 0.5;
      const int fy = static_cast<int>(std::floor(sy)), fx = static_cast<int>(std::floor(sx));
      double s = 0;
      for (int u = -1; u <= 2; ++u)
        for (int v = -1; v <= 2; ++v) {
          const int yy = std::clamp(fy + u, 0, 1), xx = std::clamp(fx + v, 0, 1);
          s += cubic(sy - (fy + u)) * cubic(sx - (fx + v)) * x[yy * 2 + xx];
        }
      EXPECT_NEAR(y[i * 4 + j], s, 1e-14) << i << "," << j;
    }
}

TEST(Bicubic, NonPositiveSizeIsConfigError) {
  EXPECT_THROW(bicubic_resize(Tensor<double>({1, 2, 2}), 0, 3), ConfigError);
}

TEST(Tape, GradientHasDataShape) {
  Rng rng(10);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(sum(matmul(a, b)));
  }
  EXPECT_EQ(a.grad().size(), a.numel());
  EXPECT_EQ(b.grad().size(), b.numel());
}

TEST(Tape, NoGradScopeRecordsNothing) {
  auto a = Tensor<double>({3}, 1.0).set_requires_grad(true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  {
    NoGradScope<double> off;
    const auto y = scale(a, 2.0);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Gradcheck, QuadraticIsExact) {
  Tensor<double> x({2}, std::vector<double>{1, 2});
  const auto r = gradcheck("quadratic", [x] { return sum(mul(x, x)); }, {{"x", x}});
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-10);
  EXPECT_NEAR(x.grad()[0], 2.0, 1e-15);
  EXPECT_NEAR(x.grad()[1], 4.0, 1e-15);
}

TEST(Gradcheck, CorruptedBackwardRuleFails) {
  Tensor<double> x({3}, std::vector<double>{0.3, -1.2, 2.0});
  auto bad_square = [](const Tensor<double>& in) {
    Tensor<double> out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out[i] = in[i] * in[i];
    if (auto* tape = Tape<double>::active(); tape && in.requires_grad()) {
      out.set_requires_grad(true);
      tape->record(out, {in}, [in, out] {
        for (std::size_t i = 0; i < in.numel(); ++i) in.grad()[i] += 3.0 * in[i] * out.grad()[i];
      });
    }
    return out;
  };
  const auto r = gradcheck("bad_square", [x, bad_square] { return sum(bad_square(x)); }, {{"x", x}});
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(Gradcheck, NonFiniteLossIsNumericError) {
  Tensor<double> x({1}, 0.0);
  EXPECT_THROW(gradcheck("inf", [x] { return scale(sum(x), std::numeric_limits<double>::infinity()); }, {{"x", x}}),
               NumericError);
}

TEST(Gradcheck, SuitePassesForEveryPrimitive) {
  for (std::uint64_t seed : {0u, 1u}) {
    const auto reports = gradcheck_suite(seed);
    EXPECT_GE(reports.size(), 30u);
    for (const auto& r : reports) {
      EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error << " at " << r.worst_param;
      EXPECT_GT(r.entries_checked, 0u) << r.name;
    }
  }
}
