#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "aal/link.hpp"
#include "aal/models.hpp"
#include "aal/ops.hpp"
#include "test_util.hpp"

using namespace aal;
using aal::test::random_tensor;

namespace {

// A⁺[b,c] = Σ_k (mask⊙W)[c,k] A[b,k] + b_c, accumulated in long double.
Tensor<double> augment_loop(const Tensor<double>& maps, const LinkWeights<double>& links) {
  const std::size_t B = maps.dim(0), K = maps.dim(1), P = maps.dim(2) * maps.dim(3), C = links.channels();
  Tensor<double> out({B, C, maps.dim(2), maps.dim(3)});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        long double s = links.b[c];
        for (std::size_t k = 0; k < K; ++k) {
          s += static_cast<long double>(links.W[c * K + k]) * links.mask[c * K + k] * maps[(b * K + k) * P + p];
        }
        out[(b * C + c) * P + p] = static_cast<double>(s);
      }
  return out;
}

StudentConfig toy_student() {
  StudentConfig s;
  s.image_size = 8;
  s.patch_size = 4;
  s.embed_dim = 8;
  s.depth = 2;
  s.heads = 2;
  s.mlp_hidden = 8;
  s.classes = 3;
  return s;
}

TeacherConfig toy_teacher() {
  TeacherConfig t;
  t.widths = {2, 3};
  t.image_size = 8;
  t.classes = 3;
  return t;
}

}  // namespace

TEST(Augment, EqualsExplicitWeightedSumOnRandomInstances) {
  Rng rng(1);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int C = rng.range(1, 6), K = rng.range(1, 8), P = rng.range(1, 5), B = rng.range(1, 3);
    LinkWeights<double> links = init_links<double>(C, K, rng);
    for (auto& v : links.W.data()) v = rng.uniform(-2, 2);
    for (auto& v : links.b.data()) v = rng.uniform(-1, 1);
    const auto maps = random_tensor(rng, {std::size_t(B), std::size_t(K), std::size_t(P), std::size_t(P)}, 0, 1);
    const auto got = augment(maps, links), want = augment_loop(maps, links);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(worst, 1e-13);
}

TEST(Augment, ZeroWeightsGiveTheBiasEverywhere) {
  Rng rng(2);
  LinkWeights<double> links = init_links<double>(3, 4, rng);
  for (auto& v : links.W.data()) v = 0.0;
  for (int c = 0; c < 3; ++c) links.b[c] = 0.5 * c - 0.3;
  const auto out = augment(random_tensor(rng, {2, 4, 3, 3}), links);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 9; ++p) EXPECT_EQ(out[(b * 3 + c) * 9 + p], 0.5 * c - 0.3);
}

TEST(Augment, LinearInMapsWithoutBias) {
  Rng rng(3);
  LinkWeights<double> links = init_links<double>(4, 5, rng);
  const auto x = random_tensor(rng, {2, 5, 3, 3}), y = random_tensor(rng, {2, 5, 3, 3});
  const double a = 1.7, b = -0.4;
  const auto lhs = augment(add(scale(x, a), scale(y, b)), links);
  const auto ax = augment(x, links), by = augment(y, links);
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], a * ax[i] + b * by[i], 1e-14);
}

TEST(Augment, ChannelMismatchIsDimensionError) {
  Rng rng(4);
  const auto links = init_links<double>(3, 4, rng);
  EXPECT_THROW(augment(Tensor<double>({1, 5, 2, 2}), links), DimensionError);
}

TEST(Links, InitRangeAndFullMask) {
  Rng rng(5);
  const auto links = init_links<double>(6, 16, rng);
  for (double w : links.W.data()) EXPECT_LE(std::abs(w), 1.0 / 16);
  for (double b : links.b.data()) EXPECT_EQ(b, 0.0);
  for (double m : links.mask.data()) EXPECT_EQ(m, 1.0);
}

TEST(Links, MaskedEntriesHaveExactlyZeroGradient) {
  Rng rng(6);
  LinkWeights<double> links = init_links<double>(3, 4, rng);
  std::vector<unsigned char> mask(12, 1);
  mask[1] = mask[6] = mask[11] = 0;
  apply_mask(links, mask);
  EXPECT_EQ(links.W[1], 0.0);
  links.W.set_requires_grad(true);
  links.b.set_requires_grad(true);
  const auto maps = random_tensor(rng, {2, 4, 3, 3}, 0, 1), acts = random_tensor(rng, {2, 3, 3, 3});
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(attention_loss(augment(maps, links), acts));
  }
  for (int i = 0; i < 12; ++i) {
    if (mask[i]) {
      EXPECT_NE(links.W.grad()[i], 0.0) << i;
    } else {
      EXPECT_EQ(links.W.grad()[i], 0.0) << i;
    }
  }
  EXPECT_THROW(apply_mask(links, std::vector<unsigned char>(5, 1)), DimensionError);
}

TEST(AttentionLoss, BoundsAndLimits) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto aug = random_tensor(rng, {2, 3, 4, 4}), acts = random_tensor(rng, {2, 3, 4, 4});
    const double l = attention_loss(aug, acts).item();
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 2.0);
    EXPECT_NEAR(attention_loss(scale(acts, 3.5), acts).item(), 0.0, 1e-9);
    EXPECT_NEAR(attention_loss(scale(acts, -1.0), acts).item(), 2.0, 1e-9);
    EXPECT_NEAR(attention_loss(aug, scale(acts, 42.0)).item(), l, 1e-6);
  }
}

TEST(AttentionLoss, IsTheMeanOfPerMapDistances) {
  Rng rng(8);
  const auto aug = random_tensor(rng, {2, 3, 2, 2}), acts = random_tensor(rng, {2, 3, 2, 2});
  long double total = 0;
  for (int m = 0; m < 6; ++m) {
    long double na = 0, nb = 0;
    for (int p = 0; p < 4; ++p) {
      na += static_cast<long double>(aug[m * 4 + p]) * aug[m * 4 + p];
      nb += static_cast<long double>(acts[m * 4 + p]) * acts[m * 4 + p];
    }
    na = std::sqrt(na) + 1e-12L;
    nb = std::sqrt(nb) + 1e-12L;
    long double d = 0;
    for (int p = 0; p < 4; ++p) {
      const long double e = aug[m * 4 + p] / na - acts[m * 4 + p] / nb;
      d += e * e;
    }
    total += std::sqrt(d);
  }
  EXPECT_NEAR(attention_loss(aug, acts).item(), static_cast<double>(total / 6), 1e-14);
}

TEST(AttentionLoss, ErrorsOnNaNAndShapeMismatch) {
  Tensor<double> a({1, 1, 2, 2}, 1.0), b({1, 1, 2, 2}, 1.0);
  b[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(attention_loss(a, b), NumericError);
  EXPECT_THROW(attention_loss(a, Tensor<double>({1, 2, 2, 2}, 1.0)), DimensionError);
}

TEST(AttentionLoss, GradientReachesStudentAndLinksButNeverTheTeacher) {
  Rng rng(9);
  const StudentConfig sc = toy_student();
  const Student<double> student(sc, rng);
  Teacher<double> teacher(toy_teacher(), rng);
  LinkWeights<double> links = init_links<double>(teacher.config().total_channels(), sc.maps(), rng);
  for (auto& [n, p] : student.parameters()) p.set_requires_grad(true);
  for (auto& [n, p] : teacher.parameters()) p.set_requires_grad(true);
  links.W.set_requires_grad(true);
  links.b.set_requires_grad(true);
  const auto images = random_tensor(rng, {2, 3, 8, 8}, 0, 1);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    const auto acts = teacher_forward(teacher, images, sc.grid()).acts.maps;
    tape.backward(attention_loss(augment(student.forward(images).attn, links), acts));
  }
  EXPECT_TRUE(links.W.has_grad());
  EXPECT_TRUE(links.b.has_grad());
  bool any_student = false;
  for (const auto& [n, p] : student.parameters()) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) any_student = any_student || g != 0.0;
  }
  EXPECT_TRUE(any_student);
  for (const auto& [n, p] : teacher.parameters()) EXPECT_FALSE(p.has_grad()) << n;
}

TEST(TotalLoss, Arithmetic) {
  const auto ce = Tensor<double>::scalar(0.7), att = Tensor<double>::scalar(0.001);
  EXPECT_NEAR(total_loss(ce, att, 2000.0).item(), 2.7, 1e-12);
  EXPECT_EQ(total_loss(ce, att, 0.0).item(), 0.7);
  EXPECT_EQ(total_loss(ce, Tensor<double>::scalar(0.0), 2000.0).item(), 0.7);
}

TEST(Lambda, HeadlineValues) {
  const LambdaSchedule s;
  EXPECT_EQ(lambda_at(s, 0), 2000.0);
  EXPECT_EQ(lambda_at(s, 1), 1980.0);
}

TEST(Lambda, MatchesExactRationalOracleForEveryEpoch) {
  std::istringstream in(aal::test::slurp(aal::test::data_path("lambda_oracle.csv")));
  std::string line;
  std::getline(in, line);
  const LambdaSchedule s;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    const int e = std::stoi(line.substr(0, c1));
    const double want = std::strtod(line.substr(c1 + 1, c2 - c1 - 1).c_str(), nullptr);
    EXPECT_EQ(lambda_at(s, e), want) << "epoch " << e;
    ++rows;
  }
  EXPECT_EQ(rows, 300);
}

TEST(Lambda, PositiveAndNonIncreasing) {
  const LambdaSchedule s;
  double prev = lambda_at(s, 0);
  for (int e = 1; e < 300; ++e) {
    const double v = lambda_at(s, e);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Lambda, OutOfRangeEpochIsInputError) {
  const LambdaSchedule s;
  EXPECT_THROW(lambda_at(s, -1), InputError);
  EXPECT_THROW(lambda_at(s, 300), InputError);
}

TEST(HardDistill, EqualsCrossEntropyOnTeacherArgmax) {
  Rng rng(10);
  const auto student = random_tensor(rng, {4, 3}), teacher = random_tensor(rng, {4, 3});
  const auto labels = argmax_rows(teacher);
  for (int b = 0; b < 4; ++b) {
    for (int k = 0; k < 3; ++k) EXPECT_LE(teacher[b * 3 + k], teacher[b * 3 + labels[b]]);
  }
  EXPECT_EQ(hard_distill_loss(student, teacher).item(), cross_entropy(student, labels).item());
  EXPECT_THROW(hard_distill_loss(student, random_tensor(rng, {4, 2})), DimensionError);
}

TEST(HardDistill, ArgmaxTakesFirstMaximum) {
  Tensor<double> t({1, 4}, std::vector<double>{1, 3, 3, 2});
  EXPECT_EQ(argmax_rows(t), std::vector<int>{1});
}
