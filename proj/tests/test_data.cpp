#include <gtest/gtest.h>

#include <cmath>

#include "aal/data.hpp"
#include "aal/error.hpp"
#include "test_util.hpp"

using namespace aal;

namespace {

constexpr int kPlane = kCifarSide * kCifarSide;

}  // namespace

TEST(Cifar, FixtureParsesByteExactly) {
  const std::string bytes = aal::test::slurp(aal::test::data_path("cifar_two.bin"));
  ASSERT_EQ(bytes.size(), 2u * kCifarRecord);
  const Dataset d = read_cifar10_batch(aal::test::data_path("cifar_two.bin"));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.labels, (std::vector<int>{3, 9}));
  EXPECT_FALSE(d.has_boxes());
  const int base[2] = {0, 7};
  for (int r = 0; r < 2; ++r)
    for (int p = 0; p < 3; ++p)
      for (int i = 0; i < kPlane; ++i) {
        const int byte = (base[r] + 31 * p + i) % 256;
        ASSERT_EQ(d.image(r)[p * kPlane + i], static_cast<float>(byte) / 255.0f) << r << " " << p << " " << i;
      }
  EXPECT_EQ(encode_cifar10(d), bytes);
}

TEST(Cifar, EmptyFileIsAnEmptyDataset) {
  EXPECT_EQ(parse_cifar10("").size(), 0u);
}

TEST(Cifar, TruncatedRecordAndBadLabelAreFormatErrors) {
  EXPECT_THROW(parse_cifar10(std::string(kCifarPixels, '\0')), FormatError);
  std::string rec(kCifarRecord, '\0');
  rec[0] = 10;
  EXPECT_THROW(parse_cifar10(rec), FormatError);
  rec[0] = 9;
  EXPECT_NO_THROW(parse_cifar10(rec));
}

TEST(Cifar, MissingFileIsInputError) {
  EXPECT_THROW(read_cifar10_batch("/nonexistent/aal/cifar.bin"), InputError);
}

TEST(Cifar, WriteReadRoundTrip) {
  aal::test::TempDir dir("cifar");
  Dataset d = gen_shapes(3, 4);
  write_cifar10_batch(dir.file("x.bin"), d);
  const Dataset back = read_cifar10_batch(dir.file("x.bin"));
  EXPECT_EQ(back.labels, d.labels);
  for (std::size_t i = 0; i < d.pixels.size(); ++i) {
    EXPECT_EQ(back.pixels[i], std::round(d.pixels[i] * 255.0f) / 255.0f);
  }
  EXPECT_EQ(encode_cifar10(back), aal::test::slurp(dir.file("x.bin")));
}

TEST(Shapes, SameSeedSameData) {
  const Dataset a = gen_shapes(11, 20), b = gen_shapes(11, 20), c = gen_shapes(12, 20);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.boxes, b.boxes);
  EXPECT_NE(a.pixels, c.pixels);
}

TEST(Shapes, BoxesExactlyBoundTheBrightShape) {
  const Dataset d = gen_shapes(5, 300);
  ASSERT_EQ(d.boxes.size(), 300u);
  int brighter = 0, squares = 0;
  for (std::size_t s = 0; s < d.size(); ++s) {
    const float* img = d.image(s);
    const Box& box = d.boxes[s];
    EXPECT_GE(box.area(), 64);
    EXPECT_LE(box.area(), 256);
    Box want{kCifarSide, kCifarSide, 0, 0};
    double in = 0, out = 0;
    for (int i = 0; i < kCifarSide; ++i)
      for (int j = 0; j < kCifarSide; ++j) {
        const float v = img[i * kCifarSide + j];
        if (v >= 0.5f) {
          want = {std::min(want.x0, j), std::min(want.y0, i), std::max(want.x1, j + 1), std::max(want.y1, i + 1)};
        }
        const bool inside = j >= box.x0 && j < box.x1 && i >= box.y0 && i < box.y1;
        (inside ? in : out) += v;
      }
    EXPECT_EQ(box, want) << s;
    const double area = box.area();
    if (in / area > out / (kPlane - area)) ++brighter;
    squares += d.labels[s] == 0;
  }
  EXPECT_GE(brighter, 297);
  EXPECT_GT(squares, 100);
  EXPECT_LT(squares, 200);
}

TEST(Shapes, InvalidArgumentsAreRejected) {
  EXPECT_THROW(gen_shapes(1, 0), InputError);
  EXPECT_THROW(gen_shapes(1, 4, 3), ConfigError);
}

TEST(Boxes, CsvRoundTripAndErrors) {
  aal::test::TempDir dir("boxes");
  const std::vector<Box> boxes = {{0, 1, 5, 9}, {3, 3, 32, 32}};
  EXPECT_EQ(boxes_csv(boxes), "index,x0,y0,x1,y1\n0,0,1,5,9\n1,3,3,32,32\n");
  write_boxes(dir.file("b.csv"), boxes);
  EXPECT_EQ(read_boxes(dir.file("b.csv")), boxes);
  EXPECT_THROW(parse_boxes_csv("x,y\n"), FormatError);
  EXPECT_THROW(parse_boxes_csv("index,x0,y0,x1,y1\n0,1,2\n"), FormatError);
}

TEST(Augment, ZeroShiftCopiesAndDoubleFlipIsIdentity) {
  Rng rng(7);
  const auto img = aal::test::random_tensor<float>(rng, {3, 32, 32}, 0, 1);
  std::vector<float> a(kCifarPixels), b(kCifarPixels);
  crop_flip(img.ptr(), a.data(), 0, 0, false);
  EXPECT_TRUE(std::equal(a.begin(), a.end(), img.data().begin()));
  crop_flip(img.ptr(), a.data(), 0, 0, true);
  crop_flip(a.data(), b.data(), 0, 0, true);
  EXPECT_TRUE(std::equal(b.begin(), b.end(), img.data().begin()));
  EXPECT_EQ(a[0], img[31]);
}

TEST(Augment, ShiftMovesPixelsAndZeroPads) {
  Rng rng(8);
  const auto img = aal::test::random_tensor<float>(rng, {3, 32, 32}, 0.1, 1);
  std::vector<float> out(kCifarPixels);
  crop_flip(img.ptr(), out.data(), 2, -3, false);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) {
        const int si = i + 2, sj = j - 3;
        const float want = (si < 32 && sj >= 0) ? img[c * kPlane + si * 32 + sj] : 0.0f;
        ASSERT_EQ(out[c * kPlane + i * 32 + j], want);
      }
}

TEST(Augment, BatchIsDeterministicPerSeed) {
  Rng rng(9);
  const auto imgs = aal::test::random_tensor<float>(rng, {4, 3, 32, 32}, 0, 1);
  const auto a = augment_batch(imgs, 5), b = augment_batch(imgs, 5), c = augment_batch(imgs, 6);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  EXPECT_FALSE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
}

TEST(Normalize, UsesChannelStatistics) {
  Tensor<double> t({1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < kPlane; ++i) t[c * kPlane + i] = kCifarMean[c];
  t[5] = static_cast<double>(kCifarMean[0]) + static_cast<double>(kCifarStd[0]);
  normalize_cifar(t);
  EXPECT_NEAR(t[5], 1.0, 1e-12);
  EXPECT_EQ(t[6], 0.0);
  EXPECT_EQ(t[2 * kPlane], 0.0);
}
