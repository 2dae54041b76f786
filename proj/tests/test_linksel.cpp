#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "aal/linksel.hpp"
#include "test_util.hpp"

using namespace aal;

namespace {

LinkSnapshot random_snapshot(Rng& rng, int max_blocks = 4) {
  LinkSnapshot s;
  s.heads = rng.range(1, 4);
  s.layers = rng.range(1, 6);
  const int blocks = rng.range(1, max_blocks);
  for (int j = 0; j < blocks; ++j) s.block_widths.push_back(rng.range(1, 5));
  if (s.channels() * s.maps() < 2) s.layers = 2;
  s.W.resize(static_cast<std::size_t>(s.channels() * s.maps()));
  for (auto& w : s.W) w = rng.uniform(-1, 1);
  return s;
}

// Two passes: global min and max, then the rescale.
std::vector<double> normalize_oracle(const std::vector<double>& w) {
  double lo = w[0], hi = w[0];
  for (double v : w) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out;
  for (double v : w) out.push_back((v - lo) / (hi - lo));
  return out;
}

Mask prune_oracle(const LinkSnapshot& s, double theta) {
  const auto nw = normalize_oracle(s.W);
  Mask m(s.W.size(), 0);
  for (int c = 0; c < s.channels(); ++c)
    for (int n = 0; n < s.layers; ++n) {
      double sum = 0;
      for (int h = 0; h < s.heads; ++h) sum += std::abs(nw[c * s.maps() + n * s.heads + h]);
      if (sum / s.heads > theta) {
        for (int h = 0; h < s.heads; ++h) m[c * s.maps() + n * s.heads + h] = 1;
      }
    }
  return m;
}

std::vector<double> heatmap_oracle(const LinkSnapshot& s) {
  const int blocks = static_cast<int>(s.block_widths.size());
  std::vector<double> sum(blocks * s.layers, 0.0), count(blocks * s.layers, 0.0);
  int c = 0;
  for (int j = 0; j < blocks; ++j)
    for (int k = 0; k < s.block_widths[j]; ++k, ++c)
      for (int n = 0; n < s.layers; ++n)
        for (int h = 0; h < s.heads; ++h) {
          sum[j * s.layers + n] += std::abs(s.at(c, h, n));
          count[j * s.layers + n] += 1;
        }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i];
  return sum;
}

}  // namespace

TEST(Normalize, MatchesTwoPassOracleExactly) {
  Rng rng(1);
  LinkSnapshot s;
  s.heads = 2;
  s.layers = 4;
  s.block_widths = {6};
  s.W.resize(48);
  for (auto& w : s.W) w = rng.uniform(-3, 3);
  EXPECT_EQ(normalize_links(s).W, normalize_oracle(s.W));
}

TEST(Normalize, UnitRangeInputIsUnchanged) {
  LinkSnapshot s;
  s.heads = 1;
  s.layers = 4;
  s.block_widths = {1};
  s.W = {0.0, 0.25, 1.0, 0.5};
  EXPECT_EQ(normalize_links(s).W, s.W);
}

TEST(Normalize, AllEqualWeightsAreDegenerate) {
  LinkSnapshot s;
  s.heads = 2;
  s.layers = 2;
  s.block_widths = {2};
  s.W.assign(8, 0.3);
  EXPECT_THROW(normalize_links(s), DegenerateInputError);
}

TEST(Prune, MatchesBruteForceOracleOnRandomSnapshots) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const LinkSnapshot s = random_snapshot(rng);
    const double theta = rng.uniform(0, 1);
    EXPECT_EQ(prune_links(normalize_links(s), theta), prune_oracle(s, theta)) << trial;
  }
}

TEST(Prune, InvariantUnderPositiveAffineRescaling) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const LinkSnapshot s = random_snapshot(rng);
    LinkSnapshot t = s;
    const double a = std::ldexp(1.0, rng.range(-4, 4)), b = rng.range(-8, 8) * 0.125;
    for (auto& w : t.W) w = a * w + b;
    EXPECT_EQ(prune_links(normalize_links(s), 0.05), prune_links(normalize_links(t), 0.05));
  }
}

TEST(Prune, MaskIsBlocksOfHeadsAndThresholdBoundaries) {
  Rng rng(4);
  const LinkSnapshot s = random_snapshot(rng);
  const Mask m = prune_links(normalize_links(s), 0.4);
  for (int c = 0; c < s.channels(); ++c)
    for (int n = 0; n < s.layers; ++n)
      for (int h = 1; h < s.heads; ++h) {
        EXPECT_EQ(m[c * s.maps() + n * s.heads + h], m[c * s.maps() + n * s.heads]);
      }
  const Mask none = prune_links(normalize_links(s), 1.0);
  EXPECT_EQ(std::count(none.begin(), none.end(), 1), 0);
  EXPECT_EQ(kept_fraction(none), 0.0);

  LinkSnapshot ones = s;
  std::fill(ones.W.begin(), ones.W.end(), 1.0);
  const Mask all = prune_links(ones, 0.999);
  EXPECT_EQ(kept_fraction(all), 1.0);
  EXPECT_THROW(prune_links(ones, 1.5), InputError);
  EXPECT_THROW(prune_links(ones, -0.1), InputError);
}

TEST(Prune, ThetaZeroKeepsEveryLinkWithPositiveNormalizedMean) {
  LinkSnapshot s;
  s.heads = 2;
  s.layers = 2;
  s.block_widths = {2};
  s.W = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  const Mask m = prune_links(normalize_links(s), 0.0);
  EXPECT_EQ(kept_fraction(m), 1.0);
}

TEST(Heatmap, MatchesBruteForceGroupingAndPartitionSum) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const LinkSnapshot s = random_snapshot(rng);
    const Heatmap h = block_heatmap(s);
    const auto want = heatmap_oracle(s);
    ASSERT_EQ(h.values.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_LE(std::abs(h.values[i] - want[i]), 1e-12);

    double lhs = 0, rhs = 0;
    for (int j = 0; j < h.blocks; ++j)
      for (int n = 0; n < h.layers; ++n) lhs += h.at(j, n) * s.block_widths[j] * s.heads;
    for (double w : s.W) rhs += std::abs(w);
    EXPECT_NEAR(lhs, rhs, 1e-9);
  }
}

TEST(Heatmap, SingleNonzeroEntryAndZeroLinks) {
  LinkSnapshot s;
  s.heads = 3;
  s.layers = 2;
  s.block_widths = {2, 1};
  s.W.assign(18, 0.0);
  const Heatmap zero = block_heatmap(s);
  for (double v : zero.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(heatmap_csv(zero), "block,layer_1,layer_2\n1,0,0\n2,0,0\n");

  s.W[1 * 6 + 1 * 3 + 2] = -0.6;  // channel 1 (block 0), layer 1, head 2
  const Heatmap h = block_heatmap(s);
  EXPECT_DOUBLE_EQ(h.at(0, 1), 0.6 / (2 * 3));
  EXPECT_EQ(h.at(0, 0), 0.0);
  EXPECT_EQ(h.at(1, 0), 0.0);
  EXPECT_EQ(h.at(1, 1), 0.0);

  s.block_widths = {3, 0};
  EXPECT_THROW(block_heatmap(s), ConfigError);
}

TEST(Heatmap, PgmScalesToFullRange) {
  Rng rng(6);
  const Heatmap h = block_heatmap(random_snapshot(rng));
  const std::string pgm = heatmap_pgm(h);
  const std::string header = "P5\n" + std::to_string(h.layers) + " " + std::to_string(h.blocks) + "\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  const std::string pixels = pgm.substr(header.size());
  ASSERT_EQ(pixels.size(), h.values.size());
  const auto mx = *std::max_element(pixels.begin(), pixels.end(), [](char a, char b) {
    return static_cast<unsigned char>(a) < static_cast<unsigned char>(b);
  });
  EXPECT_EQ(static_cast<unsigned char>(mx), 255);

  Heatmap flat{1, 2, {0.5, 0.5}};
  EXPECT_EQ(heatmap_pgm(flat).substr(std::string("P5\n2 1\n255\n").size()), std::string("\xff\xff"));
  Heatmap zero{1, 2, {0.0, 0.0}};
  EXPECT_EQ(heatmap_pgm(zero).substr(std::string("P5\n2 1\n255\n").size()), std::string(2, '\0'));
}

TEST(RangeMask, FullRangesGiveAllOnesAndSingleLayerCounts) {
  const std::vector<int> widths = {2, 3};
  const Mask full = build_range_mask({{1, 1, 4}, {2, 1, 4}}, widths, 4, 4);
  EXPECT_EQ(kept_fraction(full), 1.0);
  const Mask one = build_range_mask({{2, 2, 2}}, widths, 4, 4);
  for (int c = 0; c < 5; ++c) {
    const int ones = static_cast<int>(std::count(one.begin() + c * 16, one.begin() + (c + 1) * 16, 1));
    EXPECT_EQ(ones, c < 2 ? 0 : 4) << c;
    if (c >= 2) {
      for (int h = 0; h < 4; ++h) EXPECT_EQ(one[c * 16 + 1 * 4 + h], 1);
    }
  }
}

TEST(RangeMask, TableOneAlphaAndBetaConfigurationsMatchCountingOracle) {
  const std::vector<int> widths = {2, 3, 1, 4, 2, 3, 5};
  const int heads = 6, layers = 12;
  const std::vector<BlockRange> alpha = {{1, 1, 3}, {2, 1, 5}, {3, 3, 5}, {4, 4, 6},
                                         {5, 4, 6}, {6, 6, 11}, {7, 7, 12}};
  const std::vector<BlockRange> beta = {{1, 1, 2}, {2, 1, 5}, {3, 3, 5}, {4, 4, 6},
                                        {5, 4, 7}, {6, 6, 10}, {7, 7, 10}};
  for (const auto* spec : {&alpha, &beta}) {
    const Mask m = build_range_mask(*spec, widths, heads, layers);
    long expected = 0;
    for (const auto& r : *spec) expected += static_cast<long>(widths[r.block - 1]) * heads * (r.hi - r.lo + 1);
    EXPECT_EQ(std::count(m.begin(), m.end(), 1), expected);
    int c = 0;
    for (std::size_t j = 0; j < widths.size(); ++j)
      for (int k = 0; k < widths[j]; ++k, ++c)
        for (int n = 0; n < layers; ++n)
          for (int h = 0; h < heads; ++h) {
            const auto& r = (*spec)[j];
            EXPECT_EQ(m[c * heads * layers + n * heads + h], (n + 1 >= r.lo && n + 1 <= r.hi) ? 1 : 0);
          }
    EXPECT_EQ(block_envelope(m, widths, heads, layers), *spec);
  }
  // Beta disconnects every block from layers above 10.
  const Mask b = build_range_mask(beta, widths, heads, layers);
  for (int c = 0; c < 20; ++c)
    for (int n = 10; n < layers; ++n)
      for (int h = 0; h < heads; ++h) EXPECT_EQ(b[c * heads * layers + n * heads + h], 0);
}

TEST(RangeMask, InvalidRangesAreInputErrors) {
  const std::vector<int> widths = {2, 2};
  EXPECT_THROW(build_range_mask({{1, 0, 2}}, widths, 2, 4), InputError);
  EXPECT_THROW(build_range_mask({{1, 2, 5}}, widths, 2, 4), InputError);
  EXPECT_THROW(build_range_mask({{1, 3, 2}}, widths, 2, 4), InputError);
  EXPECT_THROW(build_range_mask({{3, 1, 2}}, widths, 2, 4), InputError);
  EXPECT_THROW(build_range_mask({{1, 1, 2}, {1, 2, 3}}, widths, 2, 4), InputError);
}

TEST(MaskFiles, SpecJsonAndRawMaskRoundTrip) {
  aal::test::TempDir dir("linksel");
  const std::vector<BlockRange> spec = {{1, 1, 3}, {3, 2, 2}};
  write_mask_spec(dir.file("spec.json"), spec);
  EXPECT_EQ(read_mask_spec(dir.file("spec.json")), spec);
  EXPECT_THROW(mask_spec_from_json("[{\"block\": 1, \"lo\": 2}]"), FormatError);
  EXPECT_THROW(mask_spec_from_json("not json"), FormatError);

  const Mask m = {1, 0, 0, 1, 1, 1};
  write_raw_mask(dir.file("m.mask"), m, 2, 3);
  int c = 0, k = 0;
  EXPECT_EQ(read_raw_mask(dir.file("m.mask"), c, k), m);
  EXPECT_EQ(c, 2);
  EXPECT_EQ(k, 3);
  EXPECT_EQ(aal::test::slurp(dir.file("m.mask")), std::string("\x02\0\0\0\x03\0\0\0\x01\0\0\x01\x01\x01", 14));
}
