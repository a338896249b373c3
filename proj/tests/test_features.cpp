// Hierarchical HOG and uniform LBP against naive double-loop references.
// The references are written pixel-major with scanned block/bin lookups so
// they share no indexing or layout logic with the library implementation;
// per-histogram accumulation order matches, so comparisons are bit-exact.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/features.hpp"
#include "synergy/image.hpp"

using namespace synergy;

namespace {

GrayImage random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// Largest block index whose span start is <= coord (linear scan).
int find_block(int n, int k, int coord) {
  int b = 0;
  for (int i = 0; i < k; ++i)
    if ((static_cast<long long>(i) * n) / k <= coord) b = i;
  return b;
}

struct RefGrad {
  double mag, deg;
};

RefGrad ref_gradient(const GrayImage& img, int x, int y) {
  const int xm = std::max(x - 1, 0), xp = std::min(x + 1, img.width - 1);
  const int ym = std::max(y - 1, 0), yp = std::min(y + 1, img.height - 1);
  const double gx = img.at(xp, y) - img.at(xm, y);
  const double gy = img.at(x, yp) - img.at(x, ym);
  double deg = std::atan2(gy, gx) * (180.0 / M_PI);
  deg = std::fmod(deg, 180.0);
  if (deg < 0.0) deg += 180.0;
  if (deg >= 180.0) deg = 0.0;
  return {std::sqrt(gx * gx + gy * gy), deg};
}

// Pixel-major HOG reference: every interior pixel finds its own block.
std::vector<double> ref_hog(const GrayImage& img, const HogConfig& cfg) {
  std::vector<double> out(hog_length(cfg), 0.0);
  std::size_t level_off = 0;
  for (int l = 1; l <= cfg.levels; ++l) {
    const int side = 1 << l;
    for (int y = 1; y < img.height - 1; ++y)
      for (int x = 1; x < img.width - 1; ++x) {
        const RefGrad g = ref_gradient(img, x, y);
        int bin = static_cast<int>(std::floor(g.deg / cfg.range * cfg.bins));
        if (bin < 0) bin = 0;
        if (bin >= cfg.bins) bin = cfg.bins - 1;
        const int by = find_block(img.height, side, y);
        const int bx = find_block(img.width, side, x);
        out[level_off +
            (static_cast<std::size_t>(by) * side + bx) * cfg.bins + bin] +=
            g.mag;
      }
    level_off += static_cast<std::size_t>(side) * side * cfg.bins;
  }
  return out;
}

// Independent LBP code builder: explicit per-bit neighbor table.
int ref_lbp_code(const GrayImage& img, int x, int y, int r) {
  const double c = img.at(x, y);
  // (dx, dy, bit): clockwise from the top-left corner, MSB first.
  const int nb[8][3] = {{-1, -1, 7}, {0, -1, 6}, {1, -1, 5}, {1, 0, 4},
                        {1, 1, 3},   {0, 1, 2},  {-1, 1, 1}, {-1, 0, 0}};
  int code = 0;
  for (const auto& t : nb)
    if (img.at(x + t[0] * r, y + t[1] * r) >= c) code |= 1 << t[2];
  return code;
}

int ref_transitions(int code) {
  int n = 0;
  for (int i = 0; i < 8; ++i) {
    const int a = (code >> i) & 1;
    const int b = (code >> ((i + 1) % 8)) & 1;
    if (a != b) ++n;
  }
  return n;
}

int ref_lbp_bin(int code) {
  if (ref_transitions(code) > 2) return 58;
  int bin = 0;
  for (int c = 0; c < code; ++c)
    if (ref_transitions(c) <= 2) ++bin;
  return bin;
}

std::vector<double> ref_lbp(const GrayImage& img, const LbpConfig& cfg) {
  std::vector<double> out(lbp_length(cfg), 0.0);
  for (int y = cfg.radius; y < img.height - cfg.radius; ++y)
    for (int x = cfg.radius; x < img.width - cfg.radius; ++x) {
      const int by = find_block(img.height, cfg.grid, y);
      const int bx = find_block(img.width, cfg.grid, x);
      out[(static_cast<std::size_t>(by) * cfg.grid + bx) * kLbpBins +
          ref_lbp_bin(ref_lbp_code(img, x, y, cfg.radius))] += 1.0;
    }
  return out;
}

}  // namespace

TEST(Hog, LengthFormula) {
  EXPECT_EQ(hog_length(HogConfig{4, 9, 180.0}), 3060u);  // sum 4^l * 9
  EXPECT_EQ(hog_length(HogConfig{1, 9, 180.0}), 36u);
  EXPECT_EQ(hog_length(HogConfig{2, 5, 180.0}), 100u);
}

TEST(Hog, MatchesNaiveReferenceBitExact) {
  const HogConfig cfg{4, 9, 180.0};
  for (int t = 0; t < 20; ++t) {
    const GrayImage img = random_image(32, 32, 100 + t);
    const FeatureVector got = hog_hierarchical(img, cfg);
    const std::vector<double> want = ref_hog(img, cfg);
    ASSERT_EQ(got.data.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
      ASSERT_EQ(got.data[i], want[i]) << "image " << t << " index " << i;
  }
}

TEST(Hog, MatchesNaiveReferenceOnOddSizes) {
  const HogConfig cfg{3, 7, 180.0};
  for (auto [w, h] : {std::pair{33, 29}, {17, 40}, {9, 9}}) {
    const GrayImage img = random_image(w, h, w * 1000 + h);
    const FeatureVector got = hog_hierarchical(img, cfg);
    EXPECT_EQ(got.data, ref_hog(img, cfg));
  }
}

TEST(Hog, EveryLevelSumsToInteriorMagnitudeTotal) {
  const HogConfig cfg{4, 9, 180.0};
  const GrayImage img = random_image(47, 31, 9);
  const GradientField g = gradient_field(img);
  double total = 0.0;
  for (int y = 1; y < img.height - 1; ++y)
    for (int x = 1; x < img.width - 1; ++x) total += g.magnitude.at(x, y);

  const FeatureVector fv = hog_hierarchical(img, cfg);
  std::size_t off = 0;
  for (int l = 1; l <= cfg.levels; ++l) {
    const std::size_t n = (1u << l) * (1u << l) * cfg.bins;
    double level_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) level_sum += fv.data[off + i];
    EXPECT_NEAR(level_sum, total, 1e-9 * std::max(1.0, std::abs(total)))
        << "level " << l;
    off += n;
  }
}

TEST(Hog, IntensityOffsetInvariance) {
  // Dyadic pixel values and a dyadic shift keep the subtractions exact, so
  // the descriptor must be bit-identical under a constant intensity offset.
  Rng rng(4);
  GrayImage a(24, 24);
  for (double& v : a.data) v = static_cast<double>(rng.below(512)) / 1024.0;
  GrayImage b = a;
  for (double& v : b.data) v += 0.25;
  const HogConfig cfg{4, 9, 180.0};
  EXPECT_EQ(hog_hierarchical(a, cfg).data, hog_hierarchical(b, cfg).data);
}

TEST(Hog, BinAssignmentBoundaries) {
  EXPECT_EQ(hog_bin(0.0, 9, 180.0), 0);
  EXPECT_EQ(hog_bin(19.999, 9, 180.0), 0);
  EXPECT_EQ(hog_bin(20.0, 9, 180.0), 1);
  EXPECT_EQ(hog_bin(179.999, 9, 180.0), 8);
  EXPECT_EQ(hog_bin(180.0, 9, 180.0), 8);  // clamp guards fp spillover
}

TEST(Gradients, HandComputedCenterPixel) {
  GrayImage img(3, 3, 0.0);
  img.at(0, 1) = 0.2;
  img.at(2, 1) = 0.6;  // gx = 0.4
  img.at(1, 0) = 0.1;
  img.at(1, 2) = 0.4;  // gy = 0.3
  const GradientField g = gradient_field(img);
  EXPECT_DOUBLE_EQ(g.magnitude.at(1, 1), 0.5);
  EXPECT_NEAR(g.orientation.at(1, 1), std::atan2(0.3, 0.4) * 180.0 / M_PI,
              1e-12);
  EXPECT_THROW(gradient_field(GrayImage(2, 3, 0.0)), input_error);
}

TEST(Gradients, OrientationFoldsToHalfCircle) {
  // Pure -x gradient: atan2 gives 180, folds to 0.
  GrayImage img(3, 3, 0.0);
  img.at(0, 1) = 1.0;
  const GradientField g = gradient_field(img);
  EXPECT_DOUBLE_EQ(g.orientation.at(1, 1), 0.0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      EXPECT_GE(g.orientation.at(x, y), 0.0);
      EXPECT_LT(g.orientation.at(x, y), 180.0);
    }
}

TEST(Lbp, LengthAndUniformCodeCount) {
  EXPECT_EQ(lbp_length(LbpConfig{8, 1}), 3776u);  // 64 blocks x 59 bins
  int uniform = 0;
  for (int c = 0; c < 256; ++c)
    if (is_uniform(static_cast<std::uint8_t>(c))) ++uniform;
  EXPECT_EQ(uniform, 58);
  // Table maps uniform codes to 0..57 ascending, the rest to 58.
  const auto& table = lbp_bin_table();
  int prev = -1;
  for (int c = 0; c < 256; ++c) {
    if (is_uniform(static_cast<std::uint8_t>(c))) {
      EXPECT_EQ(table[c], prev + 1);
      prev = table[c];
    } else {
      EXPECT_EQ(table[c], 58);
    }
  }
  EXPECT_EQ(prev, 57);
}

TEST(Lbp, HandComputedCodes) {
  GrayImage img(3, 3, 0.0);
  img.at(1, 1) = 0.5;
  // Neighbors clockwise from top-left: 0.6 0.4 0.5 | 0.3 0.7 0.2 | 0.5 0.1
  img.at(0, 0) = 0.6;
  img.at(1, 0) = 0.4;
  img.at(2, 0) = 0.5;
  img.at(2, 1) = 0.3;
  img.at(2, 2) = 0.7;
  img.at(1, 2) = 0.2;
  img.at(0, 2) = 0.5;
  img.at(0, 1) = 0.1;
  EXPECT_EQ(lbp_code(img, 1, 1, 1), 0xAA);  // alternating -> non-uniform
  EXPECT_FALSE(is_uniform(0xAA));
  EXPECT_EQ(lbp_bin_table()[0xAA], 58);

  // Ties count as >=: an all-equal neighborhood gives all ones.
  const GrayImage flat(3, 3, 0.3);
  EXPECT_EQ(lbp_code(flat, 1, 1, 1), 0xFF);
  EXPECT_TRUE(is_uniform(0xFF));
  EXPECT_EQ(lbp_bin_table()[0xFF], 57);
  EXPECT_EQ(lbp_bin_table()[0x00], 0);

  EXPECT_THROW(lbp_code(flat, 0, 1, 1), input_error);
}

TEST(Lbp, MatchesNaiveReferenceBitExact) {
  const LbpConfig cfg{8, 1};
  for (int t = 0; t < 20; ++t) {
    const GrayImage img = random_image(32, 32, 500 + t);
    const FeatureVector got = lbp_hierarchical(img, cfg);
    const std::vector<double> want = ref_lbp(img, cfg);
    ASSERT_EQ(got.data.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
      ASSERT_EQ(got.data[i], want[i]) << "image " << t << " index " << i;
  }
}

TEST(Lbp, MatchesNaiveReferenceOddSizesAndRadius2) {
  for (auto [w, h, grid, radius] :
       {std::tuple{33, 29, 8, 1}, {27, 27, 5, 2}, {16, 21, 3, 1}}) {
    const LbpConfig cfg{grid, radius};
    const GrayImage img = random_image(w, h, w * 31 + h * 7 + radius);
    EXPECT_EQ(lbp_hierarchical(img, cfg).data, ref_lbp(img, cfg));
  }
}

TEST(Lbp, HistogramTotalCountsSkipBorders) {
  const LbpConfig cfg{8, 1};
  const GrayImage img = random_image(32, 32, 77);
  const FeatureVector fv = lbp_hierarchical(img, cfg);
  double total = 0.0;
  for (double v : fv.data) total += v;
  EXPECT_DOUBLE_EQ(total, 30.0 * 30.0);  // interior pixels only
}

TEST(Partition, CoversRangeWithoutOverlap) {
  for (int n : {8, 13, 227}) {
    for (int k : {2, 4, 8, 16}) {
      EXPECT_EQ(partition_start(n, k, 0), 0);
      EXPECT_EQ(partition_start(n, k, k), n);
      for (int i = 0; i < k; ++i)
        EXPECT_LE(partition_start(n, k, i), partition_start(n, k, i + 1));
      // Span widths differ by at most one.
      int lo = n, hi = 0;
      for (int i = 0; i < k; ++i) {
        const int w = partition_start(n, k, i + 1) - partition_start(n, k, i);
        lo = std::min(lo, w);
        hi = std::max(hi, w);
      }
      EXPECT_LE(hi - lo, 1) << "n=" << n << " k=" << k;
    }
  }
}
