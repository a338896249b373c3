// Image decode, grayscale conversion, bilinear resize, masking, and the PGM
// encoder. Reference values are computed by hand or by independent naive
// loops inside this file.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image.hpp"
#include "synergy/image_io.hpp"

using namespace synergy;

namespace {

// PNG fixtures (RGB 4x3 with pixel (x,y) = (40x+10, 70y+5, 30(x+y)+20), and
// grayscale 2x2 with values 0,128,200,255), stored as literal encoder output.
const unsigned char kPngRgb4x3[] = {
    137, 80,  78,  71,  13,  10,  26,  10,  0,   0,   0,   13,  73,  72,
    68,  82,  0,   0,   0,   4,   0,   0,   0,   3,   8,   2,   0,   0,
    0,   59,  150, 57,  145, 0,   0,   0,   26,  73,  68,  65,  84,  120,
    156, 99,  228, 98,  21,  209, 96,  144, 131, 32,  22,  6,   55,  57,
    6,   6,   40,  66,  225, 0,   0,   52,  77,  2,   123, 63,  8,   5,
    70,  0,   0,   0,   0,   73,  69,  78,  68,  174, 66,  96,  130,
};

const unsigned char kPngGray2x2[] = {
    137, 80,  78,  71,  13,  10,  26,  10,  0,   0,   0,   13,  73, 72,
    68,  82,  0,   0,   0,   2,   0,   0,   0,   2,   8,   0,   0,  0,
    0,   87,  221, 82,  248, 0,   0,   0,   14,  73,  68,  65,  84, 120,
    156, 99,  96,  104, 96,  56,  241, 31,  0,   4,   149, 2,   72, 17,
    168, 246, 227, 0,   0,   0,   0,   73,  69,  78,  68,  174, 66, 96,
    130,
};

std::vector<unsigned char> bytes_of(const std::string& s) {
  return {s.begin(), s.end()};
}

GrayImage random_image(int w, int h, Rng& rng) {
  GrayImage img(w, h);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// Independent bilinear reference: per-pixel gather with half-pixel centers.
double ref_bilinear_at(const GrayImage& im, int out_w, int out_h, int x, int y) {
  auto src = [&](double f, int n) {
    if (f < 0.0) f = 0.0;
    if (f > n - 1) f = n - 1;
    return f;
  };
  const double fx = src((x + 0.5) * im.width / out_w - 0.5, im.width);
  const double fy = src((y + 0.5) * im.height / out_h - 0.5, im.height);
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, im.width - 1);
  const int y1 = std::min(y0 + 1, im.height - 1);
  const double ax = fx - x0, ay = fy - y0;
  return (1 - ay) * ((1 - ax) * im.at(x0, y0) + ax * im.at(x1, y0)) +
         ay * ((1 - ax) * im.at(x0, y1) + ax * im.at(x1, y1));
}

}  // namespace

TEST(Pnm, DecodesP5) {
  std::string s = "P5\n4 2\n255\n";
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>(i * 30));
  const RgbImage img = decode_image(bytes_of(s));
  ASSERT_EQ(img.width, 4);
  ASSERT_EQ(img.height, 2);
  for (int i = 0; i < 8; ++i) {
    const int x = i % 4, y = i / 4;
    EXPECT_DOUBLE_EQ(img.at(x, y, 0), i * 30 / 255.0);
    EXPECT_DOUBLE_EQ(img.at(x, y, 1), i * 30 / 255.0);
    EXPECT_DOUBLE_EQ(img.at(x, y, 2), i * 30 / 255.0);
  }
}

TEST(Pnm, DecodesP6WithCommentsAndMaxval) {
  std::string s = "P6 # color\n# another comment\n2 1 100\n";
  const unsigned char px[6] = {0, 50, 100, 25, 75, 100};
  s.append(reinterpret_cast<const char*>(px), 6);
  const RgbImage img = decode_image(bytes_of(s));
  ASSERT_EQ(img.width, 2);
  ASSERT_EQ(img.height, 1);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 2), 1.0);
  EXPECT_DOUBLE_EQ(img.at(1, 0, 0), 0.25);
  EXPECT_DOUBLE_EQ(img.at(1, 0, 1), 0.75);
}

TEST(Pnm, RejectsBadInputsWithByteOffsets) {
  // Unknown magic.
  try {
    decode_image(bytes_of("P7\n1 1\n255\nx"));
    FAIL() << "expected input_error";
  } catch (const input_error& e) {
    EXPECT_NE(std::string(e.what()).find("unrecognized image magic"),
              std::string::npos);
  }
  // Truncated payload: promised 4 pixels, delivered 2.
  try {
    decode_pnm(reinterpret_cast<const unsigned char*>("P5\n2 2\n255\nab"), 13);
    FAIL() << "expected input_error";
  } catch (const input_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("truncated payload"), std::string::npos);
    EXPECT_NE(msg.find("byte 13"), std::string::npos);
  }
  // 16-bit maxval is not supported.
  EXPECT_THROW(decode_image(bytes_of("P5\n1 1\n65535\n\0\0")), input_error);
  // Zero dimension.
  EXPECT_THROW(decode_image(bytes_of("P5\n0 1\n255\n")), input_error);
  // Garbage where the single pre-payload whitespace belongs.
  EXPECT_THROW(decode_image(bytes_of("P5\n1 1\n255x\xff")), input_error);
  // Header cut off mid-number.
  EXPECT_THROW(decode_image(bytes_of("P5\n4")), input_error);
}

TEST(Png, DecodesRgbFixture) {
  const RgbImage img = decode_image(kPngRgb4x3, sizeof kPngRgb4x3);
  ASSERT_EQ(img.width, 4);
  ASSERT_EQ(img.height, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) {
      EXPECT_NEAR(img.at(x, y, 0), (40 * x + 10) / 255.0, 1e-12);
      EXPECT_NEAR(img.at(x, y, 1), (70 * y + 5) / 255.0, 1e-12);
      EXPECT_NEAR(img.at(x, y, 2), (30 * (x + y) + 20) / 255.0, 1e-12);
    }
}

TEST(Png, DecodesGrayscaleFixtureAsRgb) {
  const RgbImage img = decode_image(kPngGray2x2, sizeof kPngGray2x2);
  ASSERT_EQ(img.width, 2);
  ASSERT_EQ(img.height, 2);
  const int want[4] = {0, 128, 200, 255};
  for (int i = 0; i < 4; ++i) {
    const int x = i % 2, y = i / 2;
    for (int c = 0; c < 3; ++c)
      EXPECT_NEAR(img.at(x, y, c), want[i] / 255.0, 1e-12);
  }
}

TEST(Png, RejectsCorruptStream) {
  std::vector<unsigned char> bad(kPngRgb4x3, kPngRgb4x3 + sizeof kPngRgb4x3);
  bad.resize(20);  // header magic intact, stream truncated
  EXPECT_THROW(decode_image(bad), input_error);
}

TEST(Grayscale, UsesStandardLuminanceWeights) {
  RgbImage img(1, 1);
  img.data = {0.25, 0.5, 0.75};
  const GrayImage g = to_grayscale(img);
  EXPECT_DOUBLE_EQ(g.at(0, 0), 0.299 * 0.25 + 0.587 * 0.5 + 0.114 * 0.75);
}

TEST(Resize, MatchesNaiveReference) {
  Rng rng(11);
  const GrayImage src = random_image(13, 9, rng);
  for (auto [w, h] : {std::pair{7, 5}, {26, 18}, {13, 4}, {1, 1}, {40, 9}}) {
    const GrayImage out = resize_bilinear(src, w, h);
    ASSERT_EQ(out.width, w);
    ASSERT_EQ(out.height, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        EXPECT_NEAR(out.at(x, y), ref_bilinear_at(src, w, h, x, y), 1e-12)
            << w << "x" << h << " at " << x << "," << y;
  }
}

TEST(Resize, IdentityIsExactAndRangeIsPreserved) {
  Rng rng(5);
  const GrayImage src = random_image(8, 8, rng);
  const GrayImage same = resize_bilinear(src, 8, 8);
  EXPECT_EQ(same.data, src.data);

  double lo = 1.0, hi = 0.0;
  for (double v : src.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const GrayImage up = resize_bilinear(src, 19, 23);
  for (double v : up.data) {
    EXPECT_GE(v, lo - 1e-12);
    EXPECT_LE(v, hi + 1e-12);
  }
  EXPECT_THROW(resize_bilinear(src, 0, 4), input_error);
}

TEST(Masks, ZeroClipAndIdempotence) {
  GrayImage img(4, 4, 0.5);
  // One rect overhanging the corner, one fully inside, one fully outside.
  const std::vector<MaskRect> rects = {
      {-1, -1, 2, 2}, {2, 2, 1, 1}, {10, 10, 3, 3}};
  const GrayImage m1 = apply_masks(img, rects);
  EXPECT_DOUBLE_EQ(m1.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m1.at(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(m1.at(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(m1.at(2, 2), 0.0);
  EXPECT_DOUBLE_EQ(m1.at(3, 3), 0.5);
  const GrayImage m2 = apply_masks(m1, rects);
  EXPECT_EQ(m2.data, m1.data);
  // Degenerate rects are ignored.
  const GrayImage m3 = apply_masks(img, {{1, 1, 0, 5}});
  EXPECT_EQ(m3.data, img.data);
}

TEST(Pgm, EncodeDecodeRoundTripsQuantizedValues) {
  Rng rng(3);
  const GrayImage src = random_image(6, 4, rng);
  const auto bytes = encode_pgm(src);
  const GrayImage back = to_grayscale(decode_image(bytes));
  ASSERT_EQ(back.width, 6);
  ASSERT_EQ(back.height, 4);
  for (int i = 0; i < 24; ++i) {
    const double q = quantize_byte(src.data[i]) / 255.0;
    EXPECT_NEAR(back.data[i], q, 1e-12);
  }
}

TEST(Pgm, QuantizeRoundsHalfAwayAndClamps) {
  EXPECT_EQ(quantize_byte(0.0), 0);
  EXPECT_EQ(quantize_byte(1.0), 255);
  EXPECT_EQ(quantize_byte(-0.2), 0);
  EXPECT_EQ(quantize_byte(1.7), 255);
  // 0.5/255 boundary: v*255 = 127.5 rounds away from zero to 128.
  EXPECT_EQ(quantize_byte(127.5 / 255.0), 128);
}
