// Gaussian blur properties and difference-of-Gaussians keypoint detection:
// blob localization, fallback grid, equivariance, and filter monotonicity.

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "synergy/common.hpp"
#include "synergy/image.hpp"
#include "synergy/keypoints.hpp"

using namespace synergy;

namespace {

GrayImage gaussian_blob(int w, int h, double cx, double cy, double sigma,
                        double amp = 1.0) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      img.at(x, y) = amp * std::exp(-(dx * dx + dy * dy) /
                                    (2.0 * sigma * sigma));
    }
  return img;
}

double min_dist_to(const KeypointResult& r, double cx, double cy) {
  double best = 1e30;
  for (const Keypoint& k : r.points)
    best = std::min(best, std::hypot(k.x - cx, k.y - cy));
  return best;
}

}  // namespace

TEST(Blur, ConstantImageIsFixedPoint) {
  const GrayImage img(20, 14, 0.37);
  const GrayImage out = gaussian_blur(img, 2.0);
  for (double v : out.data) EXPECT_NEAR(v, 0.37, 1e-12);
  EXPECT_THROW(gaussian_blur(img, 0.0), input_error);
  EXPECT_THROW(gaussian_blur(img, -1.0), input_error);
}

TEST(Blur, ImpulsePreservesMassAndIsSymmetric) {
  GrayImage img(41, 41, 0.0);
  img.at(20, 20) = 1.0;
  const GrayImage out = gaussian_blur(img, 2.5);
  double mass = 0.0;
  for (double v : out.data) mass += v;
  EXPECT_NEAR(mass, 1.0, 1e-12);  // kernel normalized, support fits
  for (int d = 1; d <= 7; ++d) {
    EXPECT_NEAR(out.at(20 + d, 20), out.at(20 - d, 20), 1e-15);
    EXPECT_NEAR(out.at(20, 20 + d), out.at(20, 20 - d), 1e-15);
    EXPECT_NEAR(out.at(20 + d, 20), out.at(20, 20 + d), 1e-15);
  }
  // Monotone decay from the center along an axis.
  for (int d = 1; d <= 7; ++d)
    EXPECT_LT(out.at(20 + d, 20), out.at(20 + d - 1, 20));
}

TEST(Blur, SemigroupComposition) {
  // blur(sigma1) then blur(sigma2) ~ blur(sqrt(s1^2+s2^2)) away from borders.
  Rng rng(13);
  GrayImage img(64, 64);
  for (double& v : img.data) v = rng.uniform();
  const GrayImage ab = gaussian_blur(gaussian_blur(img, 1.2), 1.6);
  const GrayImage direct = gaussian_blur(img, std::sqrt(1.2 * 1.2 + 1.6 * 1.6));
  for (int y = 12; y < 52; ++y)
    for (int x = 12; x < 52; ++x)
      EXPECT_NEAR(ab.at(x, y), direct.at(x, y), 2e-3);
}

TEST(Keypoints, GaussianBlobFoundWithinTwoPixels) {
  const GrayImage img = gaussian_blob(64, 64, 31.0, 33.0, 3.0);
  const KeypointResult r = detect_keypoints(img, DogConfig{});
  ASSERT_FALSE(r.fallback_grid);
  ASSERT_FALSE(r.points.empty());
  EXPECT_LE(min_dist_to(r, 31.0, 33.0), 2.0);
}

TEST(Keypoints, ConstantImageFallsBackToFlaggedGrid) {
  const GrayImage img(32, 48, 0.5);
  const KeypointResult r = detect_keypoints(img, DogConfig{});
  EXPECT_TRUE(r.fallback_grid);
  ASSERT_EQ(r.points.size(), 16u);
  // Uniform 4x4 grid at cell centers ((i+0.5) W/4, (j+0.5) H/4).
  int idx = 0;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i, ++idx) {
      EXPECT_DOUBLE_EQ(r.points[idx].x, (i + 0.5) * 32.0 / 4.0);
      EXPECT_DOUBLE_EQ(r.points[idx].y, (j + 0.5) * 48.0 / 4.0);
      EXPECT_EQ(r.points[idx].scale_index, -1);
    }
}

TEST(Keypoints, TranslationEquivariance) {
  const GrayImage a = gaussian_blob(80, 80, 30.0, 30.0, 3.0);
  const GrayImage b = gaussian_blob(80, 80, 38.0, 26.0, 3.0);
  const KeypointResult ra = detect_keypoints(a, DogConfig{});
  const KeypointResult rb = detect_keypoints(b, DogConfig{});
  ASSERT_FALSE(ra.fallback_grid);
  ASSERT_FALSE(rb.fallback_grid);
  // The blob's nearest keypoint tracks the translation within 2 px total.
  EXPECT_LE(min_dist_to(ra, 30.0, 30.0), 2.0);
  EXPECT_LE(min_dist_to(rb, 38.0, 26.0), 2.0);
}

TEST(Keypoints, ContrastFilterIsMonotone) {
  // Two blobs, one at 30% amplitude. Raising the contrast threshold can only
  // shrink the keypoint set.
  GrayImage img(96, 64, 0.0);
  const GrayImage strong = gaussian_blob(96, 64, 24.0, 32.0, 3.0, 1.0);
  const GrayImage weak = gaussian_blob(96, 64, 72.0, 32.0, 3.0, 0.3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = strong.data[i] + weak.data[i];

  DogConfig lo;
  lo.contrast_thresh = 0.005;
  const KeypointResult rl = detect_keypoints(img, lo);
  ASSERT_FALSE(rl.fallback_grid);
  EXPECT_LE(min_dist_to(rl, 24.0, 32.0), 2.0);
  EXPECT_LE(min_dist_to(rl, 72.0, 32.0), 2.0);

  // Measure each blob's response, then split them with a threshold in
  // between: the strong blob must survive, the weak one must not.
  auto response_near = [&](double cx, double cy) {
    double best_d = 1e30, resp = 0.0;
    for (const Keypoint& k : rl.points) {
      const double d = std::hypot(k.x - cx, k.y - cy);
      if (d < best_d) {
        best_d = d;
        resp = std::abs(k.response);
      }
    }
    return resp;
  };
  const double strong_resp = response_near(24.0, 32.0);
  const double weak_resp = response_near(72.0, 32.0);
  ASSERT_GT(strong_resp, weak_resp);

  DogConfig hi;
  hi.contrast_thresh = 0.5 * (strong_resp + weak_resp);
  const KeypointResult rh = detect_keypoints(img, hi);
  ASSERT_FALSE(rh.fallback_grid);
  EXPECT_GE(rl.points.size(), rh.points.size());
  EXPECT_LE(min_dist_to(rh, 24.0, 32.0), 2.0);
  EXPECT_GT(min_dist_to(rh, 72.0, 32.0), 4.0);
}

TEST(Keypoints, AllCoordinatesInBounds) {
  Rng rng(99);
  GrayImage img(100, 60);
  for (double& v : img.data) v = rng.uniform();
  const KeypointResult r = detect_keypoints(img, DogConfig{});
  for (const Keypoint& k : r.points) {
    EXPECT_GE(k.x, 0.0);
    EXPECT_LT(k.x, 100.0);
    EXPECT_GE(k.y, 0.0);
    EXPECT_LT(k.y, 60.0);
    EXPECT_GE(k.octave, 0);
  }
  // No exact duplicate coordinates.
  std::set<std::pair<double, double>> seen;
  for (const Keypoint& k : r.points)
    EXPECT_TRUE(seen.insert({k.x, k.y}).second) << k.x << "," << k.y;
}

TEST(Keypoints, RejectsTinyImages) {
  EXPECT_THROW(detect_keypoints(GrayImage(15, 64, 0.0), DogConfig{}),
               input_error);
  EXPECT_NO_THROW(detect_keypoints(GrayImage(16, 16, 0.0), DogConfig{}));
}

TEST(Keypoints, DeterministicAcrossCalls) {
  Rng rng(5);
  GrayImage img(64, 64);
  for (double& v : img.data) v = rng.uniform();
  const KeypointResult a = detect_keypoints(img, DogConfig{});
  const KeypointResult b = detect_keypoints(img, DogConfig{});
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].x, b.points[i].x);
    EXPECT_EQ(a.points[i].y, b.points[i].y);
    EXPECT_EQ(a.points[i].octave, b.points[i].octave);
    EXPECT_EQ(a.points[i].response, b.points[i].response);
  }
  const std::string csv = keypoints_to_csv(a);
  EXPECT_EQ(csv, keypoints_to_csv(b));
  EXPECT_NE(csv.find("x,y,octave,scale_index,response"), std::string::npos);
}

TEST(Decimate, SizesRoundUpAndSamplesEvenPixels) {
  GrayImage img(5, 4);
  for (int i = 0; i < 20; ++i) img.data[i] = i;
  const GrayImage d = detail::decimate2(img);
  ASSERT_EQ(d.width, 3);
  ASSERT_EQ(d.height, 2);
  EXPECT_DOUBLE_EQ(d.at(0, 0), img.at(0, 0));
  EXPECT_DOUBLE_EQ(d.at(1, 0), img.at(2, 0));
  EXPECT_DOUBLE_EQ(d.at(2, 1), img.at(4, 2));
}
