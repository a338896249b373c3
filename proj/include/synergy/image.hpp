#pragma once

// Raster primitives: RGB / grayscale images in [0,1], bilinear resize,
// grayscale conversion, and rectangle masking.

#include <algorithm>
#include <cmath>
#include <vector>

#include "synergy/common.hpp"

namespace synergy {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // row-major, 3 channels interleaved

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(3u * w * h, 0.0) {}

  double& at(int x, int y, int c) { return data[3u * (static_cast<std::size_t>(y) * width + x) + c]; }
  double at(int x, int y, int c) const { return data[3u * (static_cast<std::size_t>(y) * width + x) + c]; }
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// A 2-D real-valued map with image layout but no [0,1] invariant (gradients,
// difference-of-Gaussian responses, activation slices).
struct ScalarField {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ScalarField() = default;
  ScalarField(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct MaskRect {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
};

inline GrayImage to_grayscale(const RgbImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                     0.114 * img.at(x, y, 2);
  return out;
}

// Bilinear resize with half-pixel-center alignment: the source coordinate of
// output pixel d is (d + 0.5) * (in/out) - 0.5, clamped to the border.
inline GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw input_error("resize_bilinear: target dimensions must be >= 1");
  if (out_w == img.width && out_h == img.height) return img;

  GrayImage out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double top = img.at(x0, y0) * (1.0 - wx) + img.at(x1, y0) * wx;
      const double bot = img.at(x0, y1) * (1.0 - wx) + img.at(x1, y1) * wx;
      out.at(x, y) = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

// Zero every pixel covered by any rect (clipped to bounds). Idempotent.
inline GrayImage apply_masks(const GrayImage& img,
                             const std::vector<MaskRect>& rects) {
  GrayImage out = img;
  for (const MaskRect& r : rects) {
    if (r.w <= 0 || r.h <= 0) continue;
    const int x_lo = std::max(r.x0, 0);
    const int y_lo = std::max(r.y0, 0);
    const int x_hi = std::min(r.x0 + r.w, img.width);
    const int y_hi = std::min(r.y0 + r.h, img.height);
    for (int y = y_lo; y < y_hi; ++y)
      for (int x = x_lo; x < x_hi; ++x) out.at(x, y) = 0.0;
  }
  return out;
}

}  // namespace synergy
