#pragma once

// Difference-of-Gaussians keypoint detection (SIFT detector stage only:
// locations, no orientation or descriptors).

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image.hpp"

namespace synergy {

struct Keypoint {
  double x = 0.0;       // input-image pixel units
  double y = 0.0;
  int octave = 0;
  int scale_index = 0;  // DoG index within the octave; -1 for fallback points
  double response = 0.0;
};

struct DogConfig {
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double contrast_thresh = 0.03;
  double edge_ratio = 10.0;
  int max_octaves = 8;  // additionally stops once min dim < 16
};

struct KeypointResult {
  std::vector<Keypoint> points;
  bool fallback_grid = false;
};

// Separable Gaussian blur, kernel radius ceil(3*sigma), normalized to sum 1,
// replicate borders. Horizontal pass first, then vertical (fixed order so
// results are bit-reproducible).
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0)) throw input_error("gaussian_blur: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(static_cast<double>(i) * i) /
                                  (2.0 * sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  GrayImage tmp(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xi = std::clamp(x + i, 0, img.width - 1);
        acc += kernel[i + radius] * img.at(xi, y);
      }
      tmp.at(x, y) = acc;
    }
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yi = std::clamp(y + i, 0, img.height - 1);
        acc += kernel[i + radius] * tmp.at(x, yi);
      }
      out.at(x, y) = acc;
    }
  return out;
}

namespace detail {

// Keep every other pixel in both directions (sizes round up).
inline GrayImage decimate2(const GrayImage& img) {
  GrayImage out((img.width + 1) / 2, (img.height + 1) / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

}  // namespace detail

// Scale-space extrema of the difference-of-Gaussians pyramid. Per octave,
// s+3 Gaussian images at sigma_i = base * 2^(i/s), each blurred directly from
// the octave base; DoG images are adjacent differences. Candidates are strict
// extrema over the 26-neighborhood in (x, y, scale), filtered by absolute
// contrast and by the 2x2 spatial Hessian edge test tr^2/det > (r+1)^2/r
// (non-positive determinants count as edges). Coordinates map back to input
// resolution via * 2^octave; exact duplicate (x, y) pairs are dropped. An
// empty result falls back to a uniform 4x4 grid, flagged.
inline KeypointResult detect_keypoints(const GrayImage& img,
                                       const DogConfig& cfg) {
  if (std::min(img.width, img.height) < 16)
    throw input_error("detect_keypoints: image must be at least 16x16");
  if (cfg.scales_per_octave < 1)
    throw input_error("detect_keypoints: scales_per_octave must be >= 1");

  KeypointResult result;
  std::set<std::pair<long long, long long>> seen;

  const int s = cfg.scales_per_octave;
  const double edge_bound =
      (cfg.edge_ratio + 1.0) * (cfg.edge_ratio + 1.0) / cfg.edge_ratio;

  GrayImage base = img;
  for (int octave = 0;
       octave < cfg.max_octaves && std::min(base.width, base.height) >= 16;
       ++octave) {
    std::vector<GrayImage> gauss;
    gauss.reserve(s + 3);
    for (int i = 0; i < s + 3; ++i)
      gauss.push_back(gaussian_blur(
          base, cfg.base_sigma * std::pow(2.0, static_cast<double>(i) / s)));

    std::vector<ScalarField> dog;
    dog.reserve(s + 2);
    for (int i = 0; i + 1 < static_cast<int>(gauss.size()); ++i) {
      ScalarField d(base.width, base.height);
      for (std::size_t j = 0; j < d.data.size(); ++j)
        d.data[j] = gauss[i + 1].data[j] - gauss[i].data[j];
      dog.push_back(std::move(d));
    }

    const long long scale = 1ll << octave;
    for (int i = 1; i <= s; ++i) {
      const ScalarField& cur = dog[i];
      for (int y = 1; y < base.height - 1; ++y) {
        for (int x = 1; x < base.width - 1; ++x) {
          const double v = cur.at(x, y);
          if (std::abs(v) < cfg.contrast_thresh) continue;

          bool is_max = true, is_min = true;
          for (int di = -1; di <= 1 && (is_max || is_min); ++di) {
            const ScalarField& layer = dog[i + di];
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (di == 0 && dy == 0 && dx == 0) continue;
                const double u = layer.at(x + dx, y + dy);
                if (u >= v) is_max = false;
                if (u <= v) is_min = false;
              }
          }
          if (!is_max && !is_min) continue;

          const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2.0 * v;
          const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2.0 * v;
          const double dxy = (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) -
                              cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1)) /
                             4.0;
          const double tr = dxx + dyy;
          const double det = dxx * dyy - dxy * dxy;
          if (det <= 0.0 || tr * tr / det > edge_bound) continue;

          const long long ix = static_cast<long long>(x) * scale;
          const long long iy = static_cast<long long>(y) * scale;
          if (!seen.insert({ix, iy}).second) continue;
          Keypoint kp;
          kp.x = static_cast<double>(ix);
          kp.y = static_cast<double>(iy);
          kp.octave = octave;
          kp.scale_index = i;
          kp.response = v;
          result.points.push_back(kp);
        }
      }
    }
    base = detail::decimate2(gauss[s]);
  }

  if (result.points.empty()) {
    result.fallback_grid = true;
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        Keypoint kp;
        kp.x = (i + 0.5) * img.width / 4.0;
        kp.y = (j + 0.5) * img.height / 4.0;
        kp.octave = 0;
        kp.scale_index = -1;
        kp.response = 0.0;
        result.points.push_back(kp);
      }
  }
  return result;
}

// Debug export: one line per keypoint.
inline std::string keypoints_to_csv(const KeypointResult& r) {
  std::string out = "x,y,octave,scale_index,response\n";
  for (const Keypoint& kp : r.points) {
    out += format_double(kp.x) + "," + format_double(kp.y) + "," +
           std::to_string(kp.octave) + "," + std::to_string(kp.scale_index) +
           "," + format_double(kp.response) + "\n";
  }
  return out;
}

}  // namespace synergy
