#pragma once

// Handcrafted descriptors: hierarchical HOG (gamma) and grid LBP (tau).

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image.hpp"

namespace synergy {

enum class FeatureKind { hog, lbp, synergy, descriptor };

struct FeatureVector {
  std::vector<double> data;
  FeatureKind kind = FeatureKind::hog;
};

struct HogConfig {
  int levels = 4;   // hierarchy levels l = 1..levels, 2^l x 2^l grid each
  int bins = 9;     // orientation bins over [0, range)
  double range = 180.0;
};

struct LbpConfig {
  int grid = 8;     // blocks per side
  int radius = 1;   // neighbor distance in pixels
};

// ---------------------------------------------------------------------------
// Gradients.
// ---------------------------------------------------------------------------

struct GradientField {
  ScalarField magnitude;
  ScalarField orientation;  // degrees in [0, 180)
};

// Central differences with replicate-clamped borders; orientation is the
// atan2 angle folded onto [0, 180).
inline GradientField gradient_field(const GrayImage& img) {
  if (img.width < 3 || img.height < 3)
    throw input_error("gradient_field: image must be at least 3x3");
  GradientField out;
  out.magnitude = ScalarField(img.width, img.height);
  out.orientation = ScalarField(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    const int ym = y > 0 ? y - 1 : 0;
    const int yp = y < img.height - 1 ? y + 1 : img.height - 1;
    for (int x = 0; x < img.width; ++x) {
      const int xm = x > 0 ? x - 1 : 0;
      const int xp = x < img.width - 1 ? x + 1 : img.width - 1;
      const double gx = img.at(xp, y) - img.at(xm, y);
      const double gy = img.at(x, yp) - img.at(x, ym);
      out.magnitude.at(x, y) = std::sqrt(gx * gx + gy * gy);
      double deg = std::atan2(gy, gx) * (180.0 / M_PI);
      deg = std::fmod(deg, 180.0);
      if (deg < 0.0) deg += 180.0;
      if (deg >= 180.0) deg = 0.0;
      out.orientation.at(x, y) = deg;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Block partition helper: even integer partition of n pixels into k spans,
// span i = [floor(i*n/k), floor((i+1)*n/k)).
// ---------------------------------------------------------------------------

inline int partition_start(int n, int k, int i) {
  return static_cast<int>((static_cast<long long>(i) * n) / k);
}

// ---------------------------------------------------------------------------
// Hierarchical HOG.
// ---------------------------------------------------------------------------

inline std::size_t hog_length(const HogConfig& cfg) {
  std::size_t len = 0;
  std::size_t cells = 1;
  for (int l = 1; l <= cfg.levels; ++l) {
    cells *= 4;  // 4^l
    len += cells * static_cast<std::size_t>(cfg.bins);
  }
  return len;
}

// Hard assignment of an orientation in [0, range) to one of `bins` equal
// intervals.
inline int hog_bin(double deg, int bins, double range) {
  int b = static_cast<int>(std::floor(deg / range * bins));
  if (b < 0) b = 0;
  if (b >= bins) b = bins - 1;
  return b;
}

// For each level l = 1..L the image is split into a 2^l x 2^l grid; every
// interior pixel votes its gradient magnitude into the orientation bin of its
// block. Border pixels (whose central differences are clamped) do not vote.
// Layout: level-major, block row-major, bin-minor.
inline FeatureVector hog_hierarchical(const GrayImage& img,
                                      const HogConfig& cfg) {
  if (cfg.levels < 1 || cfg.bins < 1)
    throw input_error("hog_hierarchical: levels and bins must be >= 1");
  const GradientField g = gradient_field(img);

  FeatureVector fv;
  fv.kind = FeatureKind::hog;
  fv.data.assign(hog_length(cfg), 0.0);

  std::size_t level_off = 0;
  for (int l = 1; l <= cfg.levels; ++l) {
    const int side = 1 << l;
    for (int by = 0; by < side; ++by) {
      const int y_lo = std::max(partition_start(img.height, side, by), 1);
      const int y_hi = std::min(partition_start(img.height, side, by + 1),
                                img.height - 1);
      for (int bx = 0; bx < side; ++bx) {
        const int x_lo = std::max(partition_start(img.width, side, bx), 1);
        const int x_hi = std::min(partition_start(img.width, side, bx + 1),
                                  img.width - 1);
        double* hist = fv.data.data() + level_off +
                       (static_cast<std::size_t>(by) * side + bx) * cfg.bins;
        for (int y = y_lo; y < y_hi; ++y)
          for (int x = x_lo; x < x_hi; ++x)
            hist[hog_bin(g.orientation.at(x, y), cfg.bins, cfg.range)] +=
                g.magnitude.at(x, y);
      }
    }
    level_off += static_cast<std::size_t>(side) * side * cfg.bins;
  }
  return fv;
}

// ---------------------------------------------------------------------------
// LBP.
// ---------------------------------------------------------------------------

// Neighbor offsets in (row, col) form, MSB first.
inline constexpr std::array<std::array<int, 2>, 8> kLbpOffsets = {{
    {-1, -1}, {-1, 0}, {-1, +1}, {0, +1}, {+1, +1}, {+1, 0}, {+1, -1}, {0, -1},
}};

inline std::uint8_t lbp_code(const GrayImage& img, int x, int y, int radius) {
  if (x < radius || y < radius || x >= img.width - radius ||
      y >= img.height - radius)
    throw input_error("lbp_code: coordinate closer than radius to the border");
  const double c = img.at(x, y);
  std::uint8_t code = 0;
  for (int i = 0; i < 8; ++i) {
    const int dy = kLbpOffsets[i][0] * radius;
    const int dx = kLbpOffsets[i][1] * radius;
    if (img.at(x + dx, y + dy) >= c)
      code |= static_cast<std::uint8_t>(1u << (7 - i));
  }
  return code;
}

// Uniform iff the circular bit pattern has at most two 0/1 transitions.
inline bool is_uniform(std::uint8_t code) {
  const std::uint8_t rot = static_cast<std::uint8_t>(
      (code << 1) | (code >> 7));
  return std::popcount(static_cast<unsigned>(code ^ rot)) <= 2;
}

// Maps each 8-bit code to its histogram bin: the 58 uniform codes get bins
// 0..57 in ascending numeric order, everything else shares bin 58.
inline const std::array<int, 256>& lbp_bin_table() {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    int next = 0;
    for (int c = 0; c < 256; ++c)
      t[c] = is_uniform(static_cast<std::uint8_t>(c)) ? next++ : -1;
    for (int c = 0; c < 256; ++c)
      if (t[c] < 0) t[c] = 58;
    return t;
  }();
  return table;
}

inline constexpr int kLbpBins = 59;

inline std::size_t lbp_length(const LbpConfig& cfg) {
  return static_cast<std::size_t>(cfg.grid) * cfg.grid * kLbpBins;
}

// grid x grid blocks of 59-bin uniform-pattern histograms, concatenated
// row-major. Pixels within `radius` of the border are skipped.
inline FeatureVector lbp_hierarchical(const GrayImage& img,
                                      const LbpConfig& cfg) {
  if (cfg.grid < 1 || cfg.radius < 1)
    throw input_error("lbp_hierarchical: grid and radius must be >= 1");
  FeatureVector fv;
  fv.kind = FeatureKind::lbp;
  fv.data.assign(lbp_length(cfg), 0.0);

  const auto& table = lbp_bin_table();
  for (int by = 0; by < cfg.grid; ++by) {
    const int y_lo = std::max(partition_start(img.height, cfg.grid, by),
                              cfg.radius);
    const int y_hi = std::min(partition_start(img.height, cfg.grid, by + 1),
                              img.height - cfg.radius);
    for (int bx = 0; bx < cfg.grid; ++bx) {
      const int x_lo = std::max(partition_start(img.width, cfg.grid, bx),
                                cfg.radius);
      const int x_hi = std::min(partition_start(img.width, cfg.grid, bx + 1),
                                img.width - cfg.radius);
      double* hist = fv.data.data() +
                     (static_cast<std::size_t>(by) * cfg.grid + bx) * kLbpBins;
      for (int y = y_lo; y < y_hi; ++y)
        for (int x = x_lo; x < x_hi; ++x)
          hist[table[lbp_code(img, x, y, cfg.radius)]] += 1.0;
    }
  }
  return fv;
}

}  // namespace synergy
