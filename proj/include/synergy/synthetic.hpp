#pragma once

// Synthetic dataset generator: a bright disk ("head") above an oriented bar
// ("shoulder-arm"). In the selfie class the offset direction from bar to disk
// and the bar orientation agree up to small noise; in the non-selfie class
// the bar orientation is drawn independently (kept a guard band away from
// agreement so the two classes do not overlap by chance). Images carry
// Gaussian pixel noise and low-contrast clutter drawn beneath the objects.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image.hpp"
#include "synergy/image_io.hpp"
#include "synergy/manifest.hpp"

namespace synergy {

struct SyntheticRecord {
  std::string filename;
  int label = 0;
  double theta_off = 0.0;  // degrees, direction from bar center to disk center
  double theta_bar = 0.0;  // degrees, bar orientation
};

struct SyntheticResult {
  DatasetManifest manifest;
  std::vector<SyntheticRecord> records;
};

namespace detail {

// Geometry constants, as fractions of the image side.
inline constexpr double kBackground = 0.15;
inline constexpr double kBarValue = 0.85;
inline constexpr double kDiskValue = 0.95;
inline constexpr double kBarLen = 0.45;
inline constexpr double kBarThick = 0.14;
inline constexpr double kDiskRadius = 0.10;
inline constexpr double kDiskDist = 0.28;
inline constexpr double kNoiseSigma = 0.05;
inline constexpr double kThetaOffLo = 50.0;   // degrees
inline constexpr double kThetaOffHi = 130.0;
inline constexpr double kSelfieAngleSigma = 5.0;
inline constexpr double kGuardBand = 18.0;    // min selfie/non-selfie gap

inline double wrap180_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), 180.0);
  return std::min(d, 180.0 - d);
}

struct Disk {
  double cx, cy, r, value;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= r * r;
  }
};

struct Bar {
  double cx, cy, half_len, half_thick, ux, uy;  // u: unit along the bar
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double along = dx * ux + dy * uy;
    const double across = -dx * uy + dy * ux;
    return std::abs(along) <= half_len && std::abs(across) <= half_thick;
  }
};

struct SceneSpec {
  std::vector<Disk> clutter;
  Bar bar;
  Disk disk;
};

// 2x2 supersampled rendering; later objects paint over earlier ones.
inline GrayImage render_scene(const SceneSpec& sc, int size) {
  GrayImage img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx;
          const double py = y + 0.25 + 0.5 * sy;
          double v = kBackground;
          for (const Disk& d : sc.clutter)
            if (d.contains(px, py)) v = d.value;
          if (sc.bar.contains(px, py)) v = kBarValue;
          if (sc.disk.contains(px, py)) v = kDiskValue;
          acc += v;
        }
      img.at(x, y) = acc / 4.0;
    }
  return img;
}

inline MaskRect clip_rect(double x0, double y0, double x1, double y1, int size) {
  const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int ix1 = std::min(size, static_cast<int>(std::ceil(x1)));
  const int iy1 = std::min(size, static_cast<int>(std::ceil(y1)));
  return MaskRect{ix0, iy0, std::max(0, ix1 - ix0), std::max(0, iy1 - iy0)};
}

}  // namespace detail

// Generates n_per_class images per class into out_dir (PGM), writes
// manifest.tsv (with disk+bar rects as mask annotations) and internals.csv
// (the generating angles, for oracle probes). Deterministic per (seed, size).
inline SyntheticResult generate_synthetic_dataset(
    int n_per_class, std::uint64_t seed,
    const std::filesystem::path& out_dir, int size = 227) {
  using namespace detail;
  if (n_per_class < 10)
    throw input_error("generate_synthetic_dataset: need n_per_class >= 10");
  if (size < 32)
    throw input_error("generate_synthetic_dataset: size must be >= 32");

  std::filesystem::create_directories(out_dir);
  SyntheticResult result;
  result.manifest.base_dir = out_dir;
  const double W = size;

  for (int cls = 0; cls < 2; ++cls) {
    const int label = cls == 0 ? 1 : -1;
    for (int i = 0; i < n_per_class; ++i) {
      const std::uint64_t tag =
          (static_cast<std::uint64_t>(cls) << 32) | static_cast<std::uint64_t>(i);
      Rng rng(fnv1a64(&tag, sizeof tag, fnv1a64(&seed, sizeof seed)));

      SceneSpec sc;
      for (int c = 0; c < 2; ++c) {
        Disk d;
        d.cx = rng.uniform(0.0, W);
        d.cy = rng.uniform(0.0, W);
        d.r = rng.uniform(0.04, 0.09) * W;
        d.value = kBackground + rng.uniform(-0.10, 0.10);
        sc.clutter.push_back(d);
      }

      sc.bar.cx = rng.uniform(0.38, 0.62) * W;
      sc.bar.cy = rng.uniform(0.58, 0.72) * W;
      sc.bar.half_len = kBarLen * W / 2.0;
      sc.bar.half_thick = kBarThick * W / 2.0;

      // Disk offset direction; re-drawn if the disk would leave the frame.
      double theta_off = 0.0;
      const double r = kDiskRadius * W;
      for (int attempt = 0;; ++attempt) {
        theta_off = rng.uniform(kThetaOffLo, kThetaOffHi);
        const double dist = kDiskDist * W * rng.uniform(0.9, 1.1);
        const double rad = theta_off * M_PI / 180.0;
        sc.disk.cx = sc.bar.cx + dist * std::cos(rad);
        sc.disk.cy = sc.bar.cy - dist * std::sin(rad);  // image y points down
        sc.disk.r = r;
        sc.disk.value = kDiskValue;
        if (sc.disk.cx - r >= 0 && sc.disk.cx + r < W && sc.disk.cy - r >= 0 &&
            sc.disk.cy + r < W)
          break;
        if (attempt > 200)
          throw numeric_error("generate_synthetic_dataset: cannot place disk");
      }

      double theta_bar;
      if (label == 1) {
        theta_bar = theta_off + rng.normal(0.0, kSelfieAngleSigma);
      } else {
        do {
          theta_bar = rng.uniform(0.0, 180.0);
        } while (wrap180_distance(theta_bar, theta_off) < kGuardBand);
      }
      {
        const double rad = theta_bar * M_PI / 180.0;
        sc.bar.ux = std::cos(rad);
        sc.bar.uy = -std::sin(rad);
      }

      GrayImage img = render_scene(sc, size);
      for (double& v : img.data)
        v = std::clamp(v + rng.normal(0.0, kNoiseSigma), 0.0, 1.0);

      char name[64];
      std::snprintf(name, sizeof name, "%s_%04d.pgm",
                    label == 1 ? "selfie" : "nonselfie", i);
      write_file(out_dir / name, encode_pgm(img));

      ManifestRecord rec;
      rec.path = name;
      rec.label = label;
      rec.has_rects = true;
      rec.rects.push_back(clip_rect(sc.disk.cx - r, sc.disk.cy - r,
                                    sc.disk.cx + r, sc.disk.cy + r, size));
      // Axis-aligned bounding box of the rotated bar.
      const double ex = sc.bar.half_len * std::abs(sc.bar.ux) +
                        sc.bar.half_thick * std::abs(sc.bar.uy);
      const double ey = sc.bar.half_len * std::abs(sc.bar.uy) +
                        sc.bar.half_thick * std::abs(sc.bar.ux);
      rec.rects.push_back(clip_rect(sc.bar.cx - ex, sc.bar.cy - ey,
                                    sc.bar.cx + ex, sc.bar.cy + ey, size));
      result.manifest.records.push_back(rec);

      SyntheticRecord sr;
      sr.filename = name;
      sr.label = label;
      sr.theta_off = theta_off;
      sr.theta_bar = theta_bar;
      result.records.push_back(sr);
    }
  }

  write_text_file(out_dir / "manifest.tsv",
                  manifest_to_string(result.manifest));
  std::string internals = "filename,label,theta_off,theta_bar\n";
  for (const SyntheticRecord& sr : result.records)
    internals += sr.filename + "," + label_to_string(sr.label) + "," +
                 format_double(sr.theta_off) + "," +
                 format_double(sr.theta_bar) + "\n";
  write_text_file(out_dir / "internals.csv", internals);
  return result;
}

// The generator-level separation oracle: best threshold accuracy of the 1-D
// angle difference |theta_bar - theta_off| (wrap-180). Establishes that the
// class signal exists before any pipeline runs.
inline double angle_probe_accuracy(const std::vector<SyntheticRecord>& recs) {
  std::vector<std::pair<double, int>> pts;
  for (const SyntheticRecord& r : recs)
    pts.emplace_back(detail::wrap180_distance(r.theta_bar, r.theta_off),
                     r.label);
  std::sort(pts.begin(), pts.end());
  // Sweep thresholds between consecutive points: small difference -> selfie.
  std::size_t best = 0;
  for (std::size_t cut = 0; cut <= pts.size(); ++cut) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const int pred = i < cut ? 1 : -1;
      if (pred == pts[i].second) ++correct;
    }
    best = std::max(best, correct);
  }
  return static_cast<double>(best) / static_cast<double>(pts.size());
}

}  // namespace synergy
