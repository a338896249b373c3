#pragma once

// The selfie descriptor T: normalized conv activations pooled at keypoint
// locations, with exact rational map-size ratios.

#include <algorithm>
#include <numeric>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image.hpp"
#include "synergy/keypoints.hpp"
#include "synergy/net.hpp"

namespace synergy {

struct LayerRatio {
  int layer_index = 0;  // index into spec.layers (a conv layer)
  long long num = 1;
  long long den = 1;

  double value() const { return static_cast<double>(num) / den; }
};

struct SelfieDescriptor {
  std::vector<double> data;
  std::vector<std::size_t> layer_offsets;  // start of each conv layer's block
  bool fallback_grid = false;              // keypoint detection fell back
};

// Per layer, divide by the max absolute activation; all-zero layers pass
// through unchanged.
inline std::vector<Tensor3> normalize_maps(std::vector<Tensor3> maps) {
  for (Tensor3& m : maps) {
    double max_abs = 0.0;
    for (double v : m.data) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs > 0.0)
      for (double& v : m.data) v /= max_abs;
  }
  return maps;
}

// Running product of 1/stride over conv and maxpool layers, kept as an exact
// reduced rational; one entry per conv layer, inclusive of that conv's own
// stride.
inline std::vector<LayerRatio> map_size_ratios(const NetSpec& spec) {
  infer_shapes(spec);  // structural validation
  std::vector<LayerRatio> ratios;
  long long num = 1, den = 1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind != LayerKind::conv && l.kind != LayerKind::maxpool) continue;
    den *= l.stride;
    const long long g = std::gcd(num, den);
    num /= g;
    den /= g;
    if (l.kind == LayerKind::conv)
      ratios.push_back(LayerRatio{static_cast<int>(i), num, den});
  }
  return ratios;
}

// phi: max over the mapped center cell and its in-bounds 4-connected
// neighbors.
inline double neighborhood_max(const Tensor3& map, int filter, int cx, int cy) {
  double best = map.at(filter, cy, cx);
  if (cx > 0) best = std::max(best, map.at(filter, cy, cx - 1));
  if (cx + 1 < map.width) best = std::max(best, map.at(filter, cy, cx + 1));
  if (cy > 0) best = std::max(best, map.at(filter, cy - 1, cx));
  if (cy + 1 < map.height) best = std::max(best, map.at(filter, cy + 1, cx));
  return best;
}

// t^i = (1/K) sum_k phi(map at the keypoint mapped by ratio). Keypoint
// coordinates are scaled by the rational ratio, rounded half-away-from-zero,
// and clamped into the map. The per-keypoint maxima are sorted before
// summation so the result is independent of keypoint order bit-for-bit.
inline std::vector<double> pool_at_keypoints(const Tensor3& map,
                                             const std::vector<Keypoint>& kps,
                                             const LayerRatio& ratio) {
  if (kps.empty())
    throw input_error("pool_at_keypoints: keypoint list must be nonempty");
  const double r = ratio.value();
  std::vector<std::pair<int, int>> cells;
  cells.reserve(kps.size());
  for (const Keypoint& kp : kps) {
    const int cx = clamp_int(round_half_away(r * kp.x), 0, map.width - 1);
    const int cy = clamp_int(round_half_away(r * kp.y), 0, map.height - 1);
    cells.emplace_back(cx, cy);
  }

  std::vector<double> out(map.channels, 0.0);
  std::vector<double> vals(kps.size());
  for (int f = 0; f < map.channels; ++f) {
    for (std::size_t k = 0; k < cells.size(); ++k)
      vals[k] = neighborhood_max(map, f, cells[k].first, cells[k].second);
    std::sort(vals.begin(), vals.end());
    double sum = 0.0;
    for (double v : vals) sum += v;
    out[f] = sum / static_cast<double>(kps.size());
  }
  return out;
}

inline std::size_t descriptor_length(const NetSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::size_t len = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::conv)
      len += static_cast<std::size_t>(shapes[i + 1].c);
  return len;
}

// Full extraction for one image: eval-mode forward, per-layer normalization
// of the conv activation maps (pooling layers contribute nothing), keypoint
// pooling, concatenation in layer order.
inline SelfieDescriptor build_descriptor(const NetSpec& spec,
                                         const NetParams& params,
                                         const GrayImage& img,
                                         const DogConfig& cfg) {
  if (spec.input.c != 1 || img.width != spec.input.w ||
      img.height != spec.input.h)
    throw input_error("build_descriptor: image does not match net input shape");

  Tensor3 input(1, img.height, img.width);
  input.data = img.data;
  ForwardCache cache;
  forward(spec, params, input, false, 0, cache);

  std::vector<Tensor3> maps;
  for (int idx : conv_layer_indices(spec)) maps.push_back(cache.acts[idx + 1]);
  maps = normalize_maps(std::move(maps));

  const KeypointResult kps = detect_keypoints(img, cfg);
  const std::vector<LayerRatio> ratios = map_size_ratios(spec);

  SelfieDescriptor desc;
  desc.fallback_grid = kps.fallback_grid;
  for (std::size_t p = 0; p < maps.size(); ++p) {
    desc.layer_offsets.push_back(desc.data.size());
    const std::vector<double> block =
        pool_at_keypoints(maps[p], kps.points, ratios[p]);
    desc.data.insert(desc.data.end(), block.begin(), block.end());
  }
  return desc;
}

}  // namespace synergy
