#pragma once

// A small convolutional network, fully specified: forward, exact reverse-mode
// backward, the relu-softmax regression loss, and a deterministic SGD trainer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "synergy/common.hpp"

namespace synergy {

// ---------------------------------------------------------------------------
// Tensors and layer specs.
// ---------------------------------------------------------------------------

struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;  // (channel, row, col) row-major

  Tensor3() = default;
  Tensor3(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

enum class LayerKind { conv, maxpool, relu, flatten, fc, dropout };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int filters = 0;    // conv
  int fsize = 0;      // conv filter side (odd) / maxpool window
  int stride = 1;     // conv, maxpool
  int out_dim = 0;    // fc
  double rate = 0.0;  // dropout

  static LayerSpec Conv(int filters, int fsize, int stride) {
    LayerSpec s; s.kind = LayerKind::conv; s.filters = filters; s.fsize = fsize; s.stride = stride; return s;
  }
  static LayerSpec Maxpool(int window, int stride) {
    LayerSpec s; s.kind = LayerKind::maxpool; s.fsize = window; s.stride = stride; return s;
  }
  static LayerSpec Relu() { LayerSpec s; s.kind = LayerKind::relu; return s; }
  static LayerSpec Flatten() { LayerSpec s; s.kind = LayerKind::flatten; return s; }
  static LayerSpec Fc(int out_dim) {
    LayerSpec s; s.kind = LayerKind::fc; s.out_dim = out_dim; return s;
  }
  static LayerSpec Dropout(double rate) {
    LayerSpec s; s.kind = LayerKind::dropout; s.rate = rate; return s;
  }
};

struct Shape3 {
  int c = 0, h = 0, w = 0;
  std::size_t count() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape3&) const = default;
};

struct NetSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;
};

// Padding is fixed by the layer's window: (f-1)/2.
inline int layer_pad(const LayerSpec& l) { return (l.fsize - 1) / 2; }

inline int conv_out_dim(int in, int pad, int fsize, int stride) {
  return (in + 2 * pad - fsize) / stride + 1;
}

// Infers the output shape of each layer; index 0 is the input shape. All
// structural problems are reported here so a validated spec never fails
// mid-run.
inline std::vector<Shape3> infer_shapes(const NetSpec& spec) {
  std::vector<Shape3> shapes;
  shapes.reserve(spec.layers.size() + 1);
  shapes.push_back(spec.input);
  if (spec.input.c < 1 || spec.input.h < 1 || spec.input.w < 1)
    throw input_error("net spec: input shape must be positive");

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const Shape3 in = shapes.back();
    const std::string where = "net spec layer " + std::to_string(i) + ": ";
    Shape3 out = in;
    switch (l.kind) {
      case LayerKind::conv: {
        if (l.filters < 1) throw input_error(where + "conv needs filters >= 1");
        if (l.fsize < 1 || l.fsize % 2 == 0)
          throw input_error(where + "conv filter size must be odd and >= 1");
        if (l.stride < 1) throw input_error(where + "stride must be >= 1");
        const int p = layer_pad(l);
        out.c = l.filters;
        out.h = conv_out_dim(in.h, p, l.fsize, l.stride);
        out.w = conv_out_dim(in.w, p, l.fsize, l.stride);
        if (out.h < 1 || out.w < 1)
          throw input_error(where + "conv output collapses to zero size");
        break;
      }
      case LayerKind::maxpool: {
        if (l.fsize < 1) throw input_error(where + "maxpool window must be >= 1");
        if (l.stride < 1) throw input_error(where + "stride must be >= 1");
        const int p = layer_pad(l);
        out.h = conv_out_dim(in.h, p, l.fsize, l.stride);
        out.w = conv_out_dim(in.w, p, l.fsize, l.stride);
        if (out.h < 1 || out.w < 1)
          throw input_error(where + "maxpool output collapses to zero size");
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        out = Shape3{static_cast<int>(in.count()), 1, 1};
        break;
      case LayerKind::fc:
        if (l.out_dim < 1) throw input_error(where + "fc needs out_dim >= 1");
        if (in.h != 1 || in.w != 1)
          throw input_error(where + "fc requires flattened input");
        out = Shape3{l.out_dim, 1, 1};
        break;
      case LayerKind::dropout:
        if (l.rate < 0.0 || l.rate >= 1.0)
          throw input_error(where + "dropout rate must be in [0,1)");
        break;
    }
    shapes.push_back(out);
  }
  return shapes;
}

// Output length of the whole net (k, the synergy dimension).
inline int net_output_dim(const NetSpec& spec) {
  const auto shapes = infer_shapes(spec);
  const Shape3 out = shapes.back();
  if (out.h != 1 || out.w != 1)
    throw input_error("net spec: final layer must produce a flat vector");
  return out.c;
}

inline std::vector<int> conv_layer_indices(const NetSpec& spec) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::conv) idx.push_back(static_cast<int>(i));
  return idx;
}

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

struct NetParams {
  struct Layer {
    std::vector<double> w;  // conv: (filter, in_ch, ky, kx); fc: (out, in)
    std::vector<double> b;
  };
  std::vector<Layer> layers;  // aligned with spec.layers; empty when unparameterized
  std::uint64_t rng_seed = 0;
};

// He-style uniform init: w ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), b = 0.
inline NetParams init_params(const NetSpec& spec, std::uint64_t seed) {
  const auto shapes = infer_shapes(spec);
  NetParams params;
  params.rng_seed = seed;
  params.layers.resize(spec.layers.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    auto& dst = params.layers[i];
    if (l.kind == LayerKind::conv) {
      const int in_c = shapes[i].c;
      const std::size_t n = static_cast<std::size_t>(l.filters) * in_c * l.fsize * l.fsize;
      const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * l.fsize * l.fsize));
      dst.w.resize(n);
      for (double& w : dst.w) w = rng.uniform(-bound, bound);
      dst.b.assign(l.filters, 0.0);
    } else if (l.kind == LayerKind::fc) {
      const int in_dim = shapes[i].c;
      const double bound = std::sqrt(6.0 / in_dim);
      dst.w.resize(static_cast<std::size_t>(l.out_dim) * in_dim);
      for (double& w : dst.w) w = rng.uniform(-bound, bound);
      dst.b.assign(l.out_dim, 0.0);
    }
  }
  return params;
}

inline NetParams zero_like(const NetParams& p) {
  NetParams z;
  z.rng_seed = p.rng_seed;
  z.layers.resize(p.layers.size());
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    z.layers[i].w.assign(p.layers[i].w.size(), 0.0);
    z.layers[i].b.assign(p.layers[i].b.size(), 0.0);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Forward.
// ---------------------------------------------------------------------------

struct ForwardCache {
  // acts[0] is the input; acts[i+1] is the output of layer i.
  std::vector<Tensor3> acts;
  // For maxpool layers: per output element, the flat index of the winning
  // input element. Empty for other layers.
  std::vector<std::vector<int>> pool_argmax;
  // For dropout layers in train mode: per element multiplier (0 or 1/(1-rate)).
  std::vector<std::vector<double>> dropout_scale;
};

namespace detail {

inline void conv_forward(const Tensor3& in, const LayerSpec& l,
                         const NetParams::Layer& p, Tensor3& out) {
  const int pad = layer_pad(l);
  const int f = l.fsize;
  for (int fo = 0; fo < out.channels; ++fo) {
    const double* wf = p.w.data() +
        static_cast<std::size_t>(fo) * in.channels * f * f;
    for (int oy = 0; oy < out.height; ++oy) {
      const int y0 = oy * l.stride - pad;
      for (int ox = 0; ox < out.width; ++ox) {
        const int x0 = ox * l.stride - pad;
        double acc = p.b[fo];
        for (int c = 0; c < in.channels; ++c) {
          const double* wc = wf + static_cast<std::size_t>(c) * f * f;
          for (int ky = 0; ky < f; ++ky) {
            const int iy = y0 + ky;
            if (iy < 0 || iy >= in.height) continue;
            const double* row = in.data.data() +
                (static_cast<std::size_t>(c) * in.height + iy) * in.width;
            const double* wrow = wc + static_cast<std::size_t>(ky) * f;
            for (int kx = 0; kx < f; ++kx) {
              const int ix = x0 + kx;
              if (ix < 0 || ix >= in.width) continue;
              acc += wrow[kx] * row[ix];
            }
          }
        }
        out.at(fo, oy, ox) = acc;
      }
    }
  }
}

inline void maxpool_forward(const Tensor3& in, const LayerSpec& l, Tensor3& out,
                            std::vector<int>* argmax) {
  const int pad = layer_pad(l);
  if (argmax) argmax->assign(out.size(), -1);
  std::size_t oi = 0;
  for (int c = 0; c < out.channels; ++c) {
    for (int oy = 0; oy < out.height; ++oy) {
      const int y0 = oy * l.stride - pad;
      for (int ox = 0; ox < out.width; ++ox, ++oi) {
        const int x0 = ox * l.stride - pad;
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = -1;
        for (int ky = 0; ky < l.fsize; ++ky) {
          const int iy = y0 + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < l.fsize; ++kx) {
            const int ix = x0 + kx;
            if (ix < 0 || ix >= in.width) continue;
            const double v = in.at(c, iy, ix);
            if (v > best) {
              best = v;
              best_idx = (static_cast<int>(c) * in.height + iy) * in.width + ix;
            }
          }
        }
        out.at(c, oy, ox) = best;
        if (argmax) (*argmax)[oi] = best_idx;
      }
    }
  }
}

}  // namespace detail

// Runs the net on one input. In train mode dropout masks are drawn from
// dropout_seed (one substream per dropout layer) so backward can replay them;
// in eval mode dropout is the identity. Returns the flat output vector; the
// cache (always filled) retains every intermediate, including each conv
// layer's post-convolution activation tensor.
inline std::vector<double> forward(const NetSpec& spec, const NetParams& params,
                                   const Tensor3& input, bool train_mode,
                                   std::uint64_t dropout_seed,
                                   ForwardCache& cache) {
  const auto shapes = infer_shapes(spec);
  if (Shape3{input.channels, input.height, input.width} != spec.input)
    throw input_error("forward: input shape does not match spec");
  if (params.layers.size() != spec.layers.size())
    throw input_error("forward: params do not match spec");

  cache.acts.clear();
  cache.acts.reserve(spec.layers.size() + 1);
  cache.acts.push_back(input);
  cache.pool_argmax.assign(spec.layers.size(), {});
  cache.dropout_scale.assign(spec.layers.size(), {});

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const Tensor3& in = cache.acts.back();
    const Shape3 os = shapes[i + 1];
    Tensor3 out(os.c, os.h, os.w);
    switch (l.kind) {
      case LayerKind::conv:
        detail::conv_forward(in, l, params.layers[i], out);
        break;
      case LayerKind::maxpool:
        detail::maxpool_forward(in, l, out, &cache.pool_argmax[i]);
        break;
      case LayerKind::relu:
        for (std::size_t j = 0; j < in.size(); ++j)
          out.data[j] = in.data[j] > 0.0 ? in.data[j] : 0.0;
        break;
      case LayerKind::flatten:
        out.data = in.data;  // same row-major order, new shape
        break;
      case LayerKind::fc: {
        const auto& p = params.layers[i];
        const int in_dim = in.channels;
        for (int o = 0; o < l.out_dim; ++o) {
          const double* wrow = p.w.data() + static_cast<std::size_t>(o) * in_dim;
          double acc = p.b[o];
          for (int j = 0; j < in_dim; ++j) acc += wrow[j] * in.data[j];
          out.data[o] = acc;
        }
        break;
      }
      case LayerKind::dropout: {
        if (train_mode && l.rate > 0.0) {
          auto& scale = cache.dropout_scale[i];
          scale.resize(in.size());
          Rng rng(fnv1a64(&dropout_seed, sizeof dropout_seed,
                          fnv1a64(&i, sizeof i)));
          const double keep_scale = 1.0 / (1.0 - l.rate);
          for (std::size_t j = 0; j < in.size(); ++j) {
            scale[j] = rng.uniform() >= l.rate ? keep_scale : 0.0;
            out.data[j] = in.data[j] * scale[j];
          }
        } else {
          out.data = in.data;
        }
        break;
      }
    }
    cache.acts.push_back(std::move(out));
  }
  return cache.acts.back().data;
}

inline std::vector<double> forward_eval(const NetSpec& spec,
                                        const NetParams& params,
                                        const Tensor3& input) {
  ForwardCache cache;
  return forward(spec, params, input, false, 0, cache);
}

// ---------------------------------------------------------------------------
// Heads and losses.
// ---------------------------------------------------------------------------

enum class HeadMode { paper, linear };

inline HeadMode head_mode_from_string(const std::string& s) {
  if (s == "paper") return HeadMode::paper;
  if (s == "linear") return HeadMode::linear;
  throw input_error("unknown head mode '" + s + "' (want paper|linear)");
}

inline std::string head_mode_to_string(HeadMode m) {
  return m == HeadMode::paper ? "paper" : "linear";
}

// sigma(theta) = softmax(relu(theta)), computed with max subtraction.
inline std::vector<double> relu_softmax(std::span<const double> theta) {
  std::vector<double> z(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i)
    z[i] = theta[i] > 0.0 ? theta[i] : 0.0;
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // dLoss/dTheta
};

// Eq.-style loss ||sigma(theta) - S||^2 with the exact softmax Jacobian
// composed with the relu mask.
inline LossGrad synergy_loss(std::span<const double> theta,
                             std::span<const double> s) {
  if (theta.size() != s.size())
    throw input_error("synergy_loss: length mismatch");
  const std::vector<double> sig = relu_softmax(theta);
  LossGrad out;
  out.grad.assign(theta.size(), 0.0);

  std::vector<double> g(theta.size());  // dLoss/dsigma
  double dot = 0.0;                     // sum_i g_i * sigma_i
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = sig[i] - s[i];
    out.loss += d * d;
    g[i] = 2.0 * d;
    dot += g[i] * sig[i];
  }
  // dLoss/dz_j = sigma_j (g_j - dot); dz/dtheta_j = [theta_j > 0].
  for (std::size_t j = 0; j < theta.size(); ++j)
    out.grad[j] = theta[j] > 0.0 ? sig[j] * (g[j] - dot) : 0.0;
  return out;
}

inline LossGrad linear_loss(std::span<const double> theta,
                            std::span<const double> s) {
  if (theta.size() != s.size()) throw input_error("linear_loss: length mismatch");
  LossGrad out;
  out.grad.assign(theta.size(), 0.0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - s[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d;
  }
  return out;
}

inline LossGrad head_loss(HeadMode head, std::span<const double> theta,
                          std::span<const double> s) {
  return head == HeadMode::paper ? synergy_loss(theta, s)
                                 : linear_loss(theta, s);
}

// ---------------------------------------------------------------------------
// Backward.
// ---------------------------------------------------------------------------

namespace detail {

inline void conv_backward(const Tensor3& in, const LayerSpec& l,
                          const NetParams::Layer& p, const Tensor3& d_out,
                          NetParams::Layer& d_p, Tensor3& d_in) {
  const int pad = layer_pad(l);
  const int f = l.fsize;
  for (int fo = 0; fo < d_out.channels; ++fo) {
    const double* wf = p.w.data() + static_cast<std::size_t>(fo) * in.channels * f * f;
    double* dwf = d_p.w.data() + static_cast<std::size_t>(fo) * in.channels * f * f;
    for (int oy = 0; oy < d_out.height; ++oy) {
      const int y0 = oy * l.stride - pad;
      for (int ox = 0; ox < d_out.width; ++ox) {
        const double g = d_out.at(fo, oy, ox);
        if (g == 0.0) continue;
        const int x0 = ox * l.stride - pad;
        d_p.b[fo] += g;
        for (int c = 0; c < in.channels; ++c) {
          const double* wc = wf + static_cast<std::size_t>(c) * f * f;
          double* dwc = dwf + static_cast<std::size_t>(c) * f * f;
          for (int ky = 0; ky < f; ++ky) {
            const int iy = y0 + ky;
            if (iy < 0 || iy >= in.height) continue;
            const std::size_t row_off =
                (static_cast<std::size_t>(c) * in.height + iy) * in.width;
            for (int kx = 0; kx < f; ++kx) {
              const int ix = x0 + kx;
              if (ix < 0 || ix >= in.width) continue;
              dwc[ky * f + kx] += g * in.data[row_off + ix];
              d_in.data[row_off + ix] += g * wc[ky * f + kx];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

struct BackwardResult {
  NetParams grads;            // same shapes as params
  double loss = 0.0;
  std::vector<double> theta;  // forward output
};

// Exact reverse-mode gradient of head_loss(forward(input)). In train mode the
// dropout masks are replayed from dropout_seed via the shared forward pass.
inline BackwardResult backward(const NetSpec& spec, const NetParams& params,
                               const Tensor3& input, std::span<const double> s,
                               bool train_mode, std::uint64_t dropout_seed,
                               HeadMode head) {
  ForwardCache cache;
  BackwardResult res;
  res.theta = forward(spec, params, input, train_mode, dropout_seed, cache);
  LossGrad lg = head_loss(head, res.theta, s);
  res.loss = lg.loss;
  res.grads = zero_like(params);

  // d holds dLoss/d(output of layer i); walk layers in reverse.
  Tensor3 d = cache.acts.back();
  d.data = std::move(lg.grad);

  for (int i = static_cast<int>(spec.layers.size()) - 1; i >= 0; --i) {
    const LayerSpec& l = spec.layers[i];
    const Tensor3& in = cache.acts[i];
    Tensor3 d_in(in.channels, in.height, in.width);
    switch (l.kind) {
      case LayerKind::conv:
        detail::conv_backward(in, l, params.layers[i], d, res.grads.layers[i], d_in);
        break;
      case LayerKind::maxpool: {
        const auto& argmax = cache.pool_argmax[i];
        for (std::size_t j = 0; j < d.size(); ++j)
          if (argmax[j] >= 0) d_in.data[argmax[j]] += d.data[j];
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < d.size(); ++j)
          d_in.data[j] = in.data[j] > 0.0 ? d.data[j] : 0.0;
        break;
      case LayerKind::flatten:
        d_in.data = std::move(d.data);
        break;
      case LayerKind::fc: {
        const auto& p = params.layers[i];
        auto& g = res.grads.layers[i];
        const int in_dim = in.channels;
        for (int o = 0; o < l.out_dim; ++o) {
          const double go = d.data[o];
          g.b[o] += go;
          if (go == 0.0) continue;
          const double* wrow = p.w.data() + static_cast<std::size_t>(o) * in_dim;
          double* gwrow = g.w.data() + static_cast<std::size_t>(o) * in_dim;
          for (int j = 0; j < in_dim; ++j) {
            gwrow[j] += go * in.data[j];
            d_in.data[j] += go * wrow[j];
          }
        }
        break;
      }
      case LayerKind::dropout: {
        const auto& scale = cache.dropout_scale[i];
        if (scale.empty()) {
          d_in.data = std::move(d.data);
        } else {
          for (std::size_t j = 0; j < d.size(); ++j)
            d_in.data[j] = d.data[j] * scale[j];
        }
        break;
      }
    }
    d = std::move(d_in);
  }
  return res;
}

// ---------------------------------------------------------------------------
// SGD trainer.
// ---------------------------------------------------------------------------

struct TrainSample {
  Tensor3 input;
  std::vector<double> target;
};

struct TrainSchedule {
  double lr0 = 1e-5;
  int halve_every = 2000;
  int batch = 16;
  int total_iters = 8000;
  double momentum = 0.0;
  std::uint64_t seed = 1;
};

struct TrainStep {
  int iter = 0;         // 1-based step number
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
};

struct TrainResult {
  NetParams params;
  std::vector<TrainStep> history;
};

inline double mean_eval_loss(const NetSpec& spec, const NetParams& params,
                             std::span<const TrainSample> set, HeadMode head) {
  double total = 0.0;
  for (const TrainSample& s : set) {
    const auto theta = forward_eval(spec, params, s.input);
    total += head_loss(head, theta, s.target).loss;
  }
  return set.empty() ? 0.0 : total / static_cast<double>(set.size());
}

// Plain minibatch SGD. lr(t) = lr0 * 0.5^floor(t/halve_every) with t 0-based;
// epochs are seeded Fisher-Yates shuffles, short tails are dropped; batch
// gradients are averaged, with samples visited in ascending index order so
// the result is independent of shuffle order within a batch. Validation loss
// is recorded every 100 steps and at the last step.
inline TrainResult sgd_train(const NetSpec& spec, const NetParams& init,
                             std::span<const TrainSample> train,
                             const TrainSchedule& sched,
                             std::span<const TrainSample> val, HeadMode head) {
  if (train.empty()) throw input_error("sgd_train: empty training set");
  if (sched.batch < 1 || sched.total_iters < 1 || sched.lr0 <= 0.0 ||
      sched.halve_every < 1)
    throw input_error("sgd_train: schedule fields must be positive");
  const int k = net_output_dim(spec);
  for (const TrainSample& s : train)
    if (static_cast<int>(s.target.size()) != k)
      throw input_error("sgd_train: target length does not match net output");

  TrainResult res;
  res.params = init;
  res.history.reserve(sched.total_iters);

  NetParams velocity = zero_like(init);
  Rng shuffle_rng(sched.seed);
  std::vector<int> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);
  const int batch = std::min<int>(sched.batch, static_cast<int>(train.size()));
  std::size_t cursor = perm.size();  // forces a shuffle on first use

  std::vector<int> batch_idx(batch);
  for (int iter = 0; iter < sched.total_iters; ++iter) {
    if (cursor + batch > perm.size()) {
      deterministic_shuffle(perm, shuffle_rng);
      cursor = 0;
    }
    for (int j = 0; j < batch; ++j) batch_idx[j] = perm[cursor + j];
    cursor += batch;
    // Ascending order makes the accumulated gradient independent of the
    // within-batch permutation.
    std::sort(batch_idx.begin(), batch_idx.end());

    const double lr = sched.lr0 * std::pow(0.5, iter / sched.halve_every);
    NetParams grads = zero_like(res.params);
    double batch_loss = 0.0;
    for (int j = 0; j < batch; ++j) {
      const TrainSample& s = train[batch_idx[j]];
      const std::uint64_t drop_seed =
          fnv1a64(&iter, sizeof iter, fnv1a64(&j, sizeof j, sched.seed));
      BackwardResult b = backward(spec, res.params, s.input, s.target, true,
                                  drop_seed, head);
      batch_loss += b.loss;
      for (std::size_t li = 0; li < grads.layers.size(); ++li) {
        auto& acc = grads.layers[li];
        const auto& g = b.grads.layers[li];
        for (std::size_t t = 0; t < acc.w.size(); ++t) acc.w[t] += g.w[t];
        for (std::size_t t = 0; t < acc.b.size(); ++t) acc.b[t] += g.b[t];
      }
    }
    batch_loss /= batch;
    if (!std::isfinite(batch_loss))
      throw numeric_error("sgd_train: loss diverged to a non-finite value at iteration " +
                          std::to_string(iter + 1));

    const double inv_batch = 1.0 / batch;
    for (std::size_t li = 0; li < res.params.layers.size(); ++li) {
      auto& p = res.params.layers[li];
      auto& v = velocity.layers[li];
      const auto& g = grads.layers[li];
      for (std::size_t t = 0; t < p.w.size(); ++t) {
        v.w[t] = sched.momentum * v.w[t] + g.w[t] * inv_batch;
        p.w[t] -= lr * v.w[t];
      }
      for (std::size_t t = 0; t < p.b.size(); ++t) {
        v.b[t] = sched.momentum * v.b[t] + g.b[t] * inv_batch;
        p.b[t] -= lr * v.b[t];
      }
    }

    TrainStep step;
    step.iter = iter + 1;
    step.lr = lr;
    step.train_loss = batch_loss;
    if (!val.empty() &&
        (step.iter % 100 == 0 || step.iter == sched.total_iters)) {
      step.val_loss = mean_eval_loss(spec, res.params, val, head);
      step.has_val = true;
    }
    res.history.push_back(step);
  }
  return res;
}

}  // namespace synergy
