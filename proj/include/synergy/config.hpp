#pragma once

// Pipeline configuration: a flat key-value text format with dotted section
// keys, a small text grammar for net specs, cross-module validation, and a
// canonical serialization used for content addressing.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/features.hpp"
#include "synergy/image_io.hpp"
#include "synergy/keypoints.hpp"
#include "synergy/net.hpp"

namespace synergy {

// ---------------------------------------------------------------------------
// Net spec text grammar: whitespace- or "->"-separated layer tokens, e.g.
//   conv(8,7,2) relu maxpool(3,2) conv(16,5,1) ... flatten fc(128) fc(32)
// conv(filters, filter_size, stride); maxpool(window, stride); fc(out_dim);
// dropout(rate); relu; flatten.
// ---------------------------------------------------------------------------

namespace detail {

inline long long parse_ll(const std::string& s, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw input_error(ctx + ": expected integer, got '" + s + "'");
  }
}

inline double parse_dbl(const std::string& s, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw input_error(ctx + ": expected number, got '" + s + "'");
  }
}

inline bool parse_bool(const std::string& s, const std::string& ctx) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw input_error(ctx + ": expected boolean, got '" + s + "'");
}

inline std::vector<std::string> split_args(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline std::vector<LayerSpec> parse_net_layers(const std::string& text) {
  // Tokenize on whitespace; "->" separators are treated as whitespace.
  std::string cleaned = text;
  for (std::size_t pos = 0; (pos = cleaned.find("->", pos)) != std::string::npos;)
    cleaned.replace(pos, 2, " ");
  std::istringstream in(cleaned);

  std::vector<LayerSpec> layers;
  std::string tok;
  while (in >> tok) {
    const std::size_t open = tok.find('(');
    std::string name = tok.substr(0, open);
    std::vector<std::string> args;
    if (open != std::string::npos) {
      if (tok.back() != ')')
        throw input_error("net spec: malformed token '" + tok + "'");
      args = detail::split_args(tok.substr(open + 1, tok.size() - open - 2));
    }
    const std::string ctx = "net spec token '" + tok + "'";
    auto want = [&](std::size_t n) {
      if (args.size() != n)
        throw input_error(ctx + ": expected " + std::to_string(n) +
                          " arguments");
    };
    if (name == "conv") {
      want(3);
      layers.push_back(LayerSpec::Conv(
          static_cast<int>(detail::parse_ll(args[0], ctx)),
          static_cast<int>(detail::parse_ll(args[1], ctx)),
          static_cast<int>(detail::parse_ll(args[2], ctx))));
    } else if (name == "maxpool") {
      want(2);
      layers.push_back(LayerSpec::Maxpool(
          static_cast<int>(detail::parse_ll(args[0], ctx)),
          static_cast<int>(detail::parse_ll(args[1], ctx))));
    } else if (name == "relu") {
      want(0);
      layers.push_back(LayerSpec::Relu());
    } else if (name == "flatten") {
      want(0);
      layers.push_back(LayerSpec::Flatten());
    } else if (name == "fc") {
      want(1);
      layers.push_back(
          LayerSpec::Fc(static_cast<int>(detail::parse_ll(args[0], ctx))));
    } else if (name == "dropout") {
      want(1);
      layers.push_back(LayerSpec::Dropout(detail::parse_dbl(args[0], ctx)));
    } else {
      throw input_error("net spec: unknown layer '" + name + "'");
    }
  }
  if (layers.empty()) throw input_error("net spec: no layers given");
  return layers;
}

inline std::string net_layers_to_string(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (const LayerSpec& l : layers) {
    if (!out.empty()) out += " ";
    switch (l.kind) {
      case LayerKind::conv:
        out += "conv(" + std::to_string(l.filters) + "," +
               std::to_string(l.fsize) + "," + std::to_string(l.stride) + ")";
        break;
      case LayerKind::maxpool:
        out += "maxpool(" + std::to_string(l.fsize) + "," +
               std::to_string(l.stride) + ")";
        break;
      case LayerKind::relu: out += "relu"; break;
      case LayerKind::flatten: out += "flatten"; break;
      case LayerKind::fc: out += "fc(" + std::to_string(l.out_dim) + ")"; break;
      case LayerKind::dropout:
        out += "dropout(" + format_double(l.rate) + ")";
        break;
    }
  }
  return out;
}

// The default architecture: an AlexNet-style stack miniaturized to three
// conv blocks.
inline std::string default_net_text(int k) {
  return "conv(8,7,2) relu maxpool(3,2) conv(16,5,1) relu maxpool(3,2) "
         "conv(32,3,1) relu flatten fc(128) relu dropout(0.5) fc(" +
         std::to_string(k) + ")";
}

// ---------------------------------------------------------------------------
// PipelineConfig.
// ---------------------------------------------------------------------------

struct PipelineConfig {
  int image_size = 227;
  HogConfig hog;
  LbpConfig lbp;
  bool pca_enabled = true;
  int pca_dims = 128;
  int cca_k = 32;
  double cca_ridge = 1e-3;
  std::string net_spec_text;  // empty -> default_net_text(cca_k) at finalize
  HeadMode head = HeadMode::paper;
  double train_lr0 = 1e-5;
  int train_halve_every = 2000;
  int train_batch = 16;
  int train_total_iters = 8000;
  double train_momentum = 0.0;
  DogConfig dog;
  double svm_c = 1.0;
  int svm_epochs = 200;
  std::uint64_t seed_master = 1;
  // Derived from seed_master unless set explicitly.
  std::uint64_t seed_split = 0, seed_net = 0, seed_train = 0, seed_svm = 0;
  bool seed_split_set = false, seed_net_set = false, seed_train_set = false,
       seed_svm_set = false;

  NetSpec net() const {
    NetSpec spec;
    spec.input = Shape3{1, image_size, image_size};
    spec.layers = parse_net_layers(net_spec_text);
    return spec;
  }

  TrainSchedule schedule() const {
    TrainSchedule s;
    s.lr0 = train_lr0;
    s.halve_every = train_halve_every;
    s.batch = train_batch;
    s.total_iters = train_total_iters;
    s.momentum = train_momentum;
    s.seed = seed_train;
    return s;
  }
};

namespace detail {

inline void derive_seeds(PipelineConfig& cfg) {
  auto derive = [&](const char* name) {
    return fnv1a64(name, std::strlen(name),
                   fnv1a64(&cfg.seed_master, sizeof cfg.seed_master));
  };
  if (!cfg.seed_split_set) cfg.seed_split = derive("split");
  if (!cfg.seed_net_set) cfg.seed_net = derive("net");
  if (!cfg.seed_train_set) cfg.seed_train = derive("train");
  if (!cfg.seed_svm_set) cfg.seed_svm = derive("svm");
}

}  // namespace detail

// Cross-module validation; fills defaults that depend on other fields.
inline void finalize_config(PipelineConfig& cfg) {
  if (cfg.image_size < 16)
    throw input_error("config: image_size must be >= 16 (keypoint detection "
                      "needs at least 16x16)");
  if (cfg.hog.levels < 1 || cfg.hog.bins < 1)
    throw input_error("config: hog.levels and hog.bins must be >= 1");
  if (cfg.lbp.grid < 1 || cfg.lbp.radius < 1)
    throw input_error("config: lbp.grid and lbp.radius must be >= 1");
  if (cfg.pca_enabled && cfg.pca_dims < 1)
    throw input_error("config: pca.dims must be >= 1");
  if (cfg.cca_k < 1) throw input_error("config: cca.k must be >= 1");
  if (cfg.cca_ridge < 0.0) throw input_error("config: cca.ridge must be >= 0");
  if (cfg.pca_enabled && cfg.cca_k > cfg.pca_dims)
    throw input_error("config: cca.k must not exceed pca.dims");
  if (cfg.train_lr0 <= 0.0 || cfg.train_batch < 1 ||
      cfg.train_total_iters < 1 || cfg.train_halve_every < 1)
    throw input_error("config: train.* fields must be positive");
  if (cfg.svm_c <= 0.0 || cfg.svm_epochs < 1)
    throw input_error("config: svm.c and svm.epochs must be positive");
  if (cfg.dog.scales_per_octave < 1 || cfg.dog.base_sigma <= 0.0 ||
      cfg.dog.contrast_thresh <= 0.0 || cfg.dog.edge_ratio <= 0.0)
    throw input_error("config: dog.* fields must be positive");

  if (cfg.net_spec_text.empty())
    cfg.net_spec_text = default_net_text(cfg.cca_k);
  const NetSpec spec = cfg.net();  // throws on structural problems
  const int out = net_output_dim(spec);
  if (out != cfg.cca_k)
    throw input_error("config: net output dimension " + std::to_string(out) +
                      " must equal cca.k = " + std::to_string(cfg.cca_k));
  detail::derive_seeds(cfg);
}

inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // Trim.
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw input_error("config line " + std::to_string(line_no) +
                        ": expected key = value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const std::string ctx = "config key '" + key + "'";
    if (key.empty() || val.empty())
      throw input_error("config line " + std::to_string(line_no) +
                        ": empty key or value");

    if (key == "image_size") cfg.image_size = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "hog.levels") cfg.hog.levels = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "hog.bins") cfg.hog.bins = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "lbp.grid") cfg.lbp.grid = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "lbp.radius") cfg.lbp.radius = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "pca.enabled") cfg.pca_enabled = detail::parse_bool(val, ctx);
    else if (key == "pca.dims") cfg.pca_dims = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "cca.k") cfg.cca_k = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "cca.ridge") cfg.cca_ridge = detail::parse_dbl(val, ctx);
    else if (key == "net.spec") cfg.net_spec_text = val;
    else if (key == "net.head") cfg.head = head_mode_from_string(val);
    else if (key == "train.lr0") cfg.train_lr0 = detail::parse_dbl(val, ctx);
    else if (key == "train.halve_every") cfg.train_halve_every = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "train.batch") cfg.train_batch = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "train.total_iters") cfg.train_total_iters = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "train.momentum") cfg.train_momentum = detail::parse_dbl(val, ctx);
    else if (key == "dog.scales_per_octave") cfg.dog.scales_per_octave = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "dog.base_sigma") cfg.dog.base_sigma = detail::parse_dbl(val, ctx);
    else if (key == "dog.contrast_thresh") cfg.dog.contrast_thresh = detail::parse_dbl(val, ctx);
    else if (key == "dog.edge_ratio") cfg.dog.edge_ratio = detail::parse_dbl(val, ctx);
    else if (key == "dog.max_octaves") cfg.dog.max_octaves = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "svm.c") cfg.svm_c = detail::parse_dbl(val, ctx);
    else if (key == "svm.epochs") cfg.svm_epochs = static_cast<int>(detail::parse_ll(val, ctx));
    else if (key == "seed") cfg.seed_master = static_cast<std::uint64_t>(detail::parse_ll(val, ctx));
    else if (key == "seed.split") { cfg.seed_split = static_cast<std::uint64_t>(detail::parse_ll(val, ctx)); cfg.seed_split_set = true; }
    else if (key == "seed.net") { cfg.seed_net = static_cast<std::uint64_t>(detail::parse_ll(val, ctx)); cfg.seed_net_set = true; }
    else if (key == "seed.train") { cfg.seed_train = static_cast<std::uint64_t>(detail::parse_ll(val, ctx)); cfg.seed_train_set = true; }
    else if (key == "seed.svm") { cfg.seed_svm = static_cast<std::uint64_t>(detail::parse_ll(val, ctx)); cfg.seed_svm_set = true; }
    else
      throw input_error("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
  }
  finalize_config(cfg);
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config_text(read_text_file(path));
  } catch (const input_error& e) {
    throw input_error(path.string() + ": " + e.what());
  }
}

// Override the master seed (CLI --seed): derived seeds that were not pinned
// explicitly in the config follow the new master.
inline void override_master_seed(PipelineConfig& cfg, std::uint64_t seed) {
  cfg.seed_master = seed;
  detail::derive_seeds(cfg);
}

// Canonical full serialization; stage-key fragments below hash subsets of it.
inline std::string config_canonical(const PipelineConfig& cfg) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  kv("image_size", std::to_string(cfg.image_size));
  kv("hog.levels", std::to_string(cfg.hog.levels));
  kv("hog.bins", std::to_string(cfg.hog.bins));
  kv("lbp.grid", std::to_string(cfg.lbp.grid));
  kv("lbp.radius", std::to_string(cfg.lbp.radius));
  kv("pca.enabled", cfg.pca_enabled ? "true" : "false");
  kv("pca.dims", std::to_string(cfg.pca_dims));
  kv("cca.k", std::to_string(cfg.cca_k));
  kv("cca.ridge", format_double(cfg.cca_ridge));
  kv("net.spec", net_layers_to_string(parse_net_layers(cfg.net_spec_text)));
  kv("net.head", head_mode_to_string(cfg.head));
  kv("train.lr0", format_double(cfg.train_lr0));
  kv("train.halve_every", std::to_string(cfg.train_halve_every));
  kv("train.batch", std::to_string(cfg.train_batch));
  kv("train.total_iters", std::to_string(cfg.train_total_iters));
  kv("train.momentum", format_double(cfg.train_momentum));
  kv("dog.scales_per_octave", std::to_string(cfg.dog.scales_per_octave));
  kv("dog.base_sigma", format_double(cfg.dog.base_sigma));
  kv("dog.contrast_thresh", format_double(cfg.dog.contrast_thresh));
  kv("dog.edge_ratio", format_double(cfg.dog.edge_ratio));
  kv("dog.max_octaves", std::to_string(cfg.dog.max_octaves));
  kv("svm.c", format_double(cfg.svm_c));
  kv("svm.epochs", std::to_string(cfg.svm_epochs));
  kv("seed.split", std::to_string(cfg.seed_split));
  kv("seed.net", std::to_string(cfg.seed_net));
  kv("seed.train", std::to_string(cfg.seed_train));
  kv("seed.svm", std::to_string(cfg.seed_svm));
  return out;
}

// Per-stage config fragments: a stage's cache key depends only on the fields
// it actually consumes (plus its upstream keys), so unrelated edits do not
// invalidate it.
inline std::string fragment_split(const PipelineConfig& cfg) {
  return "seed.split=" + std::to_string(cfg.seed_split);
}
inline std::string fragment_features(const PipelineConfig& cfg) {
  return "image_size=" + std::to_string(cfg.image_size) +
         ";hog.levels=" + std::to_string(cfg.hog.levels) +
         ";hog.bins=" + std::to_string(cfg.hog.bins) +
         ";lbp.grid=" + std::to_string(cfg.lbp.grid) +
         ";lbp.radius=" + std::to_string(cfg.lbp.radius);
}
inline std::string fragment_cca(const PipelineConfig& cfg) {
  return std::string("pca.enabled=") + (cfg.pca_enabled ? "true" : "false") +
         ";pca.dims=" + std::to_string(cfg.pca_dims) +
         ";cca.k=" + std::to_string(cfg.cca_k) +
         ";cca.ridge=" + format_double(cfg.cca_ridge);
}
inline std::string fragment_train(const PipelineConfig& cfg) {
  return "net.spec=" + net_layers_to_string(parse_net_layers(cfg.net_spec_text)) +
         ";net.head=" + head_mode_to_string(cfg.head) +
         ";train.lr0=" + format_double(cfg.train_lr0) +
         ";train.halve_every=" + std::to_string(cfg.train_halve_every) +
         ";train.batch=" + std::to_string(cfg.train_batch) +
         ";train.total_iters=" + std::to_string(cfg.train_total_iters) +
         ";train.momentum=" + format_double(cfg.train_momentum) +
         ";seed.net=" + std::to_string(cfg.seed_net) +
         ";seed.train=" + std::to_string(cfg.seed_train);
}
inline std::string fragment_descriptors(const PipelineConfig& cfg) {
  return "dog.scales_per_octave=" + std::to_string(cfg.dog.scales_per_octave) +
         ";dog.base_sigma=" + format_double(cfg.dog.base_sigma) +
         ";dog.contrast_thresh=" + format_double(cfg.dog.contrast_thresh) +
         ";dog.edge_ratio=" + format_double(cfg.dog.edge_ratio) +
         ";dog.max_octaves=" + std::to_string(cfg.dog.max_octaves);
}
inline std::string fragment_svm(const PipelineConfig& cfg) {
  return "svm.c=" + format_double(cfg.svm_c) +
         ";svm.epochs=" + std::to_string(cfg.svm_epochs) +
         ";seed.svm=" + std::to_string(cfg.seed_svm);
}

}  // namespace synergy
