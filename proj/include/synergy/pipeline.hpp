#pragma once

// Stage orchestration: content-addressed artifacts, provenance sidecars,
// the train/eval stage graph, the synergy baseline, ablation, and heatmaps.
//
// Every stage key is a pure function of (config fragment, upstream keys,
// dataset hash), so keys are computable without running anything; a stage
// whose artifact already exists is a cache hit and is loaded byte-identically.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/config.hpp"
#include "synergy/descriptor.hpp"
#include "synergy/features.hpp"
#include "synergy/image.hpp"
#include "synergy/image_io.hpp"
#include "synergy/keypoints.hpp"
#include "synergy/manifest.hpp"
#include "synergy/net.hpp"
#include "synergy/serialize.hpp"
#include "synergy/subspace.hpp"
#include "synergy/svm.hpp"

namespace synergy {

struct PipelineContext {
  PipelineConfig cfg;
  std::filesystem::path manifest_path;
  DatasetManifest manifest;
  std::filesystem::path store_dir;
  std::uint64_t dataset_hash = 0;
  bool verbose = true;
};

// Hash of everything the pipeline reads from the dataset: the manifest bytes
// plus every referenced image's bytes, in record order.
inline std::uint64_t hash_dataset(const DatasetManifest& m,
                                  const std::filesystem::path& manifest_path) {
  std::uint64_t h = kFnvOffset;
  const auto manifest_bytes = read_file(manifest_path);
  h = fnv1a64(manifest_bytes.data(), manifest_bytes.size(), h);
  for (const ManifestRecord& r : m.records) {
    h = fnv1a64(r.path, h);
    const auto bytes = read_file(m.resolve(r));
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

inline PipelineContext make_context(PipelineConfig cfg,
                                    const std::filesystem::path& manifest_path,
                                    const std::filesystem::path& store_dir,
                                    bool verbose = true) {
  PipelineContext ctx;
  ctx.cfg = std::move(cfg);
  ctx.manifest_path = manifest_path;
  ctx.manifest = parse_manifest(manifest_path);
  ctx.store_dir = store_dir;
  std::filesystem::create_directories(store_dir);
  ctx.dataset_hash = hash_dataset(ctx.manifest, manifest_path);
  ctx.verbose = verbose;
  return ctx;
}

// ---------------------------------------------------------------------------
// Stage keys.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t stage_key(const std::string& stage,
                               const std::string& fragment,
                               std::initializer_list<std::uint64_t> inputs) {
  std::uint64_t h = fnv1a64(stage + "|v1|" + fragment);
  for (std::uint64_t in : inputs) h = fnv1a64(&in, sizeof in, h);
  return h;
}

}  // namespace detail

inline std::uint64_t key_split(const PipelineContext& c) {
  return detail::stage_key("split", fragment_split(c.cfg), {c.dataset_hash});
}
inline std::uint64_t key_features(const PipelineContext& c) {
  return detail::stage_key("features", fragment_features(c.cfg),
                           {c.dataset_hash});
}
inline std::uint64_t key_cca(const PipelineContext& c) {
  return detail::stage_key("cca", fragment_cca(c.cfg),
                           {key_features(c), key_split(c)});
}
inline std::uint64_t key_train(const PipelineContext& c) {
  return detail::stage_key(
      "train",
      fragment_train(c.cfg) + ";image_size=" + std::to_string(c.cfg.image_size),
      {key_cca(c), key_split(c), c.dataset_hash});
}
inline std::uint64_t key_descriptors(const PipelineContext& c) {
  return detail::stage_key(
      "descriptors",
      fragment_descriptors(c.cfg) +
          ";image_size=" + std::to_string(c.cfg.image_size),
      {key_train(c), c.dataset_hash});
}
inline std::uint64_t key_svm(const PipelineContext& c) {
  return detail::stage_key("svm", fragment_svm(c.cfg),
                           {key_descriptors(c), key_split(c)});
}
inline std::uint64_t key_eval(const PipelineContext& c) {
  return detail::stage_key("eval", "", {key_svm(c)});
}
inline std::uint64_t key_baseline(const PipelineContext& c) {
  return detail::stage_key("baseline", fragment_svm(c.cfg),
                           {key_cca(c), key_split(c)});
}

// ---------------------------------------------------------------------------
// Store plumbing.
// ---------------------------------------------------------------------------

struct StageInfo {
  std::string stage;
  std::uint64_t key = 0;
  bool cache_hit = false;
  std::filesystem::path artifact;
};

namespace detail {

inline std::filesystem::path stage_path(const PipelineContext& c,
                                        const std::string& stage,
                                        std::uint64_t key,
                                        const std::string& ext) {
  return c.store_dir / (stage + "-" + hex64(key) + ext);
}

inline void announce(const PipelineContext& c, const StageInfo& info) {
  if (!c.verbose) return;
  std::cout << "[stage] " << info.stage << ": "
            << (info.cache_hit ? "cache hit" : "computed") << " (key "
            << hex64(info.key) << ")\n";
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') {
      out += '\\';
      out += ch;
    } else if (ch == '\n') {
      out += "\\n";
    } else {
      out += ch;
    }
  }
  return out;
}

// Provenance sidecars record what produced an artifact. They carry wall time
// and are therefore the one store file class excluded from byte-identity
// comparisons.
inline void write_provenance(
    const PipelineContext& c, const std::filesystem::path& artifact,
    const std::string& stage, std::uint64_t key, const std::string& fragment,
    const std::vector<std::pair<std::string, std::uint64_t>>& inputs,
    const std::string& fit_split, long long wall_ms) {
  std::string j = "{\n";
  j += "  \"stage\": \"" + json_escape(stage) + "\",\n";
  j += "  \"key\": \"" + hex64(key) + "\",\n";
  j += "  \"dataset\": \"" + hex64(c.dataset_hash) + "\",\n";
  j += "  \"config\": \"" + json_escape(fragment) + "\",\n";
  j += "  \"inputs\": {";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i) j += ", ";
    j += "\"" + json_escape(inputs[i].first) + "\": \"" +
         hex64(inputs[i].second) + "\"";
  }
  j += "},\n";
  j += "  \"fit_split\": \"" + fit_split + "\",\n";
  j += "  \"wall_ms\": " + std::to_string(wall_ms) + "\n";
  j += "}\n";
  write_text_file(artifact.string() + ".prov.json", j);
}

struct StageTimer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  long long ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
  }
};

[[noreturn]] inline void missing_dependency(const std::string& needed_stage) {
  throw dependency_error("required artifact from stage '" + needed_stage +
                         "' is missing; run `selfie_pipeline " + needed_stage +
                         "` first");
}

inline GrayImage load_resized(const PipelineContext& c,
                              const ManifestRecord& r) {
  const GrayImage g = load_grayscale(c.manifest.resolve(r));
  return resize_bilinear(g, c.cfg.image_size, c.cfg.image_size);
}

inline void check_ids(const SyngFile& f, const PipelineContext& c,
                      const std::string& stage) {
  std::istringstream in(f.meta);
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (i >= c.manifest.records.size() || line != c.manifest.records[i].path)
      throw input_error(stage + ": cached artifact does not match the manifest");
    ++i;
  }
  if (i != c.manifest.records.size())
    throw input_error(stage + ": cached artifact does not match the manifest");
}

inline std::string ids_meta(const PipelineContext& c) {
  std::string meta;
  for (const ManifestRecord& r : c.manifest.records) meta += r.path + "\n";
  return meta;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage: split.
// ---------------------------------------------------------------------------

struct SplitStage {
  StageInfo info;
  SplitAssignment assignment;
};

inline SplitStage run_stage_split(const PipelineContext& c) {
  SplitStage out;
  out.info.stage = "split";
  out.info.key = key_split(c);
  out.info.artifact = detail::stage_path(c, "split", out.info.key, ".tsv");

  if (std::filesystem::exists(out.info.artifact)) {
    out.info.cache_hit = true;
    out.assignment = split_from_tsv(
        c.manifest, read_text_file(out.info.artifact), c.cfg.seed_split);
    detail::announce(c, out.info);
    return out;
  }

  detail::StageTimer timer;
  out.assignment = split_dataset(c.manifest, c.cfg.seed_split);
  write_text_file(out.info.artifact, split_to_tsv(c.manifest, out.assignment));
  detail::write_provenance(c, out.info.artifact, "split", out.info.key,
                           fragment_split(c.cfg), {}, "none", timer.ms());
  detail::announce(c, out.info);
  return out;
}

// ---------------------------------------------------------------------------
// Stage: features (HOG + LBP banks over every record).
// ---------------------------------------------------------------------------

struct FeatureStage {
  StageInfo info;
  RowMatrix hog;
  RowMatrix lbp;
  std::vector<int> labels;
};

inline FeatureStage run_stage_features(const PipelineContext& c) {
  FeatureStage out;
  out.info.stage = "features";
  out.info.key = key_features(c);
  out.info.artifact = detail::stage_path(c, "features", out.info.key, ".syng");

  if (std::filesystem::exists(out.info.artifact)) {
    out.info.cache_hit = true;
    const SyngFile f = read_syng(out.info.artifact);
    detail::check_ids(f, c, "features");
    out.hog = tensor_rowmatrix(f.require("hog"));
    out.lbp = tensor_rowmatrix(f.require("lbp"));
    for (double v : f.require("labels").data)
      out.labels.push_back(static_cast<int>(v));
    detail::announce(c, out.info);
    return out;
  }

  detail::StageTimer timer;
  const std::size_t n = c.manifest.records.size();
  out.hog = RowMatrix(n, hog_length(c.cfg.hog));
  out.lbp = RowMatrix(n, lbp_length(c.cfg.lbp));
  for (std::size_t i = 0; i < n; ++i) {
    const GrayImage img = detail::load_resized(c, c.manifest.records[i]);
    const FeatureVector gamma = hog_hierarchical(img, c.cfg.hog);
    const FeatureVector tau = lbp_hierarchical(img, c.cfg.lbp);
    std::copy(gamma.data.begin(), gamma.data.end(), out.hog.row(i));
    std::copy(tau.data.begin(), tau.data.end(), out.lbp.row(i));
    out.labels.push_back(c.manifest.records[i].label);
  }

  SyngFile f;
  f.type_tag = static_cast<std::uint16_t>(ArtifactType::feature_bank);
  f.meta = detail::ids_meta(c);
  f.tensors.push_back(rowmatrix_tensor("hog", out.hog));
  f.tensors.push_back(rowmatrix_tensor("lbp", out.lbp));
  std::vector<double> labels_d(out.labels.begin(), out.labels.end());
  f.tensors.push_back(NamedTensor::vec("labels", labels_d));
  write_syng(out.info.artifact, f);
  detail::write_provenance(c, out.info.artifact, "features", out.info.key,
                           fragment_features(c.cfg), {}, "none", timer.ms());
  detail::announce(c, out.info);
  return out;
}

// ---------------------------------------------------------------------------
// Stage: fit-cca (PCA conditioning + CCA + standardized synergy bank).
// ---------------------------------------------------------------------------

struct CcaStage {
  StageInfo info;
  bool pca_enabled = false;
  PcaModel pca_x, pca_y;
  CcaModel cca;
  SynergyStandardizer standardizer;
  RowMatrix s_bank;  // standardized S for every record
};

inline CcaStage run_stage_cca(const PipelineContext& c) {
  CcaStage out;
  out.info.stage = "fit-cca";
  out.info.key = key_cca(c);
  out.info.artifact = detail::stage_path(c, "cca", out.info.key, ".syng");

  if (std::filesystem::exists(out.info.artifact)) {
    out.info.cache_hit = true;
    const SyngFile f = read_syng(out.info.artifact);
    detail::check_ids(f, c, "fit-cca");
    out.pca_enabled = f.require("pca.enabled").data.at(0) != 0.0;
    if (out.pca_enabled) {
      out.pca_x = extract_pca(f, "pca_x");
      out.pca_y = extract_pca(f, "pca_y");
    }
    out.cca = extract_cca(f);
    out.standardizer = extract_standardizer(f);
    out.s_bank = tensor_rowmatrix(f.require("s_bank"));
    detail::announce(c, out.info);
    return out;
  }

  if (!std::filesystem::exists(
          detail::stage_path(c, "features", key_features(c), ".syng")))
    detail::missing_dependency("features");
  if (!std::filesystem::exists(
          detail::stage_path(c, "split", key_split(c), ".tsv")))
    detail::missing_dependency("split");

  detail::StageTimer timer;
  const FeatureStage feats = run_stage_features(c);
  const SplitStage split = run_stage_split(c);
  const std::vector<std::size_t> train_rows =
      split_indices(split.assignment, Split::train);

  const MatrixXd hog_all = to_eigen(feats.hog);
  const MatrixXd lbp_all = to_eigen(feats.lbp);
  MatrixXd hog_train(train_rows.size(), hog_all.cols());
  MatrixXd lbp_train(train_rows.size(), lbp_all.cols());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    hog_train.row(static_cast<Eigen::Index>(i)) =
        hog_all.row(static_cast<Eigen::Index>(train_rows[i]));
    lbp_train.row(static_cast<Eigen::Index>(i)) =
        lbp_all.row(static_cast<Eigen::Index>(train_rows[i]));
  }

  out.pca_enabled = c.cfg.pca_enabled;
  MatrixXd X = hog_train, Y = lbp_train;
  MatrixXd X_all = hog_all, Y_all = lbp_all;
  if (out.pca_enabled) {
    const int n_train = static_cast<int>(train_rows.size());
    const int px = std::min({c.cfg.pca_dims, n_train - 1,
                             static_cast<int>(hog_all.cols())});
    const int py = std::min({c.cfg.pca_dims, n_train - 1,
                             static_cast<int>(lbp_all.cols())});
    out.pca_x = pca_fit(hog_train, px);
    out.pca_y = pca_fit(lbp_train, py);
    X = pca_project_rows(out.pca_x, hog_train);
    Y = pca_project_rows(out.pca_y, lbp_train);
    X_all = pca_project_rows(out.pca_x, hog_all);
    Y_all = pca_project_rows(out.pca_y, lbp_all);
  }

  if (c.cfg.cca_k > std::min(X.cols(), Y.cols()))
    throw input_error("fit-cca: cca.k = " + std::to_string(c.cfg.cca_k) +
                      " exceeds the conditioned view width " +
                      std::to_string(std::min(X.cols(), Y.cols())));
  out.cca = cca_fit(X, Y, c.cfg.cca_k, c.cfg.cca_ridge);

  // Raw synergy vectors for every record, standardizer fit on train only.
  MatrixXd s_raw(X_all.rows(), c.cfg.cca_k);
  for (Eigen::Index i = 0; i < X_all.rows(); ++i) {
    const auto [u, v] = cca_project(out.cca, X_all.row(i).transpose(),
                                    Y_all.row(i).transpose());
    s_raw.row(i) = synergy(u, v).transpose();
  }
  MatrixXd s_train(train_rows.size(), c.cfg.cca_k);
  for (std::size_t i = 0; i < train_rows.size(); ++i)
    s_train.row(static_cast<Eigen::Index>(i)) =
        s_raw.row(static_cast<Eigen::Index>(train_rows[i]));
  out.standardizer = standardizer_fit(s_train);

  out.s_bank = RowMatrix(static_cast<std::size_t>(s_raw.rows()),
                         static_cast<std::size_t>(c.cfg.cca_k));
  for (Eigen::Index i = 0; i < s_raw.rows(); ++i) {
    const VectorXd s =
        standardizer_apply(out.standardizer, s_raw.row(i).transpose());
    for (int j = 0; j < c.cfg.cca_k; ++j)
      out.s_bank.at(static_cast<std::size_t>(i), j) = s(j);
  }

  SyngFile f;
  f.type_tag = static_cast<std::uint16_t>(ArtifactType::subspace_model);
  f.meta = detail::ids_meta(c);
  f.tensors.push_back(
      NamedTensor::scalar("pca.enabled", out.pca_enabled ? 1.0 : 0.0));
  if (out.pca_enabled) {
    append_pca(f.tensors, "pca_x", out.pca_x);
    append_pca(f.tensors, "pca_y", out.pca_y);
  }
  append_cca(f.tensors, out.cca);
  append_standardizer(f.tensors, out.standardizer);
  f.tensors.push_back(rowmatrix_tensor("s_bank", out.s_bank));
  write_syng(out.info.artifact, f);
  detail::write_provenance(
      c, out.info.artifact, "fit-cca", out.info.key, fragment_cca(c.cfg),
      {{"features", key_features(c)}, {"split", key_split(c)}}, "train",
      timer.ms());
  detail::announce(c, out.info);
  return out;
}

// ---------------------------------------------------------------------------
// Stage: train-net.
// ---------------------------------------------------------------------------

struct TrainStage {
  StageInfo info;
  NetParams params;
};

inline TrainStage run_stage_train(const PipelineContext& c) {
  TrainStage out;
  out.info.stage = "train-net";
  out.info.key = key_train(c);
  out.info.artifact = detail::stage_path(c, "net", out.info.key, ".syng");

  if (std::filesystem::exists(out.info.artifact)) {
    out.info.cache_hit = true;
    out.params = extract_net_params(read_syng(out.info.artifact));
    detail::announce(c, out.info);
    return out;
  }

  if (!std::filesystem::exists(
          detail::stage_path(c, "cca", key_cca(c), ".syng")))
    detail::missing_dependency("fit-cca");

  detail::StageTimer timer;
  const CcaStage cca = run_stage_cca(c);
  const SplitStage split = run_stage_split(c);
  const NetSpec spec = c.cfg.net();

  auto collect = [&](Split which) {
    std::vector<TrainSample> set;
    for (std::size_t i : split_indices(split.assignment, which)) {
      TrainSample s;
      const GrayImage img = detail::load_resized(c, c.manifest.records[i]);
      s.input = Tensor3(1, img.height, img.width);
      s.input.data = img.data;
      s.target.assign(cca.s_bank.row(i), cca.s_bank.row(i) + cca.s_bank.cols);
      set.push_back(std::move(s));
    }
    return set;
  };
  const std::vector<TrainSample> train_set = collect(Split::train);
  const std::vector<TrainSample> val_set = collect(Split::val);

  const NetParams init = init_params(spec, c.cfg.seed_net);
  const TrainResult result =
      sgd_train(spec, init, train_set, c.cfg.schedule(), val_set, c.cfg.head);
  out.params = result.params;

  SyngFile f;
  f.type_tag = static_cast<std::uint16_t>(ArtifactType::net_model);
  f.meta = net_layers_to_string(spec.layers);
  append_net_params(f.tensors, out.params);
  write_syng(out.info.artifact, f);

  std::string loss_csv = "iter,lr,train_loss,val_loss\n";
  for (const TrainStep& s : result.history) {
    loss_csv += std::to_string(s.iter) + "," + format_double(s.lr) + "," +
                format_double(s.train_loss) + ",";
    if (s.has_val) loss_csv += format_double(s.val_loss);
    loss_csv += "\n";
  }
  write_text_file(detail::stage_path(c, "loss", out.info.key, ".csv"),
                  loss_csv);

  detail::write_provenance(
      c, out.info.artifact, "train-net", out.info.key, fragment_train(c.cfg),
      {{"fit-cca", key_cca(c)}, {"split", key_split(c)}}, "train", timer.ms());
  detail::announce(c, out.info);
  return out;
}

// ---------------------------------------------------------------------------
// Stage: descriptors.
// ---------------------------------------------------------------------------

struct DescriptorStage {
  StageInfo info;
  RowMatrix bank;
  std::vector<double> fallback;  // 1.0 where the keypoint fallback grid fired
};

inline DescriptorStage run_stage_descriptors(const PipelineContext& c) {
  DescriptorStage out;
  out.info.stage = "descriptors";
  out.info.key = key_descriptors(c);
  out.info.artifact = detail::stage_path(c, "desc", out.info.key, ".syng");

  if (std::filesystem::exists(out.info.artifact)) {
    out.info.cache_hit = true;
    const SyngFile f = read_syng(out.info.artifact);
    detail::check_ids(f, c, "descriptors");
    out.bank = tensor_rowmatrix(f.require("descriptors"));
    out.fallback = f.require("fallback").data;
    detail::announce(c, out.info);
    return out;
  }

  if (!std::filesystem::exists(
          detail::stage_path(c, "net", key_train(c), ".syng")))
    detail::missing_dependency("train-net");

  detail::StageTimer timer;
  const TrainStage net = run_stage_train(c);
  const NetSpec spec = c.cfg.net();
  const std::size_t n = c.manifest.records.size();
  out.bank = RowMatrix(n, descriptor_length(spec));
  out.fallback.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const GrayImage img = detail::load_resized(c, c.manifest.records[i]);
    const SelfieDescriptor d =
        build_descriptor(spec, net.params, img, c.cfg.dog);
    std::copy(d.data.begin(), d.data.end(), out.bank.row(i));
    out.fallback[i] = d.fallback_grid ? 1.0 : 0.0;
  }

  SyngFile f;
  f.type_tag = static_cast<std::uint16_t>(ArtifactType::descriptor_bank);
  f.meta = detail::ids_meta(c);
  f.tensors.push_back(rowmatrix_tensor("descriptors", out.bank));
  f.tensors.push_back(NamedTensor::vec("fallback", out.fallback));
  write_syng(out.info.artifact, f);
  detail::write_provenance(c, out.info.artifact, "descriptors", out.info.key,
                           fragment_descriptors(c.cfg),
                           {{"train-net", key_train(c)}}, "none", timer.ms());
  detail::announce(c, out.info);
  return out;
}

// ---------------------------------------------------------------------------
// Stage: train-svm.
// ---------------------------------------------------------------------------

struct SvmStage {
  StageInfo info;
  SvmModel model;
  FeatureScaler scaler;
};

namespace detail {

inline SvmStage train_svm_on_bank(const PipelineContext& c,
                                  const std::string& stage,
                                  const std::string& artifact_prefix,
                                  std::uint64_t key, const RowMatrix& bank,
                                  const SplitAssignment& split,
                                  const std::vector<std::pair<std::string, std::uint64_t>>& inputs) {
  SvmStage out;
  out.info.stage = stage;
  out.info.key = key;
  out.info.artifact = stage_path(c, artifact_prefix, key, ".syng");

  if (std::filesystem::exists(out.info.artifact)) {
    out.info.cache_hit = true;
    auto [model, scaler] = extract_svm(read_syng(out.info.artifact));
    out.model = std::move(model);
    out.scaler = std::move(scaler);
    announce(c, out.info);
    return out;
  }

  StageTimer timer;
  const std::vector<std::size_t> train_rows = split_indices(split, Split::train);
  out.scaler = scaler_fit(bank, train_rows);
  RowMatrix X(train_rows.size(), bank.cols);
  std::vector<int> y;
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    const auto scaled = scaler_apply_row(out.scaler, bank.row_span(train_rows[i]));
    std::copy(scaled.begin(), scaled.end(), X.row(i));
    y.push_back(c.manifest.records[train_rows[i]].label);
  }
  out.model = svm_train(X, y, c.cfg.svm_c, c.cfg.svm_epochs, c.cfg.seed_svm);

  SyngFile f;
  f.type_tag = static_cast<std::uint16_t>(ArtifactType::svm_model);
  append_svm(f.tensors, out.model, out.scaler);
  write_syng(out.info.artifact, f);
  write_provenance(c, out.info.artifact, stage, key, fragment_svm(c.cfg),
                   inputs, "train", timer.ms());
  announce(c, out.info);
  return out;
}

}  // namespace detail

inline SvmStage run_stage_svm(const PipelineContext& c) {
  const std::uint64_t key = key_svm(c);
  const auto artifact = detail::stage_path(c, "svm", key, ".syng");
  if (!std::filesystem::exists(artifact)) {
    if (!std::filesystem::exists(
            detail::stage_path(c, "desc", key_descriptors(c), ".syng")))
      detail::missing_dependency("descriptors");
  }
  // Cache hits skip the bank entirely inside the shared helper; loading the
  // descriptor stage here is a cache-hit load at worst.
  if (std::filesystem::exists(artifact)) {
    SplitAssignment empty;
    RowMatrix none;
    return detail::train_svm_on_bank(c, "train-svm", "svm", key, none, empty,
                                     {});
  }
  const DescriptorStage desc = run_stage_descriptors(c);
  const SplitStage split = run_stage_split(c);
  return detail::train_svm_on_bank(
      c, "train-svm", "svm", key, desc.bank, split.assignment,
      {{"descriptors", key_descriptors(c)}, {"split", key_split(c)}});
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

inline EvalReport build_report(const std::vector<std::string>& ids,
                               const std::vector<int>& labels,
                               const std::vector<double>& decisions) {
  EvalReport rep;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int pred = decisions[i] >= 0.0 ? 1 : -1;
    rep.decisions.push_back({ids[i], labels[i], decisions[i], pred});
    if (labels[i] == 1)
      (pred == 1 ? rep.tp : rep.fn)++;
    else
      (pred == 1 ? rep.fp : rep.tn)++;
  }
  rep.accuracy = ids.empty() ? 0.0
                             : static_cast<double>(rep.tp + rep.tn) /
                                   static_cast<double>(ids.size());
  rep.average_precision = average_precision(labels, decisions);
  return rep;
}

inline std::string report_to_csv(const EvalReport& rep) {
  std::string out = "id,label,decision,predicted\n";
  for (const auto& d : rep.decisions)
    out += csv_field(d.id) + "," + label_to_string(d.label) + "," +
           format_double(d.value) + "," + label_to_string(d.predicted) + "\n";
  return out;
}

inline std::string report_to_text(const EvalReport& rep,
                                  const std::string& extra = "") {
  std::string out;
  out += "count = " + std::to_string(rep.decisions.size()) + "\n";
  out += "accuracy = " + format_double(rep.accuracy) + "\n";
  out += "average_precision = " + format_double(rep.average_precision) + "\n";
  out += "tp = " + std::to_string(rep.tp) + "\n";
  out += "fp = " + std::to_string(rep.fp) + "\n";
  out += "tn = " + std::to_string(rep.tn) + "\n";
  out += "fn = " + std::to_string(rep.fn) + "\n";
  out += "threshold_policy = decision >= 0 -> selfie\n";
  out += extra;
  return out;
}

// ---------------------------------------------------------------------------
// Stage: eval (headline metrics on the test split).
// ---------------------------------------------------------------------------

struct EvalStage {
  StageInfo info;
  EvalReport report;
};

namespace detail {

struct SplitDecisions {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> decisions;
};

inline SplitDecisions decide_rows(const PipelineContext& c,
                                  const RowMatrix& bank,
                                  const SvmStage& svm,
                                  const std::vector<std::size_t>& rows) {
  SplitDecisions out;
  for (std::size_t i : rows) {
    const auto scaled = scaler_apply_row(svm.scaler, bank.row_span(i));
    out.ids.push_back(c.manifest.records[i].path);
    out.labels.push_back(c.manifest.records[i].label);
    out.decisions.push_back(decision_value(svm.model, scaled));
  }
  return out;
}

inline EvalStage eval_bank(const PipelineContext& c, const std::string& stage,
                           const std::string& prefix, std::uint64_t key,
                           const RowMatrix& bank, const SvmStage& svm,
                           const SplitAssignment& split,
                           const std::vector<std::pair<std::string, std::uint64_t>>& inputs) {
  EvalStage out;
  out.info.stage = stage;
  out.info.key = key;
  out.info.artifact = stage_path(c, prefix, key, ".csv");
  const auto txt_path = stage_path(c, prefix, key, ".txt");

  StageTimer timer;
  const SplitDecisions test =
      decide_rows(c, bank, svm, split_indices(split, Split::test));
  out.report = build_report(test.ids, test.labels, test.decisions);

  if (std::filesystem::exists(out.info.artifact) &&
      std::filesystem::exists(txt_path)) {
    out.info.cache_hit = true;
    announce(c, out.info);
    return out;
  }

  const SplitDecisions val =
      decide_rows(c, bank, svm, split_indices(split, Split::val));
  std::string extra;
  if (!val.ids.empty()) {
    const ThresholdChoice tuned = choose_threshold(val.labels, val.decisions);
    extra += "val_tuned_threshold = " + format_double(tuned.threshold) + "\n";
    extra += "val_tuned_test_accuracy = " +
             format_double(accuracy_at_threshold(test.labels, test.decisions,
                                                 tuned.threshold)) +
             "\n";
  }
  write_text_file(out.info.artifact, report_to_csv(out.report));
  write_text_file(txt_path, report_to_text(out.report, extra));
  write_provenance(c, out.info.artifact, stage, key, "", inputs, "none",
                   timer.ms());
  announce(c, out.info);
  return out;
}

}  // namespace detail

inline EvalStage run_stage_eval(const PipelineContext& c) {
  if (!std::filesystem::exists(
          detail::stage_path(c, "svm", key_svm(c), ".syng")))
    detail::missing_dependency("train-svm");
  const SvmStage svm = run_stage_svm(c);
  const DescriptorStage desc = run_stage_descriptors(c);
  const SplitStage split = run_stage_split(c);
  return detail::eval_bank(c, "eval", "eval", key_eval(c), desc.bank, svm,
                           split.assignment, {{"train-svm", key_svm(c)}});
}

// ---------------------------------------------------------------------------
// Baseline: SVM directly on the standardized synergy features.
// ---------------------------------------------------------------------------

struct BaselineStage {
  StageInfo info;
  EvalReport report;
};

inline BaselineStage run_baseline_synergy_svm(const PipelineContext& c) {
  if (!std::filesystem::exists(
          detail::stage_path(c, "cca", key_cca(c), ".syng")))
    detail::missing_dependency("fit-cca");
  const CcaStage cca = run_stage_cca(c);
  const SplitStage split = run_stage_split(c);
  const std::uint64_t key = key_baseline(c);
  const SvmStage svm = detail::train_svm_on_bank(
      c, "baseline-svm", "baseline-svm", key, cca.s_bank, split.assignment,
      {{"fit-cca", key_cca(c)}, {"split", key_split(c)}});
  const EvalStage eval = detail::eval_bank(
      c, "baseline", "baseline", key, cca.s_bank, svm, split.assignment,
      {{"fit-cca", key_cca(c)}, {"split", key_split(c)}});
  BaselineStage out;
  out.info = eval.info;
  out.report = eval.report;
  return out;
}

// ---------------------------------------------------------------------------
// Ablation: evaluate the frozen pipeline on masked test images.
// ---------------------------------------------------------------------------

struct AblationResult {
  StageInfo info;
  EvalReport normal;
  EvalReport masked;
  double drop_points = 0.0;             // accuracy drop in percentage points
  std::vector<std::string> skipped;     // records without rects
};

inline AblationResult run_ablation(const PipelineContext& c,
                                   const std::filesystem::path& masked_manifest_path) {
  if (!std::filesystem::exists(
          detail::stage_path(c, "svm", key_svm(c), ".syng")))
    detail::missing_dependency("train-svm");

  const DatasetManifest masked = parse_manifest(masked_manifest_path);
  std::map<std::string, const ManifestRecord*> rect_source;
  for (const ManifestRecord& r : masked.records) rect_source[r.path] = &r;
  const auto masked_bytes = read_file(masked_manifest_path);
  const std::uint64_t masked_hash =
      fnv1a64(masked_bytes.data(), masked_bytes.size());

  AblationResult out;
  out.info.stage = "ablate";
  out.info.key =
      detail::stage_key("ablate", "", {key_svm(c), masked_hash});
  out.info.artifact = detail::stage_path(c, "ablate", out.info.key, ".csv");
  const auto txt_path = detail::stage_path(c, "ablate", out.info.key, ".txt");

  detail::StageTimer timer;
  const SvmStage svm = run_stage_svm(c);
  const TrainStage net = run_stage_train(c);
  const DescriptorStage desc = run_stage_descriptors(c);
  const SplitStage split = run_stage_split(c);
  const NetSpec spec = c.cfg.net();

  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> dec_normal, dec_masked;
  for (std::size_t i : split_indices(split.assignment, Split::test)) {
    const ManifestRecord& rec = c.manifest.records[i];
    const auto it = rect_source.find(rec.path);
    if (it == rect_source.end() || !it->second->has_rects) {
      out.skipped.push_back(rec.path);
      continue;
    }
    ids.push_back(rec.path);
    labels.push_back(rec.label);
    {
      const auto scaled = scaler_apply_row(svm.scaler, desc.bank.row_span(i));
      dec_normal.push_back(decision_value(svm.model, scaled));
    }
    GrayImage img = detail::load_resized(c, rec);
    img = apply_masks(img, it->second->rects);
    const SelfieDescriptor d = build_descriptor(spec, net.params, img, c.cfg.dog);
    const auto scaled = scaler_apply_row(svm.scaler, d.data);
    dec_masked.push_back(decision_value(svm.model, scaled));
  }
  if (ids.empty())
    throw input_error("run_ablation: no test record carries mask rects");

  out.normal = build_report(ids, labels, dec_normal);
  out.masked = build_report(ids, labels, dec_masked);
  out.drop_points = (out.normal.accuracy - out.masked.accuracy) * 100.0;

  if (!std::filesystem::exists(out.info.artifact) ||
      !std::filesystem::exists(txt_path)) {
    std::string csv = "id,label,decision_normal,decision_masked\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
      csv += csv_field(ids[i]) + "," + label_to_string(labels[i]) + "," +
             format_double(dec_normal[i]) + "," + format_double(dec_masked[i]) +
             "\n";
    write_text_file(out.info.artifact, csv);

    std::string txt;
    txt += "count = " + std::to_string(ids.size()) + "\n";
    txt += "accuracy_normal = " + format_double(out.normal.accuracy) + "\n";
    txt += "accuracy_masked = " + format_double(out.masked.accuracy) + "\n";
    txt += "drop_points = " + format_double(out.drop_points) + "\n";
    txt += "skipped_count = " + std::to_string(out.skipped.size()) + "\n";
    for (const std::string& s : out.skipped) txt += "skipped = " + s + "\n";
    write_text_file(txt_path, txt);
    detail::write_provenance(c, out.info.artifact, "ablate", out.info.key, "",
                             {{"train-svm", key_svm(c)}}, "none", timer.ms());
  } else {
    out.info.cache_hit = true;
  }
  detail::announce(c, out.info);
  return out;
}

// ---------------------------------------------------------------------------
// Heatmaps.
// ---------------------------------------------------------------------------

inline std::string sanitize_for_filename(const std::string& s) {
  std::string out;
  for (char ch : s)
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ||
            ch == '_' || ch == '.')
               ? ch
               : '_';
  return out;
}

// Min-max normalizes the chosen activation maps to [0,255], nearest-neighbor
// upscales to the input size, and writes one PGM per (image, filter).
inline std::vector<std::filesystem::path> export_heatmaps(
    const PipelineContext& c, const std::vector<std::string>& image_ids,
    int conv_ordinal, const std::vector<int>& filter_indices) {
  if (!std::filesystem::exists(
          detail::stage_path(c, "net", key_train(c), ".syng")))
    detail::missing_dependency("train-net");
  const TrainStage net = run_stage_train(c);
  const NetSpec spec = c.cfg.net();
  const std::vector<int> conv_idx = conv_layer_indices(spec);
  if (conv_ordinal < 0 || conv_ordinal >= static_cast<int>(conv_idx.size()))
    throw input_error("export_heatmaps: conv layer ordinal out of range (have " +
                      std::to_string(conv_idx.size()) + " conv layers)");

  std::vector<std::filesystem::path> written;
  for (const std::string& id : image_ids) {
    const ManifestRecord* rec = nullptr;
    for (const ManifestRecord& r : c.manifest.records)
      if (r.path == id) rec = &r;
    if (!rec)
      throw input_error("export_heatmaps: id '" + id + "' not in manifest");

    const GrayImage img = detail::load_resized(c, *rec);
    Tensor3 input(1, img.height, img.width);
    input.data = img.data;
    ForwardCache cache;
    forward(spec, net.params, input, false, 0, cache);
    const Tensor3& map = cache.acts[conv_idx[conv_ordinal] + 1];

    for (int f : filter_indices) {
      if (f < 0 || f >= map.channels)
        throw input_error("export_heatmaps: filter index " + std::to_string(f) +
                          " out of range (layer has " +
                          std::to_string(map.channels) + " filters)");
      double lo = map.at(f, 0, 0), hi = map.at(f, 0, 0);
      for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
          lo = std::min(lo, map.at(f, y, x));
          hi = std::max(hi, map.at(f, y, x));
        }
      GrayImage out(c.cfg.image_size, c.cfg.image_size);
      for (int y = 0; y < out.height; ++y) {
        const int my = y * map.height / out.height;
        for (int x = 0; x < out.width; ++x) {
          const int mx = x * map.width / out.width;
          out.at(x, y) = hi > lo ? (map.at(f, my, mx) - lo) / (hi - lo) : 0.0;
        }
      }
      const auto path = c.store_dir /
          ("heatmap-" + sanitize_for_filename(id) + "-L" +
           std::to_string(conv_ordinal) + "-F" + std::to_string(f) + ".pgm");
      write_file(path, encode_pgm(out));
      written.push_back(path);
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// run-all.
// ---------------------------------------------------------------------------

struct RunAllResult {
  SplitStage split;
  FeatureStage features;
  CcaStage cca;
  TrainStage train;
  DescriptorStage descriptors;
  SvmStage svm;
  EvalStage eval;
  BaselineStage baseline;
};

inline RunAllResult run_all(const PipelineContext& c) {
  RunAllResult r;
  r.split = run_stage_split(c);
  r.features = run_stage_features(c);
  r.cca = run_stage_cca(c);
  r.train = run_stage_train(c);
  r.descriptors = run_stage_descriptors(c);
  r.svm = run_stage_svm(c);
  r.eval = run_stage_eval(c);
  r.baseline = run_baseline_synergy_svm(c);
  return r;
}

}  // namespace synergy
