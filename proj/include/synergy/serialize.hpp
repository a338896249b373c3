#pragma once

// Versioned binary artifact format shared by feature banks, models, and
// descriptors: magic "SYNG", u16 version, u16 type tag, a free-form meta
// string, then named f64 tensors. Everything little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image_io.hpp"
#include "synergy/net.hpp"
#include "synergy/subspace.hpp"
#include "synergy/svm.hpp"

namespace synergy {

static_assert(std::endian::native == std::endian::little,
              "artifact format assumes a little-endian host");

inline constexpr std::uint16_t kSyngVersion = 1;

enum class ArtifactType : std::uint16_t {
  feature_bank = 1,
  subspace_model = 2,
  net_model = 3,
  descriptor_bank = 4,
  svm_model = 5,
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  NamedTensor() = default;
  NamedTensor(std::string n, std::vector<std::uint64_t> d,
              std::vector<double> v)
      : name(std::move(n)), dims(std::move(d)), data(std::move(v)) {}

  static NamedTensor scalar(std::string n, double v) {
    return NamedTensor(std::move(n), {1}, {v});
  }
  static NamedTensor vec(std::string n, std::vector<double> v) {
    std::vector<std::uint64_t> d{v.size()};
    return NamedTensor(std::move(n), std::move(d), std::move(v));
  }
};

struct SyngFile {
  std::uint16_t version = kSyngVersion;
  std::uint16_t type_tag = 0;
  std::string meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const NamedTensor& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  const NamedTensor& require(const std::string& name) const {
    const NamedTensor* t = find(name);
    if (!t) throw input_error("artifact is missing tensor '" + name + "'");
    return *t;
  }
};

// ---------------------------------------------------------------------------
// Encoding / decoding.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put_raw(std::vector<unsigned char>& out, const T& v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

inline void put_string(std::vector<unsigned char>& out, const std::string& s) {
  put_raw(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct SyngCursor {
  const unsigned char* p;
  std::size_t n;
  std::size_t off = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw input_error("artifact decode error at byte " + std::to_string(off) +
                      ": " + what);
  }
  void need(std::size_t k) const {
    if (n - off < k) fail("truncated (need " + std::to_string(k) + " more bytes)");
  }
  template <typename T>
  T take_raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p + off, sizeof(T));
    off += sizeof(T);
    return v;
  }
  std::string take_string() {
    const auto len = take_raw<std::uint32_t>();
    need(len);
    std::string s(reinterpret_cast<const char*>(p + off), len);
    off += len;
    return s;
  }
};

}  // namespace detail

inline std::vector<unsigned char> encode_syng(const SyngFile& f) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'S', 'Y', 'N', 'G'});
  detail::put_raw(out, f.version);
  detail::put_raw(out, f.type_tag);
  detail::put_string(out, f.meta);
  detail::put_raw(out, static_cast<std::uint32_t>(f.tensors.size()));
  for (const NamedTensor& t : f.tensors) {
    detail::put_string(out, t.name);
    detail::put_raw(out, static_cast<std::uint32_t>(t.dims.size()));
    std::uint64_t count = 1;
    for (std::uint64_t d : t.dims) {
      detail::put_raw(out, d);
      count *= d;
    }
    if (count != t.data.size())
      throw input_error("encode_syng: tensor '" + t.name +
                        "' dims do not match data length");
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
    out.insert(out.end(), bytes, bytes + t.data.size() * sizeof(double));
  }
  return out;
}

inline SyngFile decode_syng(const unsigned char* bytes, std::size_t n) {
  detail::SyngCursor cur{bytes, n};
  cur.need(4);
  if (std::memcmp(bytes, "SYNG", 4) != 0) cur.fail("bad magic (want SYNG)");
  cur.off = 4;
  SyngFile f;
  f.version = cur.take_raw<std::uint16_t>();
  if (f.version != kSyngVersion)
    cur.fail("unsupported version " + std::to_string(f.version));
  f.type_tag = cur.take_raw<std::uint16_t>();
  f.meta = cur.take_string();
  const auto count = cur.take_raw<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = cur.take_string();
    const auto ndims = cur.take_raw<std::uint32_t>();
    if (ndims > 8) cur.fail("implausible tensor rank");
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      t.dims.push_back(cur.take_raw<std::uint64_t>());
      total *= t.dims.back();
      if (total > (1ull << 32)) cur.fail("implausible tensor size");
    }
    cur.need(total * sizeof(double));
    t.data.resize(total);
    std::memcpy(t.data.data(), bytes + cur.off, total * sizeof(double));
    cur.off += total * sizeof(double);
    f.tensors.push_back(std::move(t));
  }
  return f;
}

inline void write_syng(const std::filesystem::path& path, const SyngFile& f) {
  write_file(path, encode_syng(f));
}

inline SyngFile read_syng(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_syng(bytes.data(), bytes.size());
  } catch (const input_error& e) {
    throw input_error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Tensor conversions for the concrete model types.
// ---------------------------------------------------------------------------

inline NamedTensor matrix_tensor(std::string name, const MatrixXd& m) {
  NamedTensor t;
  t.name = std::move(name);
  t.dims = {static_cast<std::uint64_t>(m.rows()),
            static_cast<std::uint64_t>(m.cols())};
  t.data.reserve(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
  return t;
}

inline MatrixXd tensor_matrix(const NamedTensor& t) {
  if (t.dims.size() != 2)
    throw input_error("tensor '" + t.name + "' is not a matrix");
  MatrixXd m(static_cast<Eigen::Index>(t.dims[0]),
             static_cast<Eigen::Index>(t.dims[1]));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = t.data[static_cast<std::size_t>(i) * m.cols() + j];
  return m;
}

inline NamedTensor vector_tensor(std::string name, const VectorXd& v) {
  NamedTensor t;
  t.name = std::move(name);
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

inline VectorXd tensor_vector(const NamedTensor& t) {
  VectorXd v(static_cast<Eigen::Index>(t.data.size()));
  for (std::size_t i = 0; i < t.data.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = t.data[i];
  return v;
}

inline NamedTensor rowmatrix_tensor(std::string name, const RowMatrix& m) {
  NamedTensor t;
  t.name = std::move(name);
  t.dims = {m.rows, m.cols};
  t.data = m.data;
  return t;
}

inline RowMatrix tensor_rowmatrix(const NamedTensor& t) {
  if (t.dims.size() != 2)
    throw input_error("tensor '" + t.name + "' is not a matrix");
  RowMatrix m(static_cast<std::size_t>(t.dims[0]),
              static_cast<std::size_t>(t.dims[1]));
  m.data = t.data;
  return m;
}

inline void append_pca(std::vector<NamedTensor>& out, const std::string& prefix,
                       const PcaModel& m) {
  out.push_back(vector_tensor(prefix + ".mean", m.mean));
  out.push_back(matrix_tensor(prefix + ".components", m.components));
  out.push_back(vector_tensor(prefix + ".variance", m.explained_variance));
}

inline PcaModel extract_pca(const SyngFile& f, const std::string& prefix) {
  PcaModel m;
  m.mean = tensor_vector(f.require(prefix + ".mean"));
  m.components = tensor_matrix(f.require(prefix + ".components"));
  m.explained_variance = tensor_vector(f.require(prefix + ".variance"));
  return m;
}

inline void append_cca(std::vector<NamedTensor>& out, const CcaModel& m) {
  out.push_back(vector_tensor("cca.x_mean", m.x_mean));
  out.push_back(vector_tensor("cca.y_mean", m.y_mean));
  out.push_back(matrix_tensor("cca.a", m.a_weights));
  out.push_back(matrix_tensor("cca.b", m.b_weights));
  out.push_back(vector_tensor("cca.correlations", m.correlations));
  out.push_back(NamedTensor::scalar("cca.ridge", m.ridge));
}

inline CcaModel extract_cca(const SyngFile& f) {
  CcaModel m;
  m.x_mean = tensor_vector(f.require("cca.x_mean"));
  m.y_mean = tensor_vector(f.require("cca.y_mean"));
  m.a_weights = tensor_matrix(f.require("cca.a"));
  m.b_weights = tensor_matrix(f.require("cca.b"));
  m.correlations = tensor_vector(f.require("cca.correlations"));
  m.ridge = f.require("cca.ridge").data.at(0);
  return m;
}

inline void append_standardizer(std::vector<NamedTensor>& out,
                                const SynergyStandardizer& st) {
  out.push_back(vector_tensor("standardizer.mean", st.mean));
  out.push_back(vector_tensor("standardizer.std", st.std));
}

inline SynergyStandardizer extract_standardizer(const SyngFile& f) {
  SynergyStandardizer st;
  st.mean = tensor_vector(f.require("standardizer.mean"));
  st.std = tensor_vector(f.require("standardizer.std"));
  return st;
}

inline void append_net_params(std::vector<NamedTensor>& out,
                              const NetParams& p) {
  out.push_back(NamedTensor::scalar("net.seed",
                                    static_cast<double>(p.rng_seed)));
  out.push_back(NamedTensor::scalar("net.layer_count",
                                    static_cast<double>(p.layers.size())));
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    if (p.layers[i].w.empty()) continue;
    const std::string prefix = "net.layer" + std::to_string(i);
    out.push_back(NamedTensor::vec(prefix + ".w", p.layers[i].w));
    out.push_back(NamedTensor::vec(prefix + ".b", p.layers[i].b));
  }
}

inline NetParams extract_net_params(const SyngFile& f) {
  NetParams p;
  p.rng_seed = static_cast<std::uint64_t>(f.require("net.seed").data.at(0));
  const auto count =
      static_cast<std::size_t>(f.require("net.layer_count").data.at(0));
  p.layers.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string prefix = "net.layer" + std::to_string(i);
    if (const NamedTensor* w = f.find(prefix + ".w")) {
      p.layers[i].w = w->data;
      p.layers[i].b = f.require(prefix + ".b").data;
    }
  }
  return p;
}

inline void append_svm(std::vector<NamedTensor>& out, const SvmModel& m,
                       const FeatureScaler& sc) {
  out.push_back(NamedTensor::vec("svm.w", m.w));
  out.push_back(NamedTensor::scalar("svm.b", m.b));
  out.push_back(NamedTensor::scalar("svm.c", m.c_reg));
  out.push_back(NamedTensor::vec("svm.scaler_mean", sc.mean));
  out.push_back(NamedTensor::vec("svm.scaler_std", sc.std));
}

inline std::pair<SvmModel, FeatureScaler> extract_svm(const SyngFile& f) {
  SvmModel m;
  m.w = f.require("svm.w").data;
  m.b = f.require("svm.b").data.at(0);
  m.c_reg = f.require("svm.c").data.at(0);
  FeatureScaler sc;
  sc.mean = f.require("svm.scaler_mean").data;
  sc.std = f.require("svm.scaler_std").data;
  return {std::move(m), std::move(sc)};
}

// ---------------------------------------------------------------------------
// CSV helper.
// ---------------------------------------------------------------------------

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += "\"\"";
    else q += c;
  }
  q += "\"";
  return q;
}

}  // namespace synergy
