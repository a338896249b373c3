#pragma once

// Dataset manifests (tab-separated records) and stratified splits.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/image.hpp"
#include "synergy/image_io.hpp"

namespace synergy {

struct ManifestRecord {
  std::string path;   // as written in the manifest; doubles as the record id
  int label = 0;      // +1 selfie, -1 non_selfie
  std::vector<MaskRect> rects;
  bool has_rects = false;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;  // image paths resolve relative to this

  std::filesystem::path resolve(const ManifestRecord& r) const {
    std::filesystem::path p(r.path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline std::string label_to_string(int label) {
  return label == 1 ? "selfie" : "non_selfie";
}

inline int label_from_string(const std::string& s, int line_no) {
  if (s == "selfie") return 1;
  if (s == "non_selfie") return -1;
  throw input_error("manifest line " + std::to_string(line_no) +
                    ": unknown label '" + s + "' (want selfie|non_selfie)");
}

// Format, one record per line:
//   path<TAB>label[<TAB>x0,y0,w,h;x0,y0,w,h;...]
inline DatasetManifest parse_manifest(const std::filesystem::path& file) {
  DatasetManifest m;
  m.base_dir = file.parent_path();
  std::istringstream in(read_text_file(file));
  std::string line;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 2 || cols.size() > 3)
      throw input_error("manifest line " + std::to_string(line_no) +
                        ": want path<TAB>label[<TAB>rects]");

    ManifestRecord rec;
    rec.path = cols[0];
    if (rec.path.empty())
      throw input_error("manifest line " + std::to_string(line_no) +
                        ": empty path");
    if (!seen.emplace(rec.path, line_no).second)
      throw input_error("manifest line " + std::to_string(line_no) +
                        ": duplicate path '" + rec.path + "'");
    rec.label = label_from_string(cols[1], line_no);

    if (cols.size() == 3 && !cols[2].empty()) {
      rec.has_rects = true;
      std::istringstream rs(cols[2]);
      std::string part;
      while (std::getline(rs, part, ';')) {
        if (part.empty()) continue;
        MaskRect r;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream ps(part);
        if (!(ps >> r.x0 >> c1 >> r.y0 >> c2 >> r.w >> c3 >> r.h) ||
            c1 != ',' || c2 != ',' || c3 != ',' || r.w < 0 || r.h < 0)
          throw input_error("manifest line " + std::to_string(line_no) +
                            ": malformed rect '" + part + "'");
        rec.rects.push_back(r);
      }
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

inline std::string manifest_to_string(const DatasetManifest& m) {
  std::string out;
  for (const ManifestRecord& r : m.records) {
    out += r.path + "\t" + label_to_string(r.label);
    if (r.has_rects) {
      out += "\t";
      for (std::size_t i = 0; i < r.rects.size(); ++i) {
        if (i) out += ";";
        out += std::to_string(r.rects[i].x0) + "," +
               std::to_string(r.rects[i].y0) + "," +
               std::to_string(r.rects[i].w) + "," +
               std::to_string(r.rects[i].h);
      }
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratified splits.
// ---------------------------------------------------------------------------

enum class Split { train, val, test };

inline std::string split_to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw input_error("unknown split tag '" + s + "'");
}

struct SplitAssignment {
  std::vector<Split> tags;  // aligned with manifest records
  std::uint64_t seed = 0;
};

// Stratified 60/10/30: per class, a seeded shuffle followed by floor(0.6 n)
// train, floor(0.1 n) val, remainder test.
inline SplitAssignment split_dataset(const DatasetManifest& m,
                                     std::uint64_t seed) {
  SplitAssignment out;
  out.seed = seed;
  out.tags.assign(m.records.size(), Split::test);

  for (int label : {1, -1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m.records.size(); ++i)
      if (m.records[i].label == label) idx.push_back(i);
    if (idx.size() < 10)
      throw input_error("split_dataset: class '" + label_to_string(label) +
                        "' has " + std::to_string(idx.size()) +
                        " records; need at least 10");
    // Independent stream per class so the two strata do not interleave.
    Rng rng(fnv1a64(label_to_string(label), seed));
    deterministic_shuffle(idx, rng);
    const std::size_t n = idx.size();
    const std::size_t n_train = (n * 6) / 10;
    const std::size_t n_val = n / 10;
    for (std::size_t j = 0; j < n; ++j) {
      out.tags[idx[j]] = j < n_train            ? Split::train
                         : j < n_train + n_val  ? Split::val
                                                : Split::test;
    }
  }
  return out;
}

inline std::string split_to_tsv(const DatasetManifest& m,
                                const SplitAssignment& a) {
  std::string out;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    out += m.records[i].path + "\t" + split_to_string(a.tags[i]) + "\n";
  return out;
}

inline SplitAssignment split_from_tsv(const DatasetManifest& m,
                                      const std::string& text,
                                      std::uint64_t seed) {
  std::map<std::string, Split> by_path;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw input_error("split file: malformed line '" + line + "'");
    by_path[line.substr(0, tab)] = split_from_string(line.substr(tab + 1));
  }
  SplitAssignment a;
  a.seed = seed;
  a.tags.reserve(m.records.size());
  for (const ManifestRecord& r : m.records) {
    auto it = by_path.find(r.path);
    if (it == by_path.end())
      throw input_error("split file: no assignment for '" + r.path + "'");
    a.tags.push_back(it->second);
  }
  return a;
}

inline std::vector<std::size_t> split_indices(const SplitAssignment& a,
                                              Split which) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < a.tags.size(); ++i)
    if (a.tags[i] == which) idx.push_back(i);
  return idx;
}

}  // namespace synergy
