#pragma once

// Feature files: one row per video, ordered by video id.
//
//   # svt-features 1 <q> <d_sem>
//   <video_id> \t <class_id> \t z_1 ... z_q \t f_1 ... f_d_sem
//
// Every value is its own tab-separated field, printed with 17 significant
// digits so that re-import is exact.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "svt/manifest.hpp"
#include "svt/semantic_head.hpp"

namespace svt {

struct FeatureRow {
  std::string video_id;
  ClassId class_id;
  std::vector<double> summary;
  std::vector<double> embedding;
};

inline void write_features(std::ostream& os, std::vector<FeatureRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.video_id < b.video_id; });
  const std::size_t q = rows.empty() ? 0 : rows[0].summary.size();
  const std::size_t d = rows.empty() ? 0 : rows[0].embedding.size();
  os << "# svt-features 1 " << q << ' ' << d << '\n';
  char buf[32];
  for (const auto& r : rows) {
    if (r.summary.size() != q || r.embedding.size() != d) throw ShapeError("features: ragged rows");
    os << r.video_id << '\t' << to_string(r.class_id);
    for (const auto* v : {&r.summary, &r.embedding}) {
      for (double x : *v) {
        std::snprintf(buf, sizeof buf, "\t%.17g", x);
        os << buf;
      }
    }
    os << '\n';
  }
  if (!os) throw IoError("features: write failed");
}

inline void write_features(const std::filesystem::path& path, std::vector<FeatureRow> rows) {
  std::ofstream os(path);
  if (!os) throw IoError("features: cannot write " + path.string());
  write_features(os, std::move(rows));
}

inline std::vector<FeatureRow> read_features(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("features: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("features: empty file " + path.string());
  std::istringstream hs(line);
  std::string hash, magic;
  int version = 0;
  std::size_t q = 0, d = 0;
  if (!(hs >> hash >> magic >> version >> q >> d) || hash != "#" || magic != "svt-features" || version != 1) {
    throw IoError("features: bad header in " + path.string());
  }
  std::vector<FeatureRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 2 + q + d) {
      throw IoError(detail::concat(path.string(), ":", lineno, ": expected ", 2 + q + d, " fields, got ", f.size()));
    }
    FeatureRow r{f[0], parse_class_id(f[1]), {}, {}};
    for (std::size_t i = 0; i < q + d; ++i) {
      char* end = nullptr;
      const double x = std::strtod(f[2 + i].c_str(), &end);
      if (end != f[2 + i].c_str() + f[2 + i].size()) {
        throw IoError(detail::concat(path.string(), ":", lineno, ": '", f[2 + i], "' is not a number"));
      }
      (i < q ? r.summary : r.embedding).push_back(x);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Eval-mode features of every entry, ordered by video id.
template <class T>
std::vector<FeatureRow> extract_features(const SvtModel<T>& model, const std::vector<ManifestEntry>& entries,
                                         const std::filesystem::path& data_root, const PreprocessConfig& pre,
                                         std::size_t clips = 1) {
  std::vector<FeatureRow> rows;
  for (const auto& e : entries) {
    auto video = read_video(resolve_path(data_root, e.path), e.video_id);
    auto emb = embed_video_clips(model, video, pre, clips);
    rows.push_back({e.video_id, e.class_id, std::move(emb.summary), std::move(emb.embedding)});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.video_id < b.video_id; });
  return rows;
}

}  // namespace svt
