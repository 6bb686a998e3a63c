#pragma once

// Dataset manifests.
//
// Entries file, UTF-8, tab-separated, one video per line:
//   <video_id> \t <path> \t <class_id> \t <split>
// Class table, UTF-8, tab-separated, one class per line:
//   <class_id> \t <label> \t <description>
// Blank lines and lines starting with '#' are ignored in both. Relative video
// paths resolve against the data root.

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "svt/error.hpp"

namespace svt {

struct ClassId {
  std::int64_t value = 0;
  auto operator<=>(const ClassId&) const = default;
};

inline std::string to_string(ClassId id) { return std::to_string(id.value); }

inline ClassId parse_class_id(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError("invalid class id '" + std::string(text) + "'");
  }
  return ClassId{v};
}

struct ManifestEntry {
  std::string video_id;
  std::string path;
  ClassId class_id;
  std::string split;
};

struct ClassInfo {
  ClassId id;
  std::string label;
  std::string description;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<ClassInfo> classes;

  /// Throws on duplicate video ids, duplicate class ids, or entries whose
  /// class is missing from the class table.
  void validate() const {
    std::set<ClassId> ids;
    for (const auto& c : classes) {
      if (!ids.insert(c.id).second) throw DataError("manifest: duplicate class id " + to_string(c.id));
    }
    std::set<std::string> videos;
    for (const auto& e : entries) {
      if (!videos.insert(e.video_id).second) throw DataError("manifest: duplicate video id '" + e.video_id + "'");
      if (!ids.contains(e.class_id)) {
        throw DataError("manifest: video '" + e.video_id + "' has unknown class id " + to_string(e.class_id));
      }
    }
  }

  const ClassInfo& class_info(ClassId id) const {
    for (const auto& c : classes) {
      if (c.id == id) return c;
    }
    throw DataError("manifest: unknown class id " + to_string(id));
  }

  std::vector<ManifestEntry> split_entries(const std::string& split) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [&](const ManifestEntry& e) { return split.empty() || e.split == split; });
    return out;
  }

  std::vector<ClassId> class_ids() const {
    std::vector<ClassId> out;
    for (const auto& c : classes) out.push_back(c.id);
    std::sort(out.begin(), out.end());
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <class Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    fn(split_tabs(line), lineno);
  }
}

}  // namespace detail

inline std::vector<ClassInfo> read_class_table(const std::filesystem::path& path) {
  std::vector<ClassInfo> out;
  detail::for_each_record(path, [&](const std::vector<std::string>& f, std::size_t lineno) {
    if (f.size() != 3) {
      throw DataError(detail::concat(path.string(), ":", lineno, ": expected 3 tab-separated columns, got ", f.size()));
    }
    out.push_back({parse_class_id(f[0]), f[1], f[2]});
  });
  return out;
}

inline DatasetManifest read_manifest(const std::filesystem::path& entries_path,
                                     const std::filesystem::path& classes_path) {
  DatasetManifest m;
  m.classes = read_class_table(classes_path);
  detail::for_each_record(entries_path, [&](const std::vector<std::string>& f, std::size_t lineno) {
    if (f.size() != 4) {
      throw DataError(
          detail::concat(entries_path.string(), ":", lineno, ": expected 4 tab-separated columns, got ", f.size()));
    }
    m.entries.push_back({f[0], f[1], parse_class_id(f[2]), f[3]});
  });
  m.validate();
  return m;
}

inline void write_class_table(const std::filesystem::path& path, const std::vector<ClassInfo>& classes) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "# class_id\tlabel\tdescription\n";
  for (const auto& c : classes) os << c.id.value << '\t' << c.label << '\t' << c.description << '\n';
}

inline void write_manifest(const std::filesystem::path& entries_path, const std::filesystem::path& classes_path,
                           const DatasetManifest& m) {
  std::ofstream os(entries_path);
  if (!os) throw IoError("cannot open '" + entries_path.string() + "' for writing");
  os << "# video_id\tpath\tclass_id\tsplit\n";
  for (const auto& e : m.entries) os << e.video_id << '\t' << e.path << '\t' << e.class_id.value << '\t' << e.split << '\n';
  write_class_table(classes_path, m.classes);
}

inline std::filesystem::path resolve_path(const std::filesystem::path& data_root, const std::string& path) {
  std::filesystem::path p(path);
  return p.is_absolute() || data_root.empty() ? p : data_root / p;
}

}  // namespace svt

template <>
struct std::hash<svt::ClassId> {
  std::size_t operator()(const svt::ClassId& id) const noexcept { return std::hash<std::int64_t>{}(id.value); }
};
