#pragma once

// Class embedding tables, cosine geometry, overlap audit, curated test splits.
//
// Embedding table files use the common word-vector text layout: one record
// per line, a key token followed by d decimal floats, whitespace separated.
// An optional first line "<count> <dim>" is skipped. Keys are word tokens
// for label (CL) lookups and decimal class ids for description (CD) lookups.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "svt/error.hpp"
#include "svt/manifest.hpp"

namespace svt {

enum class EmbeddingMode { class_label, class_description };

inline std::string mode_tag(EmbeddingMode m) { return m == EmbeddingMode::class_label ? "CL" : "CD"; }

inline EmbeddingMode parse_embedding_mode(const std::string& s) {
  if (s == "CL" || s == "cl" || s == "label") return EmbeddingMode::class_label;
  if (s == "CD" || s == "cd" || s == "description") return EmbeddingMode::class_description;
  throw ConfigError("embedding mode must be CL or CD, got '" + s + "'");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// 1 - u.v / (|u| |v|), clamped to [0, 2] against rounding. Zero-norm operands
/// raise DataError naming them.
inline double cosine_distance(std::span<const double> u, std::span<const double> v,
                              const std::string& u_name = "u", const std::string& v_name = "v") {
  if (u.size() != v.size()) {
    throw ShapeError(detail::concat("cosine distance: dimensions ", u.size(), " and ", v.size(), " differ"));
  }
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0) throw DataError("cosine distance: zero-norm vector " + u_name);
  if (nv == 0.0) throw DataError("cosine distance: zero-norm vector " + v_name);
  return std::clamp(1.0 - dot(u, v) / (nu * nv), 0.0, 2.0);
}

struct SemanticEntry {
  ClassId id;
  std::vector<double> vector;
  EmbeddingMode mode = EmbeddingMode::class_description;
};

/// Class id -> embedding, iterated in increasing id order.
class SemanticSpace {
 public:
  SemanticSpace() = default;
  explicit SemanticSpace(std::size_t dim, std::string source = {}) : dim_(dim), source_(std::move(source)) {}

  std::size_t dim() const { return dim_; }
  const std::string& source() const { return source_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void add(ClassId id, std::vector<double> v, EmbeddingMode mode = EmbeddingMode::class_description) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) {
      throw ShapeError(detail::concat("semantic space: class ", id.value, " has dimension ", v.size(),
                                      ", expected ", dim_));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw NonFiniteError(detail::concat("semantic space: class ", id.value, " is non-finite"));
    }
    if (norm(v) == 0.0) throw DataError(detail::concat("semantic space: class ", id.value, " has a zero-norm vector"));
    auto pos = std::lower_bound(entries_.begin(), entries_.end(), id,
                                [](const SemanticEntry& e, ClassId k) { return e.id < k; });
    if (pos != entries_.end() && pos->id == id) {
      throw DataError(detail::concat("semantic space: class ", id.value, " added twice"));
    }
    entries_.insert(pos, SemanticEntry{id, std::move(v), mode});
  }

  bool contains(ClassId id) const { return find(id) != nullptr; }

  const std::vector<double>& at(ClassId id) const {
    const auto* e = find(id);
    if (!e) throw DataError(detail::concat("semantic space: no embedding for class ", id.value));
    return e->vector;
  }

  const std::vector<SemanticEntry>& entries() const { return entries_; }

  std::vector<ClassId> ids() const {
    std::vector<ClassId> out;
    for (const auto& e : entries_) out.push_back(e.id);
    return out;
  }

  /// Sub-space over `ids` (each must be present).
  SemanticSpace restrict_to(const std::vector<ClassId>& ids) const {
    SemanticSpace s(dim_, source_);
    for (auto id : ids) s.add(id, at(id), find(id)->mode);
    return s;
  }

  /// Ids among `ids` that have no embedding.
  std::vector<ClassId> missing(const std::vector<ClassId>& ids) const {
    std::vector<ClassId> out;
    for (auto id : ids) {
      if (!contains(id)) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  const SemanticEntry* find(ClassId id) const {
    auto pos = std::lower_bound(entries_.begin(), entries_.end(), id,
                                [](const SemanticEntry& e, ClassId k) { return e.id < k; });
    return pos != entries_.end() && pos->id == id ? &*pos : nullptr;
  }

  std::size_t dim_ = 0;
  std::string source_;
  std::vector<SemanticEntry> entries_;
};

inline std::string join_ids(const std::vector<ClassId>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ", " : "") + to_string(ids[i]);
  return s;
}

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

inline EmbeddingTable read_embedding_table(std::istream& is, const std::string& name = "embedding table") {
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    detail::strip_cr(line);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const double x = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        throw IoError(detail::concat(name, ":", lineno, ": '", tok, "' is not a number"));
      }
      v.push_back(x);
    }
    if (lineno == 1 && v.size() == 1 && key.find_first_not_of("0123456789") == std::string::npos) continue;
    if (v.empty()) throw IoError(detail::concat(name, ":", lineno, ": record '", key, "' has no values"));
    if (table.dim == 0) table.dim = v.size();
    if (v.size() != table.dim) {
      throw ShapeError(detail::concat(name, ":", lineno, ": record '", key, "' has ", v.size(),
                                      " values, expected ", table.dim));
    }
    table.vectors[key] = std::move(v);
  }
  if (table.vectors.empty()) throw IoError(name + ": no records");
  return table;
}

inline EmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open embedding table " + path.string());
  return read_embedding_table(is, path.string());
}

inline void write_embedding_table(const std::filesystem::path& path, const SemanticSpace& space) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write embedding table " + path.string());
  char buf[32];
  for (const auto& e : space.entries()) {
    os << to_string(e.id);
    for (double x : e.vector) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      os << buf;
    }
    os << '\n';
  }
}

/// CD: the record keyed by the decimal class id. CL: unweighted mean of the
/// records of the whitespace-separated label tokens, with no string
/// normalization.
inline SemanticSpace load_embeddings(const EmbeddingTable& table, const std::vector<ClassInfo>& classes,
                                     EmbeddingMode mode, std::string source = {}) {
  SemanticSpace space(table.dim, std::move(source));
  std::vector<ClassId> missing;
  for (const auto& c : classes) {
    std::vector<double> v(table.dim, 0.0);
    bool ok = true;
    if (mode == EmbeddingMode::class_description) {
      auto it = table.vectors.find(to_string(c.id));
      ok = it != table.vectors.end();
      if (ok) v = it->second;
    } else {
      std::istringstream words(c.label);
      std::string w;
      std::size_t n = 0;
      while (words >> w) {
        auto it = table.vectors.find(w);
        if (it == table.vectors.end()) {
          ok = false;
          break;
        }
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += it->second[i];
        ++n;
      }
      ok = ok && n > 0;
      if (ok) {
        for (auto& x : v) x /= static_cast<double>(n);
      }
    }
    if (!ok) {
      missing.push_back(c.id);
      continue;
    }
    space.add(c.id, std::move(v), mode);
  }
  if (!missing.empty()) {
    throw DataError("embeddings: no " + mode_tag(mode) + " vector for class id(s) " + join_ids(missing));
  }
  return space;
}

struct OverlapEntry {
  ClassId test_class;
  ClassId nearest_train_class;
  double distance = 0.0;
  bool flagged = false;
};

struct OverlapReport {
  double tau = 0.05;
  std::vector<OverlapEntry> entries;  // increasing test class id

  std::size_t flagged_count() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](auto& e) { return e.flagged; }));
  }
  double overlap_fraction() const {
    return entries.empty() ? 0.0 : static_cast<double>(flagged_count()) / static_cast<double>(entries.size());
  }
};

inline void check_same_dim(const SemanticSpace& a, const SemanticSpace& b, const char* what) {
  if (a.dim() != b.dim()) throw ShapeError(detail::concat(what, ": dimensions ", a.dim(), " and ", b.dim(), " differ"));
}

/// For each test class, the nearest train class (smallest id on ties) and
/// whether D_cos < tau.
inline OverlapReport audit_overlap(const SemanticSpace& train, const SemanticSpace& test, double tau = 0.05) {
  check_same_dim(train, test, "audit_overlap");
  if (train.empty()) throw DataError("audit_overlap: empty train space");
  OverlapReport r;
  r.tau = tau;
  for (const auto& u : test.entries()) {
    OverlapEntry e{u.id, ClassId{}, 0.0, false};
    bool first = true;
    for (const auto& s : train.entries()) {
      const double d = cosine_distance(s.vector, u.vector, "train class " + to_string(s.id),
                                       "test class " + to_string(u.id));
      if (first || d < e.distance) {
        e.distance = d;
        e.nearest_train_class = s.id;
        first = false;
      }
    }
    e.flagged = e.distance < tau;
    r.entries.push_back(e);
  }
  return r;
}

/// Train classes that are at least tau away from every class of every test space.
inline std::vector<ClassId> build_restrictive_trainset(const SemanticSpace& train,
                                                       const std::vector<SemanticSpace>& tests, double tau = 0.05) {
  std::vector<ClassId> kept;
  for (const auto& t : tests) check_same_dim(train, t, "build_restrictive_trainset");
  for (const auto& s : train.entries()) {
    bool close = false;
    for (const auto& t : tests) {
      for (const auto& u : t.entries()) {
        if (cosine_distance(s.vector, u.vector, "train class " + to_string(s.id), "test class " + to_string(u.id)) <
            tau) {
          close = true;
          break;
        }
      }
      if (close) break;
    }
    if (!close) kept.push_back(s.id);
  }
  return kept;
}

// Curated pooled test set.
//   split file: one class per line, tab separated: <source> <class id> <label>
//   '#' starts a comment line.

struct SplitClass {
  std::string source;
  ClassId id;
  std::string label;
};

struct FairZslTestSet {
  std::vector<SplitClass> classes;  // file order
  std::map<std::string, std::size_t> counts;

  std::vector<ClassId> ids() const {
    std::vector<ClassId> out;
    for (const auto& c : classes) out.push_back(c.id);
    std::sort(out.begin(), out.end());
    return out;
  }
};

inline const std::map<std::string, std::size_t>& fair_zsl_default_counts() {
  static const std::map<std::string, std::size_t> counts = {{"ActivityNet", 19}, {"HMDB51", 3}, {"UCF101", 8}};
  return counts;
}

inline FairZslTestSet build_fair_zsl_testset(const std::filesystem::path& split_file,
                                             const std::map<std::string, std::size_t>& expected =
                                                 fair_zsl_default_counts()) {
  FairZslTestSet set;
  std::set<ClassId> seen_ids;
  std::set<std::string> seen_labels;
  detail::for_each_record(split_file, [&](const std::vector<std::string>& f, std::size_t lineno) {
    if (f.size() != 3) {
      throw IoError(detail::concat(split_file.string(), ":", lineno, ": expected 3 tab-separated fields, got ",
                                   f.size()));
    }
    SplitClass c{f[0], parse_class_id(f[1]), f[2]};
    if (!seen_ids.insert(c.id).second) {
      throw DataError(detail::concat("split file: class id ", c.id.value, " listed twice"));
    }
    if (!seen_labels.insert(c.label).second) throw DataError("split file: class '" + c.label + "' listed twice");
    ++set.counts[c.source];
    set.classes.push_back(std::move(c));
  });
  if (set.classes.empty()) throw DataError("split file " + split_file.string() + " lists no classes");
  if (set.counts != expected) {
    std::ostringstream msg;
    msg << "split file: per-source counts";
    for (const auto& [src, n] : set.counts) msg << ' ' << src << '=' << n;
    msg << " do not match declared";
    for (const auto& [src, n] : expected) msg << ' ' << src << '=' << n;
    throw DataError(msg.str());
  }
  return set;
}

}  // namespace svt
