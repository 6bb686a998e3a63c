#pragma once

// Zero-shot evaluation protocols.
//
// A trial classifies every test clip among a candidate class set. With the
// full rule the candidates are all test classes. With the random-half rule,
// trial t sorts the test class ids, shuffles them with Fisher-Yates driven by
// Rng(seed + t), and keeps the first ceil(k/2); only clips of those classes
// are scored. Open-ended and restrictive runs differ in how the model was
// trained, not in how they are scored.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "svt/manifest.hpp"
#include "svt/rng.hpp"
#include "svt/semantic_head.hpp"
#include "svt/semantic_space.hpp"

namespace svt {

enum class Protocol { open_ended, restrictive, fair_zsl };
enum class SubsetRule { full, random_half };

inline std::string protocol_tag(Protocol p) {
  switch (p) {
    case Protocol::open_ended: return "OE";
    case Protocol::restrictive: return "R";
    case Protocol::fair_zsl: return "FZSL";
  }
  return "?";
}

inline Protocol parse_protocol(const std::string& s) {
  if (s == "OE" || s == "oe") return Protocol::open_ended;
  if (s == "R" || s == "r") return Protocol::restrictive;
  if (s == "FZSL" || s == "fzsl") return Protocol::fair_zsl;
  throw ConfigError("protocol must be OE, R or FZSL, got '" + s + "'");
}

inline std::string rule_tag(SubsetRule r) { return r == SubsetRule::full ? "full" : "half"; }

inline SubsetRule parse_rule(const std::string& s) {
  if (s == "full") return SubsetRule::full;
  if (s == "half") return SubsetRule::random_half;
  throw ConfigError("class subset rule must be full or half, got '" + s + "'");
}

struct SplitSpec {
  Protocol protocol = Protocol::open_ended;
  std::string test_manifest;
  SubsetRule rule = SubsetRule::random_half;
  std::uint64_t seed = 10;
  std::size_t trials = 10;
  std::vector<ClassId> class_filter;  // when non-empty, only these test classes (curated sets)
};

/// Candidate classes of trial `t`.
inline std::vector<ClassId> trial_classes(std::vector<ClassId> classes, SubsetRule rule, std::uint64_t seed,
                                          std::size_t trial) {
  std::sort(classes.begin(), classes.end());
  if (rule == SubsetRule::full) return classes;
  Rng rng(seed + trial);
  rng.shuffle(classes);
  classes.resize((classes.size() + 1) / 2);
  std::sort(classes.begin(), classes.end());
  return classes;
}

struct TrialResult {
  std::size_t trial = 0;
  std::size_t classes = 0;
  std::size_t clips = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  SplitSpec split;
  std::string space_source;
  std::vector<TrialResult> trials;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over trials; 0 for one trial
  std::map<std::pair<ClassId, ClassId>, std::size_t> confusion;  // (true, predicted), summed over trials
};

using Embedder = std::function<std::vector<double>(const ManifestEntry&)>;

inline EvalReport run_protocol(const Embedder& embed, const std::vector<ManifestEntry>& entries,
                               const SemanticSpace& space, const SplitSpec& split) {
  if (split.trials == 0) throw ConfigError("run_protocol: trial count must be positive");
  std::vector<const ManifestEntry*> tests;
  std::set<ClassId> filter(split.class_filter.begin(), split.class_filter.end());
  for (const auto& e : entries) {
    if (filter.empty() || filter.contains(e.class_id)) tests.push_back(&e);
  }
  if (tests.empty()) throw DataError("run_protocol: no test clips");
  std::vector<ClassId> classes;
  for (const auto* e : tests) classes.push_back(e->class_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  auto missing = space.missing(classes);
  if (!missing.empty()) throw DataError("run_protocol: no class embedding for test class id(s) " + join_ids(missing));

  std::vector<std::vector<double>> f;
  for (const auto* e : tests) {
    f.push_back(embed(*e));
    if (f.back().size() != space.dim()) {
      throw ShapeError(detail::concat("run_protocol: embedding of ", e->video_id, " has dimension ", f.back().size(),
                                      ", space has ", space.dim()));
    }
  }

  EvalReport r;
  r.split = split;
  r.space_source = space.source();
  for (std::size_t t = 0; t < split.trials; ++t) {
    const auto cand = trial_classes(classes, split.rule, split.seed, t);
    const std::set<ClassId> in(cand.begin(), cand.end());
    TrialResult tr;
    tr.trial = t;
    tr.classes = cand.size();
    for (std::size_t i = 0; i < tests.size(); ++i) {
      if (!in.contains(tests[i]->class_id)) continue;
      const ClassId pred = classify(f[i], space, &cand);
      ++tr.clips;
      tr.correct += pred == tests[i]->class_id;
      ++r.confusion[{tests[i]->class_id, pred}];
    }
    tr.accuracy = tr.clips ? static_cast<double>(tr.correct) / static_cast<double>(tr.clips) : 0.0;
    r.trials.push_back(tr);
  }
  double sum = 0.0;
  for (const auto& tr : r.trials) sum += tr.accuracy;
  r.mean = sum / static_cast<double>(r.trials.size());
  if (r.trials.size() > 1) {
    double ss = 0.0;
    for (const auto& tr : r.trials) ss += (tr.accuracy - r.mean) * (tr.accuracy - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(r.trials.size() - 1));
  }
  return r;
}

namespace detail {
inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}
}  // namespace detail

/// Tab-separated report: metadata lines, one row per trial, summary, confusion counts.
inline void write_report_tsv(std::ostream& os, const EvalReport& r) {
  os << "protocol\t" << protocol_tag(r.split.protocol) << '\n'
     << "test_manifest\t" << r.split.test_manifest << '\n'
     << "space\t" << r.space_source << '\n'
     << "rule\t" << rule_tag(r.split.rule) << '\n'
     << "seed\t" << r.split.seed << '\n'
     << "trials\t" << r.split.trials << '\n'
     << "trial\tclasses\tclips\tcorrect\taccuracy\n";
  for (const auto& t : r.trials) {
    os << t.trial << '\t' << t.classes << '\t' << t.clips << '\t' << t.correct << '\t'
       << detail::fmt("%.17g", t.accuracy) << '\n';
  }
  os << "mean\t" << detail::fmt("%.17g", r.mean) << '\n' << "std\t" << detail::fmt("%.17g", r.stddev) << '\n';
  os << "true\tpredicted\tcount\n";
  for (const auto& [k, n] : r.confusion) os << to_string(k.first) << '\t' << to_string(k.second) << '\t' << n << '\n';
}

inline void write_report_table(std::ostream& os, const EvalReport& r) {
  os << "protocol " << protocol_tag(r.split.protocol) << ", " << rule_tag(r.split.rule) << " class set, seed "
     << r.split.seed << ", " << r.split.trials << " trial(s)\n";
  os << "  trial  classes  clips  top-1\n";
  char line[96];
  for (const auto& t : r.trials) {
    std::snprintf(line, sizeof line, "  %5zu  %7zu  %5zu  %5.1f%%\n", t.trial, t.classes, t.clips, 100.0 * t.accuracy);
    os << line;
  }
  std::snprintf(line, sizeof line, "  mean %.1f%%  std %.1f%%\n", 100.0 * r.mean, 100.0 * r.stddev);
  os << line;
}

}  // namespace svt
