#pragma once

// Run configuration: one "key = value" line per field, '#' comments.
// dump() writes every field, defaulted or not, in a fixed order; load()
// accepts any subset and re-validates cross-field constraints.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "svt/eval.hpp"
#include "svt/model.hpp"

namespace svt {

inline constexpr const char* data_root_env = "SVT_DATA_ROOT";

struct RunConfig {
  SvtConfig model;
  std::string precision = "f32";
  std::size_t resize_short = 256;

  double lr = 0.002;
  double momentum = 0.9;
  std::size_t batch = 8;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t checkpoint_every = 0;

  std::string data_root;
  std::string manifest = "manifest.tsv";
  std::string classes = "classes.tsv";
  std::string embeddings;
  std::string embedding_mode = "CD";
  std::string split_file;
  std::string checkpoint_dir = "checkpoints";
  std::string checkpoint;
  std::string train_split = "train";
  std::string test_split = "test";

  std::string protocol = "OE";
  std::string rule = "half";
  std::uint64_t eval_seed = 10;
  std::size_t trials = 10;
  std::size_t clips = 1;
  double tau = 0.05;

  bool operator==(const RunConfig&) const = default;

  void validate() const {
    model.validate();
    if (precision != "f32" && precision != "f64") throw ConfigError("precision must be f32 or f64");
    if (resize_short < std::min(model.height, model.width)) {
      throw ConfigError(detail::concat("resize_short=", resize_short, " is below the crop size ", model.height, "x",
                                       model.width));
    }
    if (batch == 0 || threads == 0 || trials == 0 || clips == 0) {
      throw ConfigError("batch, threads, trials and clips must be positive");
    }
    if (!(lr >= 0.0) || !(momentum >= 0.0)) throw ConfigError("lr and momentum must be non-negative");
    parse_embedding_mode(embedding_mode);
    parse_protocol(protocol);
    parse_rule(rule);
  }

  PreprocessConfig preprocess() const {
    PreprocessConfig p;
    p.resize_short = resize_short;
    p.crop_height = model.height;
    p.crop_width = model.width;
    return p;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.lr = lr;
    t.momentum = momentum;
    t.batch = batch;
    t.epochs = epochs;
    t.max_steps = max_steps;
    t.seed = seed;
    t.checkpoint_every = checkpoint_every;
    t.checkpoint_dir = checkpoint_dir;
    t.preprocess = preprocess();
    return t;
  }

  /// data_root, or the environment variable when data_root is empty.
  std::filesystem::path effective_data_root() const {
    if (!data_root.empty()) return data_root;
    if (const char* env = std::getenv(data_root_env)) return env;
    return ".";
  }
};

struct ConfigField {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return static_cast<std::size_t>(x);
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return x;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto size_field = [&](std::string key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return std::to_string(c.*member); },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.*member = static_cast<std::remove_reference_t<decltype(c.*member)>>(detail::parse_size(key, v));
                   }});
    };
    auto model_field = [&](std::string key, std::size_t SvtConfig::*member) {
      f.push_back({key, [member](const RunConfig& c) { return std::to_string(c.model.*member); },
                   [member, key](RunConfig& c, const std::string& v) { c.model.*member = detail::parse_size(key, v); }});
    };
    auto double_field = [&](std::string key, double RunConfig::*member) {
      f.push_back({key, [member](const RunConfig& c) { return detail::format_double(c.*member); },
                   [member, key](RunConfig& c, const std::string& v) { c.*member = detail::parse_double(key, v); }});
    };
    auto string_field = [&](std::string key, std::string RunConfig::*member) {
      f.push_back({key, [member](const RunConfig& c) { return c.*member; },
                   [member](RunConfig& c, const std::string& v) { c.*member = v; }});
    };
    model_field("frames", &SvtConfig::frames);
    model_field("height", &SvtConfig::height);
    model_field("width", &SvtConfig::width);
    model_field("patch", &SvtConfig::patch);
    model_field("dim", &SvtConfig::dim);
    model_field("heads", &SvtConfig::heads);
    model_field("depth", &SvtConfig::depth);
    model_field("mlp_ratio", &SvtConfig::mlp_ratio);
    model_field("sem_dim", &SvtConfig::sem_dim);
    string_field("precision", &RunConfig::precision);
    size_field("resize_short", &RunConfig::resize_short);
    double_field("lr", &RunConfig::lr);
    double_field("momentum", &RunConfig::momentum);
    size_field("batch", &RunConfig::batch);
    size_field("epochs", &RunConfig::epochs);
    size_field("max_steps", &RunConfig::max_steps);
    size_field("seed", &RunConfig::seed);
    size_field("threads", &RunConfig::threads);
    size_field("checkpoint_every", &RunConfig::checkpoint_every);
    string_field("data_root", &RunConfig::data_root);
    string_field("manifest", &RunConfig::manifest);
    string_field("classes", &RunConfig::classes);
    string_field("embeddings", &RunConfig::embeddings);
    string_field("embedding_mode", &RunConfig::embedding_mode);
    string_field("split_file", &RunConfig::split_file);
    string_field("checkpoint_dir", &RunConfig::checkpoint_dir);
    string_field("checkpoint", &RunConfig::checkpoint);
    string_field("train_split", &RunConfig::train_split);
    string_field("test_split", &RunConfig::test_split);
    string_field("protocol", &RunConfig::protocol);
    string_field("rule", &RunConfig::rule);
    size_field("eval_seed", &RunConfig::eval_seed);
    size_field("trials", &RunConfig::trials);
    size_field("clips", &RunConfig::clips);
    double_field("tau", &RunConfig::tau);
    return f;
  }();
  return fields;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields()) {
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void dump_config(std::ostream& os, const RunConfig& c) {
  for (const auto& f : config_fields()) os << f.key << " = " << f.get(c) << '\n';
}

inline void dump_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config " + path.string());
  dump_config(os, c);
}

inline RunConfig load_config(std::istream& is, RunConfig c = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    detail::strip_cr(line);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(detail::concat("config line ", lineno, ": expected key = value"));
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig c = {}) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  return load_config(is, std::move(c));
}

}  // namespace svt
