// svt: train, evaluate and inspect semantic video transformers.
//
// Every subcommand reads a run config (--config, then per-key flags such as
// --lr 0.01) and writes the effective config next to its outputs. Relative
// data paths resolve against data_root, or $SVT_DATA_ROOT when unset.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "svt/svt.hpp"

namespace {

using svt::RunConfig;

/// Registers one flag per config key on `cmd`; apply() folds the given ones into a config.
class ConfigFlags {
 public:
  explicit ConfigFlags(CLI::App* cmd) {
    cmd->add_option("--config", config_path_, "run config file (key = value lines)")->check(CLI::ExistingFile);
    for (const auto& f : svt::config_fields()) {
      auto* opt = cmd->add_option("--" + f.key, values_[f.key]);
      opt->group("Run config");
      options_.emplace_back(f.key, opt);
    }
  }

  RunConfig apply() const {
    RunConfig c = config_path_.empty() ? RunConfig{} : svt::load_config(std::filesystem::path(config_path_));
    for (const auto& [key, opt] : options_) {
      if (opt->count()) svt::set_config_value(c, key, values_.at(key));
    }
    c.validate();
    return c;
  }

 private:
  std::string config_path_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> options_;
};

std::filesystem::path data_path(const RunConfig& c, const std::string& p) {
  return svt::resolve_path(c.effective_data_root(), p);
}

svt::DatasetManifest load_manifest(const RunConfig& c) {
  return svt::read_manifest(data_path(c, c.manifest), data_path(c, c.classes));
}

/// Embeddings of the classes that occur in `entries`.
svt::SemanticSpace load_space(const RunConfig& c, const svt::DatasetManifest& m,
                              const std::vector<svt::ManifestEntry>& entries) {
  if (c.embeddings.empty()) throw svt::ConfigError("no embedding table given (set embeddings)");
  const auto path = data_path(c, c.embeddings);
  const auto table = svt::read_embedding_table(path);
  std::set<svt::ClassId> used;
  for (const auto& e : entries) used.insert(e.class_id);
  std::vector<svt::ClassInfo> classes;
  for (const auto& info : m.classes) {
    if (used.contains(info.id)) classes.push_back(info);
  }
  return svt::load_embeddings(table, classes, svt::parse_embedding_mode(c.embedding_mode), path.filename().string());
}

std::vector<svt::ManifestEntry> require_split(const svt::DatasetManifest& m, const std::string& split) {
  auto entries = m.split_entries(split);
  if (entries.empty()) throw svt::DataError("manifest has no entries in split '" + split + "'");
  return entries;
}

void write_config_beside(const std::filesystem::path& output, const RunConfig& c) {
  svt::dump_config(output.string() + ".config", c);
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

template <class T>
svt::SvtModel<T> initial_model(const RunConfig& c) {
  if (!c.checkpoint.empty()) return svt::load_checkpoint<T>(std::filesystem::path(c.checkpoint));
  return svt::SvtModel<T>::init(c.model, c.seed);
}

template <class T>
int run_train(const RunConfig& c) {
  const auto manifest = load_manifest(c);
  auto entries = require_split(manifest, c.train_split);
  auto space = load_space(c, manifest, entries);

  if (svt::parse_protocol(c.protocol) == svt::Protocol::restrictive) {
    const auto tests = require_split(manifest, c.test_split);
    const auto test_space = load_space(c, manifest, tests);
    const auto kept = svt::build_restrictive_trainset(space, {test_space}, c.tau);
    const std::set<svt::ClassId> keep(kept.begin(), kept.end());
    std::erase_if(entries, [&](const svt::ManifestEntry& e) { return !keep.contains(e.class_id); });
    std::cout << "restrictive: kept " << kept.size() << " of " << space.size() << " training classes (tau "
              << c.tau << ")\n";
    if (entries.empty()) throw svt::DataError("restrictive: every training class overlaps the test classes");
    space = space.restrict_to(kept);
  }

  std::vector<svt::LabeledVideo> data;
  for (const auto& e : entries) data.push_back({e.video_id, e.class_id, svt::read_video(data_path(c, e.path), e.video_id)});

  auto model = initial_model<T>(c);
  const std::filesystem::path out = c.checkpoint_dir;
  std::filesystem::create_directories(out);
  svt::dump_config(out / "config.txt", c);

  auto cfg = c.train_config();
  const std::size_t per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t total = cfg.max_steps ? std::min(cfg.max_steps, per_epoch * cfg.epochs) : per_epoch * cfg.epochs;
  const std::size_t every = std::max<std::size_t>(1, total / 10);
  auto trace = svt::train(model, data, space, cfg, [&](const svt::LossRecord& r) {
    if (r.step % every == 0 || r.step + 1 == total) std::printf("step %zu  loss %.6g\n", r.step, r.loss);
  });
  svt::write_loss_trace(out / "loss.tsv", trace);
  svt::save_checkpoint(out / "final.svtckpt", model);

  std::size_t correct = 0, degenerate = 0;
  for (const auto& d : data) {
    const auto f = svt::embed_video_clips(model, d.video, c.preprocess(), c.clips).embedding;
    // an untouched zero head emits f = 0, which has no nearest class
    if (svt::norm(f) == 0.0) {
      ++degenerate;
      continue;
    }
    correct += svt::classify(f, space) == d.label;
  }
  std::cout << "train top-1 " << percent(static_cast<double>(correct) / static_cast<double>(data.size())) << " over "
            << data.size() << " clips";
  if (degenerate) std::cout << " (" << degenerate << " with zero embedding, counted wrong)";
  std::cout << "\ncheckpoint " << (out / "final.svtckpt").string() << '\n';
  return 0;
}

struct EvalOptions {
  bool oracle = false;
  std::string features;
  std::string out;
};

template <class T>
int run_eval(const RunConfig& c, const EvalOptions& o) {
  const auto manifest = load_manifest(c);
  const auto entries = require_split(manifest, c.test_split);

  svt::SplitSpec split;
  split.protocol = svt::parse_protocol(c.protocol);
  split.test_manifest = c.manifest + ":" + c.test_split;
  split.rule = svt::parse_rule(c.rule);
  split.seed = c.eval_seed;
  split.trials = c.trials;
  std::vector<svt::ManifestEntry> scored = entries;
  if (split.protocol == svt::Protocol::fair_zsl) {
    if (c.split_file.empty()) throw svt::ConfigError("protocol FZSL needs split_file");
    const auto set = svt::build_fair_zsl_testset(data_path(c, c.split_file));
    split.class_filter = set.ids();
    const std::set<svt::ClassId> keep(split.class_filter.begin(), split.class_filter.end());
    std::erase_if(scored, [&](const svt::ManifestEntry& e) { return !keep.contains(e.class_id); });
    std::set<svt::ClassId> present;
    for (const auto& e : scored) present.insert(e.class_id);
    std::vector<svt::ClassId> absent;
    for (auto id : split.class_filter) {
      if (!present.contains(id)) absent.push_back(id);
    }
    if (!absent.empty()) throw svt::DataError("split file classes without test clips: " + svt::join_ids(absent));
  }
  const auto space = load_space(c, manifest, scored);

  svt::Embedder embed;
  std::map<std::string, std::vector<double>> stored;
  std::optional<svt::SvtModel<T>> model;
  if (o.oracle) {
    embed = [&](const svt::ManifestEntry& e) { return space.at(e.class_id); };
  } else if (!o.features.empty()) {
    for (auto& r : svt::read_features(o.features)) stored[r.video_id] = std::move(r.embedding);
    embed = [&](const svt::ManifestEntry& e) {
      auto it = stored.find(e.video_id);
      if (it == stored.end()) throw svt::DataError("features file has no row for video '" + e.video_id + "'");
      return it->second;
    };
  } else {
    if (c.checkpoint.empty()) throw svt::ConfigError("eval needs checkpoint, --features or --oracle");
    model = svt::load_checkpoint<T>(std::filesystem::path(c.checkpoint));
    embed = [&](const svt::ManifestEntry& e) {
      auto video = svt::read_video(data_path(c, e.path), e.video_id);
      return svt::embed_video_clips(*model, video, c.preprocess(), c.clips).embedding;
    };
  }

  const auto report = svt::run_protocol(embed, scored, space, split);
  svt::write_report_table(std::cout, report);
  if (!o.out.empty()) {
    std::ofstream os(o.out);
    if (!os) throw svt::IoError("cannot write report " + o.out);
    svt::write_report_tsv(os, report);
    write_config_beside(o.out, c);
  }
  return 0;
}

template <class T>
int run_export(const RunConfig& c, const std::string& out) {
  if (c.checkpoint.empty()) throw svt::ConfigError("export-features needs checkpoint");
  const auto manifest = load_manifest(c);
  const auto entries = require_split(manifest, c.test_split);
  const auto model = svt::load_checkpoint<T>(std::filesystem::path(c.checkpoint));
  svt::write_features(out, svt::extract_features(model, entries, c.effective_data_root(), c.preprocess(), c.clips));
  write_config_beside(out, c);
  std::cout << "wrote " << entries.size() << " rows to " << out << '\n';
  return 0;
}

struct AuditOptions {
  std::string train;
  std::vector<std::string> tests;
  std::string train_classes;
  std::vector<std::string> test_classes;
  std::string out;
  std::string kept;
};

/// Space from an embedding table, keyed by class id, or looked up through a class table.
svt::SemanticSpace audit_space(const std::string& table_path, const std::string& classes_path,
                               svt::EmbeddingMode mode) {
  const auto table = svt::read_embedding_table(std::filesystem::path(table_path));
  const auto name = std::filesystem::path(table_path).filename().string();
  if (!classes_path.empty()) return svt::load_embeddings(table, svt::read_class_table(classes_path), mode, name);
  std::vector<std::pair<svt::ClassId, std::vector<double>>> rows;
  for (const auto& [key, v] : table.vectors) rows.emplace_back(svt::parse_class_id(key), v);
  svt::SemanticSpace space(table.dim, name);
  for (auto& [id, v] : rows) space.add(id, std::move(v), mode);
  return space;
}

int run_audit(const RunConfig& c, const AuditOptions& o) {
  if (!o.test_classes.empty() && o.test_classes.size() != o.tests.size()) {
    throw svt::ConfigError("give one --test-classes per --test table");
  }
  const auto mode = svt::parse_embedding_mode(c.embedding_mode);
  const auto train = audit_space(o.train, o.train_classes, mode);
  std::vector<svt::SemanticSpace> tests;
  for (std::size_t i = 0; i < o.tests.size(); ++i) {
    tests.push_back(audit_space(o.tests[i], o.test_classes.empty() ? "" : o.test_classes[i], mode));
  }

  std::ofstream report;
  if (!o.out.empty()) {
    report.open(o.out);
    if (!report) throw svt::IoError("cannot write audit report " + o.out);
    report << "test_table\ttest_class\tnearest_train_class\tdistance\tflagged\n";
  }
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto r = svt::audit_overlap(train, tests[i], c.tau);
    std::cout << o.tests[i] << ": " << r.flagged_count() << " of " << r.entries.size()
              << " test classes within tau " << c.tau << " of a train class (" << percent(r.overlap_fraction())
              << " flagged)\n";
    for (const auto& e : r.entries) {
      if (!report) break;
      report << o.tests[i] << '\t' << svt::to_string(e.test_class) << '\t' << svt::to_string(e.nearest_train_class)
             << '\t' << svt::detail::fmt("%.17g", e.distance) << '\t' << (e.flagged ? 1 : 0) << '\n';
    }
  }
  const auto kept = svt::build_restrictive_trainset(train, tests, c.tau);
  std::cout << "restrictive train set: " << kept.size() << " of " << train.size() << " classes kept\n";
  if (!o.kept.empty()) {
    std::ofstream os(o.kept);
    if (!os) throw svt::IoError("cannot write " + o.kept);
    for (auto id : kept) os << svt::to_string(id) << '\n';
  }
  if (!o.out.empty()) write_config_beside(o.out, c);
  return 0;
}

int run_flops(const RunConfig& c, const svt::FlopConvention& conv) {
  const auto& m = c.model;
  std::printf("model F=%zu H=%zu W=%zu P=%zu q=%zu A=%zu L=%zu mlp_ratio=%zu d_sem=%zu (N=%zu, %zu tokens)\n", m.frames,
              m.height, m.width, m.patch, m.dim, m.heads, m.depth, m.mlp_ratio, m.sem_dim,
              m.patch_config().patches_per_frame(), m.tokens());
  std::printf("%-8s %14s %14s %14s %14s %14s %14s %12s %16s\n", "scheme", "patch_embed", "qkv", "scores", "values",
              "out_proj", "mlp", "head", "total_macs");
  for (auto scheme : {svt::AttentionScheme::divided, svt::AttentionScheme::joint}) {
    const auto b = svt::estimate_flops(m, scheme);
    std::printf("%-8s %14llu %14llu %14llu %14llu %14llu %14llu %12llu %16llu\n",
                scheme == svt::AttentionScheme::divided ? "divided" : "joint",
                static_cast<unsigned long long>(b.patch_embed), static_cast<unsigned long long>(b.qkv),
                static_cast<unsigned long long>(b.scores), static_cast<unsigned long long>(b.values),
                static_cast<unsigned long long>(b.out_proj), static_cast<unsigned long long>(b.mlp),
                static_cast<unsigned long long>(b.head), static_cast<unsigned long long>(b.total()));
  }
  std::cout << "convention: " << conv.describe() << '\n';
  for (auto scheme : {svt::AttentionScheme::divided, svt::AttentionScheme::joint}) {
    std::printf("%s inference: %.4g TFLOPs per video\n", scheme == svt::AttentionScheme::divided ? "divided" : "joint",
                svt::inference_flops(svt::estimate_flops(m, scheme), conv) / 1e12);
  }
  return 0;
}

struct SyntheticOptions {
  std::string out;
  std::size_t train_per_class = 10;
  std::size_t test_per_class = 4;
  std::uint64_t seed = 7;
  std::size_t sem_dim = 8;
};

/// Dataset under `out` plus an embedding table and a config for the tiny model.
int run_gen_synthetic(const SyntheticOptions& o) {
  const std::filesystem::path root = o.out;
  svt::SyntheticSpec spec;
  auto ds = svt::generate_synthetic_dataset(spec, o.train_per_class, o.seed, "train");
  if (o.test_per_class) {
    auto test = svt::generate_synthetic_dataset(spec, o.test_per_class, svt::mix_seed(o.seed, 1), "test");
    for (std::size_t i = 0; i < test.videos.size(); ++i) {
      auto e = test.manifest.entries[i];
      e.video_id = "test-" + e.video_id;
      e.path = "videos/" + e.video_id + ".svtv";
      ds.manifest.entries.push_back(e);
      ds.videos.push_back(std::move(test.videos[i]));
    }
  }
  ds.manifest.validate();
  svt::write_synthetic_dataset(root, ds);

  const auto space = svt::synthetic_class_space(spec.patterns.size(), o.sem_dim, o.seed);
  svt::write_embedding_table(root / "embeddings.txt", space);
  {
    // the same vectors keyed by label, for embedding_mode = CL
    std::ofstream os(root / "label_embeddings.txt");
    for (const auto& info : ds.manifest.classes) {
      os << info.label;
      for (double x : space.at(info.id)) os << ' ' << svt::detail::fmt("%.17g", x);
      os << '\n';
    }
  }

  RunConfig c;
  c.model.frames = spec.frames;
  c.model.height = spec.height;
  c.model.width = spec.width;
  c.model.patch = 8;
  c.model.dim = 24;
  c.model.heads = 3;
  c.model.depth = 2;
  c.model.mlp_ratio = 2;
  c.model.sem_dim = o.sem_dim;
  c.resize_short = spec.height;
  c.batch = 3;
  c.epochs = 50;
  c.data_root = std::filesystem::absolute(root).string();
  c.embeddings = "embeddings.txt";
  c.rule = "full";
  c.trials = 1;
  svt::dump_config(root / "config.txt", c);
  std::cout << "wrote " << ds.videos.size() << " clips over " << ds.manifest.classes.size() << " classes to "
            << root.string() << '\n';
  return 0;
}

template <class F>
int dispatch_precision(const RunConfig& c, F&& f) {
  return c.precision == "f64" ? f(double{}) : f(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic video transformer: zero-shot action recognition tools"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model on the train split");
  ConfigFlags train_flags(train);

  auto* eval = app.add_subcommand("eval", "score the test split under a zero-shot protocol");
  ConfigFlags eval_flags(eval);
  EvalOptions eval_opts;
  eval->add_flag("--oracle", eval_opts.oracle, "embed every clip as its true class vector");
  eval->add_option("--features", eval_opts.features, "score exported features instead of running a model")
      ->check(CLI::ExistingFile);
  eval->add_option("--out", eval_opts.out, "tab-separated report path");

  auto* audit = app.add_subcommand("audit", "flag test classes that overlap the training classes");
  ConfigFlags audit_flags(audit);
  AuditOptions audit_opts;
  audit->add_option("--train-table", audit_opts.train, "train class embedding table")->required();
  audit->add_option("--test-table", audit_opts.tests, "test class embedding table (repeatable)")->required();
  audit->add_option("--train-classes", audit_opts.train_classes, "class table for label or id lookup");
  audit->add_option("--test-classes", audit_opts.test_classes, "class table per test table");
  audit->add_option("--out", audit_opts.out, "per-class report path");
  audit->add_option("--kept", audit_opts.kept, "write the restrictive train class ids here");

  auto* flops = app.add_subcommand("flops", "multiply-accumulate count and inference cost");
  ConfigFlags flops_flags(flops);
  svt::FlopConvention conv;
  flops->add_option("--flops-per-mac", conv.flops_per_mac)->capture_default_str();
  flops->add_option("--crops", conv.spatial_crops, "spatial crops per video")->capture_default_str();
  flops->add_option("--temporal-clips", conv.temporal_clips, "temporal clips per video")->capture_default_str();

  auto* exportf = app.add_subcommand("export-features", "write summary vectors and embeddings of the test split");
  ConfigFlags export_flags(exportf);
  std::string export_out = "features.tsv";
  exportf->add_option("--out", export_out, "features file")->capture_default_str();

  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic motion dataset");
  SyntheticOptions syn;
  gen->add_option("--out", syn.out, "dataset directory")->required();
  gen->add_option("--per-class", syn.train_per_class, "train clips per class")->capture_default_str();
  gen->add_option("--test-per-class", syn.test_per_class, "test clips per class")->capture_default_str();
  gen->add_option("--seed", syn.seed)->capture_default_str();
  gen->add_option("--sem-dim", syn.sem_dim, "class embedding dimension")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto c = train_flags.apply();
      return dispatch_precision(c, [&](auto t) { return run_train<decltype(t)>(c); });
    }
    if (*eval) {
      const auto c = eval_flags.apply();
      return dispatch_precision(c, [&](auto t) { return run_eval<decltype(t)>(c, eval_opts); });
    }
    if (*audit) return run_audit(audit_flags.apply(), audit_opts);
    if (*flops) return run_flops(flops_flags.apply(), conv);
    if (*exportf) {
      const auto c = export_flags.apply();
      return dispatch_precision(c, [&](auto t) { return run_export<decltype(t)>(c, export_out); });
    }
    if (*gen) return run_gen_synthetic(syn);
  } catch (const std::exception& e) {
    std::cerr << "svt: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
