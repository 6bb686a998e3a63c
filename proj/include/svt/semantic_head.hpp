#pragma once

// Regression onto class embeddings, cosine-nearest classification, training.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "svt/checkpoint.hpp"
#include "svt/model.hpp"
#include "svt/rng.hpp"
#include "svt/semantic_space.hpp"
#include "svt/video.hpp"

namespace svt {

/// Batch loss: mean over rows of |f - phi|^2. f, phi: (B, d).
template <class T>
Tensor<T> semantic_loss(const Tensor<T>& f, const Tensor<T>& phi) {
  if (f.shape() != phi.shape() || f.rank() != 2) {
    throw ShapeError("semantic_loss: embedding " + detail::shape_str(f.shape()) + " and target " +
                     detail::shape_str(phi.shape()) + " differ");
  }
  return scale(sum_sq(sub(f, phi)), T(1) / static_cast<T>(f.dim(0)));
}

inline double squared_error(std::span<const double> f, std::span<const double> phi) {
  if (f.size() != phi.size()) {
    throw ShapeError(detail::concat("loss: dimensions ", f.size(), " and ", phi.size(), " differ"));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += (f[i] - phi[i]) * (f[i] - phi[i]);
  return s;
}

/// Class of minimum cosine distance to f among `candidates` (all classes of
/// the space when null). Ties go to the smallest class id.
inline ClassId classify(std::span<const double> f, const SemanticSpace& space,
                        const std::vector<ClassId>* candidates = nullptr) {
  if (space.empty()) throw DataError("classify: empty semantic space");
  if (f.size() != space.dim()) {
    throw ShapeError(detail::concat("classify: embedding has dimension ", f.size(), ", space has ", space.dim()));
  }
  if (norm(f) == 0.0) throw DataError("classify: zero-norm video embedding f");
  std::vector<ClassId> ids = candidates ? *candidates : space.ids();
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("classify: empty candidate set");
  ClassId best = ids.front();
  double best_d = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double d = cosine_distance(f, space.at(ids[i]), "f", "class " + to_string(ids[i]));
    if (i == 0 || d < best_d) {
      best_d = d;
      best = ids[i];
    }
  }
  return best;
}

/// k clips per video: clip c samples uniformly within the c-th of k equal
/// temporal segments (the whole video when k = 1).
inline std::vector<std::vector<std::size_t>> eval_clip_indices(std::size_t length, std::size_t frames,
                                                               std::size_t clips) {
  if (clips == 0) throw ConfigError("eval clips must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t c = 0; c < clips; ++c) {
    const std::size_t begin = c * length / clips, end = (c + 1) * length / clips;
    auto idx = sample_clip(std::max<std::size_t>(1, end - begin), frames, Mode::eval);
    for (auto& i : idx) i = std::min(begin + i, length - 1);
    out.push_back(std::move(idx));
  }
  return out;
}

struct VideoEmbedding {
  std::vector<double> summary;    // z, averaged over clips
  std::vector<double> embedding;  // f(x), averaged over clips
};

/// Eval-mode embedding of one video, averaged over `clips` clips.
template <class T>
VideoEmbedding embed_video_clips(const SvtModel<T>& model, const Video& video, const PreprocessConfig& pre,
                                 std::size_t clips = 1) {
  NoGradGuard no_grad;
  const auto& cfg = model.config;
  std::vector<T> data;
  for (const auto& idx : eval_clip_indices(video.frames, cfg.frames, clips)) {
    auto px = preprocess<T>(video, idx, pre, Mode::eval);
    data.insert(data.end(), px.begin(), px.end());
  }
  Tensor<T> batch({clips, cfg.frames, pre.crop_height, pre.crop_width, 3}, std::move(data));
  auto out = forward(model, batch);
  VideoEmbedding e{std::vector<double>(cfg.dim, 0.0), std::vector<double>(cfg.sem_dim, 0.0)};
  for (std::size_t c = 0; c < clips; ++c) {
    for (std::size_t i = 0; i < cfg.dim; ++i) e.summary[i] += out.summary[c * cfg.dim + i] / static_cast<double>(clips);
    for (std::size_t i = 0; i < cfg.sem_dim; ++i) {
      e.embedding[i] += out.embedding[c * cfg.sem_dim + i] / static_cast<double>(clips);
    }
  }
  return e;
}

struct LabeledVideo {
  std::string id;
  ClassId label;
  Video video;
};

struct TrainConfig {
  double lr = 0.002;
  double momentum = 0.9;
  std::size_t batch = 8;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: no cap beyond epochs
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // steps; 0 disables
  std::filesystem::path checkpoint_dir;
  PreprocessConfig preprocess;
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
};

inline void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write loss trace " + path.string());
  os << "step\tloss\n";
  char buf[64];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", r.step, r.loss);
    os << buf;
  }
}

/// Momentum SGD on the mean batch loss: v <- m v + g, p <- p - lr v.
/// Epoch e visits the clips in a Fisher-Yates order seeded by (seed, e); the
/// last batch of an epoch may be short. Train-mode clip sampling and crops
/// draw from a stream seeded by (seed, step).
template <class T>
std::vector<LossRecord> train(SvtModel<T>& model, const std::vector<LabeledVideo>& data, const SemanticSpace& space,
                              const TrainConfig& cfg, const std::function<void(const LossRecord&)>& on_step = {}) {
  if (data.empty()) throw DataError("train: no training clips");
  if (cfg.batch == 0) throw ConfigError("train: batch size must be positive");
  if (!(cfg.lr >= 0.0) || !(cfg.momentum >= 0.0)) throw ConfigError("train: lr and momentum must be non-negative");
  {
    std::vector<ClassId> labels;
    for (const auto& d : data) labels.push_back(d.label);
    auto missing = space.missing(labels);
    if (!missing.empty()) throw DataError("train: no class embedding for class id(s) " + join_ids(missing));
  }
  if (space.dim() != model.config.sem_dim) {
    throw ShapeError(detail::concat("train: semantic space has dimension ", space.dim(), ", model head produces ",
                                    model.config.sem_dim));
  }
  const auto& mc = model.config;
  const auto& pre = cfg.preprocess;
  if (pre.crop_height != mc.height || pre.crop_width != mc.width) {
    throw ConfigError(detail::concat("train: crop ", pre.crop_height, "x", pre.crop_width, " does not match model input ",
                                     mc.height, "x", mc.width));
  }

  auto params = model.parameters();
  std::vector<std::vector<T>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.tensor.numel(), T(0));
  const T lr = static_cast<T>(cfg.lr), mu = static_cast<T>(cfg.momentum);

  std::vector<LossRecord> trace;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng(mix_seed(cfg.seed, epoch));
    order_rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      if (cfg.max_steps && step >= cfg.max_steps) return trace;
      const std::size_t B = std::min(cfg.batch, order.size() - begin);
      Rng aug(mix_seed(mix_seed(cfg.seed, 0xa7), step));
      std::vector<T> x, y;
      for (std::size_t b = 0; b < B; ++b) {
        const auto& item = data[order[begin + b]];
        auto idx = sample_clip(item.video.frames, mc.frames, Mode::train, &aug);
        auto px = preprocess<T>(item.video, idx, pre, Mode::train, &aug);
        x.insert(x.end(), px.begin(), px.end());
        for (double v : space.at(item.label)) y.push_back(static_cast<T>(v));
      }
      Tensor<T> clip({B, mc.frames, mc.height, mc.width, 3}, std::move(x));
      Tensor<T> target({B, mc.sem_dim}, std::move(y));

      for (auto& p : params) p.tensor.zero_grad();
      double loss_value = 0.0;
      try {
        auto loss = semantic_loss(embed_video(model, clip), target);
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) throw NonFiniteError("non-finite loss");
        backward(loss);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(detail::concat("train: diverged at step ", step, " (", e.what(), ")"));
      }
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].tensor.mutable_data();
        auto g = params[k].tensor.grad();
        auto& v = velocity[k];
        if (g.empty()) {
          for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = mu * v[j];
            w[j] -= lr * v[j];
          }
        } else {
          for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = mu * v[j] + g[j];
            w[j] -= lr * v[j];
          }
        }
        for (auto value : w) {
          if (!std::isfinite(value)) {
            throw NonFiniteError(detail::concat("train: diverged at step ", step, " (", params[k].name,
                                                " became non-finite)"));
          }
        }
      }
      trace.push_back({step, loss_value});
      if (on_step) on_step(trace.back());
      ++step;
      if (cfg.checkpoint_every && !cfg.checkpoint_dir.empty() && step % cfg.checkpoint_every == 0) {
        char name[48];
        std::snprintf(name, sizeof name, "step-%06zu.svtckpt", step);
        save_checkpoint(cfg.checkpoint_dir / name, model);
      }
    }
  }
  return trace;
}

}  // namespace svt
