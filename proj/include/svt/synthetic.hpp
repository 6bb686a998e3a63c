#pragma once

// Synthetic motion videos for desk-scale training.
//
// Every clip is a low-contrast vertical sinusoidal grating (one cycle per
// frame width) on mid grey, plus i.i.d. pixel noise. Across the clip the
// grating takes `frames` phases spaced 2*pi/frames apart; the first phase is
// drawn uniformly within +-phase_jitter/2 steps of zero. The class decides
// only the ORDER in which those phases are shown:
//
//   right-drift  0, 1, 2, ..., F-1
//   left-drift   F-1, ..., 1, 0
//   hop-right    0, 2, 4, ..., 1, 3, 5, ...
//   hop-left     reverse of hop-right
//
// With phase_jitter = 1 the phase of a frame drawn from a clip is uniform on
// the circle for every class, and the set of frames of a clip has the same
// distribution for every class, so shuffling the frames of a clip removes
// all class information.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "svt/manifest.hpp"
#include "svt/rng.hpp"
#include "svt/semantic_space.hpp"
#include "svt/video.hpp"

namespace svt {

inline const std::vector<std::string>& motion_patterns() {
  static const std::vector<std::string> names = {"right-drift", "left-drift", "hop-right", "hop-left"};
  return names;
}

/// Position rank visited at each frame for a named pattern.
inline std::vector<std::size_t> motion_order(const std::string& pattern, std::size_t frames) {
  std::vector<std::size_t> order(frames);
  std::vector<std::size_t> hop;
  for (std::size_t i = 0; i < frames; i += 2) hop.push_back(i);
  for (std::size_t i = 1; i < frames; i += 2) hop.push_back(i);
  for (std::size_t t = 0; t < frames; ++t) {
    if (pattern == "right-drift") {
      order[t] = t;
    } else if (pattern == "left-drift") {
      order[t] = frames - 1 - t;
    } else if (pattern == "hop-right") {
      order[t] = hop[t];
    } else if (pattern == "hop-left") {
      order[t] = hop[frames - 1 - t];
    } else {
      throw ConfigError("synthetic: unknown motion pattern '" + pattern + "'");
    }
  }
  return order;
}

struct SyntheticSpec {
  std::vector<std::string> patterns = {"right-drift", "left-drift", "hop-right"};
  std::size_t frames = 4;
  std::size_t height = 32;
  std::size_t width = 32;
  double background = 0.45;   // grey level
  double contrast = 0.03;     // grating amplitude
  double phase_jitter = 1.0;  // start phase spread, in phase steps
  double jitter = 0.0;        // per-clip relative jitter of background, contrast, tint
  double noise = 0.01;        // uniform pixel noise amplitude
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<Video> videos;  // parallel to manifest.entries
};

inline Video render_motion_clip(const SyntheticSpec& spec, const std::vector<std::size_t>& order, Rng& rng) {
  constexpr double two_pi = 6.283185307179586;
  Video v;
  v.frames = spec.frames;
  v.height = spec.height;
  v.width = spec.width;
  v.rgb.resize(v.frames * v.frame_size());
  const double w = static_cast<double>(spec.width);
  const double phase0 = two_pi / static_cast<double>(spec.frames) * spec.phase_jitter * rng.uniform(-0.5, 0.5);
  const double background = spec.background * (1.0 + spec.jitter * rng.uniform(-1.0, 1.0));
  const double contrast = spec.contrast * (1.0 + spec.jitter * rng.uniform(-1.0, 1.0));
  std::array<double, 3> tint{};
  for (auto& c : tint) c = 1.0 + spec.jitter * rng.uniform(-1.0, 0.0);

  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double phase = phase0 + two_pi * static_cast<double>(order[t]) / static_cast<double>(spec.frames);
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double wave = contrast * std::sin(two_pi * (static_cast<double>(x) + 0.5) / w - phase);
        for (std::size_t c = 0; c < 3; ++c) {
          double value = background + wave * tint[c] + spec.noise * (2.0 * rng.uniform() - 1.0);
          value = std::clamp(value, 0.0, 1.0);
          v.rgb[((t * spec.height + y) * spec.width + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(value * 255.0));
        }
      }
    }
  }
  return v;
}

/// `n_per_class` clips per pattern; class i is patterns[i] with id i.
/// Video ids are "<pattern>-<index>" and paths "videos/<id>.svtv".
inline SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec, std::size_t n_per_class,
                                                   std::uint64_t seed, const std::string& split = "train") {
  if (spec.patterns.size() < 2) throw ConfigError("synthetic: need at least 2 classes");
  if (spec.frames < 2 || spec.height == 0 || spec.width == 0) throw ConfigError("synthetic: invalid frame geometry");
  SyntheticDataset ds;
  for (std::size_t c = 0; c < spec.patterns.size(); ++c) {
    const std::string& name = spec.patterns[c];
    motion_order(name, spec.frames);  // validates the name
    ds.manifest.classes.push_back({ClassId{static_cast<std::int64_t>(c)}, name,
                                   "a grating moving in the " + name + " pattern"});
  }
  Rng rng(seed);
  for (std::size_t c = 0; c < spec.patterns.size(); ++c) {
    const auto order = motion_order(spec.patterns[c], spec.frames);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      std::string idx = std::to_string(i);
      idx.insert(0, idx.size() < 4 ? 4 - idx.size() : 0, '0');
      const std::string id = spec.patterns[c] + "-" + idx;
      ds.manifest.entries.push_back({id, "videos/" + id + ".svtv", ClassId{static_cast<std::int64_t>(c)}, split});
      ds.videos.push_back(render_motion_clip(spec, order, rng));
    }
  }
  ds.manifest.validate();
  return ds;
}

/// Random unit vectors, one per class id 0..n-1.
inline SemanticSpace synthetic_class_space(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  SemanticSpace space(dim, "synthetic");
  Rng rng(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> v(dim);
    double n = 0.0;
    while (n == 0.0) {
      n = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        n += x * x;
      }
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    space.add(ClassId{static_cast<std::int64_t>(c)}, std::move(v));
  }
  return space;
}

/// Writes manifest.tsv, classes.tsv, and videos/ under `root`.
inline void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticDataset& ds) {
  std::filesystem::create_directories(root / "videos");
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    write_video(root / ds.manifest.entries[i].path, ds.videos[i]);
  }
  write_manifest(root / "manifest.tsv", root / "classes.tsv", ds.manifest);
}

}  // namespace svt
