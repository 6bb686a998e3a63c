#pragma once

// Raw video container, temporal clip sampling, and frame preprocessing.
//
// Video file (".svtv"):
//   header: "SVTV 1 <frames> <height> <width>\n"
//   body:   frames*height*width*3 bytes, uint8 RGB, order (frame, row, col, channel)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "svt/error.hpp"
#include "svt/rng.hpp"

namespace svt {

enum class Mode { train, eval };

struct Video {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;

  std::size_t frame_size() const { return height * width * 3; }
  std::uint8_t at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return rgb[((t * height + y) * width + x) * 3 + c];
  }
};

inline void write_video(const std::filesystem::path& path, const Video& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("video: cannot open '" + path.string() + "' for writing");
  os << "SVTV 1 " << v.frames << ' ' << v.height << ' ' << v.width << '\n';
  os.write(reinterpret_cast<const char*>(v.rgb.data()), static_cast<std::streamsize>(v.rgb.size()));
  if (!os) throw IoError("video: write failed for '" + path.string() + "'");
}

/// Reads an .svtv file. `video_id` is carried into error messages.
inline Video read_video(const std::filesystem::path& path, const std::string& video_id = {}) {
  const std::string who = video_id.empty() ? path.string() : video_id + " (" + path.string() + ")";
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("video " + who + ": cannot open file");
  std::string line;
  std::getline(is, line);
  std::istringstream hs(line);
  std::string magic;
  int version = 0;
  Video v;
  if (!(hs >> magic >> version >> v.frames >> v.height >> v.width) || magic != "SVTV" || version != 1 ||
      v.frames == 0 || v.height == 0 || v.width == 0) {
    throw IoError("video " + who + ": undecodable header '" + line + "'");
  }
  v.rgb.resize(v.frames * v.frame_size());
  if (!is.read(reinterpret_cast<char*>(v.rgb.data()), static_cast<std::streamsize>(v.rgb.size()))) {
    throw IoError("video " + who + ": truncated frame data");
  }
  return v;
}

/// Frame indices of an F-frame clip from a video of `length` frames.
///
/// eval:  index_i = floor((2i + 1) * length / (2F)), i.e. F uniformly spaced
///        frames centred on the video.
/// train: stride s = max(1, floor(length / F)); a window of (F-1)s + 1 frames
///        starts uniformly at random within the video; index_i = start + i*s.
/// Videos shorter than F frames yield 0..length-1 followed by repeats of the
/// last frame, in both modes.
inline std::vector<std::size_t> sample_clip(std::size_t length, std::size_t num_frames, Mode mode,
                                            Rng* rng = nullptr) {
  if (length == 0) throw DataError("sample_clip: video has no frames");
  if (num_frames == 0) throw DataError("sample_clip: clip length must be positive");
  std::vector<std::size_t> idx(num_frames);
  if (length < num_frames) {
    for (std::size_t i = 0; i < num_frames; ++i) idx[i] = std::min(i, length - 1);
    return idx;
  }
  if (mode == Mode::eval) {
    for (std::size_t i = 0; i < num_frames; ++i) idx[i] = (2 * i + 1) * length / (2 * num_frames);
    return idx;
  }
  if (!rng) throw Error("sample_clip: train mode needs a random stream");
  const std::size_t stride = std::max<std::size_t>(1, length / num_frames);
  const std::size_t window = (num_frames - 1) * stride + 1;
  const std::size_t start = rng->index(length - window + 1);
  for (std::size_t i = 0; i < num_frames; ++i) idx[i] = start + i * stride;
  return idx;
}

/// Crop pipeline constants. Standardization is normative: (x - 0.45) / 0.225
/// on every channel after scaling bytes to [0, 1].
struct PreprocessConfig {
  std::size_t resize_short = 256;
  std::size_t crop_height = 224;
  std::size_t crop_width = 224;
  double mean = 0.45;
  double stddev = 0.225;

  double min_value() const { return (0.0 - mean) / stddev; }
  double max_value() const { return (1.0 - mean) / stddev; }
};

namespace detail {

// Bilinear resize of one float frame with half-pixel centres and clamped edges.
inline std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h, std::size_t w,
                                           std::size_t out_h, std::size_t out_w) {
  std::vector<double> dst(out_h * out_w * 3);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        auto px = [&](std::size_t yy, std::size_t xx) { return src[(yy * w + xx) * 3 + c]; };
        const double top = px(y0, x0) * (1 - wx) + px(y0, x1) * wx;
        const double bot = px(y1, x0) * (1 - wx) + px(y1, x1) * wx;
        dst[(y * out_w + x) * 3 + c] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

}  // namespace detail

/// Resize (shorter side to `resize_short`, bilinear), crop (random in train,
/// centre in eval), scale to [0, 1] and standardize. Output layout is
/// (frames, crop_height, crop_width, 3), row-major. One crop position is
/// shared by all frames of the clip.
template <class T>
std::vector<T> preprocess(const Video& video, const std::vector<std::size_t>& frame_indices,
                          const PreprocessConfig& cfg, Mode mode, Rng* rng = nullptr) {
  if (video.height == 0 || video.width == 0) throw DataError("preprocess: empty frame");
  const std::size_t short_side = std::min(video.height, video.width);
  std::size_t rh = video.height, rw = video.width;
  if (short_side != cfg.resize_short) {
    const double f = static_cast<double>(cfg.resize_short) / static_cast<double>(short_side);
    if (video.height <= video.width) {
      rh = cfg.resize_short;
      rw = static_cast<std::size_t>(std::lround(static_cast<double>(video.width) * f));
    } else {
      rw = cfg.resize_short;
      rh = static_cast<std::size_t>(std::lround(static_cast<double>(video.height) * f));
    }
  }
  if (rh < cfg.crop_height || rw < cfg.crop_width) {
    throw DataError(detail::concat("preprocess: resized frame ", rh, "x", rw, " is smaller than crop ",
                                   cfg.crop_height, "x", cfg.crop_width));
  }
  std::size_t oy = (rh - cfg.crop_height) / 2, ox = (rw - cfg.crop_width) / 2;
  if (mode == Mode::train) {
    if (!rng) throw Error("preprocess: train mode needs a random stream");
    oy = rng->index(rh - cfg.crop_height + 1);
    ox = rng->index(rw - cfg.crop_width + 1);
  }

  const std::size_t out_frame = cfg.crop_height * cfg.crop_width * 3;
  std::vector<T> out(frame_indices.size() * out_frame);
  std::vector<double> frame(video.frame_size());
  for (std::size_t f = 0; f < frame_indices.size(); ++f) {
    const std::size_t t = frame_indices[f];
    if (t >= video.frames) throw DataError("preprocess: frame index out of range");
    const std::uint8_t* src = video.rgb.data() + t * video.frame_size();
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = static_cast<double>(src[i]) / 255.0;
    const std::vector<double> resized =
        (rh == video.height && rw == video.width) ? frame
                                                  : detail::resize_bilinear(frame, video.height, video.width, rh, rw);
    T* dst = out.data() + f * out_frame;
    for (std::size_t y = 0; y < cfg.crop_height; ++y) {
      for (std::size_t x = 0; x < cfg.crop_width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = resized[((y + oy) * rw + (x + ox)) * 3 + c];
          dst[(y * cfg.crop_width + x) * 3 + c] = static_cast<T>((v - cfg.mean) / cfg.stddev);
        }
      }
    }
  }
  return out;
}

}  // namespace svt
