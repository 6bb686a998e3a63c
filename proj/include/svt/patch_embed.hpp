#pragma once

// Clip -> token sequence.
//
// A clip (B, F, H, W, 3) is cut into non-overlapping P x P patches in
// row-major grid order; each patch is flattened as (row, col, channel), giving
// v of shape (B, F, N, 3P^2) with N = HW / P^2. Tokens are
//   token(p, t) = E v_t^p + mu_(p,t),   token(summary) = summary + mu_summary
// with one learned positional row per storage slot.

#include <cstddef>
#include <numeric>
#include <vector>

#include "svt/error.hpp"
#include "svt/tensor.hpp"

namespace svt {

struct PatchConfig {
  std::size_t patch = 16;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t frames = 8;
  std::size_t dim = 768;

  void validate() const {
    if (patch == 0 || height == 0 || width == 0 || frames == 0 || dim == 0) {
      throw ConfigError("patch config: all extents must be positive");
    }
    if (height % patch != 0 || width % patch != 0) {
      throw ConfigError(detail::concat("patch config: patch size P=", patch, " does not divide H=", height,
                                       " and W=", width));
    }
  }
  std::size_t grid_rows() const { return height / patch; }
  std::size_t grid_cols() const { return width / patch; }
  std::size_t patches_per_frame() const { return grid_rows() * grid_cols(); }
  std::size_t patch_dim() const { return 3 * patch * patch; }
  std::size_t tokens() const { return frames * patches_per_frame() + 1; }
};

/// Storage positions of the tokens. The summary token always occupies slot 0;
/// patch (p, t) defaults to slot 1 + t*N + p.
class TokenLayout {
 public:
  TokenLayout() = default;

  static TokenLayout identity(std::size_t frames, std::size_t patches) {
    std::vector<std::size_t> slots(frames * patches);
    std::iota(slots.begin(), slots.end(), std::size_t{1});
    return TokenLayout(frames, patches, std::move(slots));
  }

  /// `slots[t*N + p]` is the storage slot of patch (p, t); slots must be a
  /// permutation of 1..F*N.
  static TokenLayout from_slots(std::size_t frames, std::size_t patches, std::vector<std::size_t> slots) {
    if (slots.size() != frames * patches) throw ShapeError("token layout: slot table has wrong length");
    std::vector<bool> seen(slots.size() + 1, false);
    for (auto s : slots) {
      if (s == 0 || s > slots.size() || seen[s]) throw ShapeError("token layout: slots are not a permutation of 1..F*N");
      seen[s] = true;
    }
    return TokenLayout(frames, patches, std::move(slots));
  }

  std::size_t frames() const { return frames_; }
  std::size_t patches() const { return patches_; }
  std::size_t tokens() const { return frames_ * patches_ + 1; }
  std::size_t summary() const { return 0; }
  std::size_t patch(std::size_t p, std::size_t t) const { return slots_[t * patches_ + p]; }

  bool is_identity() const {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (slots_[i] != i + 1) return false;
    }
    return true;
  }

  /// logical_of_slot()[s] = logical index (0 = summary, 1 + t*N + p) held at slot s.
  std::vector<std::size_t> logical_of_slot() const {
    std::vector<std::size_t> out(tokens(), 0);
    for (std::size_t i = 0; i < slots_.size(); ++i) out[slots_[i]] = i + 1;
    return out;
  }

 private:
  TokenLayout(std::size_t frames, std::size_t patches, std::vector<std::size_t> slots)
      : frames_(frames), patches_(patches), slots_(std::move(slots)) {}

  std::size_t frames_ = 0;
  std::size_t patches_ = 0;
  std::vector<std::size_t> slots_;
};

template <class T>
struct TokenBatch {
  Tensor<T> tokens;  // (B, F*N + 1, q), storage order given by layout
  TokenLayout layout;
};

/// (B, F, H, W, 3) -> (B, F, N, 3P^2).
template <class T>
Tensor<T> patchify(const Tensor<T>& clip, std::size_t patch) {
  if (clip.rank() != 5 || clip.dim(4) != 3) {
    throw ShapeError("patchify: expected clip of shape (B, F, H, W, 3), got " + detail::shape_str(clip.shape()));
  }
  const std::size_t B = clip.dim(0), F = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  if (patch == 0 || H % patch != 0 || W % patch != 0) {
    throw ShapeError(detail::concat("patchify: patch size P=", patch, " does not divide H=", H, " and W=", W));
  }
  const std::size_t gr = H / patch, gc = W / patch;
  auto x = reshape(clip, {B, F, gr, patch, gc, patch, 3});
  x = transpose(x, {0, 1, 2, 4, 3, 5, 6});
  return reshape(x, {B, F, gr * gc, patch * patch * 3});
}

/// Inverse of patchify.
template <class T>
Tensor<T> unpatchify(const Tensor<T>& patches, std::size_t patch, std::size_t height, std::size_t width) {
  if (patches.rank() != 4 || patch == 0 || height % patch != 0 || width % patch != 0 ||
      patches.dim(2) != (height / patch) * (width / patch) || patches.dim(3) != 3 * patch * patch) {
    throw ShapeError("unpatchify: shape " + detail::shape_str(patches.shape()) + " inconsistent with H, W, P");
  }
  const std::size_t B = patches.dim(0), F = patches.dim(1), gr = height / patch, gc = width / patch;
  auto x = reshape(patches, {B, F, gr, gc, patch, patch, 3});
  x = transpose(x, {0, 1, 2, 4, 3, 5, 6});
  return reshape(x, {B, F, height, width, 3});
}

/// Linear patch projection plus positional table and summary token.
/// E: (q, 3P^2); pos: (F*N + 1, q) indexed by storage slot; summary: (q).
template <class T>
TokenBatch<T> embed(const Tensor<T>& v, const Tensor<T>& E, const Tensor<T>& pos, const Tensor<T>& summary,
                    const TokenLayout& layout) {
  if (v.rank() != 4) throw ShapeError("embed: patches must be (B, F, N, D), got " + detail::shape_str(v.shape()));
  const std::size_t B = v.dim(0), F = v.dim(1), N = v.dim(2), D = v.dim(3);
  if (E.rank() != 2 || E.dim(1) != D) {
    throw ShapeError("embed: projection " + detail::shape_str(E.shape()) + " does not accept patch dim " +
                     std::to_string(D));
  }
  const std::size_t q = E.dim(0);
  if (pos.shape() != Shape{F * N + 1, q} || summary.shape() != Shape{q} || layout.frames() != F ||
      layout.patches() != N) {
    throw ShapeError("embed: positional table " + detail::shape_str(pos.shape()) + " / summary " +
                     detail::shape_str(summary.shape()) + " / layout do not match F*N+1=" +
                     std::to_string(F * N + 1) + ", q=" + std::to_string(q));
  }
  auto proj = matmul(reshape(v, {B, F * N, D}), transpose_last2(E));
  auto s = reshape(summary, {1, 1, q});
  if (B > 1) s = concat(std::vector<Tensor<T>>(B, s), 0);
  auto tokens = concat<T>({s, proj}, 1);
  if (!layout.is_identity()) tokens = take(tokens, 1, layout.logical_of_slot());
  return {add(tokens, pos), layout};
}

}  // namespace svt
