#pragma once

#include <vector>

#include "svt/attention.hpp"
#include "svt/patch_embed.hpp"
#include "svt/tensor.hpp"

namespace svt {

enum class AttentionScheme { divided, joint };

struct EncoderConfig {
  std::size_t depth = 12;
  std::size_t heads = 12;
  std::size_t dim = 768;
  std::size_t mlp_ratio = 4;
  std::size_t frames = 8;
  std::size_t patches = 196;

  void validate() const {
    if (heads == 0 || dim == 0 || dim % heads != 0) {
      throw ConfigError(detail::concat("encoder config: heads A=", heads, " must divide model dim q=", dim));
    }
    if (mlp_ratio == 0 || frames == 0 || patches == 0) throw ConfigError("encoder config: extents must be positive");
  }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t hidden() const { return mlp_ratio * dim; }
  std::size_t tokens() const { return frames * patches + 1; }
};

/// One divided space-time block: temporal stage, spatial stage, MLP.
template <class T>
struct BlockParams {
  AttentionParams<T> temporal;
  AttentionParams<T> spatial;
  Tensor<T> mlp_ln_gain;  // (q)
  Tensor<T> mlp_ln_bias;  // (q)
  Tensor<T> w_fc1;        // (q, r q)
  Tensor<T> b_fc1;        // (r q)
  Tensor<T> w_fc2;        // (r q, q)
  Tensor<T> b_fc2;        // (q)
};

/// Per-stage softmax weights captured during a forward pass.
template <class T>
struct AttentionTrace {
  std::vector<Tensor<T>> weights;
};

template <class T>
Tensor<T> mlp_stage(const Tensor<T>& x, const BlockParams<T>& b) {
  auto h = layer_norm(x, b.mlp_ln_gain, b.mlp_ln_bias);
  h = gelu(add(matmul(h, b.w_fc1), b.b_fc1));
  return add(x, add(matmul(h, b.w_fc2), b.b_fc2));
}

template <class T>
Tensor<T> encoder_block(const Tensor<T>& x, const BlockParams<T>& block, const EncoderConfig& cfg,
                        const TokenLayout& layout, AttentionScheme scheme = AttentionScheme::divided,
                        AttentionTrace<T>* trace = nullptr) {
  if (x.rank() != 3 || x.dim(1) != cfg.tokens() || x.dim(2) != cfg.dim || layout.frames() != cfg.frames ||
      layout.patches() != cfg.patches) {
    throw ShapeError(detail::concat("encoder_block: tokens ", detail::shape_str(x.shape()),
                                    " do not match layout F*N+1=", cfg.tokens(), ", q=", cfg.dim));
  }
  auto* w = trace ? &trace->weights : nullptr;
  const bool joint = scheme == AttentionScheme::joint;
  auto h = attention_stage(x, joint ? joint_neighborhoods(layout) : temporal_neighborhoods(layout), block.temporal,
                           cfg.heads, w);
  h = attention_stage(h, joint ? joint_neighborhoods(layout) : spatial_neighborhoods(layout), block.spatial,
                      cfg.heads, w);
  return mlp_stage(h, block);
}

template <class T>
struct Encoding {
  Tensor<T> summary;  // (B, q)
  Tensor<T> tokens;   // (B, F*N + 1, q)
};

template <class T>
Encoding<T> encode(const TokenBatch<T>& input, const std::vector<BlockParams<T>>& blocks, const EncoderConfig& cfg,
                   AttentionScheme scheme = AttentionScheme::divided, AttentionTrace<T>* trace = nullptr) {
  cfg.validate();
  auto x = input.tokens;
  for (const auto& b : blocks) x = encoder_block(x, b, cfg, input.layout, scheme, trace);
  const std::size_t B = x.dim(0);
  auto summary = reshape(slice(x, 1, input.layout.summary(), input.layout.summary() + 1), {B, cfg.dim});
  return {summary, x};
}

}  // namespace svt
