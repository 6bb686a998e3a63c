#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "svt/encoder.hpp"
#include "svt/manifest.hpp"
#include "svt/patch_embed.hpp"
#include "svt/rng.hpp"
#include "svt/tensor.hpp"

namespace svt {

/// Model hyperparameters. Defaults are the SVT-8 configuration at 224px.
struct SvtConfig {
  std::size_t frames = 8;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t patch = 16;
  std::size_t dim = 768;
  std::size_t heads = 12;
  std::size_t depth = 12;
  std::size_t mlp_ratio = 4;
  std::size_t sem_dim = 600;

  PatchConfig patch_config() const { return {patch, height, width, frames, dim}; }
  EncoderConfig encoder_config() const {
    return {depth, heads, dim, mlp_ratio, frames, patch_config().patches_per_frame()};
  }
  void validate() const {
    patch_config().validate();
    encoder_config().validate();
    if (sem_dim == 0) throw ConfigError("model config: semantic dimension must be positive");
  }
  std::size_t tokens() const { return patch_config().tokens(); }
  bool operator==(const SvtConfig&) const = default;
};

template <class T>
struct Linear {
  Tensor<T> weight;  // (in, out)
  Tensor<T> bias;    // (out)
};

/// Three ReLU hidden layers of width q, then a linear map to the semantic space.
template <class T>
struct HeadParams {
  Tensor<T> norm_gain;  // (q), layer norm on the summary vector
  Tensor<T> norm_bias;  // (q)
  std::array<Linear<T>, 3> hidden;
  Linear<T> out;
};

template <class T>
struct ClipBatch {
  Tensor<T> data;  // (B, F, H, W, 3)
  std::vector<std::string> video_ids;
  std::vector<ClassId> class_ids;
};

template <class T>
struct SvtOutput {
  Tensor<T> summary;    // (B, q)
  Tensor<T> tokens;     // (B, F*N + 1, q)
  Tensor<T> embedding;  // (B, d_sem)
};

template <class T>
class SvtModel {
 public:
  SvtConfig config;
  Tensor<T> patch_proj;   // E, (q, 3P^2)
  Tensor<T> pos_embed;    // (F*N + 1, q)
  Tensor<T> summary_token;  // (q)
  std::vector<BlockParams<T>> blocks;
  HeadParams<T> head;

  /// Initialization, drawn in parameters() order:
  ///   patch projection   U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  ///   attention, MLP     Xavier uniform U(-sqrt(6/(fan_in+fan_out)), +)
  ///   head hidden (ReLU) He uniform U(-sqrt(6/fan_in), +)
  ///   head output        zero weight, so f starts at the bias
  ///   positional table, summary token  truncated normal, std 0.02, +-2 std
  ///   biases 0, layer-norm gains 1
  static SvtModel init(const SvtConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x5e7));
    const std::size_t q = cfg.dim, D = cfg.patch_config().patch_dim(), S = cfg.tokens(), h = cfg.mlp_ratio * q;
    auto uniform_bound = [&](Shape shape, double bound) {
      std::vector<T> v(numel(shape));
      for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
      return Tensor<T>(std::move(shape), std::move(v), true);
    };
    auto fan_in = [&](Shape shape) {
      const double b = 1.0 / std::sqrt(static_cast<double>(shape[1]));
      return uniform_bound(std::move(shape), b);
    };
    auto xavier = [&](Shape shape) {
      const double b = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      return uniform_bound(std::move(shape), b);
    };
    auto he = [&](Shape shape) {
      const double b = std::sqrt(6.0 / static_cast<double>(shape[0]));
      return uniform_bound(std::move(shape), b);
    };
    auto trunc = [&](Shape shape) {
      std::vector<T> v(numel(shape));
      for (auto& x : v) x = static_cast<T>(rng.truncated_normal(0.02));
      return Tensor<T>(std::move(shape), std::move(v), true);
    };
    auto constant = [](Shape shape, T value) { return Tensor<T>::full(std::move(shape), value, true); };
    auto attention = [&] {
      AttentionParams<T> a;
      a.ln_gain = constant({q}, T(1));
      a.ln_bias = constant({q}, T(0));
      a.w_qkv = xavier({q, 3 * q});
      a.w_out = xavier({q, q});
      a.b_out = constant({q}, T(0));
      return a;
    };

    SvtModel m;
    m.config = cfg;
    m.patch_proj = fan_in({q, D});
    m.pos_embed = trunc({S, q});
    m.summary_token = trunc({q});
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      BlockParams<T> b;
      b.temporal = attention();
      b.spatial = attention();
      b.mlp_ln_gain = constant({q}, T(1));
      b.mlp_ln_bias = constant({q}, T(0));
      b.w_fc1 = xavier({q, h});
      b.b_fc1 = constant({h}, T(0));
      b.w_fc2 = xavier({h, q});
      b.b_fc2 = constant({q}, T(0));
      m.blocks.push_back(std::move(b));
    }
    m.head.norm_gain = constant({q}, T(1));
    m.head.norm_bias = constant({q}, T(0));
    for (auto& layer : m.head.hidden) {
      layer.weight = he({q, q});
      layer.bias = constant({q}, T(0));
    }
    m.head.out.weight = constant({q, cfg.sem_dim}, T(0));
    m.head.out.bias = constant({cfg.sem_dim}, T(0));
    return m;
  }

  /// Every learnable tensor with a stable hierarchical name.
  std::vector<NamedTensor<T>> parameters() const {
    std::vector<NamedTensor<T>> out;
    out.push_back({"patch.proj", patch_proj});
    out.push_back({"patch.pos", pos_embed});
    out.push_back({"patch.summary", summary_token});
    auto add_attention = [&](const std::string& prefix, const AttentionParams<T>& a) {
      out.push_back({prefix + ".ln.gain", a.ln_gain});
      out.push_back({prefix + ".ln.bias", a.ln_bias});
      out.push_back({prefix + ".qkv.weight", a.w_qkv});
      out.push_back({prefix + ".out.weight", a.w_out});
      out.push_back({prefix + ".out.bias", a.b_out});
    };
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      const std::string p = "blocks." + std::to_string(l);
      const auto& b = blocks[l];
      add_attention(p + ".temporal", b.temporal);
      add_attention(p + ".spatial", b.spatial);
      out.push_back({p + ".mlp.ln.gain", b.mlp_ln_gain});
      out.push_back({p + ".mlp.ln.bias", b.mlp_ln_bias});
      out.push_back({p + ".mlp.fc1.weight", b.w_fc1});
      out.push_back({p + ".mlp.fc1.bias", b.b_fc1});
      out.push_back({p + ".mlp.fc2.weight", b.w_fc2});
      out.push_back({p + ".mlp.fc2.bias", b.b_fc2});
    }
    out.push_back({"head.norm.gain", head.norm_gain});
    out.push_back({"head.norm.bias", head.norm_bias});
    for (std::size_t i = 0; i < head.hidden.size(); ++i) {
      const std::string p = "head.hidden." + std::to_string(i);
      out.push_back({p + ".weight", head.hidden[i].weight});
      out.push_back({p + ".bias", head.hidden[i].bias});
    }
    out.push_back({"head.out.weight", head.out.weight});
    out.push_back({"head.out.bias", head.out.bias});
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

  /// Independent copy of every parameter tensor.
  SvtModel clone() const {
    SvtModel m = *this;
    auto copy = [](Tensor<T>& t) { t = Tensor<T>(t.shape(), std::vector<T>(t.data().begin(), t.data().end()), true); };
    copy(m.patch_proj);
    copy(m.pos_embed);
    copy(m.summary_token);
    for (auto& b : m.blocks) {
      for (auto* a : {&b.temporal, &b.spatial}) {
        copy(a->ln_gain);
        copy(a->ln_bias);
        copy(a->w_qkv);
        copy(a->w_out);
        copy(a->b_out);
      }
      copy(b.mlp_ln_gain);
      copy(b.mlp_ln_bias);
      copy(b.w_fc1);
      copy(b.b_fc1);
      copy(b.w_fc2);
      copy(b.b_fc2);
    }
    copy(m.head.norm_gain);
    copy(m.head.norm_bias);
    for (auto& l : m.head.hidden) {
      copy(l.weight);
      copy(l.bias);
    }
    copy(m.head.out.weight);
    copy(m.head.out.bias);
    return m;
  }
};

/// f = head(z): (B, q) -> (B, d_sem).
template <class T>
Tensor<T> head_forward(const Tensor<T>& summary, const HeadParams<T>& head) {
  auto h = layer_norm(summary, head.norm_gain, head.norm_bias);
  for (const auto& layer : head.hidden) h = relu(add(matmul(h, layer.weight), layer.bias));
  return add(matmul(h, head.out.weight), head.out.bias);
}

template <class T>
TokenBatch<T> tokenize(const SvtModel<T>& model, const Tensor<T>& clip, const TokenLayout* layout = nullptr) {
  const auto& cfg = model.config;
  if (clip.rank() != 5 || clip.dim(1) != cfg.frames || clip.dim(2) != cfg.height || clip.dim(3) != cfg.width ||
      clip.dim(4) != 3) {
    throw ShapeError(detail::concat("model: clip ", detail::shape_str(clip.shape()), " does not match F=", cfg.frames,
                                    ", H=", cfg.height, ", W=", cfg.width));
  }
  const auto pc = cfg.patch_config();
  const TokenLayout lay = layout ? *layout : TokenLayout::identity(cfg.frames, pc.patches_per_frame());
  return embed(patchify(clip, cfg.patch), model.patch_proj, model.pos_embed, model.summary_token, lay);
}

template <class T>
SvtOutput<T> forward(const SvtModel<T>& model, const Tensor<T>& clip, const TokenLayout* layout = nullptr,
                     AttentionScheme scheme = AttentionScheme::divided, AttentionTrace<T>* trace = nullptr) {
  auto tokens = tokenize(model, clip, layout);
  auto enc = encode(tokens, model.blocks, model.config.encoder_config(), scheme, trace);
  return {enc.summary, enc.tokens, head_forward(enc.summary, model.head)};
}

/// f(x) for every clip of the batch: (B, d_sem).
template <class T>
Tensor<T> embed_video(const SvtModel<T>& model, const Tensor<T>& clip) {
  return forward(model, clip).embedding;
}

}  // namespace svt
