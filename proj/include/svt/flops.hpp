#pragma once

// Closed-form multiply-accumulate count for one forward pass of one clip.
//
// Counted: patch projection, QKV projections, attention scores (QK^T) and
// weighted values, output projections, MLPs, and the semantic head. Layer
// norms, softmax, GELU/ReLU and residual adds are not counted. One MAC is two
// FLOPs. Reported inference cost multiplies by the number of test views
// (spatial crops x temporal clips); the default is 3 crops x 1 clip.
//
// Per attention stage with n projected tokens, m queried tokens and groups of
// nq queries over nk keys:  3 n q^2 + 2 q sum(nq nk) + m q^2.
//   temporal   n = m = FN, N groups of F x F (summary passes through)
//   spatial    n = m = FN+1, F groups of N x (N+1) plus the summary, 1 x (FN+1)
//   joint      both stages widened to one (FN+1) x (FN+1) group

#include <cstdint>
#include <string>
#include <vector>

#include "svt/encoder.hpp"
#include "svt/model.hpp"

namespace svt {

struct FlopBreakdown {
  std::uint64_t patch_embed = 0;
  std::uint64_t qkv = 0;
  std::uint64_t scores = 0;  // QK^T
  std::uint64_t values = 0;  // weights x V
  std::uint64_t out_proj = 0;
  std::uint64_t mlp = 0;
  std::uint64_t head = 0;

  std::uint64_t attention() const { return scores + values; }
  std::uint64_t total() const { return patch_embed + qkv + scores + values + out_proj + mlp + head; }
};

struct FlopConvention {
  std::uint64_t flops_per_mac = 2;
  std::uint64_t spatial_crops = 3;
  std::uint64_t temporal_clips = 1;

  std::uint64_t views() const { return spatial_crops * temporal_clips; }
  std::string describe() const {
    return std::to_string(flops_per_mac) + " FLOPs per MAC, " + std::to_string(spatial_crops) + " spatial crop(s) x " +
           std::to_string(temporal_clips) + " clip(s) per video";
  }
};

inline FlopBreakdown estimate_flops(const SvtConfig& cfg, AttentionScheme scheme = AttentionScheme::divided) {
  cfg.validate();
  using U = std::uint64_t;
  const U F = cfg.frames, N = cfg.patch_config().patches_per_frame(), q = cfg.dim;
  const U D = cfg.patch_config().patch_dim(), h = cfg.encoder_config().hidden(), L = cfg.depth;
  const U S = F * N + 1;

  FlopBreakdown b;
  b.patch_embed = F * N * D * q;
  U projected = 0, queried = 0, pairs = 0;  // per block
  if (scheme == AttentionScheme::divided) {
    projected = F * N + S;
    queried = F * N + S;
    pairs = N * F * F + F * N * (N + 1) + S;
  } else {
    projected = 2 * S;
    queried = 2 * S;
    pairs = 2 * S * S;
  }
  b.qkv = L * 3 * projected * q * q;
  b.scores = L * pairs * q;
  b.values = L * pairs * q;
  b.out_proj = L * queried * q * q;
  b.mlp = L * 2 * S * q * h;
  b.head = 3 * q * q + q * cfg.sem_dim;
  return b;
}

/// FLOPs per video under `conv`.
inline double inference_flops(const FlopBreakdown& b, const FlopConvention& conv = {}) {
  return static_cast<double>(b.total()) * static_cast<double>(conv.flops_per_mac * conv.views());
}

}  // namespace svt
