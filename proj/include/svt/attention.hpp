#pragma once

// Multi-head scaled dot-product attention over explicit neighbourhoods.
//
// A Neighborhoods value partitions the queried tokens into groups; each group
// lists its query slots and the key/value slots they attend over. Tokens that
// are not queried by any group pass through the stage unchanged. Groups with
// equal (queries, keys) sizes are batched into one set of matmuls.

#include <cmath>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "svt/patch_embed.hpp"
#include "svt/tensor.hpp"

namespace svt {

struct AttentionGroup {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> keys;
};

using Neighborhoods = std::vector<AttentionGroup>;

/// Pre-norm attention stage parameters. No bias on the QKV projection.
template <class T>
struct AttentionParams {
  Tensor<T> ln_gain;  // (q)
  Tensor<T> ln_bias;  // (q)
  Tensor<T> w_qkv;    // (q, 3q), columns [query | key | value]
  Tensor<T> w_out;    // (q, q)
  Tensor<T> b_out;    // (q)
};

/// Patch (p, t) attends over {(p, t') : t' = 1..F}; the summary is not queried.
inline Neighborhoods temporal_neighborhoods(const TokenLayout& layout) {
  Neighborhoods nb;
  for (std::size_t p = 0; p < layout.patches(); ++p) {
    AttentionGroup g;
    for (std::size_t t = 0; t < layout.frames(); ++t) g.queries.push_back(layout.patch(p, t));
    g.keys = g.queries;
    nb.push_back(std::move(g));
  }
  return nb;
}

/// Patch (p, t) attends over frame t plus the summary; the summary attends
/// over every patch plus itself.
inline Neighborhoods spatial_neighborhoods(const TokenLayout& layout) {
  Neighborhoods nb;
  AttentionGroup global;
  for (std::size_t t = 0; t < layout.frames(); ++t) {
    AttentionGroup g;
    for (std::size_t p = 0; p < layout.patches(); ++p) g.queries.push_back(layout.patch(p, t));
    g.keys = g.queries;
    g.keys.push_back(layout.summary());
    global.keys.insert(global.keys.end(), g.queries.begin(), g.queries.end());
    nb.push_back(std::move(g));
  }
  global.queries = {layout.summary()};
  global.keys.push_back(layout.summary());
  nb.push_back(std::move(global));
  return nb;
}

/// Every token attends over every token (reference scheme).
inline Neighborhoods joint_neighborhoods(const TokenLayout& layout) {
  AttentionGroup g;
  g.queries.push_back(layout.summary());
  for (std::size_t t = 0; t < layout.frames(); ++t) {
    for (std::size_t p = 0; p < layout.patches(); ++p) g.queries.push_back(layout.patch(p, t));
  }
  g.keys = g.queries;
  return {g};
}

/// x + Attn(LN(x)) restricted to `nb`. x: (B, S, q). Softmax weights of every
/// batched group, shaped (B, G, A, queries, keys), are appended to
/// `weights_out` when given.
template <class T>
Tensor<T> attention_stage(const Tensor<T>& x, const Neighborhoods& nb, const AttentionParams<T>& params,
                          std::size_t heads, std::vector<Tensor<T>>* weights_out = nullptr) {
  if (x.rank() != 3) throw ShapeError("attention_stage: tokens must be (B, S, q), got " + detail::shape_str(x.shape()));
  const std::size_t B = x.dim(0), S = x.dim(1), q = x.dim(2);
  if (heads == 0 || q % heads != 0) {
    throw ShapeError(detail::concat("attention_stage: ", heads, " heads do not divide model dim ", q));
  }
  if (params.w_qkv.shape() != Shape{q, 3 * q} || params.w_out.shape() != Shape{q, q} ||
      params.b_out.shape() != Shape{q}) {
    throw ShapeError("attention_stage: projection shapes do not match model dim " + std::to_string(q));
  }
  const std::size_t dh = q / heads;

  std::vector<bool> queried(S, false);
  std::set<std::size_t> involved_set;
  for (const auto& g : nb) {
    if (g.queries.empty() || g.keys.empty()) throw ShapeError("attention_stage: empty neighbourhood");
    for (auto i : g.queries) {
      if (i >= S) throw ShapeError("attention_stage: query index out of range");
      if (queried[i]) throw ShapeError(detail::concat("attention_stage: token ", i, " queried by two groups"));
      queried[i] = true;
      involved_set.insert(i);
    }
    for (auto k : g.keys) {
      if (k >= S) throw ShapeError("attention_stage: key index out of range");
      involved_set.insert(k);
    }
  }
  if (nb.empty()) return x;

  // Project only the tokens that take part in the stage.
  const std::vector<std::size_t> involved(involved_set.begin(), involved_set.end());
  std::vector<std::size_t> local(S, 0);
  for (std::size_t i = 0; i < involved.size(); ++i) local[involved[i]] = i;

  auto xn = layer_norm(x, params.ln_gain, params.ln_bias);
  if (involved.size() < S) xn = take(xn, 1, involved);
  auto qkv = matmul(xn, params.w_qkv);
  auto Q = slice(qkv, 2, 0, q);
  auto K = slice(qkv, 2, q, 2 * q);
  auto V = slice(qkv, 2, 2 * q, 3 * q);

  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> buckets;
  std::vector<std::pair<std::size_t, std::size_t>> bucket_order;
  for (std::size_t gi = 0; gi < nb.size(); ++gi) {
    auto key = std::make_pair(nb[gi].queries.size(), nb[gi].keys.size());
    auto [it, fresh] = buckets.try_emplace(key);
    if (fresh) bucket_order.push_back(key);
    it->second.push_back(gi);
  }

  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Tensor<T>> outputs;
  std::vector<std::size_t> out_slots;
  for (const auto& key : bucket_order) {
    const auto& groups = buckets[key];
    const std::size_t G = groups.size(), nq = key.first, nk = key.second;
    std::vector<std::size_t> qi, ki;
    for (auto gi : groups) {
      for (auto s : nb[gi].queries) {
        qi.push_back(local[s]);
        out_slots.push_back(s);
      }
      for (auto s : nb[gi].keys) ki.push_back(local[s]);
    }
    auto heads_view = [&](const Tensor<T>& m, const std::vector<std::size_t>& idx, std::size_t n) {
      auto g = reshape(take(m, 1, idx), {B, G, n, heads, dh});
      return transpose(g, {0, 1, 3, 2, 4});  // (B, G, A, n, dh)
    };
    auto Qg = heads_view(Q, qi, nq);
    auto Kg = heads_view(K, ki, nk);
    auto Vg = heads_view(V, ki, nk);
    auto weights = softmax_lastdim(scale(matmul(Qg, transpose_last2(Kg)), inv_sqrt));
    if (weights_out) weights_out->push_back(weights);
    auto ctx = transpose(matmul(weights, Vg), {0, 1, 3, 2, 4});  // (B, G, nq, A, dh)
    ctx = reshape(ctx, {B, G * nq, q});
    outputs.push_back(add(matmul(ctx, params.w_out), params.b_out));
  }

  // Reassemble the residual update in storage order; unqueried slots get 0.
  if (out_slots.size() < S) {
    outputs.push_back(Tensor<T>::zeros({B, S - out_slots.size(), q}));
    for (std::size_t s = 0; s < S; ++s) {
      if (!queried[s]) out_slots.push_back(s);
    }
  }
  auto delta = outputs.size() == 1 ? outputs[0] : concat(outputs, 1);
  std::vector<std::size_t> inverse(S);
  bool in_order = true;
  for (std::size_t i = 0; i < S; ++i) {
    inverse[out_slots[i]] = i;
    in_order = in_order && out_slots[i] == i;
  }
  if (!in_order) delta = take(delta, 1, inverse);
  return add(x, delta);
}

}  // namespace svt
