#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every primitive produces a new node. When gradient recording is enabled and
// any input requires a gradient, the node keeps references to its inputs and
// an adjoint closure; the nodes reachable from a loss form the computation
// record that backward() walks in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "svt/error.hpp"

namespace svt {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <class T>
class Tensor;

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool released = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  T* grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad.data();
  }
};

inline thread_local bool grad_enabled_flag = true;
inline thread_local std::uint64_t mac_counter = 0;

}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag; }

/// Disables recording for its lifetime (evaluation, finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled_flag) { detail::grad_enabled_flag = false; }
  ~NoGradGuard() { detail::grad_enabled_flag = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Scalar multiply-accumulates performed by matmul on the calling thread.
inline std::uint64_t mac_count() { return detail::mac_counter; }
inline void reset_mac_count() { detail::mac_counter = 0; }

template <class T>
class Tensor {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "Tensor supports 32- and 64-bit floats");

 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (svt::numel(shape) != data.size()) {
      throw ShapeError(detail::concat("tensor: shape ", detail::shape_str(shape), " holds ",
                                      svt::numel(shape), " values but ", data.size(), " were given"));
    }
    for (auto extent : shape) {
      if (extent == 0) throw ShapeError("tensor: zero extent in shape " + detail::shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = svt::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    auto n = svt::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value) { return Tensor({}, {value}); }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// In-place access for parameter updates; bypasses the computation record.
  std::span<T> mutable_data() { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }

  T item() const {
    if (numel() != 1) {
      throw ShapeError("item: tensor of shape " + detail::shape_str(shape()) + " is not a scalar");
    }
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf) throw GraphError("set_requires_grad: only leaves can change this flag");
    node_->requires_grad = on;
  }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::vector<T> grad_or_zero() const {
    return has_grad() ? node_->grad : std::vector<T>(numel(), T{0});
  }
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the values with no history.
  Tensor detach() const { return Tensor(shape(), node_->data); }

 private:
  NodePtr node_;
};

namespace detail {

template <class T>
void check_finite(const char* op, const Tensor<T>& t) {
  for (auto v : t.data()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(concat(op, ": non-finite value in operand of shape ", shape_str(t.shape())));
    }
  }
}

template <class T>
void check_defined(const char* op, const Tensor<T>& t) {
  if (!t.defined()) throw GraphError(concat(op, ": undefined tensor operand"));
}

template <class T>
Tensor<T> make_result_n(const char* op, Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                        std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  auto& node = *out.node();
  node.op = op;
  if (needs) {
    node.requires_grad = true;
    node.is_leaf = false;
    for (const auto& in : inputs) node.inputs.push_back(in.node());
    node.backward = std::move(backward);
  }
  return out;
}

template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  return make_result_n<T>(op, std::move(shape), std::move(data), std::vector<Tensor<T>>(inputs), std::move(backward));
}

// Gradient buffer of input i, or nullptr when that input needs none.
template <class T>
T* input_grad(Node<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer() : nullptr;
}

inline std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

}  // namespace detail

/// Matrix product over the last two axes. `b` is either a shared (k, n)
/// matrix or has the same leading batch axes as `a`.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_defined("matmul", a);
  detail::check_defined("matmul", b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + detail::shape_str(sa) + " and " + detail::shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const bool shared = sb.size() == 2;
  if (!shared) {
    if (sb.size() != sa.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) throw mismatch();
  }
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) throw mismatch();
  detail::check_finite("matmul", a);
  detail::check_finite("matmul", b);
  const std::size_t batch = a.numel() / (m * k);

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batch * m * n, T{0});
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t bt = 0; bt < batch; ++bt) {
    const T* Ab = A + bt * m * k;
    const T* Bb = shared ? B : B + bt * k * n;
    T* Cb = out.data() + bt * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const T av = Ab[i * k + p];
        const T* brow = Bb + p * n;
        T* crow = Cb + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  detail::mac_counter += batch * m * k * n;

  return detail::make_result<T>("matmul", std::move(out_shape), std::move(out), {a, b},
                                [batch, m, k, n, shared](detail::Node<T>& self) {
                                  const T* G = self.grad.data();
                                  const T* A = self.inputs[0]->data.data();
                                  const T* B = self.inputs[1]->data.data();
                                  T* dA = detail::input_grad(self, 0);
                                  T* dB = detail::input_grad(self, 1);
                                  for (std::size_t bt = 0; bt < batch; ++bt) {
                                    const T* Gb = G + bt * m * n;
                                    const T* Ab = A + bt * m * k;
                                    const std::size_t boff = shared ? 0 : bt * k * n;
                                    for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t p = 0; p < k; ++p) {
                                        const T* brow = B + boff + p * n;
                                        const T* grow = Gb + i * n;
                                        if (dA) {
                                          T acc{0};
                                          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                          dA[bt * m * k + i * k + p] += acc;
                                        }
                                        if (dB) {
                                          const T av = Ab[i * k + p];
                                          T* dbrow = dB + boff + p * n;
                                          for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                                        }
                                      }
                                    }
                                  }
                                });
}

/// Elementwise sum. `b` has the shape of `a` or of its trailing axes (bias).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_defined("add", a);
  detail::check_defined("add", b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()))) {
    throw ShapeError("add: shape " + detail::shape_str(sb) + " is neither equal to nor a trailing suffix of " +
                     detail::shape_str(sa));
  }
  detail::check_finite("add", a);
  detail::check_finite("add", b);
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  std::vector<T> out(a.data().begin(), a.data().end());
  const T* B = b.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += B[i];
  }
  return detail::make_result<T>("add", sa, std::move(out), {a, b}, [outer, inner](detail::Node<T>& self) {
    const T* G = self.grad.data();
    if (T* dA = detail::input_grad(self, 0)) {
      for (std::size_t i = 0; i < outer * inner; ++i) dA[i] += G[i];
    }
    if (T* dB = detail::input_grad(self, 1)) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) dB[i] += G[o * inner + i];
      }
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  detail::check_defined("scale", a);
  detail::check_finite("scale", a);
  if (!std::isfinite(factor)) throw NonFiniteError("scale: non-finite factor");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](detail::Node<T>& self) {
    T* dA = detail::input_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dA[i] += self.grad[i] * factor;
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T{-1}));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  detail::check_defined("reshape", a);
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + detail::shape_str(a.shape()) + " as " + detail::shape_str(shape));
  }
  detail::check_finite("reshape", a);
  std::vector<T> out(a.data().begin(), a.data().end());
  return detail::make_result<T>("reshape", std::move(shape), std::move(out), {a}, [](detail::Node<T>& self) {
    T* dA = detail::input_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dA[i] += self.grad[i];
  });
}

/// Axis permutation: output axis i is input axis perm[i].
template <class T>
Tensor<T> transpose(const Tensor<T>& a, const std::vector<std::size_t>& perm) {
  detail::check_defined("transpose", a);
  const auto& sa = a.shape();
  const std::size_t r = sa.size();
  {
    std::vector<std::size_t> sorted(perm);
    std::sort(sorted.begin(), sorted.end());
    bool ok = sorted.size() == r;
    for (std::size_t i = 0; ok && i < r; ++i) ok = sorted[i] == i;
    if (!ok) throw ShapeError("transpose: invalid permutation for shape " + detail::shape_str(sa));
  }
  detail::check_finite("transpose", a);
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * sa[i];
  Shape out_shape(r);
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = sa[perm[i]];
    step[i] = in_stride[perm[i]];
  }
  // src[j] is the input offset of output element j.
  const std::size_t n = a.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t offset = 0;
  for (std::size_t j = 0; j < n; ++j) {
    (*src)[j] = offset;
    for (std::size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) {
        offset += step[ax];
        break;
      }
      offset -= step[ax] * (out_shape[ax] - 1);
      idx[ax] = 0;
    }
  }
  std::vector<T> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = a[(*src)[j]];
  return detail::make_result<T>("transpose", std::move(out_shape), std::move(out), {a},
                                [src](detail::Node<T>& self) {
                                  T* dA = detail::input_grad(self, 0);
                                  for (std::size_t j = 0; j < self.grad.size(); ++j) dA[(*src)[j]] += self.grad[j];
                                });
}

/// Swap of the two trailing axes.
template <class T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
  std::vector<std::size_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (perm.size() < 2) throw ShapeError("transpose_last2: rank < 2");
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return transpose(a, perm);
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  for (const auto& p : parts) detail::check_defined("concat", p);
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + detail::shape_str(s0));
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) {
      throw ShapeError("concat: shape " + detail::shape_str(s) + " does not match " + detail::shape_str(s0) +
                       " off axis " + std::to_string(axis));
    }
    detail::check_finite("concat", p);
    extents.push_back(s[axis]);
    total += s[axis];
  }
  const std::size_t outer = detail::prod(s0, 0, axis);
  const std::size_t inner = detail::prod(s0, axis + 1, s0.size());
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t base = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const T* P = parts[pi].data().data();
    const std::size_t chunk = extents[pi] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(P + o * chunk, P + (o + 1) * chunk, out.data() + o * total * inner + base * inner);
    }
    base += extents[pi];
  }
  return detail::make_result_n<T>("concat", std::move(out_shape), std::move(out), parts,
                                  [extents, outer, inner, total](detail::Node<T>& self) {
                                    std::size_t base = 0;
                                    for (std::size_t pi = 0; pi < extents.size(); ++pi) {
                                      const std::size_t chunk = extents[pi] * inner;
                                      if (T* dP = detail::input_grad(self, pi)) {
                                        for (std::size_t o = 0; o < outer; ++o) {
                                          const T* G = self.grad.data() + o * total * inner + base * inner;
                                          for (std::size_t i = 0; i < chunk; ++i) dP[o * chunk + i] += G[i];
                                        }
                                      }
                                      base += extents[pi];
                                    }
                                  });
}

/// Gather along `axis` by an arbitrary index list (repeats allowed).
template <class T>
Tensor<T> take(const Tensor<T>& a, std::size_t axis, std::vector<std::size_t> indices) {
  detail::check_defined("take", a);
  const auto& sa = a.shape();
  if (axis >= sa.size()) throw ShapeError("take: axis out of range for " + detail::shape_str(sa));
  if (indices.empty()) throw ShapeError("take: empty index list");
  for (auto i : indices) {
    if (i >= sa[axis]) {
      throw ShapeError(detail::concat("take: index ", i, " out of range for axis ", axis, " of ",
                                      detail::shape_str(sa)));
    }
  }
  detail::check_finite("take", a);
  const std::size_t outer = detail::prod(sa, 0, axis);
  const std::size_t inner = detail::prod(sa, axis + 1, sa.size());
  const std::size_t extent = sa[axis];
  const std::size_t count = indices.size();
  Shape out_shape = sa;
  out_shape[axis] = count;
  std::vector<T> out(outer * count * inner);
  const T* A = a.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < count; ++c) {
      const T* src = A + (o * extent + indices[c]) * inner;
      std::copy(src, src + inner, out.data() + (o * count + c) * inner);
    }
  }
  return detail::make_result<T>("take", std::move(out_shape), std::move(out), {a},
                                [idx = std::move(indices), outer, inner, extent](detail::Node<T>& self) {
                                  T* dA = detail::input_grad(self, 0);
                                  const std::size_t count = idx.size();
                                  for (std::size_t o = 0; o < outer; ++o) {
                                    for (std::size_t c = 0; c < count; ++c) {
                                      T* dst = dA + (o * extent + idx[c]) * inner;
                                      const T* g = self.grad.data() + (o * count + c) * inner;
                                      for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
                                    }
                                  }
                                });
}

/// Contiguous range [begin, end) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  detail::check_defined("slice", a);
  if (axis >= a.rank() || begin >= end || end > a.dim(axis)) {
    throw ShapeError(detail::concat("slice: range [", begin, ", ", end, ") on axis ", axis, " invalid for ",
                                    detail::shape_str(a.shape())));
  }
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  auto out = take(a, axis, std::move(idx));
  out.node()->op = "slice";
  return out;
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-6)) {
  detail::check_defined("layer_norm", x);
  if (x.rank() < 1 || gain.shape() != Shape{x.shape().back()} || bias.shape() != gain.shape()) {
    throw ShapeError("layer_norm: gain/bias " + detail::shape_str(gain.shape()) + "/" +
                     detail::shape_str(bias.shape()) + " do not match last axis of " + detail::shape_str(x.shape()));
  }
  detail::check_finite("layer_norm", x);
  detail::check_finite("layer_norm", gain);
  detail::check_finite("layer_norm", bias);
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  const T* X = x.data().data();
  const T* g = gain.data().data();
  const T* b = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = X + r * d;
    T mean{0};
    for (std::size_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<T>(d);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (row[i] - mean) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * g[i] + b[i];
    }
  }
  return detail::make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias}, [xhat, inv_std, d, rows](detail::Node<T>& self) {
        const T* G = self.grad.data();
        const T* g = self.inputs[1]->data.data();
        T* dX = detail::input_grad(self, 0);
        T* dg = detail::input_grad(self, 1);
        T* db = detail::input_grad(self, 2);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = G + r * d;
          const T* hr = xhat->data() + r * d;
          if (dg || db) {
            for (std::size_t i = 0; i < d; ++i) {
              if (dg) dg[i] += gr[i] * hr[i];
              if (db) db[i] += gr[i];
            }
          }
          if (dX) {
            T mean_dh{0}, mean_dh_h{0};
            for (std::size_t i = 0; i < d; ++i) {
              const T dh = gr[i] * g[i];
              mean_dh += dh;
              mean_dh_h += dh * hr[i];
            }
            mean_dh /= static_cast<T>(d);
            mean_dh_h /= static_cast<T>(d);
            const T is = (*inv_std)[r];
            for (std::size_t i = 0; i < d; ++i) {
              dX[r * d + i] += is * (gr[i] * g[i] - mean_dh - hr[i] * mean_dh_h);
            }
          }
        }
      });
}

/// Softmax over the last axis, computed with max subtraction.
template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  detail::check_defined("softmax_lastdim", x);
  if (x.rank() < 1) throw ShapeError("softmax_lastdim: scalar operand");
  detail::check_finite("softmax_lastdim", x);
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  const T* X = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = X + r * d;
    T* o = out.data() + r * d;
    const T mx = *std::max_element(row, row + d);
    T sum{0};
    for (std::size_t i = 0; i < d; ++i) {
      o[i] = std::exp(row[i] - mx);
      sum += o[i];
    }
    for (std::size_t i = 0; i < d; ++i) o[i] /= sum;
  }
  return detail::make_result<T>("softmax_lastdim", x.shape(), std::move(out), {x}, [d, rows](detail::Node<T>& self) {
    T* dX = detail::input_grad(self, 0);
    const T* Y = self.data.data();
    const T* G = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t i = 0; i < d; ++i) dot += G[r * d + i] * Y[r * d + i];
      for (std::size_t i = 0; i < d; ++i) dX[r * d + i] += Y[r * d + i] * (G[r * d + i] - dot);
    }
  });
}

/// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  detail::check_defined("gelu", x);
  detail::check_finite("gelu", x);
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = T(0.044715);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v)));
  }
  return detail::make_result<T>("gelu", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    T* dX = detail::input_grad(self, 0);
    const T* X = self.inputs[0]->data.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = X[i];
      const T t = std::tanh(c * (v + a * v * v * v));
      const T dt = (T(1) - t * t) * c * (T(1) + T(3) * a * v * v);
      dX[i] += self.grad[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  detail::check_defined("relu", x);
  detail::check_finite("relu", x);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  return detail::make_result<T>("relu", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    T* dX = detail::input_grad(self, 0);
    const T* X = self.inputs[0]->data.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (X[i] > T{0}) dX[i] += self.grad[i];
    }
  });
}

/// Mean of all elements, as a scalar.
template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  detail::check_defined("mean", x);
  detail::check_finite("mean", x);
  T s{0};
  for (auto v : x.data()) s += v;
  const T n = static_cast<T>(x.numel());
  return detail::make_result<T>("mean", {}, {s / n}, {x}, [n](detail::Node<T>& self) {
    T* dX = detail::input_grad(self, 0);
    const T g = self.grad[0] / n;
    for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) dX[i] += g;
  });
}

/// Sum of squares of all elements, as a scalar.
template <class T>
Tensor<T> sum_sq(const Tensor<T>& x) {
  detail::check_defined("sum_sq", x);
  detail::check_finite("sum_sq", x);
  T s{0};
  for (auto v : x.data()) s += v * v;
  return detail::make_result<T>("sum_sq", {}, {s}, {x}, [](detail::Node<T>& self) {
    T* dX = detail::input_grad(self, 0);
    const T* X = self.inputs[0]->data.data();
    const T g = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) dX[i] += T(2) * g * X[i];
  });
}

/// Reverse pass from a scalar loss. Leaf gradients accumulate; the record
/// reachable from `loss` is released afterwards.
template <class T>
void backward(const Tensor<T>& loss) {
  detail::check_defined("backward", loss);
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + detail::shape_str(loss.shape()));
  }
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  const NodePtr& root = loss.node();
  if (root->released) {
    throw GraphError("backward: computation record already consumed; run a new forward pass");
  }
  if (!root->requires_grad || root->is_leaf) {
    throw GraphError("backward: loss has no computation record (no input requires a gradient)");
  }

  // Iterative post-order DFS over interior nodes; leaves only receive grads.
  std::vector<detail::Node<T>*> order;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  std::unordered_set<detail::Node<T>*> visited;
  auto mark = [&](detail::Node<T>* n) {
    n->grad.assign(n->data.size(), T{0});
    visited.insert(n);
  };
  mark(root.get());
  stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<T>* child = node->inputs[next++].get();
      if (child->released) {
        throw GraphError("backward: computation record already consumed; run a new forward pass");
      }
      if (!child->requires_grad || child->is_leaf) continue;
      if (visited.contains(child)) continue;
      mark(child);
      stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backward(**it);
  for (auto* n : order) {
    n->inputs.clear();
    n->backward = nullptr;
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->released = true;
  }
}

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

}  // namespace svt
