#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ccaug/check.hpp"

namespace ccaug {

// Dense row-major tensor engine with reverse-mode differentiation.
//
// The scalar type is a template parameter: the training pipeline instantiates
// float, gradient-check tests instantiate double (32-bit finite differences
// are too noisy for tight tolerances).
//
// Grad buffers of tensors produced on a tape are scratch space re-initialized
// by each backward() call; grads of leaf tensors (parameters) persist and
// accumulate additively across backward() calls until zeroed by the caller.

template <typename T>
struct TensorStorageT {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // same length as data once gradients are required
  bool requires_grad = false;
  const void* tape_tag = nullptr;  // tape that produced this tensor, null for leaves
};

inline std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    CCAUG_CHECK(d >= 0, "tensor dimension must be non-negative");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
class TensorT {
public:
  TensorT() = default;

  static TensorT zeros(std::vector<int> shape) {
    TensorT t;
    t.s_ = std::make_shared<TensorStorageT<T>>();
    t.s_->data.assign(shape_size(shape), T(0));
    t.s_->shape = std::move(shape);
    return t;
  }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t = zeros(std::move(shape));
    std::fill(t.s_->data.begin(), t.s_->data.end(), value);
    return t;
  }

  static TensorT from_data(std::vector<int> shape, std::vector<T> values) {
    CCAUG_CHECK(shape_size(shape) == values.size(),
                "tensor data length does not match shape " + shape_str(shape));
    TensorT t;
    t.s_ = std::make_shared<TensorStorageT<T>>();
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(values);
    return t;
  }

  static TensorT scalar(T value) { return from_data({}, {value}); }

  // Leaf tensor that receives gradients (network weights, width matrix).
  static TensorT param(std::vector<int> shape, std::vector<T> values) {
    TensorT t = from_data(std::move(shape), std::move(values));
    t.s_->requires_grad = true;
    t.s_->grad.assign(t.s_->data.size(), T(0));
    return t;
  }

  // Deep copy with fresh storage (grads zeroed); detached from any tape.
  TensorT clone() const {
    TensorT t = from_data(s_->shape, s_->data);
    if (s_->requires_grad) t.set_requires_grad();
    return t;
  }

  bool defined() const { return s_ != nullptr; }
  const std::vector<int>& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return s_->data.size(); }

  T* data() { return s_->data.data(); }
  const T* data() const { return s_->data.data(); }
  std::span<const T> values() const { return {s_->data.data(), s_->data.size()}; }
  std::span<T> values_mut() { return {s_->data.data(), s_->data.size()}; }

  bool requires_grad() const { return s_->requires_grad; }
  bool has_grad() const { return !s_->grad.empty(); }
  T* grad() { return s_->grad.data(); }
  const T* grad() const { return s_->grad.data(); }
  std::span<const T> grad_values() const { return {s_->grad.data(), s_->grad.size()}; }

  void set_requires_grad() {
    s_->requires_grad = true;
    if (s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), T(0));
  }

  void zero_grad() { std::fill(s_->grad.begin(), s_->grad.end(), T(0)); }

  T item() const {
    CCAUG_CHECK(size() == 1, "item() requires a one-element tensor");
    return s_->data[0];
  }

  T grad_item() const {
    CCAUG_CHECK(s_->grad.size() == 1, "grad_item() requires a one-element grad");
    return s_->grad[0];
  }

  std::shared_ptr<TensorStorageT<T>> storage() const { return s_; }

private:
  std::shared_ptr<TensorStorageT<T>> s_;
};

template <typename T>
class TapeT {
public:
  // Fresh output tensor owned by this tape.
  TensorT<T> make(std::vector<int> shape, bool requires_grad) {
    TensorT<T> t = TensorT<T>::zeros(std::move(shape));
    t.storage()->tape_tag = this;
    if (requires_grad) t.set_requires_grad();
    produced_.push_back(t.storage());
    return t;
  }

  void record(std::function<void()> backward_rule) {
    backward_ops_.push_back(std::move(backward_rule));
  }

  // Checks an op output for non-finite values when enabled (hard error, not
  // silent propagation: divergence from overly wide augmentation shows up
  // here first).
  void check_output(const TensorT<T>& t, const char* op_name) const {
    if (!check_finite_) return;
    if (!all_finite(t.values()))
      fail(std::string(op_name) + ": non-finite value in output");
  }

  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite() const { return check_finite_; }
  std::size_t num_ops() const { return backward_ops_.size(); }

  // Populates grad buffers of everything `root` depends on. Grads of leaf
  // tensors accumulate across calls; grads of tape-produced tensors are
  // scratch reset at the start of each call.
  void backward(const TensorT<T>& root) {
    CCAUG_CHECK(root.size() == 1, "backward root must be a scalar");
    CCAUG_CHECK(root.storage()->tape_tag == this,
                "backward root was not produced on this tape");
    if (!root.requires_grad()) return;  // nothing upstream requires gradients
    for (auto& s : produced_) std::fill(s->grad.begin(), s->grad.end(), T(0));
    root.storage()->grad[0] = T(1);
    for (auto it = backward_ops_.rbegin(); it != backward_ops_.rend(); ++it) (*it)();
    if (check_finite_) {
      for (auto& s : produced_) {
        if (!all_finite(std::span<const T>(s->grad.data(), s->grad.size())))
          fail("backward: non-finite gradient");
      }
    }
  }

private:
  std::vector<std::function<void()>> backward_ops_;
  std::vector<std::shared_ptr<TensorStorageT<T>>> produced_;
  bool check_finite_ = true;
};

namespace detail {

// Accumulate into a storage's grad buffer only if it participates in
// differentiation (leaf params and everything derived from them).
template <typename T>
bool wants_grad(const std::shared_ptr<TensorStorageT<T>>& s) {
  return s->requires_grad;
}

template <typename T>
void ensure_grad(const std::shared_ptr<TensorStorageT<T>>& s) {
  if (s->grad.size() != s->data.size()) s->grad.assign(s->data.size(), T(0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  const bool b_scalar = b.size() == 1;
  CCAUG_CHECK(b_scalar || a.shape() == b.shape(),
              "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out = tape.make(a.shape(), a.requires_grad() || b.requires_grad());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = a.size();
  if (b_scalar) {
    const T bv = pb[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + bv;
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  }
  tape.check_output(out, "add");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), bs = b.storage(), os = out.storage(), b_scalar, n] {
      const T* g = os->grad.data();
      if (detail::wants_grad(as)) {
        detail::ensure_grad(as);
        T* ga = as->grad.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (detail::wants_grad(bs)) {
        detail::ensure_grad(bs);
        T* gb = bs->grad.data();
        if (b_scalar) {
          T s = 0;
          for (std::size_t i = 0; i < n; ++i) s += g[i];
          gb[0] += s;
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sub(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  const bool b_scalar = b.size() == 1;
  CCAUG_CHECK(b_scalar || a.shape() == b.shape(),
              "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out = tape.make(a.shape(), a.requires_grad() || b.requires_grad());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = a.size();
  if (b_scalar) {
    const T bv = pb[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - bv;
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  }
  tape.check_output(out, "sub");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), bs = b.storage(), os = out.storage(), b_scalar, n] {
      const T* g = os->grad.data();
      if (detail::wants_grad(as)) {
        detail::ensure_grad(as);
        T* ga = as->grad.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (detail::wants_grad(bs)) {
        detail::ensure_grad(bs);
        T* gb = bs->grad.data();
        if (b_scalar) {
          T s = 0;
          for (std::size_t i = 0; i < n; ++i) s += g[i];
          gb[0] -= s;
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  const bool b_scalar = b.size() == 1;
  CCAUG_CHECK(b_scalar || a.shape() == b.shape(),
              "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out = tape.make(a.shape(), a.requires_grad() || b.requires_grad());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = a.size();
  if (b_scalar) {
    const T bv = pb[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * bv;
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  }
  tape.check_output(out, "mul");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), bs = b.storage(), os = out.storage(), b_scalar, n] {
      const T* g = os->grad.data();
      const T* pa2 = as->data.data();
      const T* pb2 = bs->data.data();
      if (detail::wants_grad(as)) {
        detail::ensure_grad(as);
        T* ga = as->grad.data();
        if (b_scalar) {
          const T bv = pb2[0];
          for (std::size_t i = 0; i < n; ++i) ga[i] += bv * g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += pb2[i] * g[i];
        }
      }
      if (detail::wants_grad(bs)) {
        detail::ensure_grad(bs);
        T* gb = bs->grad.data();
        if (b_scalar) {
          T s = 0;
          for (std::size_t i = 0; i < n; ++i) s += pa2[i] * g[i];
          gb[0] += s;
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += pa2[i] * g[i];
        }
      }
    });
  }
  return out;
}

// out = c * a for a plain constant c (not a tape node).
template <typename T>
TensorT<T> scale(TapeT<T>& tape, const TensorT<T>& a, T c) {
  TensorT<T> out = tape.make(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = c * pa[i];
  tape.check_output(out, "scale");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), os = out.storage(), c, n] {
      detail::ensure_grad(as);
      const T* g = os->grad.data();
      T* ga = as->grad.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += c * g[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> relu(TapeT<T>& tape, const TensorT<T>& a) {
  TensorT<T> out = tape.make(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
  tape.check_output(out, "relu");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), os = out.storage(), n] {
      detail::ensure_grad(as);
      const T* g = os->grad.data();
      const T* pa2 = as->data.data();
      T* ga = as->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (pa2[i] > T(0)) ga[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sigmoid(TapeT<T>& tape, const TensorT<T>& a) {
  TensorT<T> out = tape.make(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = pa[i];
    if (x >= T(0)) {
      po[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      po[i] = e / (T(1) + e);
    }
  }
  tape.check_output(out, "sigmoid");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), os = out.storage(), n] {
      detail::ensure_grad(as);
      const T* g = os->grad.data();
      const T* y = os->data.data();
      T* ga = as->grad.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += y[i] * (T(1) - y[i]) * g[i];
    });
  }
  return out;
}

// Clamp to [0,1]. Subgradient convention: gradient passes where the output
// landed strictly inside (0,1) and is zero where it was clamped.
template <typename T>
TensorT<T> clamp01(TapeT<T>& tape, const TensorT<T>& a) {
  TensorT<T> out = tape.make(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = std::min(T(1), std::max(T(0), pa[i]));
  tape.check_output(out, "clamp01");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), os = out.storage(), n] {
      detail::ensure_grad(as);
      const T* g = os->grad.data();
      const T* y = os->data.data();
      T* ga = as->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (y[i] > T(0) && y[i] < T(1)) ga[i] += g[i];
      }
    });
  }
  return out;
}

// |a|, subgradient 0 at 0.
template <typename T>
TensorT<T> abs_value(TapeT<T>& tape, const TensorT<T>& a) {
  TensorT<T> out = tape.make(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = std::abs(pa[i]);
  tape.check_output(out, "abs");
  if (out.requires_grad()) {
    tape.record([as = a.storage(), os = out.storage(), n] {
      detail::ensure_grad(as);
      const T* g = os->grad.data();
      const T* pa2 = as->data.data();
      T* ga = as->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (pa2[i] > T(0))
          ga[i] += g[i];
        else if (pa2[i] < T(0))
          ga[i] -= g[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural operations
// ---------------------------------------------------------------------------

// Column k of a [d,K] matrix as a length-d vector.
template <typename T>
TensorT<T> column(TapeT<T>& tape, const TensorT<T>& m, int k) {
  CCAUG_CHECK(m.rank() == 2, "column: expected a rank-2 tensor");
  const int d = m.dim(0);
  const int cols = m.dim(1);
  CCAUG_CHECK(k >= 0 && k < cols, "column: index " + std::to_string(k) + " out of range");
  TensorT<T> out = tape.make({d}, m.requires_grad());
  const T* pm = m.data();
  T* po = out.data();
  for (int j = 0; j < d; ++j) po[j] = pm[static_cast<std::size_t>(j) * cols + k];
  tape.check_output(out, "column");
  if (out.requires_grad()) {
    tape.record([ms = m.storage(), os = out.storage(), k, d, cols] {
      detail::ensure_grad(ms);
      const T* g = os->grad.data();
      T* gm = ms->grad.data();
      for (int j = 0; j < d; ++j) gm[static_cast<std::size_t>(j) * cols + k] += g[j];
    });
  }
  return out;
}

// Element j of a vector as a scalar tensor.
template <typename T>
TensorT<T> index(TapeT<T>& tape, const TensorT<T>& v, int j) {
  CCAUG_CHECK(v.rank() == 1, "index: expected a rank-1 tensor");
  CCAUG_CHECK(j >= 0 && j < v.dim(0), "index: out of range");
  TensorT<T> out = tape.make({}, v.requires_grad());
  out.data()[0] = v.data()[j];
  tape.check_output(out, "index");
  if (out.requires_grad()) {
    tape.record([vs = v.storage(), os = out.storage(), j] {
      detail::ensure_grad(vs);
      vs->grad[static_cast<std::size_t>(j)] += os->grad[0];
    });
  }
  return out;
}

// Image n of a batch [N,C,H,W] as a [C,H,W] tensor.
template <typename T>
TensorT<T> slice_image(TapeT<T>& tape, const TensorT<T>& batch, int n) {
  CCAUG_CHECK(batch.rank() == 4, "slice_image: expected a rank-4 tensor");
  CCAUG_CHECK(n >= 0 && n < batch.dim(0), "slice_image: index out of range");
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const std::size_t plane = static_cast<std::size_t>(c) * h * w;
  TensorT<T> out = tape.make({c, h, w}, batch.requires_grad());
  std::copy_n(batch.data() + static_cast<std::size_t>(n) * plane, plane, out.data());
  tape.check_output(out, "slice_image");
  if (out.requires_grad()) {
    tape.record([bs = batch.storage(), os = out.storage(), n, plane] {
      detail::ensure_grad(bs);
      const T* g = os->grad.data();
      T* gb = bs->grad.data() + static_cast<std::size_t>(n) * plane;
      for (std::size_t i = 0; i < plane; ++i) gb[i] += g[i];
    });
  }
  return out;
}

// Stack N same-shape [C,H,W] images into a [N,C,H,W] batch.
template <typename T>
TensorT<T> stack_images(TapeT<T>& tape, const std::vector<TensorT<T>>& images) {
  CCAUG_CHECK(!images.empty(), "stack_images: empty input");
  const auto& shp = images[0].shape();
  CCAUG_CHECK(shp.size() == 3, "stack_images: expected rank-3 images");
  bool needs = false;
  for (const auto& img : images) {
    CCAUG_CHECK(img.shape() == shp, "stack_images: inconsistent image shapes");
    needs = needs || img.requires_grad();
  }
  const int n = static_cast<int>(images.size());
  const std::size_t plane = images[0].size();
  TensorT<T> out = tape.make({n, shp[0], shp[1], shp[2]}, needs);
  for (int i = 0; i < n; ++i)
    std::copy_n(images[static_cast<std::size_t>(i)].data(), plane,
                out.data() + static_cast<std::size_t>(i) * plane);
  tape.check_output(out, "stack_images");
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorStorageT<T>>> srcs;
    srcs.reserve(images.size());
    for (const auto& img : images) srcs.push_back(img.storage());
    tape.record([srcs = std::move(srcs), os = out.storage(), plane] {
      for (std::size_t i = 0; i < srcs.size(); ++i) {
        if (!detail::wants_grad(srcs[i])) continue;
        detail::ensure_grad(srcs[i]);
        const T* g = os->grad.data() + i * plane;
        T* gi = srcs[i]->grad.data();
        for (std::size_t p = 0; p < plane; ++p) gi[p] += g[p];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Neural-network operations
// ---------------------------------------------------------------------------

// out[n,o] = sum_f x[n,f] * w[f,o] + b[o]
template <typename T>
TensorT<T> linear(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& w,
                  const TensorT<T>& b) {
  CCAUG_CHECK(x.rank() == 2 && w.rank() == 2 && b.rank() == 1,
              "linear: expected x[N,F], w[F,O], b[O]");
  const int n = x.dim(0), f = x.dim(1), o = w.dim(1);
  CCAUG_CHECK(w.dim(0) == f, "linear: inner dimensions disagree (" + std::to_string(f) +
                                 " vs " + std::to_string(w.dim(0)) + ")");
  CCAUG_CHECK(b.dim(0) == o, "linear: bias length does not match output width");
  const bool needs = x.requires_grad() || w.requires_grad() || b.requires_grad();
  TensorT<T> out = tape.make({n, o}, needs);
  const T* px = x.data();
  const T* pw = w.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int i = 0; i < n; ++i) {
    T* orow = po + static_cast<std::size_t>(i) * o;
    for (int j = 0; j < o; ++j) orow[j] = pb[j];
    const T* xrow = px + static_cast<std::size_t>(i) * f;
    for (int k = 0; k < f; ++k) {
      const T xv = xrow[k];
      const T* wrow = pw + static_cast<std::size_t>(k) * o;
      for (int j = 0; j < o; ++j) orow[j] += xv * wrow[j];
    }
  }
  tape.check_output(out, "linear");
  if (needs) {
    tape.record([xs = x.storage(), ws = w.storage(), bs = b.storage(), os = out.storage(),
                 n, f, o] {
      const T* g = os->grad.data();
      const T* px2 = xs->data.data();
      const T* pw2 = ws->data.data();
      if (detail::wants_grad(xs)) {
        detail::ensure_grad(xs);
        T* gx = xs->grad.data();
        for (int i = 0; i < n; ++i) {
          const T* grow = g + static_cast<std::size_t>(i) * o;
          T* gxrow = gx + static_cast<std::size_t>(i) * f;
          for (int k = 0; k < f; ++k) {
            const T* wrow = pw2 + static_cast<std::size_t>(k) * o;
            T acc = 0;
            for (int j = 0; j < o; ++j) acc += wrow[j] * grow[j];
            gxrow[k] += acc;
          }
        }
      }
      if (detail::wants_grad(ws)) {
        detail::ensure_grad(ws);
        T* gw = ws->grad.data();
        for (int i = 0; i < n; ++i) {
          const T* grow = g + static_cast<std::size_t>(i) * o;
          const T* xrow = px2 + static_cast<std::size_t>(i) * f;
          for (int k = 0; k < f; ++k) {
            const T xv = xrow[k];
            T* gwrow = gw + static_cast<std::size_t>(k) * o;
            for (int j = 0; j < o; ++j) gwrow[j] += xv * grow[j];
          }
        }
      }
      if (detail::wants_grad(bs)) {
        detail::ensure_grad(bs);
        T* gb = bs->grad.data();
        for (int i = 0; i < n; ++i) {
          const T* grow = g + static_cast<std::size_t>(i) * o;
          for (int j = 0; j < o; ++j) gb[j] += grow[j];
        }
      }
    });
  }
  return out;
}

namespace detail {

inline int floor_div(int a, int b) {  // b > 0
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline int ceil_div(int a, int b) { return -floor_div(-a, b); }

}  // namespace detail

// Cross-correlation with zero padding: x[N,C,H,W] * k[O,C,kh,kw] -> [N,O,H',W'].
template <typename T>
TensorT<T> conv2d(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& kernel,
                  int stride, int pad) {
  CCAUG_CHECK(x.rank() == 4 && kernel.rank() == 4, "conv2d: expected x[N,C,H,W], k[O,C,kh,kw]");
  CCAUG_CHECK(stride >= 1, "conv2d: stride must be positive");
  CCAUG_CHECK(pad >= 0, "conv2d: pad must be non-negative");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oc = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  CCAUG_CHECK(kernel.dim(1) == c, "conv2d: kernel channel count does not match input");
  CCAUG_CHECK(kh <= h + 2 * pad && kw <= w + 2 * pad, "conv2d: kernel larger than padded input");
  CCAUG_CHECK((h + 2 * pad - kh) % stride == 0 && (w + 2 * pad - kw) % stride == 0,
              "conv2d: output size is not integral for stride " + std::to_string(stride));
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  const bool needs = x.requires_grad() || kernel.requires_grad();
  TensorT<T> out = tape.make({n, oc, oh, ow}, needs);

  const T* px = x.data();
  const T* pk = kernel.data();
  T* po = out.data();
  const std::size_t x_img = static_cast<std::size_t>(c) * h * w;
  const std::size_t o_img = static_cast<std::size_t>(oc) * oh * ow;
  const std::size_t k_oc = static_cast<std::size_t>(c) * kh * kw;

  // Valid output ranges per kernel offset, hoisted out of the pixel loops so
  // the inner loop runs bound-check free and vectorizes. Captures by value:
  // the backward closure outlives this call.
  auto oi_range = [stride, pad](int ki, int size, int osize) {
    int lo = std::max(0, detail::ceil_div(pad - ki, stride));
    int hi = std::min(osize, detail::floor_div(size - 1 - ki + pad, stride) + 1);
    return std::pair<int, int>(lo, hi);
  };

  for (int in = 0; in < n; ++in) {
    const T* ximg = px + in * x_img;
    T* oimg = po + in * o_img;
    for (int io = 0; io < oc; ++io) {
      T* oplane = oimg + static_cast<std::size_t>(io) * oh * ow;
      const T* kplane = pk + io * k_oc;
      for (int ic = 0; ic < c; ++ic) {
        const T* xplane = ximg + static_cast<std::size_t>(ic) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
          auto [r_lo, r_hi] = oi_range(ki, h, oh);
          for (int kj = 0; kj < kw; ++kj) {
            const T kv = kplane[static_cast<std::size_t>(ic) * kh * kw + ki * kw + kj];
            auto [c_lo, c_hi] = oi_range(kj, w, ow);
            for (int oi = r_lo; oi < r_hi; ++oi) {
              const T* xrow = xplane + static_cast<std::size_t>(oi * stride + ki - pad) * w;
              T* orow = oplane + static_cast<std::size_t>(oi) * ow;
              if (stride == 1) {
                const T* xr = xrow + (c_lo + kj - pad);
                for (int oj = c_lo; oj < c_hi; ++oj) orow[oj] += kv * xr[oj - c_lo];
              } else {
                for (int oj = c_lo; oj < c_hi; ++oj)
                  orow[oj] += kv * xrow[oj * stride + kj - pad];
              }
            }
          }
        }
      }
    }
  }
  tape.check_output(out, "conv2d");

  if (needs) {
    tape.record([xs = x.storage(), ks = kernel.storage(), os = out.storage(), n, c, h, w,
                 oc, kh, kw, oh, ow, stride, pad, x_img, o_img, k_oc, oi_range] {
      const T* g = os->grad.data();
      const T* px2 = xs->data.data();
      const T* pk2 = ks->data.data();
      if (detail::wants_grad(xs)) {
        detail::ensure_grad(xs);
        T* gx = xs->grad.data();
        for (int in = 0; in < n; ++in) {
          T* gximg = gx + in * x_img;
          const T* gimg = g + in * o_img;
          for (int io = 0; io < oc; ++io) {
            const T* gplane = gimg + static_cast<std::size_t>(io) * oh * ow;
            const T* kplane = pk2 + io * k_oc;
            for (int ic = 0; ic < c; ++ic) {
              T* gxplane = gximg + static_cast<std::size_t>(ic) * h * w;
              for (int ki = 0; ki < kh; ++ki) {
                auto [r_lo, r_hi] = oi_range(ki, h, oh);
                for (int kj = 0; kj < kw; ++kj) {
                  const T kv = kplane[static_cast<std::size_t>(ic) * kh * kw + ki * kw + kj];
                  auto [c_lo, c_hi] = oi_range(kj, w, ow);
                  for (int oi = r_lo; oi < r_hi; ++oi) {
                    T* gxrow = gxplane + static_cast<std::size_t>(oi * stride + ki - pad) * w;
                    const T* grow = gplane + static_cast<std::size_t>(oi) * ow;
                    if (stride == 1) {
                      T* gxr = gxrow + (c_lo + kj - pad);
                      for (int oj = c_lo; oj < c_hi; ++oj) gxr[oj - c_lo] += kv * grow[oj];
                    } else {
                      for (int oj = c_lo; oj < c_hi; ++oj)
                        gxrow[oj * stride + kj - pad] += kv * grow[oj];
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (detail::wants_grad(ks)) {
        detail::ensure_grad(ks);
        T* gk = ks->grad.data();
        for (int io = 0; io < oc; ++io) {
          T* gkoc = gk + io * k_oc;
          for (int ic = 0; ic < c; ++ic) {
            for (int ki = 0; ki < kh; ++ki) {
              auto [r_lo, r_hi] = oi_range(ki, h, oh);
              for (int kj = 0; kj < kw; ++kj) {
                auto [c_lo, c_hi] = oi_range(kj, w, ow);
                T acc = 0;
                for (int in = 0; in < n; ++in) {
                  const T* xplane = px2 + in * x_img + static_cast<std::size_t>(ic) * h * w;
                  const T* gplane =
                      g + in * o_img + static_cast<std::size_t>(io) * oh * ow;
                  for (int oi = r_lo; oi < r_hi; ++oi) {
                    const T* xrow = xplane + static_cast<std::size_t>(oi * stride + ki - pad) * w;
                    const T* grow = gplane + static_cast<std::size_t>(oi) * ow;
                    if (stride == 1) {
                      const T* xr = xrow + (c_lo + kj - pad);
                      T a0 = 0, a1 = 0;
                      int oj = c_lo;
                      for (; oj + 1 < c_hi; oj += 2) {
                        a0 += xr[oj - c_lo] * grow[oj];
                        a1 += xr[oj + 1 - c_lo] * grow[oj + 1];
                      }
                      if (oj < c_hi) a0 += xr[oj - c_lo] * grow[oj];
                      acc += a0 + a1;
                    } else {
                      for (int oj = c_lo; oj < c_hi; ++oj)
                        acc += xrow[oj * stride + kj - pad] * grow[oj];
                    }
                  }
                }
                gkoc[static_cast<std::size_t>(ic) * kh * kw + ki * kw + kj] += acc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// Per-channel bias for conv activations: x[N,C,H,W] + b[C].
template <typename T>
TensorT<T> add_channel_bias(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& b) {
  CCAUG_CHECK(x.rank() == 4 && b.rank() == 1, "add_channel_bias: expected x[N,C,H,W], b[C]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  CCAUG_CHECK(b.dim(0) == c, "add_channel_bias: bias length does not match channels");
  const bool needs = x.requires_grad() || b.requires_grad();
  TensorT<T> out = tape.make(x.shape(), needs);
  const T* px = x.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      const T bv = pb[ic];
      const std::size_t base = (static_cast<std::size_t>(in) * c + ic) * plane;
      for (std::size_t p = 0; p < plane; ++p) po[base + p] = px[base + p] + bv;
    }
  }
  tape.check_output(out, "add_channel_bias");
  if (needs) {
    tape.record([xs = x.storage(), bs = b.storage(), os = out.storage(), n, c, plane] {
      const T* g = os->grad.data();
      if (detail::wants_grad(xs)) {
        detail::ensure_grad(xs);
        T* gx = xs->grad.data();
        const std::size_t total = static_cast<std::size_t>(n) * c * plane;
        for (std::size_t i = 0; i < total; ++i) gx[i] += g[i];
      }
      if (detail::wants_grad(bs)) {
        detail::ensure_grad(bs);
        T* gb = bs->grad.data();
        for (int in = 0; in < n; ++in) {
          for (int ic = 0; ic < c; ++ic) {
            const std::size_t base = (static_cast<std::size_t>(in) * c + ic) * plane;
            T s = 0;
            for (std::size_t p = 0; p < plane; ++p) s += g[base + p];
            gb[ic] += s;
          }
        }
      }
    });
  }
  return out;
}

// 2x2 non-overlapping max pool. Gradient routes to the argmax position,
// first occurrence in row-major scan on ties.
template <typename T>
TensorT<T> maxpool2(TapeT<T>& tape, const TensorT<T>& x) {
  CCAUG_CHECK(x.rank() == 4, "maxpool2: expected x[N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  CCAUG_CHECK(h % 2 == 0 && w % 2 == 0, "maxpool2: height and width must be even");
  const int oh = h / 2, ow = w / 2;
  TensorT<T> out = tape.make({n, c, oh, ow}, x.requires_grad());
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
  const T* px = x.data();
  T* po = out.data();
  std::size_t oidx = 0;
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      const T* plane = px + (static_cast<std::size_t>(in) * c + ic) * h * w;
      for (int oi = 0; oi < oh; ++oi) {
        for (int oj = 0; oj < ow; ++oj, ++oidx) {
          const int i0 = oi * 2, j0 = oj * 2;
          int best = i0 * w + j0;
          T bv = plane[best];
          const int cands[3] = {i0 * w + j0 + 1, (i0 + 1) * w + j0, (i0 + 1) * w + j0 + 1};
          for (int cand : cands) {
            if (plane[cand] > bv) {
              bv = plane[cand];
              best = cand;
            }
          }
          po[oidx] = bv;
          (*argmax)[oidx] = static_cast<std::int32_t>(
              (static_cast<std::size_t>(in) * c + ic) * h * w + best);
        }
      }
    }
  }
  tape.check_output(out, "maxpool2");
  if (out.requires_grad()) {
    tape.record([xs = x.storage(), os = out.storage(), argmax] {
      detail::ensure_grad(xs);
      const T* g = os->grad.data();
      T* gx = xs->grad.data();
      for (std::size_t i = 0; i < argmax->size(); ++i)
        gx[static_cast<std::size_t>((*argmax)[i])] += g[i];
    });
  }
  return out;
}

// Mean over the spatial dimensions: x[N,C,H,W] -> [N,C].
template <typename T>
TensorT<T> global_avg_pool(TapeT<T>& tape, const TensorT<T>& x) {
  CCAUG_CHECK(x.rank() == 4, "global_avg_pool: expected x[N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  TensorT<T> out = tape.make({n, c}, x.requires_grad());
  const T* px = x.data();
  T* po = out.data();
  const T inv = T(1) / static_cast<T>(plane);
  for (int i = 0; i < n * c; ++i) {
    const T* p = px + static_cast<std::size_t>(i) * plane;
    T s = 0;
    for (std::size_t q = 0; q < plane; ++q) s += p[q];
    po[i] = s * inv;
  }
  tape.check_output(out, "global_avg_pool");
  if (out.requires_grad()) {
    tape.record([xs = x.storage(), os = out.storage(), n, c, plane, inv] {
      detail::ensure_grad(xs);
      const T* g = os->grad.data();
      T* gx = xs->grad.data();
      for (int i = 0; i < n * c; ++i) {
        const T gv = g[i] * inv;
        T* p = gx + static_cast<std::size_t>(i) * plane;
        for (std::size_t q = 0; q < plane; ++q) p[q] += gv;
      }
    });
  }
  return out;
}

// Row-wise log softmax with max subtraction for stability.
template <typename T>
TensorT<T> log_softmax(TapeT<T>& tape, const TensorT<T>& x) {
  CCAUG_CHECK(x.rank() == 2, "log_softmax: expected x[N,K]");
  const int n = x.dim(0), k = x.dim(1);
  CCAUG_CHECK(k >= 1, "log_softmax: K must be at least 1");
  CCAUG_CHECK(all_finite(x.values()), "log_softmax: non-finite input");
  TensorT<T> out = tape.make(x.shape(), x.requires_grad());
  const T* px = x.data();
  T* po = out.data();
  for (int i = 0; i < n; ++i) {
    const T* row = px + static_cast<std::size_t>(i) * k;
    T* orow = po + static_cast<std::size_t>(i) * k;
    T m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    T s = 0;
    for (int j = 0; j < k; ++j) s += std::exp(row[j] - m);
    const T lse = m + std::log(s);
    for (int j = 0; j < k; ++j) orow[j] = row[j] - lse;
  }
  tape.check_output(out, "log_softmax");
  if (out.requires_grad()) {
    tape.record([xs = x.storage(), os = out.storage(), n, k] {
      detail::ensure_grad(xs);
      const T* g = os->grad.data();
      const T* y = os->data.data();
      T* gx = xs->grad.data();
      for (int i = 0; i < n; ++i) {
        const T* grow = g + static_cast<std::size_t>(i) * k;
        const T* yrow = y + static_cast<std::size_t>(i) * k;
        T* gxrow = gx + static_cast<std::size_t>(i) * k;
        T gsum = 0;
        for (int j = 0; j < k; ++j) gsum += grow[j];
        for (int j = 0; j < k; ++j) gxrow[j] += grow[j] - std::exp(yrow[j]) * gsum;
      }
    });
  }
  return out;
}

// Mean negative log likelihood of the true classes.
template <typename T>
TensorT<T> nll_loss(TapeT<T>& tape, const TensorT<T>& logp, std::span<const int> labels) {
  CCAUG_CHECK(logp.rank() == 2, "nll_loss: expected logp[N,K]");
  const int n = logp.dim(0), k = logp.dim(1);
  CCAUG_CHECK(static_cast<int>(labels.size()) == n, "nll_loss: label count does not match batch");
  for (int i = 0; i < n; ++i)
    CCAUG_CHECK(labels[i] >= 0 && labels[i] < k,
                "nll_loss: label " + std::to_string(labels[i]) + " out of range");
  TensorT<T> out = tape.make({}, logp.requires_grad());
  const T* p = logp.data();
  T s = 0;
  for (int i = 0; i < n; ++i) s += p[static_cast<std::size_t>(i) * k + labels[i]];
  out.data()[0] = -s / static_cast<T>(n);
  tape.check_output(out, "nll_loss");
  if (out.requires_grad()) {
    std::vector<int> labels_copy(labels.begin(), labels.end());
    tape.record([ls = logp.storage(), os = out.storage(), labels_copy, n, k] {
      detail::ensure_grad(ls);
      const T g = os->grad[0];
      T* gl = ls->grad.data();
      const T scale = -g / static_cast<T>(n);
      for (int i = 0; i < n; ++i)
        gl[static_cast<std::size_t>(i) * k + labels_copy[i]] += scale;
    });
  }
  return out;
}

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

}  // namespace ccaug
