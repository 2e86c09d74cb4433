#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ccaug/rng.hpp"
#include "ccaug/tensor.hpp"

namespace ccaug {

// Differentiable image transforms and the reparameterized sampler. A concrete
// transform is drawn as g = width(raw) * u with noise u ~ U[-1,1]; the noise
// enters the tape as a constant, so backward yields dg/draw = u * dwidth/draw.

enum class TransformKind { Rotation, Brightness };

inline const char* transform_kind_name(TransformKind kind) {
  return kind == TransformKind::Rotation ? "rotation" : "brightness";
}

inline TransformKind transform_kind_from_name(const std::string& name) {
  if (name == "rotation") return TransformKind::Rotation;
  if (name == "brightness") return TransformKind::Brightness;
  fail("unknown transform kind: " + name);
}

// Raw parameter -> half-range of the uniform transform distribution.
// Rotation: |raw| radians. Brightness: 0.3 * sigmoid(raw) intensity units,
// hard-bounded below 0.3.
template <typename T>
T effective_width_value(TransformKind kind, T raw) {
  if (kind == TransformKind::Rotation) return std::abs(raw);
  T s;
  if (raw >= T(0)) {
    s = T(1) / (T(1) + std::exp(-raw));
  } else {
    const T e = std::exp(raw);
    s = e / (T(1) + e);
  }
  return T(0.3) * s;
}

template <typename T>
TensorT<T> effective_width(TapeT<T>& tape, TransformKind kind, const TensorT<T>& raw) {
  CCAUG_CHECK(raw.size() == 1, "effective_width: raw parameter must be scalar");
  if (kind == TransformKind::Rotation) return abs_value(tape, raw);
  return scale(tape, sigmoid(tape, raw), T(0.3));
}

// Ordered list of transform dimensions. Kinds are distinct; when both are
// present the canonical order is rotation first, then brightness, so that a
// sample's composition order is deterministic.
struct TransformSpec {
  std::vector<TransformKind> kinds;

  explicit TransformSpec(std::vector<TransformKind> ks) : kinds(std::move(ks)) {
    CCAUG_CHECK(!kinds.empty(), "TransformSpec: needs at least one transform kind");
    CCAUG_CHECK(kinds.size() <= 2, "TransformSpec: duplicate transform kinds");
    if (kinds.size() == 2) {
      CCAUG_CHECK(kinds[0] != kinds[1], "TransformSpec: duplicate transform kinds");
      CCAUG_CHECK(kinds[0] == TransformKind::Rotation,
                  "TransformSpec: rotation must precede brightness");
    }
  }

  static TransformSpec rotation() { return TransformSpec({TransformKind::Rotation}); }
  static TransformSpec brightness() { return TransformSpec({TransformKind::Brightness}); }
  static TransformSpec rotation_brightness() {
    return TransformSpec({TransformKind::Rotation, TransformKind::Brightness});
  }

  int dims() const { return static_cast<int>(kinds.size()); }
};

// One concrete drawn transform: per-dimension tape nodes g[j] plus the raw
// noise values that produced them (kept for audit).
template <typename T>
struct TransformSampleT {
  std::vector<TensorT<T>> values;
  std::vector<T> noise;
};

// Draw a transform with explicit noise values, one per dimension. The
// gradient-check path and the degenerate "identity transform" case use this.
template <typename T>
TransformSampleT<T> sample_transform(TapeT<T>& tape, const TensorT<T>& raw_widths,
                                     const TransformSpec& spec, std::span<const T> noise) {
  CCAUG_CHECK(raw_widths.rank() == 1 && raw_widths.dim(0) == spec.dims(),
              "sample_transform: raw parameter count does not match spec");
  CCAUG_CHECK(static_cast<int>(noise.size()) == spec.dims(),
              "sample_transform: noise count does not match spec");
  TransformSampleT<T> sample;
  sample.noise.assign(noise.begin(), noise.end());
  for (int j = 0; j < spec.dims(); ++j) {
    auto width = effective_width(tape, spec.kinds[static_cast<std::size_t>(j)],
                                 index(tape, raw_widths, j));
    sample.values.push_back(mul(tape, width, TensorT<T>::scalar(noise[static_cast<std::size_t>(j)])));
  }
  return sample;
}

template <typename T>
TransformSampleT<T> sample_transform(TapeT<T>& tape, const TensorT<T>& raw_widths,
                                     const TransformSpec& spec, RngStream& rng) {
  std::vector<T> noise(static_cast<std::size_t>(spec.dims()));
  for (auto& e : noise) e = static_cast<T>(rng.next_symmetric());
  return sample_transform(tape, raw_widths, spec, std::span<const T>(noise));
}

namespace detail {

// Inverse-mapped bilinear rotation about the image center, zero padding
// outside. Grid arithmetic stays in pixel units relative to the center, so
// angle 0 reproduces the input bitwise and quarter turns hit pixel centers.
template <typename T>
void rotate_forward(const T* src, T* dst, int c, int h, int w, T angle) {
  const T cy = T(h - 1) / T(2);
  const T cx = T(w - 1) / T(2);
  const T cos_a = std::cos(angle);
  const T sin_a = std::sin(angle);
  for (int i = 0; i < h; ++i) {
    const T dy = T(i) - cy;
    for (int j = 0; j < w; ++j) {
      const T dx = T(j) - cx;
      const T sx = cos_a * dx + sin_a * dy + cx;
      const T sy = cos_a * dy - sin_a * dx + cy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const T fx = sx - T(x0);
      const T fy = sy - T(y0);
      const bool x0_in = x0 >= 0 && x0 < w;
      const bool x1_in = x0 + 1 >= 0 && x0 + 1 < w;
      const bool y0_in = y0 >= 0 && y0 < h;
      const bool y1_in = y0 + 1 >= 0 && y0 + 1 < h;
      for (int ic = 0; ic < c; ++ic) {
        const T* plane = src + static_cast<std::size_t>(ic) * h * w;
        const T p00 = (y0_in && x0_in) ? plane[y0 * w + x0] : T(0);
        const T p01 = (y0_in && x1_in) ? plane[y0 * w + x0 + 1] : T(0);
        const T p10 = (y1_in && x0_in) ? plane[(y0 + 1) * w + x0] : T(0);
        const T p11 = (y1_in && x1_in) ? plane[(y0 + 1) * w + x0 + 1] : T(0);
        dst[(static_cast<std::size_t>(ic) * h + i) * w + j] =
            (T(1) - fy) * ((T(1) - fx) * p00 + fx * p01) +
            fy * ((T(1) - fx) * p10 + fx * p11);
      }
    }
  }
}

}  // namespace detail

// Rotate a square [C,H,W] image by `angle` radians about its center,
// differentiable with respect to both the image and the angle.
template <typename T>
TensorT<T> affine_rotate(TapeT<T>& tape, const TensorT<T>& image, const TensorT<T>& angle) {
  CCAUG_CHECK(image.rank() == 3, "affine_rotate: expected a [C,H,W] image");
  CCAUG_CHECK(image.dim(1) == image.dim(2), "affine_rotate: image must be square");
  CCAUG_CHECK(angle.size() == 1, "affine_rotate: angle must be scalar");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const bool needs = image.requires_grad() || angle.requires_grad();
  TensorT<T> out = tape.make(image.shape(), needs);
  detail::rotate_forward(image.data(), out.data(), c, h, w, angle.item());
  tape.check_output(out, "affine_rotate");
  if (needs) {
    tape.record([is = image.storage(), as = angle.storage(), os = out.storage(), c, h, w] {
      const T a = as->data[0];
      const T cy = T(h - 1) / T(2);
      const T cx = T(w - 1) / T(2);
      const T cos_a = std::cos(a);
      const T sin_a = std::sin(a);
      const bool want_img = detail::wants_grad(is);
      const bool want_angle = detail::wants_grad(as);
      if (want_img) detail::ensure_grad(is);
      if (want_angle) detail::ensure_grad(as);
      const T* src = is->data.data();
      const T* g = os->grad.data();
      T angle_grad = 0;
      for (int i = 0; i < h; ++i) {
        const T dy = T(i) - cy;
        for (int j = 0; j < w; ++j) {
          const T dx = T(j) - cx;
          const T sx = cos_a * dx + sin_a * dy + cx;
          const T sy = cos_a * dy - sin_a * dx + cy;
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          const T fx = sx - T(x0);
          const T fy = sy - T(y0);
          const bool x0_in = x0 >= 0 && x0 < w;
          const bool x1_in = x0 + 1 >= 0 && x0 + 1 < w;
          const bool y0_in = y0 >= 0 && y0 < h;
          const bool y1_in = y0 + 1 >= 0 && y0 + 1 < h;
          const T dsx_da = -sin_a * dx + cos_a * dy;
          const T dsy_da = -sin_a * dy - cos_a * dx;
          for (int ic = 0; ic < c; ++ic) {
            const T go = g[(static_cast<std::size_t>(ic) * h + i) * w + j];
            if (go == T(0)) continue;
            const T* plane = src + static_cast<std::size_t>(ic) * h * w;
            const T p00 = (y0_in && x0_in) ? plane[y0 * w + x0] : T(0);
            const T p01 = (y0_in && x1_in) ? plane[y0 * w + x0 + 1] : T(0);
            const T p10 = (y1_in && x0_in) ? plane[(y0 + 1) * w + x0] : T(0);
            const T p11 = (y1_in && x1_in) ? plane[(y0 + 1) * w + x0 + 1] : T(0);
            if (want_img) {
              T* gplane = is->grad.data() + static_cast<std::size_t>(ic) * h * w;
              if (y0_in && x0_in) gplane[y0 * w + x0] += go * (T(1) - fy) * (T(1) - fx);
              if (y0_in && x1_in) gplane[y0 * w + x0 + 1] += go * (T(1) - fy) * fx;
              if (y1_in && x0_in) gplane[(y0 + 1) * w + x0] += go * fy * (T(1) - fx);
              if (y1_in && x1_in) gplane[(y0 + 1) * w + x0 + 1] += go * fy * fx;
            }
            if (want_angle) {
              const T dv_dsx = (T(1) - fy) * (p01 - p00) + fy * (p11 - p10);
              const T dv_dsy = (T(1) - fx) * (p10 - p00) + fx * (p11 - p01);
              angle_grad += go * (dv_dsx * dsx_da + dv_dsy * dsy_da);
            }
          }
        }
      }
      if (want_angle) as->grad[0] += angle_grad;
    });
  }
  return out;
}

// Rotation outside a tape, shared by the dataset corruption pipeline.
template <typename T>
std::vector<T> rotate_image(std::span<const T> pixels, int c, int h, int w, T angle) {
  CCAUG_CHECK(h == w, "rotate_image: image must be square");
  CCAUG_CHECK(pixels.size() == static_cast<std::size_t>(c) * h * w,
              "rotate_image: pixel count does not match dimensions");
  std::vector<T> out(pixels.size());
  detail::rotate_forward(pixels.data(), out.data(), c, h, w, angle);
  return out;
}

// Add `shift` to every channel and pixel, clamped to [0,1]. Expects image
// values already in [0,1]; the gradient to shift passes through exactly the
// pixels that did not clamp.
template <typename T>
TensorT<T> brightness_shift(TapeT<T>& tape, const TensorT<T>& image, const TensorT<T>& shift) {
  CCAUG_CHECK(shift.size() == 1, "brightness_shift: shift must be scalar");
  return clamp01(tape, add(tape, image, shift));
}

// Apply each drawn transform dimension in spec order.
template <typename T>
TensorT<T> apply_sample(TapeT<T>& tape, const TensorT<T>& image,
                        const TransformSampleT<T>& sample, const TransformSpec& spec) {
  CCAUG_CHECK(sample.values.size() == static_cast<std::size_t>(spec.dims()),
              "apply_sample: sample does not match spec");
  TensorT<T> cur = image;
  for (int j = 0; j < spec.dims(); ++j) {
    switch (spec.kinds[static_cast<std::size_t>(j)]) {
      case TransformKind::Rotation:
        cur = affine_rotate(tape, cur, sample.values[static_cast<std::size_t>(j)]);
        break;
      case TransformKind::Brightness:
        cur = brightness_shift(tape, cur, sample.values[static_cast<std::size_t>(j)]);
        break;
    }
  }
  return cur;
}

}  // namespace ccaug
