#pragma once

#include <span>
#include <vector>

#include "ccaug/diffaug.hpp"
#include "ccaug/rng.hpp"
#include "ccaug/tensor.hpp"

namespace ccaug {

// Per-class augmentation widths: a [d, K] matrix of raw parameters, one
// column per class, trained jointly with the network. K=1 degenerates to a
// single shared width vector (the non-class-conditional baseline).
template <typename T>
struct AugMatrixT {
  TensorT<T> raw;  // [d, K] leaf parameter
  TransformSpec spec;

  AugMatrixT(TensorT<T> raw_matrix, TransformSpec s) : raw(std::move(raw_matrix)), spec(std::move(s)) {
    CCAUG_CHECK(raw.rank() == 2, "AugMatrix: raw parameters must be [dims, classes]");
    CCAUG_CHECK(raw.dim(0) == spec.dims(), "AugMatrix: row count must match transform dims");
    CCAUG_CHECK(raw.dim(1) >= 1, "AugMatrix: needs at least one class column");
    CCAUG_CHECK(all_finite(raw.values()), "AugMatrix: non-finite raw parameter");
  }

  int dims() const { return raw.dim(0); }
  int num_classes() const { return raw.dim(1); }

  // The shared-width baseline (one column) serves every label.
  int column_for_label(int label) const {
    if (num_classes() == 1) return 0;
    CCAUG_CHECK(label >= 0 && label < num_classes(),
                "AugMatrix: class label " + std::to_string(label) + " out of range");
    return label;
  }

  // Default raw values: 0.1 for rotation rows (a small nonzero initial
  // width), 0.0 for brightness rows (0.15 effective width).
  static AugMatrixT init(const TransformSpec& spec, int num_classes) {
    std::vector<T> per_dim;
    for (TransformKind kind : spec.kinds)
      per_dim.push_back(kind == TransformKind::Rotation ? T(0.1) : T(0.0));
    return init(spec, num_classes, per_dim);
  }

  static AugMatrixT init(const TransformSpec& spec, int num_classes,
                         std::span<const T> per_dim_raw) {
    CCAUG_CHECK(num_classes >= 1, "AugMatrix: needs at least one class");
    CCAUG_CHECK(static_cast<int>(per_dim_raw.size()) == spec.dims(),
                "AugMatrix: one initial raw value per transform dim required");
    std::vector<T> values;
    values.reserve(static_cast<std::size_t>(spec.dims()) * num_classes);
    for (int j = 0; j < spec.dims(); ++j)
      for (int k = 0; k < num_classes; ++k)
        values.push_back(per_dim_raw[static_cast<std::size_t>(j)]);
    return AugMatrixT(TensorT<T>::param({spec.dims(), num_classes}, std::move(values)), spec);
  }

  // Effective widths of one column as plain numbers (history recording).
  std::vector<T> column_widths(int k) const {
    std::vector<T> out(static_cast<std::size_t>(dims()));
    for (int j = 0; j < dims(); ++j)
      out[static_cast<std::size_t>(j)] = effective_width_value(
          spec.kinds[static_cast<std::size_t>(j)],
          raw.values()[static_cast<std::size_t>(j) * num_classes() + k]);
    return out;
  }

  AugMatrixT clone() const { return AugMatrixT(raw.clone(), spec); }

  // Whole matrix of effective widths, row-major [dims, num_classes].
  std::vector<T> all_widths() const {
    std::vector<T> out(raw.size());
    for (int j = 0; j < dims(); ++j)
      for (int k = 0; k < num_classes(); ++k) {
        const auto idx = static_cast<std::size_t>(j) * num_classes() + k;
        out[idx] = effective_width_value(spec.kinds[static_cast<std::size_t>(j)],
                                         raw.values()[idx]);
      }
    return out;
  }
};

// Column of raw widths for a label, as tape nodes.
template <typename T>
TensorT<T> select_widths(TapeT<T>& tape, const AugMatrixT<T>& head, int label) {
  return column(tape, head.raw, head.column_for_label(label));
}

// -(reg_weight / K) * sum of squared raw entries, computed as
// -reg_weight * running_mean_k(column_sum_of_squares_k). The running-mean
// form returns exactly the common per-column value when all columns are
// identical, which makes the K-column head bitwise-consistent with the
// one-column baseline.
template <typename T>
TensorT<T> reg_penalty(TapeT<T>& tape, const AugMatrixT<T>& head, T reg_weight) {
  CCAUG_CHECK(reg_weight >= T(0), "reg_penalty: weight must be non-negative");
  const int d = head.dims();
  const int k = head.num_classes();
  TensorT<T> out = tape.make({}, head.raw.requires_grad());
  const T* m = head.raw.data();
  T mean = 0;
  for (int col = 0; col < k; ++col) {
    T colsum = 0;
    for (int j = 0; j < d; ++j) {
      const T v = m[static_cast<std::size_t>(j) * k + col];
      colsum += v * v;
    }
    mean += (colsum - mean) / T(col + 1);
  }
  out.data()[0] = -reg_weight * mean;
  tape.check_output(out, "reg_penalty");
  if (out.requires_grad()) {
    tape.record([ms = head.raw.storage(), os = out.storage(), reg_weight, k] {
      detail::ensure_grad(ms);
      const T g = os->grad[0];
      const T factor = g * T(-2) * reg_weight / T(k);
      const T* v = ms->data.data();
      T* gm = ms->grad.data();
      for (std::size_t i = 0; i < ms->data.size(); ++i) gm[i] += factor * v[i];
    });
  }
  return out;
}

// One drawn transform per item, each from its own label's column and its own
// RNG stream; gradients reach the width matrix through every item.
template <typename T>
TensorT<T> augment_training_batch(TapeT<T>& tape, const TensorT<T>& batch,
                                  std::span<const int> labels, const AugMatrixT<T>& head,
                                  std::span<RngStream> streams) {
  CCAUG_CHECK(batch.rank() == 4, "augment_training_batch: expected a [N,C,H,W] batch");
  const int n = batch.dim(0);
  CCAUG_CHECK(static_cast<int>(labels.size()) == n,
              "augment_training_batch: label count does not match batch");
  CCAUG_CHECK(static_cast<int>(streams.size()) == n,
              "augment_training_batch: one RNG stream per item required");
  std::vector<TensorT<T>> transformed;
  transformed.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto widths = select_widths(tape, head, labels[static_cast<std::size_t>(i)]);
    auto sample = sample_transform(tape, widths, head.spec, streams[static_cast<std::size_t>(i)]);
    auto image = slice_image(tape, batch, i);
    transformed.push_back(apply_sample(tape, image, sample, head.spec));
  }
  return stack_images(tape, transformed);
}

using AugMatrix = AugMatrixT<float>;

}  // namespace ccaug
