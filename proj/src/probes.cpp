#include "ccaug/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ccaug/check.hpp"
#include "ccaug/diffaug.hpp"
#include "ccaug/tensor.hpp"

namespace ccaug {
namespace {

// Evenly spaced grid with both endpoints exact.
std::vector<float> linspace(double lo, double hi, int n) {
  CCAUG_CHECK(n >= 2, "linspace: need at least two grid points");
  std::vector<float> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        static_cast<float>(lo + (hi - lo) * (static_cast<double>(i) / (n - 1)));
  out.front() = static_cast<float>(lo);
  out.back() = static_cast<float>(hi);
  for (int i = 1; i < n; ++i)
    CCAUG_CHECK(out[static_cast<std::size_t>(i - 1)] < out[static_cast<std::size_t>(i)],
                "linspace: grid not strictly increasing");
  return out;
}

int argmax_row(std::span<const float> row) {
  CCAUG_CHECK(!row.empty(), "argmax: empty row");
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Log-probabilities of one untransformed image, plus the implied class.
std::vector<float> plain_forward(const Tensor& image, const NetworkWeights& weights) {
  Tape tape;
  auto batch = stack_images(tape, {image});
  auto logp = forward(tape, batch, weights);
  return {logp.values().begin(), logp.values().end()};
}

// n_copies transformed forwards through one width column, averaged. Copies
// are stacked into a single batch; rows are independent, so each row equals
// the corresponding single-image forward bitwise.
std::vector<float> averaged_copies(const Tensor& image, const NetworkWeights& weights,
                                   const AugMatrix& head, int column_label, int n_copies,
                                   RngStream& stream, AverageSpace space) {
  Tape tape;
  std::vector<Tensor> copies;
  copies.reserve(static_cast<std::size_t>(n_copies));
  for (int c = 0; c < n_copies; ++c) {
    auto widths = select_widths(tape, head, column_label);
    auto sample = sample_transform(tape, widths, head.spec, stream);
    copies.push_back(apply_sample(tape, image, sample, head.spec));
  }
  auto logp = forward(tape, stack_images(tape, copies), weights);
  const auto v = logp.values();
  const auto k = static_cast<std::size_t>(logp.dim(1));

  // Double accumulation keeps the average of identical rows exactly equal
  // to one row, for any copy count.
  std::vector<float> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    double acc = 0.0;
    for (int c = 0; c < n_copies; ++c) {
      const double lp = v[static_cast<std::size_t>(c) * k + j];
      acc += space == AverageSpace::LogProbs ? lp : std::exp(lp);
    }
    acc /= n_copies;
    out[j] = static_cast<float>(space == AverageSpace::LogProbs ? acc : std::log(acc));
  }
  return out;
}

void check_image(const Tensor& image) {
  CCAUG_CHECK(image.rank() == 3, "predict: image must be [channels, height, width]");
}

Tensor shifted_image(const Dataset& ds, std::size_t item, float shift) {
  std::vector<float> px = ds.items[item].pixels;
  for (auto& p : px) p = std::clamp(p + shift, 0.0f, 1.0f);
  return Tensor::from_data({ds.channels, ds.height, ds.width}, std::move(px));
}

// Accuracy of predict over a test set at one brightness shift. Every item
// gets an identically keyed stream: the draws depend only on the seed, so
// the result is invariant to item order.
float shifted_accuracy(const NetworkWeights& weights, const AugMatrix& head,
                       const Dataset& test, float shift, int n_copies, std::uint64_t seed) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.items.size(); ++i) {
    RngStream stream(seed, 0, 0, stream_tag::predict);
    auto logp = predict(shifted_image(test, i, shift), weights, head, n_copies, stream);
    if (argmax_row(logp) == test.items[i].label) ++correct;
  }
  return static_cast<float>(static_cast<double>(correct) /
                            static_cast<double>(test.items.size()));
}

AugMatrix shared_head(const TransformSpec& spec, std::span<const float> raw) {
  return AugMatrix::init(spec, 1, raw);
}

SweepResult orientation_sweep_impl(const NetworkWeights& weights, const AugMatrix& head,
                                   const Tensor& image, int target_class, int n_copies,
                                   std::uint64_t seed, int n_points, std::string model) {
  check_image(image);
  CCAUG_CHECK(target_class >= 0 && target_class < weights.fc_bias.dim(0),
              "orientation_sweep: target class out of range");
  SweepResult res;
  res.sweep_values = linspace(-M_PI, M_PI, n_points);
  res.model = std::move(model);
  res.class_filter = std::to_string(target_class);
  const int c = image.dim(0);
  const int h = image.dim(1);
  const int w = image.dim(2);
  for (float angle : res.sweep_values) {
    auto rotated = Tensor::from_data({c, h, w}, rotate_image(image.values(), c, h, w, angle));
    RngStream stream(seed, 0, 0, stream_tag::predict);
    auto logp = predict(rotated, weights, head, n_copies, stream);
    res.metrics.push_back(std::exp(logp[static_cast<std::size_t>(target_class)]));
  }
  return res;
}

SweepResult brightness_sweep_impl(const NetworkWeights& weights, const AugMatrix& head,
                                  const Dataset& test, int n_copies, std::uint64_t seed,
                                  int n_points, std::string model) {
  CCAUG_CHECK(!test.items.empty(), "brightness_sweep: empty test set");
  SweepResult res;
  res.sweep_values = linspace(-0.3, 0.3, n_points);
  res.model = std::move(model);
  for (float shift : res.sweep_values)
    res.metrics.push_back(shifted_accuracy(weights, head, test, shift, n_copies, seed));
  return res;
}

void append_float(std::string& out, float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  out += buf;
}

}  // namespace

std::vector<float> predict(const Tensor& image, const NetworkWeights& weights,
                           const AugMatrix& head, int n_copies, RngStream& stream,
                           AverageSpace space) {
  check_image(image);
  CCAUG_CHECK(n_copies >= 1, "predict: n_copies must be positive");
  const int chosen = argmax_row(plain_forward(image, weights));
  return averaged_copies(image, weights, head, chosen, n_copies, stream, space);
}

std::vector<float> predict_shared(const Tensor& image, const NetworkWeights& weights,
                                  const TransformSpec& spec, std::span<const float> raw,
                                  int n_copies, RngStream& stream, AverageSpace space) {
  check_image(image);
  CCAUG_CHECK(n_copies >= 1, "predict_shared: n_copies must be positive");
  return averaged_copies(image, weights, shared_head(spec, raw), 0, n_copies, stream, space);
}

SweepResult orientation_sweep(const NetworkWeights& weights, const AugMatrix& head,
                              const Tensor& image, int target_class, int n_copies,
                              std::uint64_t seed, int n_points) {
  return orientation_sweep_impl(weights, head, image, target_class, n_copies, seed,
                                n_points, "cc");
}

SweepResult orientation_sweep_shared(const NetworkWeights& weights, const TransformSpec& spec,
                                     std::span<const float> raw, const Tensor& image,
                                     int target_class, int n_copies, std::uint64_t seed,
                                     int n_points) {
  return orientation_sweep_impl(weights, shared_head(spec, raw), image, target_class,
                                n_copies, seed, n_points, "shared");
}

SweepResult brightness_sweep(const NetworkWeights& weights, const AugMatrix& head,
                             const Dataset& test, int n_copies, std::uint64_t seed,
                             int n_points) {
  return brightness_sweep_impl(weights, head, test, n_copies, seed, n_points, "cc");
}

SweepResult brightness_sweep_shared(const NetworkWeights& weights, const TransformSpec& spec,
                                    std::span<const float> raw, const Dataset& test,
                                    int n_copies, std::uint64_t seed, int n_points) {
  return brightness_sweep_impl(weights, shared_head(spec, raw), test, n_copies, seed,
                               n_points, "shared");
}

AccuracyReport evaluate_report(const NetworkWeights& weights, const AugMatrix& head,
                               const Dataset& test, int n_copies, std::uint64_t seed) {
  CCAUG_CHECK(!test.items.empty(), "evaluate_report: empty test set");
  const int num_classes = weights.fc_bias.dim(0);
  AccuracyReport rep;
  rep.per_class.assign(static_cast<std::size_t>(num_classes), 0.0);
  rep.per_class_total.assign(static_cast<std::size_t>(num_classes), 0);
  std::vector<int> per_class_correct(static_cast<std::size_t>(num_classes), 0);
  std::size_t correct = 0;
  for (const auto& item : test.items) {
    CCAUG_CHECK(item.label >= 0 && item.label < num_classes,
                "evaluate_report: label out of range");
    auto image = Tensor::from_data({test.channels, test.height, test.width}, item.pixels);
    RngStream stream(seed, 0, 0, stream_tag::predict);
    auto logp = predict(image, weights, head, n_copies, stream);
    const auto lbl = static_cast<std::size_t>(item.label);
    ++rep.per_class_total[lbl];
    if (argmax_row(logp) == item.label) {
      ++correct;
      ++per_class_correct[lbl];
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (rep.per_class_total[ku] > 0)
      rep.per_class[ku] = static_cast<double>(per_class_correct[ku]) / rep.per_class_total[ku];
  }
  rep.overall = static_cast<double>(correct) / static_cast<double>(test.items.size());
  return rep;
}

double evaluate_accuracy(const NetworkWeights& weights, const AugMatrix& head,
                         const Dataset& test, int n_copies, std::uint64_t seed) {
  return evaluate_report(weights, head, test, n_copies, seed).overall;
}

std::string sweep_csv(std::span<const SweepResult> results) {
  std::string out = "sweep_value,metric,model,class_filter\n";
  for (const auto& res : results) {
    CCAUG_CHECK(res.sweep_values.size() == res.metrics.size(),
                "sweep_csv: grid and metric counts differ");
    for (std::size_t i = 0; i < res.sweep_values.size(); ++i) {
      append_float(out, res.sweep_values[i]);
      out += ',';
      append_float(out, res.metrics[i]);
      out += ',';
      out += res.model;
      out += ',';
      out += res.class_filter;
      out += '\n';
    }
  }
  return out;
}

}  // namespace ccaug
