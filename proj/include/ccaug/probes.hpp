#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccaug/data.hpp"
#include "ccaug/head.hpp"
#include "ccaug/network.hpp"
#include "ccaug/rng.hpp"

namespace ccaug {

// How per-copy log-probability vectors are combined into one prediction.
// The choice only matters near ties; log-space is the default everywhere.
enum class AverageSpace { LogProbs, Probs };

// Class-conditional test-time prediction for one [C,H,W] image. First a
// plain forward pass on the untransformed input picks a class; then
// n_copies transforms drawn from that class's width column are applied and
// the per-copy log-probability vectors are averaged. The result is a length
// num_classes vector of averaged log-probabilities; its exponentials need
// not sum to 1. The stream is consumed only by the transform draws.
std::vector<float> predict(const Tensor& image, const NetworkWeights& weights,
                           const AugMatrix& head, int n_copies, RngStream& stream,
                           AverageSpace space = AverageSpace::LogProbs);

// Single-distribution baseline: every input uses the same raw width vector
// (one value per transform dimension), no class selection pass.
std::vector<float> predict_shared(const Tensor& image, const NetworkWeights& weights,
                                  const TransformSpec& spec, std::span<const float> raw,
                                  int n_copies, RngStream& stream,
                                  AverageSpace space = AverageSpace::LogProbs);

// One sweep curve: metric values over a grid of sweep positions, tagged
// with the model identifier and an optional class filter.
struct SweepResult {
  std::vector<float> sweep_values;  // strictly increasing grid
  std::vector<float> metrics;       // one value in [0,1] per grid point
  std::string model;                // "cc" or "shared"
  std::string class_filter;         // empty when the metric covers all classes
};

// Probability assigned to target_class as the input image is rotated
// through n_points angles spanning [-pi, pi] inclusive. Each grid point
// rotates the original image once and runs predict on the result; every
// point reuses the same draw sequence so the curve is deterministic given
// (weights, head, seed).
SweepResult orientation_sweep(const NetworkWeights& weights, const AugMatrix& head,
                              const Tensor& image, int target_class, int n_copies,
                              std::uint64_t seed, int n_points = 32);
SweepResult orientation_sweep_shared(const NetworkWeights& weights, const TransformSpec& spec,
                                     std::span<const float> raw, const Tensor& image,
                                     int target_class, int n_copies, std::uint64_t seed,
                                     int n_points = 32);

// Accuracy as the whole test set is brightness-shifted through n_points
// shifts spanning [-0.3, 0.3] inclusive (shift added to every pixel, then
// clamped to [0,1]).
SweepResult brightness_sweep(const NetworkWeights& weights, const AugMatrix& head,
                             const Dataset& test, int n_copies, std::uint64_t seed,
                             int n_points = 31);
SweepResult brightness_sweep_shared(const NetworkWeights& weights, const TransformSpec& spec,
                                    std::span<const float> raw, const Dataset& test,
                                    int n_copies, std::uint64_t seed, int n_points = 31);

// Test-set accuracy broken down by true class. Classes absent from the set
// report accuracy 0 with total 0.
struct AccuracyReport {
  double overall = 0.0;
  std::vector<double> per_class;
  std::vector<int> per_class_total;
};

// Fraction of items whose predicted class matches the label. Every item
// reuses the same transform draw sequence, so the result does not depend on
// the order of the items.
AccuracyReport evaluate_report(const NetworkWeights& weights, const AugMatrix& head,
                               const Dataset& test, int n_copies, std::uint64_t seed);
double evaluate_accuracy(const NetworkWeights& weights, const AugMatrix& head,
                         const Dataset& test, int n_copies, std::uint64_t seed);

// CSV with columns sweep_value,metric,model,class_filter; one row per grid
// point of each result, floats printed with %.9g.
std::string sweep_csv(std::span<const SweepResult> results);

}  // namespace ccaug
