#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ccaug/data.hpp"
#include "ccaug/head.hpp"
#include "ccaug/network.hpp"

namespace ccaug {

struct TrainConfig {
  float reg_weight = 0.05f;     // width-encouraging penalty weight
  float learning_rate = 1e-3f;
  float weight_decay = 1e-4f;   // network parameters only, never the width matrix
  int epochs = 10;
  int batch_size = 128;
  int test_copies = 4;          // transformed copies averaged at test time
  std::uint64_t seed = 0;

  void validate() const {
    CCAUG_CHECK(reg_weight >= 0.0f, "TrainConfig: reg_weight must be non-negative");
    CCAUG_CHECK(learning_rate > 0.0f, "TrainConfig: learning_rate must be positive");
    CCAUG_CHECK(weight_decay >= 0.0f, "TrainConfig: weight_decay must be non-negative");
    CCAUG_CHECK(epochs >= 0, "TrainConfig: epochs must be non-negative");
    CCAUG_CHECK(batch_size >= 1, "TrainConfig: batch_size must be positive");
    CCAUG_CHECK(test_copies >= 1, "TrainConfig: test_copies must be positive");
  }

  bool operator==(const TrainConfig&) const = default;
};

// Adam moment buffers for one parameter group. Slots are created lazily on
// the first step and then must keep matching the group.
template <typename T>
struct AdamStateT {
  struct Slot {
    std::vector<T> m;
    std::vector<T> v;
  };
  std::vector<Slot> slots;
  std::int64_t step_count = 0;
};

using AdamState = AdamStateT<float>;

// One bias-corrected Adam update over a parameter group. Gradients are read
// from each tensor's grad buffer; weight decay is folded into the gradient
// (coupled L2 style). The numerical-stability term is added outside the
// square root, so a fresh state's first step moves each entry by exactly
// learning_rate against its gradient sign (up to the tiny eps).
template <typename T>
void adam_step(std::span<TensorT<T>> params, AdamStateT<T>& state, T learning_rate,
               T weight_decay) {
  constexpr T beta1 = T(0.9);
  constexpr T beta2 = T(0.999);
  constexpr T eps = T(1e-8);

  if (state.slots.empty() && !params.empty()) {
    state.slots.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.slots[p].m.assign(params[p].size(), T(0));
      state.slots[p].v.assign(params[p].size(), T(0));
    }
  }
  CCAUG_CHECK(state.slots.size() == params.size(),
              "adam_step: state does not match the parameter group");

  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), t));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), t));

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    CCAUG_CHECK(param.requires_grad(), "adam_step: parameter does not carry gradients");
    auto& slot = state.slots[p];
    CCAUG_CHECK(slot.m.size() == param.size(), "adam_step: moment shape mismatch");
    auto val = param.values_mut();
    const T* gr = param.grad();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const T g = gr[i] + weight_decay * val[i];
      slot.m[i] = beta1 * slot.m[i] + (T(1) - beta1) * g;
      slot.v[i] = beta2 * slot.v[i] + (T(1) - beta2) * g * g;
      const T mhat = slot.m[i] / bc1;
      const T vhat = slot.v[i] / bc2;
      val[i] -= learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Training objective: mean negative log likelihood plus the width penalty.
template <typename T>
TensorT<T> loss(TapeT<T>& tape, const TensorT<T>& logp, std::span<const int> labels,
                const AugMatrixT<T>& head, T reg_weight) {
  return add(tape, nll_loss(tape, logp, labels), reg_penalty(tape, head, reg_weight));
}

// Per-step report for logging/inspection hooks.
struct StepInfo {
  int epoch = 0;
  int batch = 0;
  std::vector<int> item_indices;  // dataset positions, in batch order
  float loss_value = 0.0f;
};

using StepObserver = std::function<void(const StepInfo&)>;

struct Checkpoint;

// Joint optimization of network weights and the width matrix. The inputs are
// deep-copied, so callers keep their initialization untouched. Per-epoch
// shuffles draw from (seed, epoch, 0, shuffle); per-sample augmentation
// streams draw from (seed, epoch, sample index, augment), making the draws
// independent of how the epoch is cut into batches. The returned checkpoint
// carries a width-history row per epoch, with row 0 the initialization.
Checkpoint train(const TrainConfig& config, const Dataset& dataset, const AugMatrix& init_head,
                 const NetworkWeights& init_weights, const StepObserver& observer = {});

}  // namespace ccaug
