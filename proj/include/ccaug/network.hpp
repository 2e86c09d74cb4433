#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ccaug/rng.hpp"
#include "ccaug/tensor.hpp"

namespace ccaug {

// Classifier shape: five 3x3 conv layers (stride 1, pad 1), max-pooling after
// the second and fourth, global average pooling, one fully connected layer,
// log softmax. Pooling twice requires image_size divisible by 4.
struct NetworkConfig {
  int in_channels = 1;
  int image_size = 28;
  int num_classes = 10;
  std::array<int, 5> channels{32, 32, 64, 64, 128};

  void validate() const {
    CCAUG_CHECK(in_channels >= 1, "NetworkConfig: in_channels must be positive");
    CCAUG_CHECK(image_size >= 4 && image_size % 4 == 0,
                "NetworkConfig: image_size must be a positive multiple of 4");
    CCAUG_CHECK(num_classes >= 1, "NetworkConfig: num_classes must be positive");
    for (int c : channels)
      CCAUG_CHECK(c >= 1, "NetworkConfig: channel counts must be positive");
  }

  bool operator==(const NetworkConfig&) const = default;
};

template <typename T>
struct NetworkWeightsT {
  NetworkConfig config;
  std::vector<TensorT<T>> conv_kernels;  // five [oc, ic, 3, 3]
  std::vector<TensorT<T>> conv_biases;   // five [oc]
  TensorT<T> fc_weight;                  // [channels[4], num_classes]
  TensorT<T> fc_bias;                    // [num_classes]

  std::vector<TensorT<T>> all_params() const {
    std::vector<TensorT<T>> out;
    for (std::size_t l = 0; l < conv_kernels.size(); ++l) {
      out.push_back(conv_kernels[l]);
      out.push_back(conv_biases[l]);
    }
    out.push_back(fc_weight);
    out.push_back(fc_bias);
    return out;
  }

  NetworkWeightsT clone() const {
    NetworkWeightsT out;
    out.config = config;
    for (const auto& k : conv_kernels) out.conv_kernels.push_back(k.clone());
    for (const auto& b : conv_biases) out.conv_biases.push_back(b.clone());
    out.fc_weight = fc_weight.clone();
    out.fc_bias = fc_bias.clone();
    return out;
  }
};

// Kaiming-style fan-in scaled uniform initialization, U[-sqrt(6/fan_in),
// sqrt(6/fan_in)] (standard deviation sqrt(2/fan_in)), zero biases.
// Deterministic: entries are drawn in layer order, row-major within a layer.
template <typename T>
NetworkWeightsT<T> init_weights(const NetworkConfig& config, RngStream& rng) {
  config.validate();
  NetworkWeightsT<T> w;
  w.config = config;
  auto draw = [&rng](std::vector<int> shape, int fan_in) {
    const double bound = std::sqrt(6.0 / double(fan_in));
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<T> values(n);
    for (auto& v : values) v = static_cast<T>(rng.next_range(-bound, bound));
    return TensorT<T>::param(std::move(shape), std::move(values));
  };
  int ic = config.in_channels;
  for (int l = 0; l < 5; ++l) {
    const int oc = config.channels[static_cast<std::size_t>(l)];
    w.conv_kernels.push_back(draw({oc, ic, 3, 3}, ic * 9));
    w.conv_biases.push_back(TensorT<T>::param({oc}, std::vector<T>(static_cast<std::size_t>(oc), T(0))));
    ic = oc;
  }
  const int feat = config.channels[4];
  w.fc_weight = draw({feat, config.num_classes}, feat);
  w.fc_bias = TensorT<T>::param(
      {config.num_classes}, std::vector<T>(static_cast<std::size_t>(config.num_classes), T(0)));
  return w;
}

// x[N,C,H,W] -> log class probabilities [N, num_classes].
template <typename T>
TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x, const NetworkWeightsT<T>& w) {
  CCAUG_CHECK(x.rank() == 4, "forward: expected a [N,C,H,W] batch");
  CCAUG_CHECK(x.dim(1) == w.config.in_channels && x.dim(2) == w.config.image_size &&
                  x.dim(3) == w.config.image_size,
              "forward: input shape " + shape_str(x.shape()) +
                  " does not match the network configuration");
  TensorT<T> h = x;
  for (int l = 0; l < 5; ++l) {
    h = conv2d(tape, h, w.conv_kernels[static_cast<std::size_t>(l)], 1, 1);
    h = add_channel_bias(tape, h, w.conv_biases[static_cast<std::size_t>(l)]);
    h = relu(tape, h);
    if (l == 1 || l == 3) h = maxpool2(tape, h);
  }
  h = global_avg_pool(tape, h);
  h = linear(tape, h, w.fc_weight, w.fc_bias);
  return log_softmax(tape, h);
}

using NetworkWeights = NetworkWeightsT<float>;

}  // namespace ccaug
