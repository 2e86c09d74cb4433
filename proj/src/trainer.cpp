#include "ccaug/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ccaug/checkpoint.hpp"

namespace ccaug {

namespace {

void check_compatible(const Dataset& dataset, const AugMatrix& head,
                      const NetworkWeights& weights) {
  const auto& cfg = weights.config;
  CCAUG_CHECK(!dataset.items.empty(), "train: dataset is empty");
  CCAUG_CHECK(dataset.channels == cfg.in_channels && dataset.height == cfg.image_size &&
                  dataset.width == cfg.image_size,
              "train: dataset geometry does not match the network configuration");
  CCAUG_CHECK(dataset.num_classes == cfg.num_classes,
              "train: dataset class count does not match the network");
  CCAUG_CHECK(head.num_classes() == 1 || head.num_classes() == dataset.num_classes,
              "train: width matrix needs one column per class, or a single shared column");
}

}  // namespace

Checkpoint train(const TrainConfig& config, const Dataset& dataset, const AugMatrix& init_head,
                 const NetworkWeights& init_weights, const StepObserver& observer) {
  config.validate();
  init_weights.config.validate();
  check_compatible(dataset, init_head, init_weights);

  NetworkWeights weights = init_weights.clone();
  AugMatrix head = init_head.clone();
  AdamState net_opt;
  AdamState head_opt;
  std::vector<std::vector<float>> width_history;
  width_history.push_back(head.all_widths());

  auto net_params = weights.all_params();
  std::vector<Tensor> head_params{head.raw};

  const int n = static_cast<int>(dataset.items.size());
  const std::size_t plane =
      static_cast<std::size_t>(dataset.channels) * dataset.height * dataset.width;
  std::vector<int> order(static_cast<std::size_t>(n));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(config.seed, static_cast<std::uint64_t>(epoch), 0, stream_tag::shuffle);
    shuffle_rng.shuffle(std::span<int>(order));

    int batch_index = 0;
    for (int start = 0; start < n; start += config.batch_size, ++batch_index) {
      const int bsize = std::min(config.batch_size, n - start);
      try {
        std::vector<float> pixels;
        pixels.reserve(static_cast<std::size_t>(bsize) * plane);
        std::vector<int> labels(static_cast<std::size_t>(bsize));
        std::vector<int> indices(static_cast<std::size_t>(bsize));
        std::vector<RngStream> streams;
        streams.reserve(static_cast<std::size_t>(bsize));
        for (int b = 0; b < bsize; ++b) {
          const int idx = order[static_cast<std::size_t>(start + b)];
          const auto& item = dataset.items[static_cast<std::size_t>(idx)];
          pixels.insert(pixels.end(), item.pixels.begin(), item.pixels.end());
          labels[static_cast<std::size_t>(b)] = item.label;
          indices[static_cast<std::size_t>(b)] = idx;
          streams.emplace_back(config.seed, static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(idx), stream_tag::augment);
        }
        auto batch = Tensor::from_data(
            {bsize, dataset.channels, dataset.height, dataset.width}, std::move(pixels));

        Tape tape;
        tape.set_check_finite(false);
        auto augmented = augment_training_batch(tape, batch, labels, head, streams);
        auto logp = forward(tape, augmented, weights);
        auto loss_node = loss(tape, logp, labels, head, config.reg_weight);
        const float loss_value = loss_node.item();
        CCAUG_CHECK(std::isfinite(loss_value), "loss is not finite");

        for (auto& p : net_params) p.zero_grad();
        head.raw.zero_grad();
        tape.backward(loss_node);

        adam_step(std::span<Tensor>(net_params), net_opt, config.learning_rate,
                  config.weight_decay);
        adam_step(std::span<Tensor>(head_params), head_opt, config.learning_rate, 0.0f);

        if (observer) observer(StepInfo{epoch, batch_index, std::move(indices), loss_value});
      } catch (const Error& e) {
        fail("train: epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
             ": " + e.what());
      }
    }
    width_history.push_back(head.all_widths());
  }

  return Checkpoint{config,
                    std::move(weights),
                    std::move(head),
                    std::move(net_opt),
                    std::move(head_opt),
                    std::move(width_history),
                    std::string()};
}

}  // namespace ccaug
