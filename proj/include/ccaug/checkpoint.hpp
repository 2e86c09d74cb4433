#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccaug/head.hpp"
#include "ccaug/network.hpp"
#include "ccaug/trainer.hpp"

namespace ccaug {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Complete trained-model artifact: enough to evaluate, sweep, export the
// width history, and audit how the run was configured.
struct Checkpoint {
  TrainConfig train_config;
  NetworkWeights weights;
  AugMatrix head;
  AdamState net_opt;
  AdamState head_opt;
  std::vector<std::vector<float>> width_history;  // per epoch, row-major [dims, classes]
  std::string experiment_json;                    // originating run config, opaque JSON text

  const NetworkConfig& net_config() const { return weights.config; }
};

// Versioned binary container: magic, version, a JSON header with the configs
// and shapes, then raw little-endian float32 blobs for every tensor, the
// optimizer moments, and the width history. Loading reproduces the checkpoint
// bitwise.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ccaug
