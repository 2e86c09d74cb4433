#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccaug/checkpoint.hpp"
#include "ccaug/data.hpp"
#include "ccaug/network.hpp"
#include "ccaug/probes.hpp"
#include "ccaug/trainer.hpp"

namespace ccaug {

enum class ModelKind { ClassConditional, SharedBaseline };

const char* model_kind_name(ModelKind kind);  // "cc" / "shared"
ModelKind model_kind_from_name(const std::string& name);

// Where the data comes from and how the class-conditional corruption is
// applied. The corruption seed is deliberately separate from the training
// seed, so a class-conditional run and its shared baseline see the same
// corrupted split.
struct DatasetSpec {
  std::string source = "mnist";  // mnist | cifar10 | cifar100-subset
  std::string corruption = "none";  // none | rotation | brightness
  std::vector<float> rotation_half_widths;      // one per class when rotation
  std::vector<std::string> brightness_classes;  // names when brightness
  float brightness_half_width = 0.0f;
  std::uint64_t corruption_seed = 1;
  int train_subset = 0;  // 0 keeps the full split
  int test_subset = 0;

  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

// A fully explicit run description. Presets expand to one of these; JSON
// configs and CLI flags fill or override individual fields.
struct ExperimentConfig {
  std::string preset;  // name this config expanded from, if any
  ModelKind model = ModelKind::ClassConditional;
  std::string transforms = "rotation";  // rotation | brightness | rotation-brightness
  DatasetSpec data;
  NetworkConfig net;
  TrainConfig train;
  std::string data_root = ".";
  std::string out_dir = ".";

  void validate() const;
  TransformSpec transform_spec() const;
  bool operator==(const ExperimentConfig&) const = default;
};

std::vector<std::string> preset_names();

// Pure expansion: the same name always yields the same explicit config.
ExperimentConfig expand_preset(const std::string& name);

// JSON round trip. A "preset" key seeds the defaults; every other present
// key overrides field by field.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

// CLI flag overrides, applied after file parsing so flags win.
struct ConfigOverrides {
  std::optional<std::string> data_root;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::optional<int> epochs;
  std::optional<int> subset;  // training-split truncation
};
void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

// Load a split and apply the configured corruption. Sweeps probe the clean
// test split (the sweep applies its own transform), so matched corruption is
// optional for the test side.
Dataset build_train_split(const ExperimentConfig& config);
Dataset build_test_split(const ExperimentConfig& config, bool matched_corruption);

struct TrainOutputs {
  std::string checkpoint_path;
  std::string history_csv_path;
  std::string config_json_path;
};

// Train per the config and drop checkpoint, width-history CSV and the fully
// expanded config JSON into out_dir. File names carry the model kind so a
// class-conditional run and its baseline can share a directory.
TrainOutputs run_train(const ExperimentConfig& config);

struct EvalOutputs {
  AccuracyReport report;
  std::string csv_path;
};

// Accuracy on the matched corrupted test split, overall and per class.
EvalOutputs run_eval(const ExperimentConfig& config, const Checkpoint& checkpoint);

struct SweepRequest {
  std::string kind = "orientation";  // orientation | brightness
  std::string target;                // class name or index (orientation only)
  bool all_images = false;           // average over every test image of the class
};

struct SweepOutputs {
  SweepResult result;
  std::string csv_path;
};

// Dispatch to the probe sweeps and write the curve as CSV. The sweep kind
// must be one of the checkpoint's trained transforms.
SweepOutputs run_sweep(const ExperimentConfig& config, const Checkpoint& checkpoint,
                       const SweepRequest& request);

// epoch,class,transform_kind,effective_width rows; epoch 0 is the
// initialization.
std::string width_history_csv(const Checkpoint& checkpoint);
std::string accuracy_csv(const AccuracyReport& report, const std::vector<std::string>& class_names);

// Rewrite a stored checkpoint's width history as CSV.
void export_history(const std::string& checkpoint_path, const std::string& csv_path);

}  // namespace ccaug
