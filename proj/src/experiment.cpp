#include "ccaug/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ccaug/check.hpp"
#include "ccaug/checkpoint.hpp"
#include "ccaug/rng.hpp"

namespace ccaug {
namespace {

using nlohmann::json;

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  CCAUG_CHECK(out.good(), "cannot open for writing: " + path);
  out.write(content.data(), std::streamsize(content.size()));
  CCAUG_CHECK(out.good(), "write failed: " + path);
}

ExperimentConfig preset_mnist_base() {
  ExperimentConfig cfg;
  cfg.model = ModelKind::ClassConditional;
  cfg.transforms = "rotation";
  cfg.data.source = "mnist";
  cfg.data.corruption = "rotation";
  cfg.data.corruption_seed = 1;
  cfg.net.in_channels = 1;
  cfg.net.image_size = 28;
  cfg.net.num_classes = 10;
  cfg.train.reg_weight = 0.05f;
  cfg.train.learning_rate = 1e-3f;
  cfg.train.weight_decay = 1e-4f;
  cfg.train.epochs = 10;
  cfg.train.batch_size = 128;
  cfg.train.test_copies = 4;
  cfg.train.seed = 0;
  return cfg;
}

ExperimentConfig preset_cifar_base() {
  ExperimentConfig cfg = preset_mnist_base();
  cfg.net.in_channels = 3;
  cfg.net.image_size = 32;
  return cfg;
}

json dataset_json(const DatasetSpec& d) {
  return json{{"source", d.source},
              {"corruption", d.corruption},
              {"rotation_half_widths", d.rotation_half_widths},
              {"brightness_classes", d.brightness_classes},
              {"brightness_half_width", d.brightness_half_width},
              {"corruption_seed", d.corruption_seed},
              {"train_subset", d.train_subset},
              {"test_subset", d.test_subset}};
}

void merge_dataset(DatasetSpec& d, const json& j) {
  if (j.contains("source")) d.source = j.at("source").get<std::string>();
  if (j.contains("corruption")) d.corruption = j.at("corruption").get<std::string>();
  if (j.contains("rotation_half_widths"))
    d.rotation_half_widths = j.at("rotation_half_widths").get<std::vector<float>>();
  if (j.contains("brightness_classes"))
    d.brightness_classes = j.at("brightness_classes").get<std::vector<std::string>>();
  if (j.contains("brightness_half_width"))
    d.brightness_half_width = j.at("brightness_half_width").get<float>();
  if (j.contains("corruption_seed"))
    d.corruption_seed = j.at("corruption_seed").get<std::uint64_t>();
  if (j.contains("train_subset")) d.train_subset = j.at("train_subset").get<int>();
  if (j.contains("test_subset")) d.test_subset = j.at("test_subset").get<int>();
}

void merge_net(NetworkConfig& n, const json& j) {
  if (j.contains("in_channels")) n.in_channels = j.at("in_channels").get<int>();
  if (j.contains("image_size")) n.image_size = j.at("image_size").get<int>();
  if (j.contains("num_classes")) n.num_classes = j.at("num_classes").get<int>();
  if (j.contains("channels")) {
    const auto ch = j.at("channels").get<std::vector<int>>();
    CCAUG_CHECK(ch.size() == n.channels.size(),
                "config: net.channels needs exactly five entries");
    std::copy(ch.begin(), ch.end(), n.channels.begin());
  }
}

void merge_train(TrainConfig& t, const json& j) {
  if (j.contains("reg_weight")) t.reg_weight = j.at("reg_weight").get<float>();
  if (j.contains("learning_rate")) t.learning_rate = j.at("learning_rate").get<float>();
  if (j.contains("weight_decay")) t.weight_decay = j.at("weight_decay").get<float>();
  if (j.contains("epochs")) t.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<int>();
  if (j.contains("test_copies")) t.test_copies = j.at("test_copies").get<int>();
  if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

Dataset load_source_split(const ExperimentConfig& cfg, bool train_split) {
  const auto& root = cfg.data_root;
  const auto& source = cfg.data.source;
  if (source == "mnist") {
    return load_mnist(
        join_path(root, train_split ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte"),
        join_path(root, train_split ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte"));
  }
  if (source == "cifar10") {
    std::vector<std::string> files;
    if (train_split)
      for (int b = 1; b <= 5; ++b)
        files.push_back(join_path(root, "data_batch_" + std::to_string(b) + ".bin"));
    else
      files.push_back(join_path(root, "test_batch.bin"));
    auto ds = load_cifar(files, CifarVariant::Cifar10);
    ds.class_names = load_class_names(join_path(root, "batches.meta.txt"));
    return ds;
  }
  if (source == "cifar100-subset") {
    auto ds = load_cifar({join_path(root, train_split ? "train.bin" : "test.bin")},
                         CifarVariant::Cifar100);
    ds.class_names = load_class_names(join_path(root, "fine_label_names.txt"));
    return cifar100_subset(ds);
  }
  fail("unknown dataset source: " + source);
}

Dataset corrupt_split(const ExperimentConfig& cfg, Dataset ds) {
  const auto& d = cfg.data;
  if (d.corruption == "none") return ds;
  if (d.corruption == "rotation") {
    CCAUG_CHECK(static_cast<int>(d.rotation_half_widths.size()) == ds.num_classes,
                "config: one rotation half width per class required");
    return corrupt_rotation(ds, d.rotation_half_widths, d.corruption_seed);
  }
  if (d.corruption == "brightness")
    return corrupt_brightness(ds, d.brightness_classes, d.brightness_half_width,
                              d.corruption_seed);
  fail("unknown corruption kind: " + d.corruption);
}

ModelKind checkpoint_model(const Checkpoint& ck) {
  return ck.head.num_classes() == 1 ? ModelKind::SharedBaseline : ModelKind::ClassConditional;
}

void check_dataset_match(const Checkpoint& ck, const Dataset& ds) {
  const auto cfg = ck.net_config();
  CCAUG_CHECK(ds.channels == cfg.in_channels && ds.height == cfg.image_size &&
                  ds.width == cfg.image_size,
              "checkpoint was trained on a different image shape than this dataset");
  CCAUG_CHECK(ds.num_classes == cfg.num_classes,
              "checkpoint class count does not match this dataset");
}

bool has_kind(const TransformSpec& spec, TransformKind kind) {
  return std::find(spec.kinds.begin(), spec.kinds.end(), kind) != spec.kinds.end();
}

int resolve_class(const Dataset& ds, const std::string& target) {
  CCAUG_CHECK(!target.empty(), "sweep: target class required");
  const bool numeric =
      std::all_of(target.begin(), target.end(), [](unsigned char c) { return std::isdigit(c); });
  if (numeric) {
    const int k = std::stoi(target);
    CCAUG_CHECK(k >= 0 && k < ds.num_classes, "sweep: class index out of range: " + target);
    return k;
  }
  return ds.class_index_for(target);
}

std::vector<float> shared_raw(const Checkpoint& ck) {
  return {ck.head.raw.values().begin(), ck.head.raw.values().end()};
}

std::string sanitized(const std::string& s) {
  std::string out;
  for (char c : s)
    out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  return kind == ModelKind::ClassConditional ? "cc" : "shared";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "cc") return ModelKind::ClassConditional;
  if (name == "shared") return ModelKind::SharedBaseline;
  fail("unknown model kind: " + name + " (expected cc or shared)");
}

void DatasetSpec::validate() const {
  CCAUG_CHECK(source == "mnist" || source == "cifar10" || source == "cifar100-subset",
              "config: unknown dataset source: " + source);
  CCAUG_CHECK(corruption == "none" || corruption == "rotation" || corruption == "brightness",
              "config: unknown corruption kind: " + corruption);
  if (corruption == "rotation") {
    CCAUG_CHECK(!rotation_half_widths.empty(),
                "config: rotation corruption needs per-class half widths");
    for (float w : rotation_half_widths)
      CCAUG_CHECK(std::isfinite(w) && w >= 0.0f,
                  "config: rotation half widths must be finite and non-negative");
  }
  if (corruption == "brightness") {
    CCAUG_CHECK(!brightness_classes.empty(),
                "config: brightness corruption needs target class names");
    CCAUG_CHECK(std::isfinite(brightness_half_width) && brightness_half_width >= 0.0f,
                "config: brightness half width must be finite and non-negative");
  }
  CCAUG_CHECK(train_subset >= 0 && test_subset >= 0, "config: subsets must be non-negative");
}

void ExperimentConfig::validate() const {
  data.validate();
  net.validate();
  train.validate();
  transform_spec();
  CCAUG_CHECK(!out_dir.empty(), "config: out_dir required");
  CCAUG_CHECK(!data_root.empty(), "config: data_root required");
}

TransformSpec ExperimentConfig::transform_spec() const {
  if (transforms == "rotation") return TransformSpec::rotation();
  if (transforms == "brightness") return TransformSpec::brightness();
  if (transforms == "rotation-brightness") return TransformSpec::rotation_brightness();
  fail("config: unknown transforms: " + transforms);
}

std::vector<std::string> preset_names() {
  return {"mnist-rot-69", "mnist-rot-bands", "cifar10-brightness", "cifar100-natural"};
}

ExperimentConfig expand_preset(const std::string& name) {
  if (name == "mnist-rot-69") {
    auto cfg = preset_mnist_base();
    cfg.preset = name;
    cfg.data.rotation_half_widths.assign(10, float(M_PI));
    cfg.data.rotation_half_widths[6] = float(M_PI / 4);
    cfg.data.rotation_half_widths[9] = float(M_PI / 4);
    return cfg;
  }
  if (name == "mnist-rot-bands") {
    auto cfg = preset_mnist_base();
    cfg.preset = name;
    cfg.data.rotation_half_widths.assign(10, 0.0f);
    for (int k : {1, 4, 7}) cfg.data.rotation_half_widths[std::size_t(k)] = float(M_PI / 3);
    for (int k : {2, 5, 8}) cfg.data.rotation_half_widths[std::size_t(k)] = float(M_PI / 4);
    for (int k : {3, 6, 9}) cfg.data.rotation_half_widths[std::size_t(k)] = float(M_PI / 6);
    return cfg;
  }
  if (name == "cifar10-brightness") {
    auto cfg = preset_cifar_base();
    cfg.preset = name;
    cfg.transforms = "brightness";
    cfg.data.source = "cifar10";
    cfg.data.corruption = "brightness";
    cfg.data.brightness_classes = {"airplane", "bird", "cat", "deer", "ship"};
    cfg.data.brightness_half_width = 0.2f;
    return cfg;
  }
  if (name == "cifar100-natural") {
    auto cfg = preset_cifar_base();
    cfg.preset = name;
    cfg.data.source = "cifar100-subset";
    cfg.data.corruption = "none";
    cfg.train.epochs = 50;
    return cfg;
  }
  fail("unknown preset: " + name);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("config: invalid JSON: ") + e.what());
  }
  CCAUG_CHECK(j.is_object(), "config: top level must be a JSON object");

  ExperimentConfig cfg;
  if (j.contains("preset")) cfg = expand_preset(j.at("preset").get<std::string>());
  if (j.contains("model")) cfg.model = model_kind_from_name(j.at("model").get<std::string>());
  if (j.contains("transforms")) cfg.transforms = j.at("transforms").get<std::string>();
  if (j.contains("data_root")) cfg.data_root = j.at("data_root").get<std::string>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("data")) merge_dataset(cfg.data, j.at("data"));
  if (j.contains("net")) merge_net(cfg.net, j.at("net"));
  if (j.contains("train")) merge_train(cfg.train, j.at("train"));
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (!cfg.preset.empty()) j["preset"] = cfg.preset;
  j["model"] = model_kind_name(cfg.model);
  j["transforms"] = cfg.transforms;
  j["data_root"] = cfg.data_root;
  j["out_dir"] = cfg.out_dir;
  j["data"] = dataset_json(cfg.data);
  j["net"] = {{"in_channels", cfg.net.in_channels},
              {"image_size", cfg.net.image_size},
              {"num_classes", cfg.net.num_classes},
              {"channels", std::vector<int>(cfg.net.channels.begin(), cfg.net.channels.end())}};
  j["train"] = {{"reg_weight", cfg.train.reg_weight},
                {"learning_rate", cfg.train.learning_rate},
                {"weight_decay", cfg.train.weight_decay},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"test_copies", cfg.train.test_copies},
                {"seed", cfg.train.seed}};
  return j.dump(2) + "\n";
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
  if (o.data_root) cfg.data_root = *o.data_root;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.model) cfg.model = model_kind_from_name(*o.model);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.subset) cfg.data.train_subset = *o.subset;
}

Dataset build_train_split(const ExperimentConfig& cfg) {
  auto ds = load_source_split(cfg, true);
  if (cfg.data.train_subset > 0) ds = truncate(ds, cfg.data.train_subset);
  return corrupt_split(cfg, std::move(ds));
}

Dataset build_test_split(const ExperimentConfig& cfg, bool matched_corruption) {
  auto ds = load_source_split(cfg, false);
  if (cfg.data.test_subset > 0) ds = truncate(ds, cfg.data.test_subset);
  if (!matched_corruption) return ds;
  return corrupt_split(cfg, std::move(ds));
}

TrainOutputs run_train(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);

  const auto train_split = build_train_split(cfg);
  CCAUG_CHECK(train_split.num_classes == cfg.net.num_classes,
              "config: dataset and network disagree on the class count");

  RngStream init_rng(cfg.train.seed, 0, 0, stream_tag::weight_init);
  const auto weights = init_weights<float>(cfg.net, init_rng);
  const int columns = cfg.model == ModelKind::ClassConditional ? cfg.net.num_classes : 1;
  const auto head = AugMatrix::init(cfg.transform_spec(), columns);

  auto checkpoint = train(cfg.train, train_split, head, weights);
  checkpoint.experiment_json = config_to_json(cfg);

  const std::string prefix = model_kind_name(cfg.model);
  TrainOutputs out;
  out.checkpoint_path = join_path(cfg.out_dir, prefix + "_checkpoint.bin");
  out.history_csv_path = join_path(cfg.out_dir, prefix + "_width_history.csv");
  out.config_json_path = join_path(cfg.out_dir, prefix + "_config.json");
  save_checkpoint(out.checkpoint_path, checkpoint);
  write_text_file(out.history_csv_path, width_history_csv(checkpoint));
  write_text_file(out.config_json_path, checkpoint.experiment_json);
  return out;
}

EvalOutputs run_eval(const ExperimentConfig& cfg, const Checkpoint& checkpoint) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const auto test_split = build_test_split(cfg, true);
  check_dataset_match(checkpoint, test_split);

  EvalOutputs out;
  out.report = evaluate_report(checkpoint.weights, checkpoint.head, test_split,
                               cfg.train.test_copies, cfg.train.seed);
  const std::string prefix = model_kind_name(checkpoint_model(checkpoint));
  out.csv_path = join_path(cfg.out_dir, prefix + "_accuracy.csv");
  write_text_file(out.csv_path, accuracy_csv(out.report, test_split.class_names));
  return out;
}

SweepOutputs run_sweep(const ExperimentConfig& cfg, const Checkpoint& checkpoint,
                       const SweepRequest& request) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const auto& head = checkpoint.head;
  const bool shared = checkpoint_model(checkpoint) == ModelKind::SharedBaseline;
  const int copies = cfg.train.test_copies;
  const auto seed = cfg.train.seed;

  // Sweeps transform clean test data themselves.
  const auto test_split = build_test_split(cfg, false);
  check_dataset_match(checkpoint, test_split);

  SweepOutputs out;
  if (request.kind == "orientation") {
    CCAUG_CHECK(has_kind(head.spec, TransformKind::Rotation),
                "sweep: checkpoint was not trained with a rotation transform");
    const int target = resolve_class(test_split, request.target);
    std::vector<std::size_t> picks;
    for (std::size_t i = 0; i < test_split.items.size(); ++i)
      if (test_split.items[i].label == target) picks.push_back(i);
    CCAUG_CHECK(!picks.empty(), "sweep: no test image of class " + request.target);
    if (!request.all_images) picks.resize(1);

    std::vector<double> sums;
    for (std::size_t p : picks) {
      auto image = Tensor::from_data({test_split.channels, test_split.height, test_split.width},
                                     test_split.items[p].pixels);
      auto res = shared ? orientation_sweep_shared(checkpoint.weights, head.spec, shared_raw(checkpoint),
                                                   image, target, copies, seed)
                        : orientation_sweep(checkpoint.weights, head, image, target, copies, seed);
      if (sums.empty()) {
        out.result = res;
        sums.assign(res.metrics.size(), 0.0);
      }
      for (std::size_t i = 0; i < res.metrics.size(); ++i) sums[i] += double(res.metrics[i]);
    }
    for (std::size_t i = 0; i < sums.size(); ++i)
      out.result.metrics[i] = float(sums[i] / double(picks.size()));
    out.result.class_filter = request.target;
  } else if (request.kind == "brightness") {
    CCAUG_CHECK(has_kind(head.spec, TransformKind::Brightness),
                "sweep: checkpoint was not trained with a brightness transform");
    out.result = shared ? brightness_sweep_shared(checkpoint.weights, head.spec,
                                                  shared_raw(checkpoint), test_split, copies, seed)
                        : brightness_sweep(checkpoint.weights, head, test_split, copies, seed);
  } else {
    fail("sweep: unknown kind: " + request.kind + " (expected orientation or brightness)");
  }

  std::string name = "sweep_" + request.kind;
  if (!request.target.empty()) name += "_" + sanitized(request.target);
  name += std::string("_") + out.result.model + ".csv";
  out.csv_path = join_path(cfg.out_dir, name);
  const SweepResult results[] = {out.result};
  write_text_file(out.csv_path, sweep_csv(results));
  return out;
}

std::string width_history_csv(const Checkpoint& checkpoint) {
  const auto& head = checkpoint.head;
  const int dims = head.dims();
  const int classes = head.num_classes();
  std::string out = "epoch,class,transform_kind,effective_width\n";
  for (std::size_t e = 0; e < checkpoint.width_history.size(); ++e) {
    const auto& row = checkpoint.width_history[e];
    CCAUG_CHECK(row.size() == std::size_t(dims) * std::size_t(classes),
                "checkpoint width history row has the wrong size");
    for (int k = 0; k < classes; ++k)
      for (int j = 0; j < dims; ++j) {
        out += std::to_string(e);
        out += ',';
        out += std::to_string(k);
        out += ',';
        out += transform_kind_name(head.spec.kinds[std::size_t(j)]);
        out += ',';
        out += fmt_float(row[std::size_t(j) * std::size_t(classes) + std::size_t(k)]);
        out += '\n';
      }
  }
  return out;
}

std::string accuracy_csv(const AccuracyReport& report, const std::vector<std::string>& class_names) {
  std::string out = "class,accuracy,count\n";
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    out += k < class_names.size() ? class_names[k] : std::to_string(k);
    out += ',';
    out += fmt_float(float(report.per_class[k]));
    out += ',';
    out += std::to_string(report.per_class_total[k]);
    out += '\n';
  }
  int total = 0;
  for (int c : report.per_class_total) total += c;
  out += "overall," + fmt_float(float(report.overall)) + ',' + std::to_string(total) + '\n';
  return out;
}

void export_history(const std::string& checkpoint_path, const std::string& csv_path) {
  const auto checkpoint = load_checkpoint(checkpoint_path);
  write_text_file(csv_path, width_history_csv(checkpoint));
}

}  // namespace ccaug
