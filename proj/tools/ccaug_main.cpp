#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ccaug/check.hpp"
#include "ccaug/checkpoint.hpp"
#include "ccaug/experiment.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CCAUG_CHECK(in.good(), "cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CommonFlags {
  std::string config_path;
  std::string preset;
  ccaug::ConfigOverrides overrides;
};

void add_common_flags(CLI::App& cmd, CommonFlags& flags) {
  cmd.add_option("--config", flags.config_path, "JSON experiment config");
  cmd.add_option("--preset", flags.preset, "named recipe (see `ccaug presets`)");
  cmd.add_option("--data-root", flags.overrides.data_root, "directory holding the dataset files");
  cmd.add_option("--out", flags.overrides.out_dir, "output directory");
  cmd.add_option("--seed", flags.overrides.seed, "training seed");
  cmd.add_option("--model", flags.overrides.model,
                 "cc (class-conditional) or shared (single width vector)");
  cmd.add_option("--epochs", flags.overrides.epochs, "override the epoch count");
  cmd.add_option("--subset", flags.overrides.subset,
                 "truncate the training split to the first N items");
}

// Flags override file values; an explicit --preset replaces the file's.
ccaug::ExperimentConfig resolve_config(const CommonFlags& flags,
                                       const std::string& fallback_json = "") {
  ccaug::ExperimentConfig cfg;
  if (!flags.preset.empty())
    cfg = ccaug::expand_preset(flags.preset);
  else if (!flags.config_path.empty())
    cfg = ccaug::config_from_json(slurp(flags.config_path));
  else if (!fallback_json.empty())
    cfg = ccaug::config_from_json(fallback_json);
  else
    ccaug::fail("pass --preset or --config");
  ccaug::apply_overrides(cfg, flags.overrides);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-conditional learned augmentation trainer"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common_flags(*train_cmd, train_flags);

  CommonFlags eval_flags;
  std::string eval_checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy on the matched corrupted test split");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "trained checkpoint")->required();
  add_common_flags(*eval_cmd, eval_flags);

  CommonFlags sweep_flags;
  std::string sweep_checkpoint;
  ccaug::SweepRequest sweep_request;
  auto* sweep_cmd = app.add_subcommand("sweep", "orientation or brightness response curve");
  sweep_cmd->add_option("--checkpoint", sweep_checkpoint, "trained checkpoint")->required();
  sweep_cmd->add_option("--kind", sweep_request.kind, "orientation or brightness");
  sweep_cmd->add_option("--target", sweep_request.target,
                        "class name or index (orientation sweeps)");
  sweep_cmd->add_flag("--all", sweep_request.all_images,
                      "average the curve over every test image of the class");
  add_common_flags(*sweep_cmd, sweep_flags);

  std::string history_checkpoint;
  std::string history_out;
  auto* history_cmd = app.add_subcommand("export-history", "width history of a checkpoint as CSV");
  history_cmd->add_option("--checkpoint", history_checkpoint, "trained checkpoint")->required();
  history_cmd->add_option("--out", history_out, "CSV path")->required();

  auto* presets_cmd = app.add_subcommand("presets", "list the named recipes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto cfg = resolve_config(train_flags);
      const auto out = ccaug::run_train(cfg);
      std::cout << "checkpoint: " << out.checkpoint_path << "\n"
                << "history: " << out.history_csv_path << "\n"
                << "config: " << out.config_json_path << "\n";
    } else if (*eval_cmd) {
      const auto checkpoint = ccaug::load_checkpoint(eval_checkpoint);
      const auto cfg = resolve_config(eval_flags, checkpoint.experiment_json);
      const auto out = ccaug::run_eval(cfg, checkpoint);
      std::printf("overall accuracy: %.4f\n", out.report.overall);
      for (std::size_t k = 0; k < out.report.per_class.size(); ++k)
        std::printf("class %zu: %.4f (%d items)\n", k, out.report.per_class[k],
                    out.report.per_class_total[k]);
      std::cout << "report: " << out.csv_path << "\n";
    } else if (*sweep_cmd) {
      const auto checkpoint = ccaug::load_checkpoint(sweep_checkpoint);
      const auto cfg = resolve_config(sweep_flags, checkpoint.experiment_json);
      const auto out = ccaug::run_sweep(cfg, checkpoint, sweep_request);
      std::cout << "sweep: " << out.csv_path << "\n";
    } else if (*history_cmd) {
      ccaug::export_history(history_checkpoint, history_out);
      std::cout << "history: " << history_out << "\n";
    } else if (*presets_cmd) {
      for (const auto& name : ccaug::preset_names()) std::cout << name << "\n";
    }
  } catch (const ccaug::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
