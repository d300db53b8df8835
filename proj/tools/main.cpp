// Batch front-end over the pipeline library: generate datasets, compute
// reference Monte Carlo statistics, train surrogates, evaluate them, and
// aggregate the reports. Exit codes: 0 success, 1 validation/config error,
// 2 numerical failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spdheat/dataset.hpp"
#include "spdheat/errors.hpp"
#include "spdheat/pipeline.hpp"

namespace fs = std::filesystem;
using spdheat::pipeline::ExperimentConfig;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  bool paper_scale = false;
  std::string preprocess;  // empty = all kinds
  std::string dataset_dir;
  std::string checkpoint;
};

void add_common_options(CLI::App* cmd, CommonArgs& args, bool with_preprocess = true) {
  cmd->add_option("--config", args.config_path, "Experiment config JSON file");
  cmd->add_option("--preset", args.preset,
                  "Built-in experiment preset: scaling, orientation or combined");
  cmd->add_option("--out", args.out_dir, "Output directory (overrides the config)");
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
  cmd->add_option("--repeats", args.repeats, "Training repeats (overrides the config)");
  cmd->add_flag("--paper-scale", args.paper_scale,
                "Use the full published sample counts instead of desk-scale defaults");
  if (with_preprocess)
    cmd->add_option("--preprocess", args.preprocess,
                    "Restrict to one preprocessing kind: flatten, logeig or strang");
}

ExperimentConfig make_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = ExperimentConfig::from_json_string(spdheat::io::read_text(args.config_path));
    if (args.paper_scale)
      throw spdheat::ValidationError("--paper-scale applies to --preset runs only");
  } else if (!args.preset.empty()) {
    cfg = ExperimentConfig::preset(args.preset, args.paper_scale);
  } else {
    throw spdheat::ValidationError("either --config or --preset is required");
  }
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.seed) cfg.seed = *args.seed;
  if (args.repeats) cfg.repeats = *args.repeats;
  cfg.validate();
  return cfg;
}

fs::path dataset_dir_for(const ExperimentConfig& cfg, const CommonArgs& args,
                         bool prefer_reference = false) {
  if (!args.dataset_dir.empty()) return args.dataset_dir;
  if (prefer_reference) {
    const fs::path ref = fs::path(cfg.out_dir) / "reference";
    if (fs::exists(ref / "manifest.json")) return ref;
  }
  return fs::path(cfg.out_dir) / "dataset";
}

std::vector<std::string> kinds_for(const CommonArgs& args) {
  if (args.preprocess.empty()) return {};
  return {args.preprocess};
}

void log_line(const std::string& msg) { std::cout << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic SPD conductivity tensors, anisotropic heat conduction, and "
               "manifold-aware surrogate networks"};
  app.require_subcommand(1);

  CommonArgs gen_args, stats_args, train_args, eval_args, report_args;

  CLI::App* gen = app.add_subcommand("gen-data", "Sample tensors, solve, write datasets");
  add_common_options(gen, gen_args, false);

  CLI::App* mcs = app.add_subcommand("mc-stats", "Reference Monte Carlo field statistics");
  add_common_options(mcs, stats_args, false);
  mcs->add_option("--dataset", stats_args.dataset_dir,
                  "Dataset directory (default: <out>/reference, falling back to <out>/dataset)");

  CLI::App* train = app.add_subcommand("train", "Train surrogate networks");
  add_common_options(train, train_args);
  train->add_option("--dataset", train_args.dataset_dir,
                    "Dataset directory (default: <out>/dataset)");

  CLI::App* eval = app.add_subcommand("evaluate", "Evaluate checkpoints on the test split");
  add_common_options(eval, eval_args);
  eval->add_option("--dataset", eval_args.dataset_dir,
                   "Dataset directory (default: <out>/dataset)");
  eval->add_option("--checkpoint", eval_args.checkpoint,
                   "Checkpoint file (default: best checkpoint per kind from training summaries)");

  CLI::App* report = app.add_subcommand("report", "Aggregate summaries into report tables");
  add_common_options(report, report_args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const ExperimentConfig cfg = make_config(gen_args);
      const auto result = spdheat::pipeline::run_gen_data(cfg, log_line);
      std::cout << "dataset: " << result.dataset_dir.string()
                << (result.dataset_reused ? " (reused)" : "") << '\n';
      if (!result.reference_dir.empty())
        std::cout << "reference: " << result.reference_dir.string()
                  << (result.reference_reused ? " (reused)" : "") << '\n';
    } else if (mcs->parsed()) {
      const ExperimentConfig cfg = make_config(stats_args);
      spdheat::pipeline::run_mc_stats(cfg, dataset_dir_for(cfg, stats_args, true), log_line);
    } else if (train->parsed()) {
      const ExperimentConfig cfg = make_config(train_args);
      spdheat::pipeline::run_train(cfg, dataset_dir_for(cfg, train_args), kinds_for(train_args),
                                   log_line);
    } else if (eval->parsed()) {
      const ExperimentConfig cfg = make_config(eval_args);
      const fs::path dataset = dataset_dir_for(cfg, eval_args);
      if (!eval_args.checkpoint.empty()) {
        spdheat::pipeline::run_evaluate(cfg, eval_args.checkpoint, dataset, log_line);
      } else {
        std::vector<std::string> kinds = kinds_for(eval_args);
        if (kinds.empty())
          for (const auto& [kind, spec] : cfg.networks) kinds.push_back(kind);
        for (const auto& kind : kinds)
          spdheat::pipeline::run_evaluate(
              cfg, spdheat::pipeline::best_checkpoint_path(cfg, kind), dataset, log_line);
      }
    } else if (report->parsed()) {
      const ExperimentConfig cfg = make_config(report_args);
      spdheat::pipeline::run_report(cfg, log_line);
    }
  } catch (const spdheat::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const spdheat::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
