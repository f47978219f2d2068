#include <omp.h>

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "patchbag/pipeline.hpp"

using namespace patchbag;

int main(int argc, char** argv) {
  CLI::App app{"Patch-level bag-of-visual-words classification pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<int> scale;
  std::optional<std::string> scope;
  std::optional<std::string> order;
  std::optional<std::string> dataset;
  bool force = false;
  std::string experiment;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Configuration file")->required();
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--scale", scale, "Pyramid scale")->check(CLI::Range(0, kMaxScale));
    sub->add_option("--scope", scope, "Vocabulary scope")->check(CLI::IsMember({"region", "global"}));
    sub->add_option("--order", order, "Scan order")->check(CLI::IsMember({"raster", "serpentine"}));
    sub->add_option("--dataset", dataset, "Dataset")->check(CLI::IsMember({"ds1", "ds2"}));
    sub->add_flag("--force", force, "Recompute stages even if cached outputs are current");
  };

  const char* help[] = {
      "Extract and orient annotated regions and sample normal regions",
      "Cut regions into 256x256 patches",
      "Compute per-patch descriptors",
      "Fit visual vocabularies",
      "Encode patches as visual-word histograms",
      "Train the classifier on the encoded table",
      "Cross-validate vocabulary, encoding and classifier",
      "Write synthetic datasets to ds1_root and ds2_root"};
  std::string command;
  for (std::size_t i = 0; i < kStageCommands.size(); ++i) {
    auto* sub = app.add_subcommand(std::string(kStageCommands[i]), help[i]);
    add_common(sub);
    sub->callback([&, i] { command = std::string(kStageCommands[i]); });
  }
  auto* exp = app.add_subcommand("run-experiment", "Run a preset experiment end to end");
  exp->add_option("experiment", experiment, "exp1-ds1 | exp1-ds2 | exp2-merged | exp3-scales")
      ->required()
      ->check(CLI::IsMember({"exp1-ds1", "exp1-ds2", "exp2-merged", "exp3-scales"}));
  add_common(exp);
  exp->callback([&] { command = "run-experiment"; });

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig config = PipelineConfig::load(config_path);
    if (seed) config.seed = *seed;
    if (scale) config.scale = *scale;
    if (scope) config.vocab_scope = parse_vocab_scope(*scope);
    if (order) config.scan_order = parse_scan_order(*order);
    if (dataset) config.dataset = *dataset;
    config.validate();
    if (jobs) omp_set_num_threads(*jobs);

    RunOptions options;
    options.force = force;
    options.log = &std::cout;
    if (command == "run-experiment") {
      for (const auto& [key, report] : run_experiment(experiment, config, options)) {
        std::cout << "== " << key << " ==\n" << format_report_table(report) << '\n';
      }
    } else {
      run_command(command, config, options);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
