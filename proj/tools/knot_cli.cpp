// knot: federated ensemble distillation workbench.
//
//   knot gen-data      --config cfg.json [--seed N] [--output-dir DIR]
//   knot train-local   ...
//   knot estimate-bias ...
//   knot distill       ...
//   knot evaluate      ...
//   knot report        [RESULTS_CSV] [--out FILE]
//   knot run           (all of the above except report, in order)

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knot/io.hpp"
#include "knot/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> task;
  std::optional<double> epsilon;
  std::optional<std::size_t> epochs;
  std::vector<std::string> schemes;
  std::vector<std::string> divergences;
  std::optional<bool> lwf;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_path, "Experiment config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Experiment seed");
  cmd->add_option("-o,--output-dir", o.output_dir, "Output directory");
  cmd->add_option("--task", o.task, "SA, ERC, NLI or a label-space JSON path");
  cmd->add_option("--epsilon", o.epsilon, "Sinkhorn entropic regularization");
  cmd->add_option("--epochs", o.epochs, "Distillation epochs");
  cmd->add_option("--schemes", o.schemes, "Weighting schemes (A D U E)")->delimiter(',');
  cmd->add_option("--divergences", o.divergences, "Divergences (sinkhorn kl)")->delimiter(',');
  cmd->add_flag("--lwf,!--no-lwf", o.lwf, "Include the learning-without-forgetting teacher");
}

knot::ExperimentConfig resolve(const Overrides& o) {
  knot::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = knot::load_config(o.config_path);
  if (const char* env = std::getenv("KNOT_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    cfg.output_dir = env;
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.task) cfg.task = *o.task;
  if (o.epsilon) cfg.sinkhorn.epsilon = *o.epsilon;
  if (o.epochs) cfg.optimizer.epochs = *o.epochs;
  if (!o.schemes.empty()) {
    cfg.schemes.clear();
    for (const auto& s : o.schemes) cfg.schemes.push_back(knot::parse_scheme(s));
  }
  if (!o.divergences.empty()) {
    cfg.divergences.clear();
    for (const auto& d : o.divergences) cfg.divergences.push_back(knot::parse_divergence(d));
  }
  if (o.lwf) cfg.lwf = *o.lwf;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KNOT: Sinkhorn and entropy ensemble distillation workbench"};
  app.require_subcommand(1);

  Overrides o;
  using Step = std::function<void(const knot::ExperimentConfig&)>;
  const std::vector<std::tuple<std::string, std::string, Step>> steps = {
      {"gen-data", "Generate the synthetic federation", knot::cmd_gen_data},
      {"train-local", "Train local teachers and the global model with cross-entropy",
       knot::cmd_train_local},
      {"estimate-bias", "Estimate each model's probability bias on noise inputs",
       knot::cmd_estimate_bias},
      {"distill", "Distill one student per (divergence x scheme) cell", knot::cmd_distill},
      {"evaluate", "Evaluate every student on every test split", knot::cmd_evaluate},
      {"run", "gen-data, train-local, estimate-bias, distill and evaluate", knot::run_pipeline},
  };
  Step selected;
  for (const auto& [name, help, step] : steps) {
    auto* cmd = app.add_subcommand(name, help);
    add_config_options(cmd, o);
    cmd->callback([&selected, step = step] { selected = step; });
  }

  std::string results_path;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Format a results CSV as a comparison table");
  report->add_option("results", results_path, "Results CSV")->required();
  report->add_option("--out", report_out, "Also write the table to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      std::ostringstream table;
      knot::cmd_report(results_path, table);
      std::cout << table.str();
      if (!report_out.empty()) knot::write_file_atomic(report_out, table.str());
      return 0;
    }
    const auto cfg = resolve(o);
    selected(cfg);
  } catch (const std::exception& e) {
    std::cerr << "knot: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
