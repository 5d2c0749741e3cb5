// Command-line front end: mncd <train|eval|predict|render|gradcheck> [options]

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "mncd/autodiff.hpp"
#include "mncd/commands.hpp"
#include "mncd/config.hpp"

namespace {

struct Flags {
  std::string config;
  std::string checkpoint;
  std::string output;
  std::string split = "test";
  std::vector<std::string> overrides;
  std::string adjoint_fault;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, Flags& f, bool needs_config) {
  auto* cfg = cmd->add_option("--config", f.config, "experiment config (JSON)");
  if (needs_config) cfg->required()->check(CLI::ExistingFile);
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint to load");
  cmd->add_option("--output", f.output, "output directory (overrides output_dir)");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&f](std::uint64_t s) { f.seed = s, f.seed_given = true; }, "training seed");
  cmd->add_option("--override", f.overrides, "config override key=value (repeatable)");
  // Test hook for the gradient checker; intentionally undocumented.
  cmd->add_option("--inject-adjoint-fault", f.adjoint_fault)->group("");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-temporal change detection: train, evaluate and inspect models"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  auto* predict = app.add_subcommand("predict", "write binary change maps");
  auto* render = app.add_subcommand("render", "write TP/TN/FP/FN maps");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all adjoints");
  for (auto* cmd : {train, eval, predict, render}) add_common(cmd, f, true);
  for (auto* cmd : {eval, predict, render}) {
    cmd->add_option("--split", f.split, "dataset split")->check(CLI::IsMember({"train", "val", "test"}));
  }
  add_common(gradcheck, f, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? mncd::kExitOk : mncd::kExitConfig;
  }

  try {
    if (!f.adjoint_fault.empty()) mncd::testing::set_adjoint_fault(f.adjoint_fault);
    if (gradcheck->parsed()) {
      mncd::gradcheck::Options options;
      if (f.seed_given) options.seed = f.seed;
      return mncd::run_gradcheck(options, std::cout);
    }

    auto overrides = f.overrides;
    if (f.seed_given) overrides.push_back("train.seed=" + std::to_string(f.seed));
    if (!f.output.empty()) overrides.push_back("output_dir=" + nlohmann::json(f.output).dump());
    const auto config = mncd::load_config(f.config, overrides);

    mncd::CommandOptions options;
    if (!f.checkpoint.empty()) options.checkpoint = f.checkpoint;
    options.split = f.split;
    if (train->parsed()) return mncd::run_train(config, options, std::cout);
    if (eval->parsed()) return mncd::run_eval(config, options, std::cout);
    if (predict->parsed()) return mncd::run_predict(config, options, std::cout);
    return mncd::run_render(config, options, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mncd::exit_code_for_current_exception();
  }
}
