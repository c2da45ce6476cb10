#include "icrl/cli/driver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "icrl/cli/config.hpp"
#include "icrl/cli/pipeline.hpp"
#include "icrl/errors.hpp"

namespace icrl::cli {

namespace {

struct StageArgs {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::int64_t seed = 0;
  bool seed_given = false;
  bool force = false;
};

void add_common_options(CLI::App* sub, StageArgs& args) {
  args.app = sub;
  sub->add_option("--config", args.config_path,
                  "Experiment config file (JSON)");
  sub->add_option("--set", args.sets,
                  "Override a config entry as dotted.key=value (repeatable)");
  sub->add_option("--out", args.out, "Override the run output directory");
  sub->add_option("--seed", args.seed, "Override the master seed")
      ->each([&args](const std::string&) { args.seed_given = true; });
}

std::vector<std::pair<std::string, std::string>> collect_overrides(
    const StageArgs& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const std::string& entry : args.sets) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects dotted.key=value, got '" + entry +
                        "'");
    overrides.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  if (!args.out.empty()) overrides.emplace_back("output_dir", args.out);
  if (args.seed_given)
    overrides.emplace_back("master_seed", std::to_string(args.seed));
  return overrides;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"In-context decision-making laboratory"};
  app.name("icrl");
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"gen-data", "Build the task family and write the pretraining corpus"},
      {"train-value", "Fit the in-context value estimators on the corpus"},
      {"estimate-adv", "Score every context transition with an advantage"},
      {"train-policy", "Pretrain the decision policy on the corpus"},
      {"eval", "Deploy the policy (and bandit baselines) on held-out tasks"},
      {"verify-props", "Run the analytic verification suites"},
      {"report", "Aggregate evaluation records into the report bundle"},
  };
  std::vector<StageArgs> stage_args(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    CLI::App* sub = app.add_subcommand(stages[i].first, stages[i].second);
    add_common_options(sub, stage_args[i]);
    if (stages[i].first == "report")
      sub->add_flag("--force", stage_args[i].force,
                    "Combine artifacts even if stage config hashes differ");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (!stage_args[i].app->parsed()) continue;
      const ExperimentConfig config = parse_config(
          stage_args[i].config_path, collect_overrides(stage_args[i]));
      config.validate();
      return run_stage(stages[i].first, config, stage_args[i].force);
    }
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace icrl::cli
