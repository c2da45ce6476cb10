#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "icrl/cli/config.hpp"
#include "icrl/envs/task.hpp"

namespace icrl::cli {

// Canonical artifact layout under the experiment output directory.
struct RunPaths {
  std::string root;

  std::string config_echo() const { return root + "/config.json"; }
  std::string corpus() const { return root + "/corpus.jsonl"; }
  std::string value_q() const { return root + "/value_q.ckpt"; }
  std::string value_v() const { return root + "/value_v.ckpt"; }
  std::string value_curve() const { return root + "/value_curve.csv"; }
  std::string advantage_table() const { return root + "/advantage_table.txt"; }
  std::string policy_ckpt() const { return root + "/policy.ckpt"; }
  std::string policy_curve() const { return root + "/policy_curve.csv"; }
  std::string propositions() const { return root + "/propositions.json"; }
  std::string eval_dir() const { return root + "/eval"; }
  std::string report_dir() const { return root + "/report"; }
  std::string manifest_dir() const { return root + "/manifests"; }
  std::string manifest(const std::string& stage) const {
    return manifest_dir() + "/" + stage + ".json";
  }
};

// Provenance note each stage leaves behind: the producing config hash plus
// content hashes of everything it read and wrote.  Downstream stages refuse
// artifacts from a different config instead of recomputing silently.
struct StageManifest {
  std::string stage;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
  std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
  nlohmann::json meta;  // stage-specific extras (e.g. calibrated p_opt)
};

void write_stage_manifest(const RunPaths& paths, const StageManifest& manifest);
StageManifest read_stage_manifest(const RunPaths& paths,
                                  const std::string& stage,
                                  const std::string& requesting_stage);

// The task family the config describes (bandit features derive from the
// master seed).
envs::TaskFamily family_from_config(const ExperimentConfig& config);

// Pipeline stages.  Each validates its upstream manifests (PipelineError
// names what's missing), writes its artifacts deterministically, and leaves
// its own manifest.
void run_gen_data(const ExperimentConfig& config);
void run_train_value(const ExperimentConfig& config);
void run_estimate_adv(const ExperimentConfig& config);
void run_train_policy(const ExperimentConfig& config);
void run_eval(const ExperimentConfig& config);
bool run_verify_props(const ExperimentConfig& config);  // false = checks failed
void run_report(const ExperimentConfig& config, bool force = false);

// Dispatch by subcommand name; returns the process exit code contribution
// (0, or 4 when verify-props finds a violated proposition).  Unknown
// subcommands raise ConfigError.
int run_stage(const std::string& subcommand, const ExperimentConfig& config,
              bool force = false);

}  // namespace icrl::cli
