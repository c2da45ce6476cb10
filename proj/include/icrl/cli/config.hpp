#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "icrl/advantage/value.hpp"
#include "icrl/pretrain/policy.hpp"

namespace icrl::cli {

// Experiment configuration: every field has a default so the empty document
// is a runnable desk-scale bandit setup; unknown keys are rejected by name.

struct BanditSettings {
  int num_arms = 5;
  int feature_dim = 5;
  double noise_var = 0.3;
};

struct DarkroomSettings {
  int side = 5;
  std::vector<int> train_goals = {0,  1,  2,  3,  4,  5,  6,  7,  8,  9,
                                  10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  std::vector<int> test_goals = {20, 21, 22, 23, 24};
  int contexts_per_goal = 40;
  int test_contexts_per_goal = 4;
  double p_opt = 0.2;
  bool calibrate = false;  // sweep p_opt against the return-ratio target
  double target_ratio = 0.3;
};

struct TabularSettings {
  int chain_states = 3;
  int num_datasets = 500;
};

struct CorpusSettings {
  int num_train_tasks = 2000;
  int num_test_tasks = 200;
  double val_fraction = 0.1;
  int horizon = 50;
  double gamma = 0.8;
};

struct ValueSettings {
  advantage::ValueLossConfig loss;    // lambda, bellman form, eta, clip
  advantage::ValueTrainConfig train;  // epochs, batch, lr, decay, seed
  int n_layers = 2;
  int embed_dim = 64;
};

struct AdvantageSettings {
  std::string source = "model";  // "model" or "oracle" (tabular families)
};

struct EvalSettings {
  int n_test_tasks = 20;
  int n_episodes = 20;
  std::string context_source = "random_behavior";  // or "expert"
  std::string offline_mode = "greedy";             // or "sample"
  std::vector<std::string> baselines = {"emp", "ucb", "lcb", "ts"};
};

struct PropsSettings {
  int prop1_instances = 50;
  double grid_step = 2e-3;
  int prop2_instances = 100;
  int num_states = 4;
  int num_actions = 3;
  int z_instances = 50;
  double eta = 1.0;
};

struct ExperimentConfig {
  std::string family = "bandit";  // bandit | darkroom | tabular
  std::uint64_t master_seed = 0;
  std::string output_dir = "runs/default";

  BanditSettings bandit;
  DarkroomSettings darkroom;
  TabularSettings tabular;
  CorpusSettings corpus;
  ValueSettings value;
  AdvantageSettings advantage;
  pretrain::PolicyTrainConfig policy;
  EvalSettings eval;
  PropsSettings props;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Full echo (every field, defaults included); from_json rejects unknown keys
// and wrong types with ConfigError naming the dotted key path.
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Layered resolution: defaults, then the JSON file (if path nonempty), then
// the ICRL_MASTER_SEED environment variable, then overrides in order.
// Override values parse as JSON scalars when possible, else as strings.
ExperimentConfig parse_config(
    const std::string& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Hash of the canonical echo; stamped into every stage manifest.
std::string config_hash_hex(const ExperimentConfig& config);

// Enum name helpers shared with the pipeline.
std::string objective_name(pretrain::Objective objective);
pretrain::Objective objective_from_name(const std::string& name);

}  // namespace icrl::cli
