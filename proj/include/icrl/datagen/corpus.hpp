#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "icrl/datagen/behavior.hpp"
#include "icrl/envs/task.hpp"
#include "icrl/numkit/rng.hpp"
#include "icrl/numkit/tensor.hpp"

namespace icrl::datagen {

// One in-context dataset: a single behavior trajectory from one task plus a
// labelled query state.  Rewards and returns are kept in raw (environment)
// units in memory; normalization happens at the corpus level on write.
struct ContextDataset {
  envs::TaskSpec task;
  BehaviorPolicy behavior;
  std::string split = "train";  // "train", "val", or "test"
  int dataset_index = -1;       // position in the generation order (seed provenance)

  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<int> next_states;
  std::vector<double> returns;  // discounted return-to-go per step, raw units

  int query_state = 0;
  int optimal_action = -1;

  int horizon() const { return static_cast<int>(states.size()); }
  void validate() const;
};

// Affine map used to standardize return labels across a corpus.
struct RewardNormalizer {
  double mean = 0.0;
  double std = 1.0;

  double normalize_return(double g) const { return (g - mean) / std; }
  double denormalize_return(double g) const { return g * std + mean; }
  // Rewards shift by (1 - gamma) * mean so that normalized returns still obey
  // the one-step recursion g_h = r_h + gamma * g_{h+1}.
  double normalize_reward(double r, double gamma) const {
    return (r - (1.0 - gamma) * mean) / std;
  }
};

struct PretrainCorpus {
  envs::TaskFamily family;
  double gamma = 0.8;
  std::uint64_t master_seed = 0;
  RewardNormalizer normalizer;
  std::vector<ContextDataset> datasets;

  std::vector<const ContextDataset*> split(const std::string& name) const;
  void validate() const;
};

// Backward recursion g_h = r_h + gamma * g_{h+1}, g_H = r_H.
std::vector<double> returns_to_go(const std::vector<double>& rewards,
                                  double gamma);

// Fit mean/std of all per-step returns across the datasets.  A small floor on
// std keeps the scale usable for (near-)constant-return corpora.
RewardNormalizer fit_normalizer(const std::vector<ContextDataset>& datasets);

// Roll one behavior trajectory of length `horizon` in the dataset's task,
// filling states/actions/rewards/next_states and raw returns-to-go.
void roll_context(ContextDataset& dataset, const envs::TaskFamily& family,
                  int horizon, double gamma, numkit::Rng& rng);

// Give every dataset a query state and the oracle-optimal action there.
// Bandit queries use the single dummy state; darkroom and tabular queries are
// drawn uniformly from a per-dataset stream of `seed`.
void attach_optimal_labels(PretrainCorpus& corpus, std::uint64_t seed);

struct BanditCorpusConfig {
  int num_train_tasks = 2000;
  int num_test_tasks = 200;
  double val_fraction = 0.1;  // carved from the tail of the train tasks
  int horizon = 50;
  double gamma = 0.8;
};

struct DarkroomCorpusConfig {
  std::vector<int> train_goals;
  std::vector<int> test_goals;
  int contexts_per_goal = 200;
  int test_contexts_per_goal = 20;
  double val_fraction = 0.1;  // carved per training goal
  int horizon = 20;
  double gamma = 0.8;
  double p_opt = 0.2;
};

struct TabularCorpusConfig {
  int num_datasets = 500;
  double val_fraction = 0.1;  // carved from the tail of the datasets
  int horizon = 10;
  double gamma = 0.8;
};

PretrainCorpus generate_bandit_corpus(const envs::TaskFamily& family,
                                      const BanditCorpusConfig& config,
                                      std::uint64_t seed);

PretrainCorpus generate_darkroom_corpus(const envs::TaskFamily& family,
                                        const DarkroomCorpusConfig& config,
                                        std::uint64_t seed);

// Tabular corpora reuse the family's fixed MDP; each dataset draws a fresh
// random behavior policy (Dirichlet rows) and one rollout.
PretrainCorpus generate_tabular_corpus(const envs::TaskFamily& family,
                                       const TabularCorpusConfig& config,
                                       std::uint64_t seed);

// JSONL on disk: one header object, then one object per dataset.  Stored
// returns are normalized; rewards stay raw.  Reading restores raw returns and
// re-checks the return recursion per dataset.
void write_corpus(const PretrainCorpus& corpus, const std::string& path);
PretrainCorpus read_corpus(const std::string& path);

nlohmann::json dataset_to_json(const ContextDataset& dataset,
                               const RewardNormalizer& normalizer);
ContextDataset dataset_from_json(const nlohmann::json& j,
                                 const RewardNormalizer& normalizer,
                                 double gamma);

}  // namespace icrl::datagen
