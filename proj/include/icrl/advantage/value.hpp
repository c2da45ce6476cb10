#pragma once

#include <string>
#include <vector>

#include "icrl/datagen/corpus.hpp"
#include "icrl/numkit/adamw.hpp"
#include "icrl/seqmodel/model.hpp"

namespace icrl::advantage {

// Form of the one-step consistency regularizer.  kStandard penalizes the
// usual residual value(h) - (r_h + gamma * target(value(h+1))) with the
// next-step term held fixed; kAsWritten penalizes
// r_h + gamma * value(h) - value(h+1) with gradients through both sides.
enum class BellmanForm { kStandard, kAsWritten };

struct ValueLossConfig {
  double lambda = 0.1;
  double gamma = 0.8;
  BellmanForm bellman_form = BellmanForm::kStandard;
  double eta = 1.0;             // temperature for the pretraining weights
  double weight_clip_max = 20.0;
  void validate() const;
};

struct AdvantageEntry {
  double q_hat = 0.0;
  double v_hat = 0.0;
  double a_hat = 0.0;  // always q_hat - v_hat
  double weight = 1.0;
};

// One row of entries per dataset, one entry per step, aligned with the
// corpus order.
struct AdvantageTable {
  double eta = 1.0;
  double weight_clip_max = 20.0;
  std::vector<std::vector<AdvantageEntry>> rows;

  void validate() const;
};

void write_advantage_table(const AdvantageTable& table,
                           const std::string& path);
AdvantageTable read_advantage_table(const std::string& path);

// Decomposed value objective for one corpus slice under fixed parameters:
// total = reg + lambda * (v_bellman + q_bellman), each term averaged over
// datasets with a 1/H per-trajectory weight.  The last step of each
// trajectory contributes no consistency residual.
struct ValueLossParts {
  double reg = 0.0;
  double v_bellman = 0.0;
  double q_bellman = 0.0;
  double total = 0.0;
};

ValueLossParts value_loss(const std::vector<const datagen::ContextDataset*>& batch,
                          const datagen::RewardNormalizer& normalizer,
                          const seqmodel::ModelConfig& q_config,
                          const numkit::ParamStore& q_params,
                          const seqmodel::ModelConfig& v_config,
                          const numkit::ParamStore& v_params,
                          const ValueLossConfig& config);

struct ValueTrainConfig {
  int epochs = 20;
  int batch_size = 128;
  std::uint64_t seed = 0;
  int max_steps_per_epoch = 0;  // 0 = one pass over the training split
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
};

struct TrainPoint {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct ValueEstimators {
  seqmodel::ModelConfig q_config;
  seqmodel::ModelConfig v_config;
  numkit::ParamStore q_params;
  numkit::ParamStore v_params;
  std::vector<TrainPoint> curve;
};

// Scaffolding for the two value models of a family: (s, a, G) tokens for the
// action-value model, (s, G) tokens for the state-value model, scalar heads.
seqmodel::ModelConfig value_model_config(const envs::TaskFamily& family,
                                         int horizon, bool action_conditioned,
                                         int n_layers = 2, int embed_dim = 64);

// Joint AdamW training of both value models on the corpus train split, with
// best-validation-epoch parameters returned (train split when no val split
// exists).  Throws NumericsError naming the step if the loss diverges.
ValueEstimators train_value_estimators(const datagen::PretrainCorpus& corpus,
                                       const ValueLossConfig& loss_config,
                                       const ValueTrainConfig& train_config,
                                       int n_layers = 2, int embed_dim = 64);

// Runs both trained models over every dataset and fills
// (q_hat, v_hat, a_hat, weight) per step.  Estimates stay in the corpus's
// normalized return units.
AdvantageTable estimate_advantages(const datagen::PretrainCorpus& corpus,
                                   const ValueEstimators& estimators,
                                   const ValueLossConfig& config);

// Exact dynamic-programming substitute for tabular corpora: per dataset,
// solves the behavior policy on the family MDP and reads off Q, V, and A at
// the visited state-action pairs, rescaled to normalized units.
AdvantageTable oracle_advantages(const datagen::PretrainCorpus& corpus,
                                 const ValueLossConfig& config);

// Fills weight = exp(min(a_hat, eta * ln(clip)) / eta) for every entry.
void weights_from_advantages(AdvantageTable& table,
                             const ValueLossConfig& config);

// Per-position action-value estimates at one step of one dataset: runs the
// action-substituted sequence for every action (diagnostic for ordering
// checks and greedy readouts).
numkit::Vector q_values_at_step(const datagen::ContextDataset& dataset,
                                const datagen::RewardNormalizer& normalizer,
                                const seqmodel::ModelConfig& q_config,
                                const numkit::ParamStore& q_params, int step);

}  // namespace icrl::advantage
