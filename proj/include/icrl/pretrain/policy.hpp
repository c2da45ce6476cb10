#pragma once

#include <vector>

#include "icrl/advantage/value.hpp"
#include "icrl/datagen/corpus.hpp"
#include "icrl/seqmodel/model.hpp"

namespace icrl::pretrain {

enum class Objective { kDit, kBc, kDpt };

// What the query step's own context token reveals.  kActionReward hides the
// logged action and reward of the queried transition (default; prevents the
// model from reading its target off the context).  kActionRewardNextState
// additionally hides the successor state, which on deterministic dynamics
// still identifies the action.  kNone shows the record verbatim.
enum class QueryMask { kActionReward, kActionRewardNextState, kNone };

struct PolicyTrainConfig {
  Objective objective = Objective::kDit;
  int epochs = 10;
  int batch_size = 128;
  double eta = 1.0;  // must match the advantage table's temperature
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int n_layers = 2;
  int embed_dim = 64;
  QueryMask mask = QueryMask::kActionReward;
  int max_steps_per_epoch = 0;  // 0 = one pass over the sample space
  int val_samples = 0;          // 0 = every validation sample each epoch
  void validate() const;
};

// One in-trajectory training sample: dataset is an index into
// corpus.datasets and step indexes the queried transition.
struct PolicyBatchItem {
  int dataset = 0;
  int step = 0;
};

struct PolicyTrainResult {
  Objective objective = Objective::kDit;
  seqmodel::ModelConfig config;
  numkit::ParamStore params;
  std::vector<advantage::TrainPoint> curve;
};

// Policy-model scaffolding: transition tokens plus one trailing query token,
// logits over the family's actions.
seqmodel::ModelConfig policy_model_config(const envs::TaskFamily& family,
                                          int horizon, int n_layers = 2,
                                          int embed_dim = 64);

// Token sequence for one sample: every context transition in stored order
// (or permuted order when `permutation` is given), then one query token.
// step >= 0 queries the in-trajectory state s_step and masks the step's own
// context record per `mask`; step == -1 queries the dataset-level
// query_state with nothing masked.
seqmodel::TokenSequence policy_sequence(const datagen::ContextDataset& dataset,
                                        int step, QueryMask mask,
                                        const std::vector<int>* permutation =
                                            nullptr);

// Mean weighted negative log-likelihood of the logged actions,
// -mean_i w_i log T(a_step | s_step, D_i), with weights looked up in the
// advantage table.  Missing table entries raise ContractError.
double dit_loss(const datagen::PretrainCorpus& corpus,
                const std::vector<PolicyBatchItem>& batch,
                const seqmodel::ModelConfig& config,
                const numkit::ParamStore& params,
                const advantage::AdvantageTable& table,
                QueryMask mask = QueryMask::kActionReward);

// dit_loss with unit weights (bit-identical by shared implementation).
double bc_loss(const datagen::PretrainCorpus& corpus,
               const std::vector<PolicyBatchItem>& batch,
               const seqmodel::ModelConfig& config,
               const numkit::ParamStore& params,
               QueryMask mask = QueryMask::kActionReward);

// Mean -log T(a* | query_state, D) over datasets; requires optimal labels.
double dpt_loss(const datagen::PretrainCorpus& corpus,
                const std::vector<int>& datasets,
                const seqmodel::ModelConfig& config,
                const numkit::ParamStore& params);

// AdamW pretraining of the policy model on the corpus train split with the
// selected objective; returns the best-validation checkpoint and the curve.
// kDit requires `table` (temperature matching config.eta); kDpt requires
// optimal labels on every dataset.  Bandit contexts are shuffled per
// training sample; trajectory contexts keep temporal order.
PolicyTrainResult train_policy(const datagen::PretrainCorpus& corpus,
                               const PolicyTrainConfig& config,
                               const advantage::AdvantageTable* table =
                                   nullptr);

}  // namespace icrl::pretrain
