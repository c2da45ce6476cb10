#include "icrl/pretrain/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icrl/advantage/sequences.hpp"
#include "icrl/errors.hpp"
#include "icrl/numkit/adamw.hpp"

namespace icrl::pretrain {

using advantage::AdvantageTable;
using datagen::ContextDataset;
using datagen::PretrainCorpus;
using numkit::GradMap;
using numkit::Matrix;
using numkit::OptimState;
using numkit::ParamStore;
using numkit::Rng;
using numkit::Var;
using seqmodel::ForwardCache;
using seqmodel::ModelConfig;
using seqmodel::Token;
using seqmodel::TokenKind;
using seqmodel::TokenSequence;

void PolicyTrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1)
    throw ContractError("PolicyTrainConfig: bad epoch/batch settings");
  if (!(eta > 0.0)) throw ContractError("PolicyTrainConfig: eta must be > 0");
  if (!(learning_rate > 0.0) || weight_decay < 0.0)
    throw ContractError("PolicyTrainConfig: bad optimizer settings");
  if (n_layers < 1 || embed_dim < 1)
    throw ContractError("PolicyTrainConfig: bad model settings");
  if (max_steps_per_epoch < 0 || val_samples < 0)
    throw ContractError("PolicyTrainConfig: negative sample caps");
}

ModelConfig policy_model_config(const envs::TaskFamily& family, int horizon,
                                int n_layers, int embed_dim) {
  if (horizon < 1) throw ContractError("policy_model_config: bad horizon");
  ModelConfig config;
  config.n_layers = n_layers;
  config.n_heads = 1;
  config.embed_dim = embed_dim;
  config.max_context = horizon + 1;  // transitions plus the query token
  config.vocab = advantage::family_vocab(family);
  config.head_kind = seqmodel::HeadKind::kPolicyLogits;
  config.token_format = seqmodel::TokenFormat::kTransition;
  config.validate();
  return config;
}

TokenSequence policy_sequence(const ContextDataset& dataset, int step,
                              QueryMask mask,
                              const std::vector<int>* permutation) {
  // Only the four transition fields are read here; returns may be absent and
  // an empty context (deployment with no history) is legal with step == -1.
  const std::size_t n = dataset.states.size();
  if (dataset.actions.size() != n || dataset.rewards.size() != n ||
      dataset.next_states.size() != n)
    throw ShapeError("policy_sequence: context field lengths differ");
  const int horizon = static_cast<int>(n);
  if (step < -1 || step >= horizon)
    throw ContractError("policy_sequence: step out of range");
  if (permutation && static_cast<int>(permutation->size()) != horizon)
    throw ContractError("policy_sequence: permutation length mismatch");

  TokenSequence seq;
  seq.tokens.reserve(static_cast<std::size_t>(horizon) + 1);
  for (int slot = 0; slot < horizon; ++slot) {
    const int j = permutation ? (*permutation)[static_cast<std::size_t>(slot)]
                              : slot;
    if (j < 0 || j >= horizon)
      throw ContractError("policy_sequence: permutation index out of range");
    Token tok;
    tok.kind = TokenKind::kTransition;
    tok.state = dataset.states[static_cast<std::size_t>(j)];
    tok.action = dataset.actions[static_cast<std::size_t>(j)];
    tok.reward = dataset.rewards[static_cast<std::size_t>(j)];
    tok.next_state = dataset.next_states[static_cast<std::size_t>(j)];
    if (j == step && mask != QueryMask::kNone) {
      tok.action = -1;
      tok.reward = 0.0;
      if (mask == QueryMask::kActionRewardNextState) tok.next_state = -1;
    }
    seq.tokens.push_back(tok);
  }
  Token query;
  query.kind = TokenKind::kQueryState;
  query.state = step >= 0 ? dataset.states[static_cast<std::size_t>(step)]
                          : dataset.query_state;
  seq.tokens.push_back(query);
  return seq;
}

namespace {

double log_prob_at(const Matrix& logits, int row, int action) {
  if (action < 0 || action >= logits.cols())
    throw ContractError("policy loss: action outside the model vocabulary");
  const double peak = logits.row(row).maxCoeff();
  double lse = 0.0;
  for (numkit::Index a = 0; a < logits.cols(); ++a)
    lse += std::exp(logits(row, a) - peak);
  return logits(row, action) - (peak + std::log(lse));
}

double table_weight(const AdvantageTable& table, int dataset, int step) {
  if (dataset < 0 ||
      static_cast<std::size_t>(dataset) >= table.rows.size() || step < 0 ||
      static_cast<std::size_t>(step) >=
          table.rows[static_cast<std::size_t>(dataset)].size())
    throw ContractError("dit_loss: missing weight for dataset " +
                        std::to_string(dataset) + " step " +
                        std::to_string(step));
  return table.rows[static_cast<std::size_t>(dataset)]
                   [static_cast<std::size_t>(step)].weight;
}

const ContextDataset& batch_dataset(const PretrainCorpus& corpus, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= corpus.datasets.size())
    throw ContractError("policy loss: dataset index out of range");
  return corpus.datasets[static_cast<std::size_t>(index)];
}

// Shared evaluation core: mean of -w log T(a_step | s_step, D).  `table`
// null means unit weights (the behavior-cloning reduction).
double weighted_nll(const PretrainCorpus& corpus,
                    const std::vector<PolicyBatchItem>& batch,
                    const ModelConfig& config, const ParamStore& params,
                    const AdvantageTable* table, QueryMask mask) {
  if (batch.empty()) throw ContractError("policy loss: empty batch");
  ForwardCache cache(config);
  double total = 0.0;
  for (const PolicyBatchItem& item : batch) {
    const ContextDataset& dataset = batch_dataset(corpus, item.dataset);
    if (item.step < 0 || item.step >= dataset.horizon())
      throw ContractError("policy loss: step out of range");
    const double w =
        table ? table_weight(*table, item.dataset, item.step) : 1.0;
    const Matrix& out =
        cache.run(policy_sequence(dataset, item.step, mask), params);
    const int action = dataset.actions[static_cast<std::size_t>(item.step)];
    total += -w * log_prob_at(out, static_cast<int>(out.rows()) - 1, action);
  }
  return total / static_cast<double>(batch.size());
}

struct PolicyLossGraph {
  std::unique_ptr<seqmodel::ForwardGraph> fg;
  Var target;
  Var loss;
};

PolicyLossGraph build_policy_loss_graph(const ModelConfig& config,
                                        int length) {
  PolicyLossGraph lg;
  lg.fg = seqmodel::build_forward_graph(config, length);
  auto& g = lg.fg->graph;
  lg.target = g.input("target", length, config.output_dim());
  lg.loss = scale(sum(mul(log_softmax_rows(lg.fg->outputs), lg.target)), -1.0);
  return lg;
}

}  // namespace

double dit_loss(const PretrainCorpus& corpus,
                const std::vector<PolicyBatchItem>& batch,
                const ModelConfig& config, const ParamStore& params,
                const AdvantageTable& table, QueryMask mask) {
  return weighted_nll(corpus, batch, config, params, &table, mask);
}

double bc_loss(const PretrainCorpus& corpus,
               const std::vector<PolicyBatchItem>& batch,
               const ModelConfig& config, const ParamStore& params,
               QueryMask mask) {
  return weighted_nll(corpus, batch, config, params, nullptr, mask);
}

double dpt_loss(const PretrainCorpus& corpus, const std::vector<int>& datasets,
                const ModelConfig& config, const ParamStore& params) {
  if (datasets.empty()) throw ContractError("dpt_loss: empty batch");
  ForwardCache cache(config);
  double total = 0.0;
  for (const int index : datasets) {
    const ContextDataset& dataset = batch_dataset(corpus, index);
    if (dataset.optimal_action < 0)
      throw ContractError("dpt_loss: dataset " + std::to_string(index) +
                          " has no optimal-action label");
    const Matrix& out =
        cache.run(policy_sequence(dataset, -1, QueryMask::kNone), params);
    total += -log_prob_at(out, static_cast<int>(out.rows()) - 1,
                          dataset.optimal_action);
  }
  return total / static_cast<double>(datasets.size());
}

PolicyTrainResult train_policy(const PretrainCorpus& corpus,
                               const PolicyTrainConfig& config,
                               const AdvantageTable* table) {
  config.validate();
  std::vector<int> train_sets;
  std::vector<int> val_sets;
  for (std::size_t i = 0; i < corpus.datasets.size(); ++i) {
    if (corpus.datasets[i].split == "train")
      train_sets.push_back(static_cast<int>(i));
    else if (corpus.datasets[i].split == "val")
      val_sets.push_back(static_cast<int>(i));
  }
  if (train_sets.empty())
    throw ContractError("train_policy: corpus has no train split");
  const int horizon = corpus.datasets[(std::size_t)train_sets[0]].horizon();
  for (const auto& dataset : corpus.datasets)
    if (dataset.horizon() != horizon)
      throw ContractError("train_policy: mixed horizons in one corpus");

  if (config.objective == Objective::kDit) {
    if (!table)
      throw ContractError("train_policy: DIT objective requires an advantage "
                          "table");
    if (table->rows.size() != corpus.datasets.size())
      throw ContractError("train_policy: advantage table does not cover the "
                          "corpus");
    if (std::abs(table->eta - config.eta) > 1e-12)
      throw ContractError("train_policy: advantage table temperature "
                          "mismatch");
  }
  if (config.objective == Objective::kDpt)
    for (const int i : train_sets)
      if (corpus.datasets[(std::size_t)i].optimal_action < 0)
        throw ContractError("train_policy: DPT objective requires "
                            "optimal-action labels");

  PolicyTrainResult result;
  result.objective = config.objective;
  result.config = policy_model_config(corpus.family, horizon, config.n_layers,
                                      config.embed_dim);
  Rng init_rng = Rng::derive(config.seed, "policy_init", 0);
  ParamStore params = seqmodel::init_params(result.config, init_rng);

  // Sample spaces: (dataset, step) pairs for the in-trajectory objectives,
  // whole datasets for the query-label objective.
  const bool per_step = config.objective != Objective::kDpt;
  std::vector<PolicyBatchItem> train_items;
  for (const int i : train_sets) {
    if (per_step)
      for (int h = 0; h < horizon; ++h) train_items.push_back({i, h});
    else
      train_items.push_back({i, -1});
  }
  std::vector<PolicyBatchItem> val_items;
  for (const int i : val_sets) {
    if (per_step)
      for (int h = 0; h < horizon; ++h) val_items.push_back({i, h});
    else
      val_items.push_back({i, -1});
  }
  if (config.val_samples > 0 &&
      static_cast<int>(val_items.size()) > config.val_samples) {
    Rng val_rng = Rng::derive(config.seed, "policy_val", 0);
    const std::vector<int> order =
        val_rng.permutation(static_cast<int>(val_items.size()));
    std::vector<PolicyBatchItem> kept;
    kept.reserve(static_cast<std::size_t>(config.val_samples));
    for (int k = 0; k < config.val_samples; ++k)
      kept.push_back(val_items[static_cast<std::size_t>(order[(std::size_t)k])]);
    val_items = std::move(kept);
  }

  const auto eval_items = [&](const std::vector<PolicyBatchItem>& items) {
    switch (config.objective) {
      case Objective::kDit:
        return dit_loss(corpus, items, result.config, params, *table,
                        config.mask);
      case Objective::kBc:
        return bc_loss(corpus, items, result.config, params, config.mask);
      case Objective::kDpt: {
        std::vector<int> sets;
        sets.reserve(items.size());
        for (const auto& item : items) sets.push_back(item.dataset);
        return dpt_loss(corpus, sets, result.config, params);
      }
    }
    throw ContractError("train_policy: unknown objective");
  };

  PolicyLossGraph lg = build_policy_loss_graph(result.config, horizon + 1);
  OptimState opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;

  const bool shuffle_context = corpus.family.kind == envs::FamilyKind::kBandit;
  double best_val = std::numeric_limits<double>::infinity();
  ParamStore best_params = params;
  long long global_step = 0;
  numkit::NamedTensors inputs;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng order_rng = Rng::derive(config.seed, "policy_order",
                                static_cast<std::uint64_t>(epoch));
    Rng shuffle_rng = Rng::derive(config.seed, "policy_shuffle",
                                  static_cast<std::uint64_t>(epoch));
    const std::vector<int> order =
        order_rng.permutation(static_cast<int>(train_items.size()));
    int steps = (static_cast<int>(train_items.size()) + config.batch_size - 1) /
                config.batch_size;
    if (config.max_steps_per_epoch > 0)
      steps = std::min(steps, config.max_steps_per_epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (int step = 0; step < steps; ++step) {
      const int begin = step * config.batch_size;
      const int end = std::min<int>(begin + config.batch_size,
                                    static_cast<int>(train_items.size()));
      GradMap grads;
      double batch_loss = 0.0;
      for (int b = begin; b < end; ++b) {
        const PolicyBatchItem item =
            train_items[(std::size_t)order[(std::size_t)b]];
        const ContextDataset& dataset = batch_dataset(corpus, item.dataset);
        std::vector<int> perm;
        if (shuffle_context) perm = shuffle_rng.permutation(horizon);
        const TokenSequence seq =
            config.objective == Objective::kDpt
                ? policy_sequence(dataset, -1, QueryMask::kNone,
                                  shuffle_context ? &perm : nullptr)
                : policy_sequence(dataset, item.step, config.mask,
                                  shuffle_context ? &perm : nullptr);
        const int label =
            config.objective == Objective::kDpt
                ? dataset.optimal_action
                : dataset.actions[static_cast<std::size_t>(item.step)];
        if (label < 0 || label >= result.config.output_dim())
          throw ContractError("train_policy: action label outside vocab");
        const double w =
            config.objective == Objective::kDit
                ? table_weight(*table, item.dataset, item.step)
                : 1.0;
        inputs["tokens"] = seqmodel::token_matrix(seq, result.config);
        Matrix target = Matrix::Zero(horizon + 1, result.config.output_dim());
        target(horizon, label) = w;
        inputs["target"] = std::move(target);
        try {
          lg.fg->graph.forward(inputs, params);
          batch_loss += lg.fg->graph.value(lg.loss)(0, 0);
          GradMap sample_grads = lg.fg->graph.backward(lg.loss);
          for (auto& [name, grad] : sample_grads) {
            auto it = grads.find(name);
            if (it == grads.end())
              grads[name] = grad;
            else
              it->second += grad;
          }
        } catch (const NumericsError& e) {
          throw NumericsError("policy training diverged at step " +
                              std::to_string(global_step) + ": " + e.what());
        }
      }
      if (!std::isfinite(batch_loss))
        throw NumericsError("policy training diverged at step " +
                            std::to_string(global_step));
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (auto& [name, grad] : grads) grad *= inv;
      numkit::adamw_step(params, grads, opt);
      epoch_loss += batch_loss;
      epoch_samples += static_cast<std::size_t>(end - begin);
      ++global_step;
    }
    advantage::TrainPoint point;
    point.epoch = epoch;
    point.train_loss = epoch_loss / static_cast<double>(epoch_samples);
    point.val_loss = eval_items(val_items.empty() ? train_items : val_items);
    result.curve.push_back(point);
    if (point.val_loss < best_val) {
      best_val = point.val_loss;
      best_params = params;
    }
  }
  result.params = std::move(best_params);
  return result;
}

}  // namespace icrl::pretrain
