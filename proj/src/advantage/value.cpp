#include "icrl/advantage/value.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "icrl/advantage/sequences.hpp"
#include "icrl/envs/tabular.hpp"
#include "icrl/errors.hpp"
#include "icrl/util.hpp"

namespace icrl::advantage {

using datagen::ContextDataset;
using datagen::PretrainCorpus;
using datagen::RewardNormalizer;
using nlohmann::json;
using numkit::GradMap;
using numkit::Matrix;
using numkit::NamedTensors;
using numkit::OptimState;
using numkit::ParamStore;
using numkit::Rng;
using numkit::Var;
using numkit::Vector;
using seqmodel::ForwardCache;
using seqmodel::ModelConfig;
using seqmodel::TokenFormat;

void ValueLossConfig::validate() const {
  if (!(eta > 0.0)) throw ContractError("ValueLossConfig: eta must be > 0");
  if (!(weight_clip_max >= 1.0))
    throw ContractError("ValueLossConfig: weight_clip_max must be >= 1");
  if (lambda < 0.0) throw ContractError("ValueLossConfig: lambda must be >= 0");
  if (gamma <= 0.0 || gamma >= 1.0)
    throw ContractError("ValueLossConfig: gamma outside (0, 1)");
}

void AdvantageTable::validate() const {
  if (!(eta > 0.0)) throw ContractError("AdvantageTable: eta must be > 0");
  if (!(weight_clip_max >= 1.0))
    throw ContractError("AdvantageTable: weight_clip_max must be >= 1");
  for (const auto& row : rows)
    for (const auto& entry : row) {
      if (entry.a_hat != entry.q_hat - entry.v_hat)
        throw ContractError("AdvantageTable: a_hat != q_hat - v_hat");
      if (!(entry.weight > 0.0))
        throw ContractError("AdvantageTable: non-positive weight");
      if (!std::isfinite(entry.q_hat) || !std::isfinite(entry.v_hat))
        throw NumericsError("AdvantageTable: non-finite estimate");
    }
}

ModelConfig value_model_config(const envs::TaskFamily& family, int horizon,
                               bool action_conditioned, int n_layers,
                               int embed_dim) {
  ModelConfig config;
  config.n_layers = n_layers;
  config.n_heads = 1;
  config.embed_dim = embed_dim;
  config.max_context = horizon;
  config.vocab = family_vocab(family);
  config.head_kind = seqmodel::HeadKind::kScalarValue;
  config.token_format = action_conditioned ? TokenFormat::kStateActionReturn
                                           : TokenFormat::kStateReturn;
  config.validate();
  return config;
}

namespace {

// Forward graph of one value model extended with its share of the training
// objective: reg = (1/H) sum_h (out_h - G_h)^2 plus the one-step consistency
// penalty over steps 0..H-2, also divided by H.
struct ValueLossGraph {
  std::unique_ptr<seqmodel::ForwardGraph> fg;
  Var reg;
  Var bellman;  // defined only when has_bellman
  Var total;
  bool has_bellman = false;
  int horizon = 0;
};

ValueLossGraph build_value_loss_graph(const ModelConfig& config, int horizon,
                                      const ValueLossConfig& loss_config) {
  ValueLossGraph lg;
  lg.horizon = horizon;
  lg.fg = seqmodel::build_forward_graph(config, horizon);
  auto& g = lg.fg->graph;
  Var out = lg.fg->outputs;
  Var targets = g.input("targets", horizon, 1);
  lg.reg = scale(sum(square(sub(out, targets))),
                 1.0 / static_cast<double>(horizon));
  lg.has_bellman = horizon >= 2;
  if (lg.has_bellman) {
    Var rewards = g.input("rewards", horizon - 1, 1);
    Var cur = rows(out, 0, horizon - 1);
    Var nxt = rows(out, 1, horizon - 1);
    Var resid;
    if (loss_config.bellman_form == BellmanForm::kStandard)
      resid = sub(cur, add(rewards, scale(stop_gradient(nxt), loss_config.gamma)));
    else
      resid = sub(add(rewards, scale(cur, loss_config.gamma)), nxt);
    lg.bellman = scale(sum(square(resid)), 1.0 / static_cast<double>(horizon));
    lg.total = add(lg.reg, scale(lg.bellman, loss_config.lambda));
  } else {
    lg.total = lg.reg;
  }
  return lg;
}

struct SampleLoss {
  double reg = 0.0;
  double bellman = 0.0;
  double total = 0.0;
};

SampleLoss run_value_sample(ValueLossGraph& lg, const ModelConfig& config,
                            const ParamStore& params,
                            const ContextDataset& dataset,
                            const RewardNormalizer& normalizer,
                            const ValueLossConfig& loss_config,
                            GradMap* grad_acc) {
  NamedTensors inputs;
  inputs["tokens"] = seqmodel::token_matrix(
      value_sequence(dataset, normalizer, config.token_format), config);
  inputs["targets"] = value_targets(dataset, normalizer);
  if (lg.has_bellman)
    inputs["rewards"] = bellman_rewards(dataset, normalizer, loss_config.gamma);
  lg.fg->graph.forward(inputs, params);
  SampleLoss loss;
  loss.reg = lg.fg->graph.value(lg.reg)(0, 0);
  loss.bellman = lg.has_bellman ? lg.fg->graph.value(lg.bellman)(0, 0) : 0.0;
  loss.total = lg.fg->graph.value(lg.total)(0, 0);
  if (grad_acc) {
    GradMap grads = lg.fg->graph.backward(lg.total);
    for (auto& [name, grad] : grads) {
      auto it = grad_acc->find(name);
      if (it == grad_acc->end())
        (*grad_acc)[name] = grad;
      else
        it->second += grad;
    }
  }
  return loss;
}

int common_horizon(const std::vector<const ContextDataset*>& datasets) {
  if (datasets.empty())
    throw ContractError("value training: empty dataset list");
  const int horizon = datasets[0]->horizon();
  for (const auto* dataset : datasets)
    if (dataset->horizon() != horizon)
      throw ContractError("value training: mixed horizons in one corpus");
  return horizon;
}

void check_model_matches_family(const ModelConfig& config,
                                const envs::TaskFamily& family,
                                bool action_conditioned) {
  const seqmodel::VocabSpec vocab = family_vocab(family);
  if (config.vocab.state_dim != vocab.state_dim ||
      config.vocab.action_count != vocab.action_count)
    throw ContractError("value model vocab does not match the task family");
  if (config.head_kind != seqmodel::HeadKind::kScalarValue)
    throw ContractError("value model requires a scalar head");
  const TokenFormat expected = action_conditioned
                                   ? TokenFormat::kStateActionReturn
                                   : TokenFormat::kStateReturn;
  if (config.token_format != expected)
    throw ContractError("value model token format mismatch");
}

}  // namespace

ValueLossParts value_loss(const std::vector<const ContextDataset*>& batch,
                          const RewardNormalizer& normalizer,
                          const ModelConfig& q_config,
                          const ParamStore& q_params,
                          const ModelConfig& v_config,
                          const ParamStore& v_params,
                          const ValueLossConfig& config) {
  config.validate();
  const int horizon = common_horizon(batch);
  ValueLossGraph q_graph = build_value_loss_graph(q_config, horizon, config);
  ValueLossGraph v_graph = build_value_loss_graph(v_config, horizon, config);
  ValueLossParts parts;
  for (const auto* dataset : batch) {
    const SampleLoss q = run_value_sample(q_graph, q_config, q_params, *dataset,
                                          normalizer, config, nullptr);
    const SampleLoss v = run_value_sample(v_graph, v_config, v_params, *dataset,
                                          normalizer, config, nullptr);
    parts.reg += q.reg + v.reg;
    parts.q_bellman += q.bellman;
    parts.v_bellman += v.bellman;
  }
  const double n = static_cast<double>(batch.size());
  parts.reg /= n;
  parts.q_bellman /= n;
  parts.v_bellman /= n;
  parts.total = parts.reg + config.lambda * (parts.q_bellman + parts.v_bellman);
  return parts;
}

ValueEstimators train_value_estimators(const PretrainCorpus& corpus,
                                       const ValueLossConfig& loss_config,
                                       const ValueTrainConfig& train_config,
                                       int n_layers, int embed_dim) {
  loss_config.validate();
  if (train_config.epochs < 1 || train_config.batch_size < 1)
    throw ContractError("train_value_estimators: bad epoch/batch settings");
  const auto train = corpus.split("train");
  auto val = corpus.split("val");
  const int horizon = common_horizon(train);
  if (!val.empty()) common_horizon(val);

  ValueEstimators out;
  out.q_config = value_model_config(corpus.family, horizon, true, n_layers,
                                    embed_dim);
  out.v_config = value_model_config(corpus.family, horizon, false, n_layers,
                                    embed_dim);
  Rng q_init = Rng::derive(train_config.seed, "value_init_q", 0);
  Rng v_init = Rng::derive(train_config.seed, "value_init_v", 0);
  ParamStore q_params = seqmodel::init_params(out.q_config, q_init);
  ParamStore v_params = seqmodel::init_params(out.v_config, v_init);

  ValueLossGraph q_graph = build_value_loss_graph(out.q_config, horizon,
                                                  loss_config);
  ValueLossGraph v_graph = build_value_loss_graph(out.v_config, horizon,
                                                  loss_config);
  OptimState q_opt;
  OptimState v_opt;
  q_opt.learning_rate = v_opt.learning_rate = train_config.learning_rate;
  q_opt.weight_decay = v_opt.weight_decay = train_config.weight_decay;

  const auto eval_split =
      [&](const std::vector<const ContextDataset*>& datasets) {
        double total = 0.0;
        for (const auto* dataset : datasets) {
          total += run_value_sample(q_graph, out.q_config, q_params, *dataset,
                                    corpus.normalizer, loss_config, nullptr)
                       .total;
          total += run_value_sample(v_graph, out.v_config, v_params, *dataset,
                                    corpus.normalizer, loss_config, nullptr)
                       .total;
        }
        return total / static_cast<double>(datasets.size());
      };

  double best_val = std::numeric_limits<double>::infinity();
  ParamStore best_q = q_params;
  ParamStore best_v = v_params;
  long long global_step = 0;
  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(train_config.seed, "value_shuffle",
                                  static_cast<std::uint64_t>(epoch));
    const std::vector<int> order =
        shuffle_rng.permutation(static_cast<int>(train.size()));
    int steps = (static_cast<int>(train.size()) + train_config.batch_size - 1) /
                train_config.batch_size;
    if (train_config.max_steps_per_epoch > 0)
      steps = std::min(steps, train_config.max_steps_per_epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (int step = 0; step < steps; ++step) {
      const int begin = step * train_config.batch_size;
      const int end = std::min<int>(begin + train_config.batch_size,
                                    static_cast<int>(train.size()));
      GradMap q_grads;
      GradMap v_grads;
      double batch_loss = 0.0;
      for (int b = begin; b < end; ++b) {
        const ContextDataset& dataset = *train[static_cast<std::size_t>(
            order[static_cast<std::size_t>(b)])];
        try {
          batch_loss += run_value_sample(q_graph, out.q_config, q_params,
                                         dataset, corpus.normalizer,
                                         loss_config, &q_grads)
                            .total;
          batch_loss += run_value_sample(v_graph, out.v_config, v_params,
                                         dataset, corpus.normalizer,
                                         loss_config, &v_grads)
                            .total;
        } catch (const NumericsError& e) {
          throw NumericsError("value training diverged at step " +
                              std::to_string(global_step) + ": " + e.what());
        }
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      if (!std::isfinite(batch_loss))
        throw NumericsError("value training diverged at step " +
                            std::to_string(global_step));
      for (auto& [name, grad] : q_grads) grad *= inv;
      for (auto& [name, grad] : v_grads) grad *= inv;
      adamw_step(q_params, q_grads, q_opt);
      adamw_step(v_params, v_grads, v_opt);
      epoch_loss += batch_loss;
      epoch_samples += static_cast<std::size_t>(end - begin);
      ++global_step;
    }
    TrainPoint point;
    point.epoch = epoch;
    point.train_loss = epoch_loss / static_cast<double>(epoch_samples);
    point.val_loss = val.empty() ? eval_split(train) : eval_split(val);
    out.curve.push_back(point);
    if (point.val_loss < best_val) {
      best_val = point.val_loss;
      best_q = q_params;
      best_v = v_params;
    }
  }
  out.q_params = std::move(best_q);
  out.v_params = std::move(best_v);
  return out;
}

AdvantageTable estimate_advantages(const PretrainCorpus& corpus,
                                   const ValueEstimators& estimators,
                                   const ValueLossConfig& config) {
  config.validate();
  check_model_matches_family(estimators.q_config, corpus.family, true);
  check_model_matches_family(estimators.v_config, corpus.family, false);
  AdvantageTable table;
  table.eta = config.eta;
  table.weight_clip_max = config.weight_clip_max;
  table.rows.reserve(corpus.datasets.size());
  ForwardCache q_cache(estimators.q_config);
  ForwardCache v_cache(estimators.v_config);
  for (const auto& dataset : corpus.datasets) {
    const Matrix& q_out = q_cache.run(
        value_sequence(dataset, corpus.normalizer,
                       TokenFormat::kStateActionReturn),
        estimators.q_params);
    const Matrix& v_out = v_cache.run(
        value_sequence(dataset, corpus.normalizer, TokenFormat::kStateReturn),
        estimators.v_params);
    std::vector<AdvantageEntry> row(
        static_cast<std::size_t>(dataset.horizon()));
    for (int h = 0; h < dataset.horizon(); ++h) {
      AdvantageEntry& entry = row[static_cast<std::size_t>(h)];
      entry.q_hat = q_out(h, 0);
      entry.v_hat = v_out(h, 0);
      entry.a_hat = entry.q_hat - entry.v_hat;
    }
    table.rows.push_back(std::move(row));
  }
  weights_from_advantages(table, config);
  table.validate();
  return table;
}

AdvantageTable oracle_advantages(const PretrainCorpus& corpus,
                                 const ValueLossConfig& config) {
  config.validate();
  if (corpus.family.kind != envs::FamilyKind::kTabular)
    throw ContractError("oracle_advantages: tabular corpus required");
  AdvantageTable table;
  table.eta = config.eta;
  table.weight_clip_max = config.weight_clip_max;
  table.rows.reserve(corpus.datasets.size());
  const double inv_std = 1.0 / corpus.normalizer.std;
  const double mean = corpus.normalizer.mean;
  for (const auto& dataset : corpus.datasets) {
    if (dataset.behavior.kind !=
        datagen::BehaviorPolicy::Kind::kTabularExplicit)
      throw ContractError("oracle_advantages: explicit behavior table required");
    const envs::DpSolution sol =
        envs::solve_discounted(corpus.family.mdp, dataset.behavior.action_probs);
    std::vector<AdvantageEntry> row(
        static_cast<std::size_t>(dataset.horizon()));
    for (int h = 0; h < dataset.horizon(); ++h) {
      const int s = dataset.states[static_cast<std::size_t>(h)];
      const int a = dataset.actions[static_cast<std::size_t>(h)];
      AdvantageEntry& entry = row[static_cast<std::size_t>(h)];
      entry.q_hat = (sol.q(s, a) - mean) * inv_std;
      entry.v_hat = (sol.v(s) - mean) * inv_std;
      entry.a_hat = entry.q_hat - entry.v_hat;
    }
    table.rows.push_back(std::move(row));
  }
  weights_from_advantages(table, config);
  table.validate();
  return table;
}

void weights_from_advantages(AdvantageTable& table,
                             const ValueLossConfig& config) {
  config.validate();
  table.eta = config.eta;
  table.weight_clip_max = config.weight_clip_max;
  const double cap = config.eta * std::log(config.weight_clip_max);
  for (auto& row : table.rows)
    for (auto& entry : row)
      entry.weight = std::exp(std::min(entry.a_hat, cap) / config.eta);
}

Vector q_values_at_step(const ContextDataset& dataset,
                        const RewardNormalizer& normalizer,
                        const ModelConfig& q_config,
                        const ParamStore& q_params, int step) {
  if (q_config.token_format != TokenFormat::kStateActionReturn ||
      q_config.head_kind != seqmodel::HeadKind::kScalarValue)
    throw ContractError("q_values_at_step: action-value model required");
  Vector values(q_config.vocab.action_count);
  ForwardCache cache(q_config);
  for (int a = 0; a < q_config.vocab.action_count; ++a) {
    const Matrix& out = cache.run(
        value_sequence_with_action(dataset, normalizer, step, a), q_params);
    values[a] = out(step, 0);
  }
  return values;
}

void write_advantage_table(const AdvantageTable& table,
                           const std::string& path) {
  table.validate();
  std::string text;
  json header;
  header["format_version"] = 1;
  header["eta"] = table.eta;
  header["weight_clip_max"] = table.weight_clip_max;
  header["datasets"] = table.rows.size();
  std::size_t entries = 0;
  for (const auto& row : table.rows) entries += row.size();
  header["entries"] = entries;
  text += header.dump();
  text += '\n';
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    for (std::size_t h = 0; h < table.rows[i].size(); ++h) {
      const AdvantageEntry& entry = table.rows[i][h];
      json line;
      line["dataset"] = i;
      line["step"] = h;
      line["q_hat"] = entry.q_hat;
      line["v_hat"] = entry.v_hat;
      line["a_hat"] = entry.a_hat;
      line["weight"] = entry.weight;
      text += line.dump();
      text += '\n';
    }
  write_text_file(path, text);
}

AdvantageTable read_advantage_table(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream stream(text);
  std::string line;
  if (!std::getline(stream, line) || line.empty())
    throw FormatError("advantage table '" + path + "': missing header");
  AdvantageTable table;
  std::size_t datasets = 0;
  std::size_t entries = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format_version").get<int>() != 1)
      throw FormatError("advantage table '" + path +
                        "': unsupported format version");
    table.eta = header.at("eta").get<double>();
    table.weight_clip_max = header.at("weight_clip_max").get<double>();
    datasets = header.at("datasets").get<std::size_t>();
    entries = header.at("entries").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError("advantage table '" + path + "' header: " + e.what());
  }
  table.rows.resize(datasets);
  std::size_t line_number = 1;
  std::size_t seen = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto dataset = j.at("dataset").get<std::size_t>();
      const auto step = j.at("step").get<std::size_t>();
      if (dataset >= datasets)
        throw FormatError("dataset index out of range");
      auto& row = table.rows[dataset];
      if (step != row.size())
        throw FormatError("steps out of order for dataset " +
                          std::to_string(dataset));
      AdvantageEntry entry;
      entry.q_hat = j.at("q_hat").get<double>();
      entry.v_hat = j.at("v_hat").get<double>();
      entry.a_hat = j.at("a_hat").get<double>();
      entry.weight = j.at("weight").get<double>();
      row.push_back(entry);
      ++seen;
    } catch (const std::exception& e) {
      throw FormatError("advantage table '" + path + "' line " +
                        std::to_string(line_number) + ": " + e.what());
    }
  }
  if (seen != entries)
    throw FormatError("advantage table '" + path + "': expected " +
                      std::to_string(entries) + " entries, found " +
                      std::to_string(seen));
  table.validate();
  return table;
}

}  // namespace icrl::advantage
