#include "icrl/datagen/corpus.hpp"

#include <cmath>
#include <sstream>

#include "icrl/envs/bandit.hpp"
#include "icrl/envs/darkroom.hpp"
#include "icrl/envs/tabular.hpp"
#include "icrl/errors.hpp"
#include "icrl/util.hpp"

namespace icrl::datagen {

using envs::FamilyKind;
using envs::TaskFamily;
using envs::TaskSpec;
using nlohmann::json;
using numkit::Rng;

namespace {

constexpr double kRecursionTol = 1e-12;

bool valid_split(const std::string& split) {
  return split == "train" || split == "val" || split == "test";
}

void check_action_range(const ContextDataset& dataset,
                        const TaskFamily& family) {
  int num_actions = 0;
  switch (family.kind) {
    case FamilyKind::kBandit: num_actions = family.bandit.num_arms; break;
    case FamilyKind::kDarkroom: num_actions = envs::kDarkroomActionCount; break;
    case FamilyKind::kTabular: num_actions = family.mdp.num_actions; break;
  }
  for (int a : dataset.actions)
    if (a < 0 || a >= num_actions)
      throw ContractError("ContextDataset: action out of range");
  if (dataset.optimal_action >= num_actions)
    throw ContractError("ContextDataset: optimal action out of range");
}

}  // namespace

void ContextDataset::validate() const {
  const auto h = states.size();
  if (h == 0) throw ShapeError("ContextDataset: empty trajectory");
  if (actions.size() != h || rewards.size() != h || next_states.size() != h ||
      returns.size() != h)
    throw ShapeError("ContextDataset: trajectory field lengths differ");
  if (!valid_split(split))
    throw ContractError("ContextDataset: unknown split '" + split + "'");
  if (query_state < 0)
    throw ContractError("ContextDataset: negative query state");
}

std::vector<double> returns_to_go(const std::vector<double>& rewards,
                                  double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

namespace {

void check_return_recursion(const ContextDataset& dataset, double gamma,
                            double tol) {
  const std::size_t h = dataset.returns.size();
  if (h == 0) return;
  if (std::abs(dataset.returns[h - 1] - dataset.rewards[h - 1]) > tol)
    throw FormatError("ContextDataset: final return does not equal reward");
  for (std::size_t i = 0; i + 1 < h; ++i) {
    const double expected = dataset.rewards[i] + gamma * dataset.returns[i + 1];
    if (std::abs(dataset.returns[i] - expected) > tol)
      throw FormatError("ContextDataset: return recursion violated");
  }
}

}  // namespace

RewardNormalizer fit_normalizer(const std::vector<ContextDataset>& datasets) {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& dataset : datasets)
    for (double g : dataset.returns) {
      sum += g;
      sum_sq += g * g;
      ++count;
    }
  if (count == 0) throw ContractError("fit_normalizer: no returns");
  RewardNormalizer norm;
  norm.mean = sum / static_cast<double>(count);
  const double var = sum_sq / static_cast<double>(count) - norm.mean * norm.mean;
  norm.std = std::sqrt(std::max(var, 0.0));
  if (norm.std < 1e-8) norm.std = 1e-8;
  return norm;
}

void roll_context(ContextDataset& dataset, const TaskFamily& family,
                  int horizon, double gamma, Rng& rng) {
  if (horizon < 1) throw ContractError("roll_context: horizon must be >= 1");
  dataset.states.assign(static_cast<std::size_t>(horizon), 0);
  dataset.actions.assign(static_cast<std::size_t>(horizon), 0);
  dataset.rewards.assign(static_cast<std::size_t>(horizon), 0.0);
  dataset.next_states.assign(static_cast<std::size_t>(horizon), 0);
  int state = 0;
  if (family.kind == FamilyKind::kTabular)
    state = rng.categorical(family.mdp.initial_dist);
  for (int h = 0; h < horizon; ++h) {
    const int action = dataset.behavior.act(dataset.task, family, state, rng);
    int next = state;
    double reward = 0.0;
    switch (family.kind) {
      case FamilyKind::kBandit:
        next = 0;
        reward = envs::bandit_pull(family.bandit, dataset.task.theta, action, rng);
        break;
      case FamilyKind::kDarkroom: {
        auto [n, r] = envs::darkroom_step(state, action, dataset.task.goal,
                                          family.darkroom_side);
        next = n;
        reward = r;
        break;
      }
      case FamilyKind::kTabular:
        reward = family.mdp.reward(state, action);
        next = envs::tabular_step(family.mdp, state, action, rng);
        break;
    }
    dataset.states[static_cast<std::size_t>(h)] = state;
    dataset.actions[static_cast<std::size_t>(h)] = action;
    dataset.rewards[static_cast<std::size_t>(h)] = reward;
    dataset.next_states[static_cast<std::size_t>(h)] = next;
    state = next;
  }
  dataset.returns = returns_to_go(dataset.rewards, gamma);
}

void attach_optimal_labels(PretrainCorpus& corpus, std::uint64_t seed) {
  numkit::Matrix q_star;
  if (corpus.family.kind == FamilyKind::kTabular)
    q_star = envs::optimal_q(corpus.family.mdp);
  for (std::size_t i = 0; i < corpus.datasets.size(); ++i) {
    auto& dataset = corpus.datasets[i];
    const auto index = dataset.dataset_index >= 0
                           ? static_cast<std::uint64_t>(dataset.dataset_index)
                           : static_cast<std::uint64_t>(i);
    switch (corpus.family.kind) {
      case FamilyKind::kBandit:
        dataset.query_state = 0;
        dataset.optimal_action =
            envs::bandit_best_arm(corpus.family.bandit, dataset.task.theta);
        break;
      case FamilyKind::kDarkroom: {
        Rng rng = Rng::derive(seed, "query", index);
        const int side = corpus.family.darkroom_side;
        dataset.query_state = rng.uniform_int(side * side);
        dataset.optimal_action = envs::darkroom_optimal_action(
            dataset.query_state, dataset.task.goal, side);
        break;
      }
      case FamilyKind::kTabular: {
        Rng rng = Rng::derive(seed, "query", index);
        dataset.query_state = rng.uniform_int(corpus.family.mdp.num_states);
        dataset.optimal_action =
            numkit::argmax(q_star.row(dataset.query_state).transpose());
        break;
      }
    }
  }
}

std::vector<const ContextDataset*> PretrainCorpus::split(
    const std::string& name) const {
  if (!valid_split(name))
    throw ContractError("PretrainCorpus: unknown split '" + name + "'");
  std::vector<const ContextDataset*> out;
  for (const auto& dataset : datasets)
    if (dataset.split == name) out.push_back(&dataset);
  return out;
}

void PretrainCorpus::validate() const {
  family.validate();
  if (gamma <= 0.0 || gamma >= 1.0)
    throw ContractError("PretrainCorpus: gamma outside (0, 1)");
  if (normalizer.std <= 0.0)
    throw ContractError("PretrainCorpus: non-positive normalizer std");
  for (const auto& dataset : datasets) {
    dataset.validate();
    envs::validate_task(dataset.task, family);
    dataset.behavior.validate(family);
    check_action_range(dataset, family);
    check_return_recursion(dataset, gamma, 1e-9);
  }
}

PretrainCorpus generate_bandit_corpus(const TaskFamily& family,
                                      const BanditCorpusConfig& config,
                                      std::uint64_t seed) {
  if (family.kind != FamilyKind::kBandit)
    throw ContractError("generate_bandit_corpus: bandit family required");
  if (config.num_train_tasks < 1 || config.num_test_tasks < 0)
    throw ContractError("generate_bandit_corpus: bad task counts");
  PretrainCorpus corpus;
  corpus.family = family;
  corpus.family.horizon = config.horizon;
  corpus.gamma = config.gamma;
  corpus.master_seed = seed;
  const int n_train = config.num_train_tasks;
  const int n_val = static_cast<int>(
      std::lround(config.val_fraction * static_cast<double>(n_train)));
  const int total = n_train + config.num_test_tasks;
  corpus.datasets.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    ContextDataset dataset;
    dataset.dataset_index = i;
    dataset.task.kind = FamilyKind::kBandit;
    dataset.task.horizon = config.horizon;
    Rng theta_rng = Rng::derive(seed, "task_theta", static_cast<std::uint64_t>(i));
    dataset.task.theta = envs::sample_bandit_theta(family.bandit, theta_rng);
    Rng behavior_rng = Rng::derive(seed, "behavior", static_cast<std::uint64_t>(i));
    dataset.behavior =
        make_behavior_policy(dataset.task, corpus.family, behavior_rng);
    Rng rollout_rng = Rng::derive(seed, "rollout", static_cast<std::uint64_t>(i));
    roll_context(dataset, corpus.family, config.horizon, config.gamma,
                 rollout_rng);
    if (i < n_train - n_val)
      dataset.split = "train";
    else if (i < n_train)
      dataset.split = "val";
    else
      dataset.split = "test";
    corpus.datasets.push_back(std::move(dataset));
  }
  attach_optimal_labels(corpus, seed);
  corpus.normalizer = fit_normalizer(corpus.datasets);
  corpus.validate();
  return corpus;
}

PretrainCorpus generate_darkroom_corpus(const TaskFamily& family,
                                        const DarkroomCorpusConfig& config,
                                        std::uint64_t seed) {
  if (family.kind != FamilyKind::kDarkroom)
    throw ContractError("generate_darkroom_corpus: darkroom family required");
  if (config.train_goals.empty())
    throw ContractError("generate_darkroom_corpus: no training goals");
  const int cells = family.darkroom_side * family.darkroom_side;
  for (int g : config.train_goals)
    if (g < 0 || g >= cells)
      throw ContractError("generate_darkroom_corpus: train goal out of range");
  for (int g : config.test_goals) {
    if (g < 0 || g >= cells)
      throw ContractError("generate_darkroom_corpus: test goal out of range");
    for (int t : config.train_goals)
      if (t == g)
        throw ContractError(
            "generate_darkroom_corpus: train and test goals overlap");
  }
  PretrainCorpus corpus;
  corpus.family = family;
  corpus.family.horizon = config.horizon;
  corpus.gamma = config.gamma;
  corpus.master_seed = seed;
  const int n_val = static_cast<int>(std::ceil(
      config.val_fraction * static_cast<double>(config.contexts_per_goal)));
  int index = 0;
  auto add_dataset = [&](int goal, const std::string& split) {
    ContextDataset dataset;
    dataset.dataset_index = index;
    dataset.task.kind = FamilyKind::kDarkroom;
    dataset.task.horizon = config.horizon;
    dataset.task.side = family.darkroom_side;
    dataset.task.goal = goal;
    dataset.behavior.kind = BehaviorPolicy::Kind::kDarkroomPMix;
    dataset.behavior.p_opt = config.p_opt;
    Rng rollout_rng =
        Rng::derive(seed, "rollout", static_cast<std::uint64_t>(index));
    roll_context(dataset, corpus.family, config.horizon, config.gamma,
                 rollout_rng);
    dataset.split = split;
    corpus.datasets.push_back(std::move(dataset));
    ++index;
  };
  for (int goal : config.train_goals)
    for (int c = 0; c < config.contexts_per_goal; ++c)
      add_dataset(goal, c < config.contexts_per_goal - n_val ? "train" : "val");
  for (int goal : config.test_goals)
    for (int c = 0; c < config.test_contexts_per_goal; ++c)
      add_dataset(goal, "test");
  attach_optimal_labels(corpus, seed);
  corpus.normalizer = fit_normalizer(corpus.datasets);
  corpus.validate();
  return corpus;
}

PretrainCorpus generate_tabular_corpus(const TaskFamily& family,
                                       const TabularCorpusConfig& config,
                                       std::uint64_t seed) {
  if (family.kind != FamilyKind::kTabular)
    throw ContractError("generate_tabular_corpus: tabular family required");
  if (config.num_datasets < 1)
    throw ContractError("generate_tabular_corpus: no datasets requested");
  PretrainCorpus corpus;
  corpus.family = family;
  corpus.family.horizon = config.horizon;
  corpus.gamma = config.gamma;
  corpus.master_seed = seed;
  corpus.datasets.reserve(static_cast<std::size_t>(config.num_datasets));
  const int n_val = static_cast<int>(std::lround(
      config.val_fraction * static_cast<double>(config.num_datasets)));
  for (int i = 0; i < config.num_datasets; ++i) {
    ContextDataset dataset;
    dataset.dataset_index = i;
    if (i >= config.num_datasets - n_val) dataset.split = "val";
    dataset.task.kind = FamilyKind::kTabular;
    dataset.task.horizon = config.horizon;
    dataset.task.mdp_name = family.mdp_name;
    Rng behavior_rng = Rng::derive(seed, "behavior", static_cast<std::uint64_t>(i));
    dataset.behavior = make_tabular_behavior(envs::random_policy(
        family.mdp.num_states, family.mdp.num_actions, behavior_rng));
    Rng rollout_rng = Rng::derive(seed, "rollout", static_cast<std::uint64_t>(i));
    roll_context(dataset, corpus.family, config.horizon, config.gamma,
                 rollout_rng);
    corpus.datasets.push_back(std::move(dataset));
  }
  attach_optimal_labels(corpus, seed);
  corpus.normalizer = fit_normalizer(corpus.datasets);
  corpus.validate();
  return corpus;
}

json dataset_to_json(const ContextDataset& dataset,
                     const RewardNormalizer& normalizer) {
  json j;
  j["index"] = dataset.dataset_index;
  j["split"] = dataset.split;
  j["task"] = envs::task_to_json(dataset.task);
  j["behavior"] = behavior_to_json(dataset.behavior);
  j["query_state"] = dataset.query_state;
  j["optimal_action"] = dataset.optimal_action;
  j["states"] = dataset.states;
  j["actions"] = dataset.actions;
  j["rewards"] = dataset.rewards;
  j["next_states"] = dataset.next_states;
  json returns = json::array();
  for (double g : dataset.returns)
    returns.push_back(normalizer.normalize_return(g));
  j["returns"] = std::move(returns);
  return j;
}

ContextDataset dataset_from_json(const json& j,
                                 const RewardNormalizer& normalizer,
                                 double gamma) {
  ContextDataset dataset;
  dataset.dataset_index = j.at("index").get<int>();
  dataset.split = j.at("split").get<std::string>();
  dataset.task = envs::task_from_json(j.at("task"));
  dataset.behavior = behavior_from_json(j.at("behavior"));
  dataset.query_state = j.at("query_state").get<int>();
  dataset.optimal_action = j.at("optimal_action").get<int>();
  dataset.states = j.at("states").get<std::vector<int>>();
  dataset.actions = j.at("actions").get<std::vector<int>>();
  dataset.rewards = j.at("rewards").get<std::vector<double>>();
  dataset.next_states = j.at("next_states").get<std::vector<int>>();
  // Raw returns are derived data: recompute them from the (exactly stored)
  // raw rewards, then verify the stored normalized labels agree.  This keeps
  // repeated write/read cycles byte-stable.
  const auto stored = j.at("returns").get<std::vector<double>>();
  if (stored.size() != dataset.rewards.size())
    throw FormatError("ContextDataset: returns length mismatch");
  dataset.returns = returns_to_go(dataset.rewards, gamma);
  for (std::size_t i = 0; i < stored.size(); ++i)
    if (std::abs(normalizer.normalize_return(dataset.returns[i]) - stored[i]) >
        kRecursionTol)
      throw FormatError("ContextDataset: stored returns are inconsistent with rewards");
  dataset.validate();
  return dataset;
}

void write_corpus(const PretrainCorpus& corpus, const std::string& path) {
  corpus.validate();
  std::string text;
  json header;
  header["format_version"] = 1;
  header["kind"] = envs::family_kind_name(corpus.family.kind);
  header["gamma"] = corpus.gamma;
  header["master_seed"] = corpus.master_seed;
  header["normalizer"] = {{"mean", corpus.normalizer.mean},
                          {"std", corpus.normalizer.std}};
  header["family"] = envs::family_to_json(corpus.family);
  json counts;
  counts["datasets"] = corpus.datasets.size();
  counts["train"] = corpus.split("train").size();
  counts["val"] = corpus.split("val").size();
  counts["test"] = corpus.split("test").size();
  header["counts"] = std::move(counts);
  text += header.dump();
  text += '\n';
  for (const auto& dataset : corpus.datasets) {
    text += dataset_to_json(dataset, corpus.normalizer).dump();
    text += '\n';
  }
  write_text_file(path, text);
}

PretrainCorpus read_corpus(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream stream(text);
  std::string line;
  if (!std::getline(stream, line) || line.empty())
    throw FormatError("corpus '" + path + "': missing header line");
  PretrainCorpus corpus;
  std::size_t expected = 0;
  try {
    const json header = json::parse(line);
    const int version = header.at("format_version").get<int>();
    if (version != 1)
      throw FormatError("corpus '" + path + "': unsupported format version " +
                        std::to_string(version));
    corpus.gamma = header.at("gamma").get<double>();
    corpus.master_seed = header.at("master_seed").get<std::uint64_t>();
    corpus.normalizer.mean = header.at("normalizer").at("mean").get<double>();
    corpus.normalizer.std = header.at("normalizer").at("std").get<double>();
    corpus.family = envs::family_from_json(header.at("family"));
    if (envs::family_kind_from_name(header.at("kind").get<std::string>()) !=
        corpus.family.kind)
      throw FormatError("corpus '" + path + "': header kind mismatch");
    expected = header.at("counts").at("datasets").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError("corpus '" + path + "' header: " + e.what());
  }
  std::size_t line_number = 1;
  while (std::getline(stream, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      corpus.datasets.push_back(
          dataset_from_json(json::parse(line), corpus.normalizer, corpus.gamma));
    } catch (const std::exception& e) {
      throw FormatError("corpus '" + path + "' line " +
                        std::to_string(line_number) + ": " + e.what());
    }
  }
  if (corpus.datasets.size() != expected)
    throw FormatError("corpus '" + path + "': expected " +
                      std::to_string(expected) + " datasets, found " +
                      std::to_string(corpus.datasets.size()));
  corpus.validate();
  return corpus;
}

}  // namespace icrl::datagen
