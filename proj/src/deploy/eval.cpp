#include "icrl/deploy/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>

#include <json.hpp>

#include "icrl/envs/bandit.hpp"
#include "icrl/envs/darkroom.hpp"
#include "icrl/envs/tabular.hpp"
#include "icrl/errors.hpp"
#include "icrl/numkit/rng.hpp"
#include "icrl/pretrain/policy.hpp"
#include "icrl/util.hpp"

namespace icrl::deploy {

using datagen::ContextDataset;
using envs::FamilyKind;
using envs::TaskFamily;
using envs::TaskSpec;
using numkit::Rng;
using numkit::Vector;

namespace {

int argmax_lowest(const Vector& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

int episode_horizon(const TaskFamily& family, const TaskSpec& task) {
  if (family.kind == FamilyKind::kBandit) return 1;
  const int h = task.horizon > 0 ? task.horizon : family.horizon;
  if (h < 1)
    throw ContractError("eval: task and family declare no positive horizon");
  return h;
}

int start_state(const TaskFamily& family, Rng& env_rng) {
  switch (family.kind) {
    case FamilyKind::kBandit:
      return 0;
    case FamilyKind::kDarkroom:
      return 0;  // fixed start cell, matching corpus generation
    case FamilyKind::kTabular:
      return env_rng.categorical(family.mdp.initial_dist);
  }
  throw ContractError("eval: unknown family kind");
}

// Keep the most recent `capacity` transitions of the buffer.
void clip_context(ContextDataset& buffer, int capacity) {
  const int len = buffer.horizon();
  if (capacity < 0) capacity = 0;
  if (len <= capacity) return;
  const auto drop = static_cast<std::size_t>(len - capacity);
  buffer.states.erase(buffer.states.begin(),
                      buffer.states.begin() + static_cast<long>(drop));
  buffer.actions.erase(buffer.actions.begin(),
                       buffer.actions.begin() + static_cast<long>(drop));
  buffer.rewards.erase(buffer.rewards.begin(),
                       buffer.rewards.begin() + static_cast<long>(drop));
  buffer.next_states.erase(buffer.next_states.begin(),
                           buffer.next_states.begin() + static_cast<long>(drop));
}

int select_action(const PolicyHandle& policy, const ContextDataset& context,
                  int state, ActionMode mode, Rng& act_rng) {
  ContextDataset query = context;
  query.query_state = state;
  const auto seq =
      pretrain::policy_sequence(query, -1, pretrain::QueryMask::kNone);
  const Vector probs =
      seqmodel::policy_distribution(seq, policy.config, policy.params);
  return mode == ActionMode::kGreedy ? argmax_lowest(probs)
                                     : act_rng.categorical(probs);
}

struct EnvStep {
  int next_state = 0;
  double reward = 0.0;
};

EnvStep env_step(const TaskFamily& family, const TaskSpec& task, int state,
                 int action, Rng& env_rng) {
  EnvStep out;
  switch (family.kind) {
    case FamilyKind::kBandit:
      out.next_state = 0;
      out.reward = envs::bandit_pull(family.bandit, task.theta, action, env_rng);
      break;
    case FamilyKind::kDarkroom: {
      const auto [next, reward] =
          envs::darkroom_step(state, action, task.goal, family.darkroom_side);
      out.next_state = next;
      out.reward = reward;
      break;
    }
    case FamilyKind::kTabular:
      out.reward = family.mdp.reward(state, action);
      out.next_state = envs::tabular_step(family.mdp, state, action, env_rng);
      break;
  }
  return out;
}

// One episode against a frozen context.  Appends steps to `record` (with
// episode-local regret bookkeeping) and, if given, collects the transitions.
void run_episode(const PolicyHandle& policy, const TaskFamily& family,
                 const TaskSpec& task, const ContextDataset& context,
                 ActionMode mode, Rng& env_rng, Rng& act_rng,
                 EvalRecord& record, ContextDataset* collect) {
  const int horizon = episode_horizon(family, task);
  Vector arm_means;
  int best_arm = 0;
  if (family.kind == FamilyKind::kBandit) {
    arm_means = envs::bandit_means(family.bandit, task.theta);
    best_arm = envs::bandit_best_arm(family.bandit, task.theta);
  }
  int state = start_state(family, env_rng);
  double episode_return = 0.0;
  double running_regret =
      record.cumulative_regret.empty() ? 0.0 : record.cumulative_regret.back();
  for (int h = 0; h < horizon; ++h) {
    const int action = select_action(policy, context, state, mode, act_rng);
    const EnvStep step = env_step(family, task, state, action, env_rng);
    record.actions.push_back(action);
    record.rewards.push_back(step.reward);
    episode_return += step.reward;
    if (family.kind == FamilyKind::kBandit) {
      const double gap = arm_means[best_arm] - arm_means[action];
      running_regret += gap;
      record.step_suboptimality.push_back(gap);
      record.cumulative_regret.push_back(running_regret);
    }
    if (collect != nullptr) {
      collect->states.push_back(state);
      collect->actions.push_back(action);
      collect->rewards.push_back(step.reward);
      collect->next_states.push_back(step.next_state);
    }
    state = step.next_state;
  }
  record.episode_returns.push_back(episode_return);
}

void aggregate_series(const std::vector<const std::vector<double>*>& columns,
                      MetricSeries& out) {
  std::size_t max_len = 0;
  for (const auto* column : columns) max_len = std::max(max_len, column->size());
  out.mean.assign(max_len, 0.0);
  out.std_error.assign(max_len, 0.0);
  out.n.assign(max_len, 0);
  for (std::size_t i = 0; i < max_len; ++i) {
    double sum = 0.0;
    int n = 0;
    for (const auto* column : columns)
      if (i < column->size()) {
        sum += (*column)[i];
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto* column : columns)
      if (i < column->size()) {
        const double d = (*column)[i] - mean;
        ss += d * d;
      }
    out.mean[i] = mean;
    out.n[i] = n;
    out.std_error[i] =
        n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) /
                          static_cast<double>(n))
              : 0.0;
  }
}

nlohmann::json record_to_json(const EvalRecord& record) {
  nlohmann::json j;
  j["task_id"] = record.task_id;
  j["seed"] = record.seed;
  j["mode"] = record.mode;
  j["algo"] = record.algo;
  j["actions"] = record.actions;
  j["rewards"] = record.rewards;
  j["step_suboptimality"] = record.step_suboptimality;
  j["cumulative_regret"] = record.cumulative_regret;
  j["episode_returns"] = record.episode_returns;
  return j;
}

EvalRecord record_from_json(const nlohmann::json& j) {
  EvalRecord record;
  record.task_id = j.at("task_id").get<int>();
  record.seed = j.at("seed").get<std::uint64_t>();
  record.mode = j.at("mode").get<std::string>();
  record.algo = j.at("algo").get<std::string>();
  record.actions = j.at("actions").get<std::vector<int>>();
  record.rewards = j.at("rewards").get<std::vector<double>>();
  record.step_suboptimality =
      j.at("step_suboptimality").get<std::vector<double>>();
  record.cumulative_regret =
      j.at("cumulative_regret").get<std::vector<double>>();
  record.episode_returns = j.at("episode_returns").get<std::vector<double>>();
  return record;
}

}  // namespace

double EvalRecord::total_regret() const {
  return cumulative_regret.empty() ? 0.0 : cumulative_regret.back();
}

double EvalRecord::mean_return() const {
  if (episode_returns.empty()) return 0.0;
  double sum = 0.0;
  for (double r : episode_returns) sum += r;
  return sum / static_cast<double>(episode_returns.size());
}

void EvalRecord::validate() const {
  if (mode != "offline" && mode != "online")
    throw ContractError("EvalRecord: mode must be offline or online, got " +
                        mode);
  if (actions.size() != rewards.size())
    throw ContractError("EvalRecord: actions/rewards length mismatch");
  if (!step_suboptimality.empty() || !cumulative_regret.empty()) {
    if (step_suboptimality.size() != actions.size() ||
        cumulative_regret.size() != actions.size())
      throw ContractError(
          "EvalRecord: regret series must align with the action series");
    double running = 0.0;
    for (std::size_t i = 0; i < step_suboptimality.size(); ++i) {
      if (step_suboptimality[i] < -1e-12)
        throw ContractError(
            "EvalRecord: negative suboptimality at step " + std::to_string(i));
      running += step_suboptimality[i];
      if (std::abs(cumulative_regret[i] - running) > 1e-9)
        throw ContractError(
            "EvalRecord: cumulative regret diverges from the suboptimality "
            "sum at step " + std::to_string(i));
      if (i > 0 && cumulative_regret[i] < cumulative_regret[i - 1] - 1e-12)
        throw ContractError(
            "EvalRecord: cumulative regret decreases at step " +
            std::to_string(i));
    }
  }
  if (!episode_returns.empty() && !rewards.empty()) {
    double reward_sum = 0.0;
    for (double r : rewards) reward_sum += r;
    double return_sum = 0.0;
    for (double r : episode_returns) return_sum += r;
    if (std::abs(reward_sum - return_sum) > 1e-9)
      throw ContractError(
          "EvalRecord: episode returns do not sum to the reward total");
  }
}

EvalRecord eval_offline(const PolicyHandle& policy, const TaskFamily& family,
                        const TaskSpec& task, const ContextDataset& d_off,
                        std::uint64_t seed, ActionMode mode, int task_id) {
  EvalRecord record;
  record.task_id = task_id;
  record.seed = seed;
  record.mode = "offline";
  record.algo = policy.name;
  ContextDataset context = d_off;
  clip_context(context, policy.config.max_context - 1);
  Rng env_rng = Rng::derive(seed, "deploy_env");
  Rng act_rng = Rng::derive(seed, "deploy_act");
  run_episode(policy, family, task, context, mode, env_rng, act_rng, record,
              nullptr);
  return record;
}

std::vector<EvalRecord> eval_online(const PolicyHandle& policy,
                                    const TaskFamily& family,
                                    const TaskSpec& task, int n_episodes,
                                    std::uint64_t seed, int task_id) {
  if (n_episodes < 1)
    throw ContractError("eval_online: n_episodes must be >= 1");
  Rng env_rng = Rng::derive(seed, "deploy_env");
  Rng act_rng = Rng::derive(seed, "deploy_act");
  ContextDataset buffer;
  buffer.task = task;
  std::vector<EvalRecord> records;
  records.reserve(static_cast<std::size_t>(n_episodes));
  for (int episode = 0; episode < n_episodes; ++episode) {
    EvalRecord record;
    record.task_id = task_id;
    record.seed = seed;
    record.mode = "online";
    record.algo = policy.name;
    ContextDataset collected;
    run_episode(policy, family, task, buffer, ActionMode::kSample, env_rng,
                act_rng, record, &collected);
    for (std::size_t i = 0; i < collected.states.size(); ++i) {
      buffer.states.push_back(collected.states[i]);
      buffer.actions.push_back(collected.actions[i]);
      buffer.rewards.push_back(collected.rewards[i]);
      buffer.next_states.push_back(collected.next_states[i]);
    }
    clip_context(buffer, policy.config.max_context - 1);
    records.push_back(std::move(record));
  }
  return records;
}

EvalRecord concat_records(const std::vector<EvalRecord>& episodes) {
  if (episodes.empty())
    throw ContractError("concat_records: empty episode list");
  EvalRecord merged;
  merged.task_id = episodes.front().task_id;
  merged.seed = episodes.front().seed;
  merged.mode = episodes.front().mode;
  merged.algo = episodes.front().algo;
  double running = 0.0;
  for (const EvalRecord& episode : episodes) {
    if (episode.algo != merged.algo || episode.mode != merged.mode ||
        episode.task_id != merged.task_id)
      throw ContractError("concat_records: records from different runs");
    merged.actions.insert(merged.actions.end(), episode.actions.begin(),
                          episode.actions.end());
    merged.rewards.insert(merged.rewards.end(), episode.rewards.begin(),
                          episode.rewards.end());
    for (double gap : episode.step_suboptimality) {
      running += gap;
      merged.step_suboptimality.push_back(gap);
      merged.cumulative_regret.push_back(running);
    }
    merged.episode_returns.insert(merged.episode_returns.end(),
                                  episode.episode_returns.begin(),
                                  episode.episode_returns.end());
  }
  return merged;
}

MetricsSummary compute_metrics(const std::vector<EvalRecord>& records) {
  if (records.empty())
    throw ContractError("compute_metrics: no records");
  for (const EvalRecord& record : records) record.validate();
  MetricsSummary summary;
  std::vector<const std::vector<double>*> columns;
  columns.reserve(records.size());

  for (const EvalRecord& r : records) columns.push_back(&r.step_suboptimality);
  aggregate_series(columns, summary.suboptimality);
  columns.clear();
  for (const EvalRecord& r : records) columns.push_back(&r.cumulative_regret);
  aggregate_series(columns, summary.regret);
  columns.clear();
  for (const EvalRecord& r : records) columns.push_back(&r.episode_returns);
  aggregate_series(columns, summary.episode_return);
  return summary;
}

void write_records(const std::vector<EvalRecord>& records,
                   const std::string& path) {
  std::string text;
  for (const EvalRecord& record : records) {
    text += record_to_json(record).dump();
    text += '\n';
  }
  write_text_file(path, text);
}

std::vector<EvalRecord> read_records(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<EvalRecord> records;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("read_records: line " + std::to_string(line_no) +
                        " of " + path + ": " + e.what());
    }
  }
  return records;
}

void write_series_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, MetricSeries>>& by_algo) {
  CsvWriter csv({"step_or_episode", "algo", "mean", "stderr", "n"});
  for (const auto& [algo, series] : by_algo)
    for (std::size_t i = 0; i < series.mean.size(); ++i)
      csv.add_row({std::to_string(i), algo, format_double(series.mean[i]),
                   format_double(series.std_error[i]),
                   std::to_string(series.n[i])});
  csv.save(path);
}

PairedContextResult paired_context_eval(
    const PolicyHandle& policy, const TaskFamily& family,
    const std::vector<ContextDataset>& contexts, std::uint64_t seed,
    ActionMode mode) {
  if (contexts.size() < 2)
    throw ContractError("paired_context_eval: needs at least two contexts");
  PairedContextResult result;
  const std::size_t n = contexts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t task_seed =
        Rng::derive(seed, "paired_eval", static_cast<std::uint64_t>(i))
            .next_u64();
    const TaskSpec& task = contexts[i].task;
    EvalRecord in_task = eval_offline(policy, family, task, contexts[i],
                                      task_seed, mode, static_cast<int>(i));
    EvalRecord out_task =
        eval_offline(policy, family, task, contexts[(i + 1) % n], task_seed,
                     mode, static_cast<int>(i));
    result.mean_in += in_task.mean_return();
    result.mean_out += out_task.mean_return();
    result.in_task.push_back(std::move(in_task));
    result.out_task.push_back(std::move(out_task));
  }
  result.mean_in /= static_cast<double>(n);
  result.mean_out /= static_cast<double>(n);
  return result;
}

}  // namespace icrl::deploy
