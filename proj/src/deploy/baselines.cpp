#include "icrl/deploy/baselines.hpp"

#include <cmath>
#include <string>

#include "icrl/envs/bandit.hpp"
#include "icrl/errors.hpp"

namespace icrl::deploy {

using datagen::ContextDataset;
using envs::FamilyKind;
using envs::TaskFamily;
using envs::TaskSpec;
using numkit::Rng;
using numkit::Vector;

std::string baseline_name(BaselineAlgo algo) {
  switch (algo) {
    case BaselineAlgo::kEmp: return "emp";
    case BaselineAlgo::kUcb: return "ucb";
    case BaselineAlgo::kLcb: return "lcb";
    case BaselineAlgo::kTs: return "ts";
  }
  throw ContractError("baseline_name: unknown algorithm");
}

BaselineAlgo baseline_from_name(const std::string& name) {
  if (name == "emp") return BaselineAlgo::kEmp;
  if (name == "ucb") return BaselineAlgo::kUcb;
  if (name == "lcb") return BaselineAlgo::kLcb;
  if (name == "ts") return BaselineAlgo::kTs;
  throw ContractError("baseline_from_name: unknown algorithm " + name);
}

void BanditBaselineState::init(int num_arms) {
  if (num_arms < 1)
    throw ContractError("BanditBaselineState: needs at least one arm");
  counts = Vector::Zero(num_arms);
  means = Vector::Zero(num_arms);
  post_mean = Vector::Zero(num_arms);
  post_var = Vector::Ones(num_arms);
}

void BanditBaselineState::update(int arm, double reward) {
  if (arm < 0 || arm >= counts.size())
    throw ContractError("BanditBaselineState::update: arm out of range");
  counts[arm] += 1.0;
  means[arm] += (reward - means[arm]) / counts[arm];
  // Conjugate normal with known observation variance: precisions add.
  const double precision = 1.0 / post_var[arm] + 1.0 / obs_var;
  post_mean[arm] =
      (post_mean[arm] / post_var[arm] + reward / obs_var) / precision;
  post_var[arm] = 1.0 / precision;
}

void BanditBaselineState::validate() const {
  if (counts.size() < 1)
    throw ContractError("BanditBaselineState: uninitialized");
  if (counts.size() != means.size() || counts.size() != post_mean.size() ||
      counts.size() != post_var.size())
    throw ContractError("BanditBaselineState: field length mismatch");
  for (int a = 0; a < counts.size(); ++a) {
    if (counts[a] < 0.0)
      throw ContractError("BanditBaselineState: negative count");
    if (post_var[a] <= 0.0)
      throw ContractError("BanditBaselineState: posterior variance must stay "
                          "positive");
  }
  if (obs_var <= 0.0)
    throw ContractError("BanditBaselineState: observation variance must be "
                        "positive");
}

namespace {

int argmax_lowest(const Vector& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

int bandit_baseline_step(const BanditBaselineState& state, Rng& rng) {
  state.validate();
  const int arms = static_cast<int>(state.counts.size());
  switch (state.algo) {
    case BaselineAlgo::kEmp: {
      if (state.online)
        for (int a = 0; a < arms; ++a)
          if (state.counts[a] == 0.0) return a;  // forced pulls, index order
      return argmax_lowest(state.means);
    }
    case BaselineAlgo::kUcb: {
      Vector score(arms);
      for (int a = 0; a < arms; ++a) {
        const double n = state.counts[a] > 0.0 ? state.counts[a] : 1.0;
        const double mean = state.counts[a] > 0.0 ? state.means[a] : 0.0;
        score[a] = mean + state.c * std::sqrt(1.0 / n);
      }
      return argmax_lowest(score);
    }
    case BaselineAlgo::kLcb: {
      if (!state.online) {
        int best = -1;
        double best_score = 0.0;
        for (int a = 0; a < arms; ++a) {
          if (state.counts[a] == 0.0) continue;  // only observed arms
          const double score =
              state.means[a] - state.c * std::sqrt(1.0 / state.counts[a]);
          if (best < 0 || score > best_score) {
            best = a;
            best_score = score;
          }
        }
        if (best < 0)
          throw ContractError(
              "bandit_baseline_step: lcb saw no observed arms in the offline "
              "context");
        return best;
      }
      Vector score(arms);
      for (int a = 0; a < arms; ++a) {
        const double n = state.counts[a] > 0.0 ? state.counts[a] : 1.0;
        const double mean = state.counts[a] > 0.0 ? state.means[a] : 0.0;
        score[a] = mean - state.c * std::sqrt(1.0 / n);
      }
      return argmax_lowest(score);
    }
    case BaselineAlgo::kTs: {
      Vector sample(arms);
      for (int a = 0; a < arms; ++a)
        sample[a] = rng.normal(state.post_mean[a], std::sqrt(state.post_var[a]));
      return argmax_lowest(sample);
    }
  }
  throw ContractError("bandit_baseline_step: unknown algorithm");
}

namespace {

void require_bandit(const TaskFamily& family, const char* who) {
  if (family.kind != FamilyKind::kBandit)
    throw ContractError(std::string(who) +
                        ": bandit baselines need a bandit family");
}

void append_pull(EvalRecord& record, const Vector& arm_means, int best_arm,
                 int action, double reward) {
  const double gap = arm_means[best_arm] - arm_means[action];
  const double running =
      record.cumulative_regret.empty() ? 0.0 : record.cumulative_regret.back();
  record.actions.push_back(action);
  record.rewards.push_back(reward);
  record.step_suboptimality.push_back(gap);
  record.cumulative_regret.push_back(running + gap);
}

}  // namespace

EvalRecord run_baseline_offline(BaselineAlgo algo, const TaskFamily& family,
                                const TaskSpec& task,
                                const ContextDataset& d_off,
                                std::uint64_t seed, double c, int task_id) {
  require_bandit(family, "run_baseline_offline");
  BanditBaselineState state;
  state.algo = algo;
  state.c = c;
  state.obs_var = family.bandit.noise_var > 0.0 ? family.bandit.noise_var : 0.3;
  state.online = false;
  state.init(family.bandit.num_arms);
  for (std::size_t i = 0; i < d_off.actions.size(); ++i)
    state.update(d_off.actions[i], d_off.rewards[i]);

  Rng env_rng = Rng::derive(seed, "deploy_env");
  Rng act_rng = Rng::derive(seed, "deploy_act");
  const Vector arm_means = envs::bandit_means(family.bandit, task.theta);
  const int best_arm = envs::bandit_best_arm(family.bandit, task.theta);

  EvalRecord record;
  record.task_id = task_id;
  record.seed = seed;
  record.mode = "offline";
  record.algo = baseline_name(algo);
  const int action = bandit_baseline_step(state, act_rng);
  const double reward =
      envs::bandit_pull(family.bandit, task.theta, action, env_rng);
  append_pull(record, arm_means, best_arm, action, reward);
  record.episode_returns.push_back(reward);
  return record;
}

std::vector<EvalRecord> run_baseline_online(BaselineAlgo algo,
                                            const TaskFamily& family,
                                            const TaskSpec& task, int n_steps,
                                            std::uint64_t seed, double c,
                                            int task_id) {
  require_bandit(family, "run_baseline_online");
  if (n_steps < 1)
    throw ContractError("run_baseline_online: n_steps must be >= 1");
  BanditBaselineState state;
  state.algo = algo;
  state.c = c;
  state.obs_var = family.bandit.noise_var > 0.0 ? family.bandit.noise_var : 0.3;
  state.online = true;
  state.init(family.bandit.num_arms);

  Rng env_rng = Rng::derive(seed, "deploy_env");
  Rng act_rng = Rng::derive(seed, "deploy_act");
  const Vector arm_means = envs::bandit_means(family.bandit, task.theta);
  const int best_arm = envs::bandit_best_arm(family.bandit, task.theta);

  std::vector<EvalRecord> records;
  records.reserve(static_cast<std::size_t>(n_steps));
  for (int step = 0; step < n_steps; ++step) {
    const int action = bandit_baseline_step(state, act_rng);
    const double reward =
        envs::bandit_pull(family.bandit, task.theta, action, env_rng);
    state.update(action, reward);

    EvalRecord record;
    record.task_id = task_id;
    record.seed = seed;
    record.mode = "online";
    record.algo = baseline_name(algo);
    append_pull(record, arm_means, best_arm, action, reward);
    record.episode_returns.push_back(reward);
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace icrl::deploy
