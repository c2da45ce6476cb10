#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "icrl/datagen/corpus.hpp"
#include "icrl/deploy/baselines.hpp"
#include "icrl/deploy/eval.hpp"
#include "icrl/envs/bandit.hpp"
#include "icrl/envs/darkroom.hpp"
#include "icrl/envs/task.hpp"
#include "icrl/errors.hpp"
#include "icrl/pretrain/policy.hpp"
#include "icrl/util.hpp"

using namespace icrl;
using namespace icrl::deploy;
using datagen::ContextDataset;
using envs::FamilyKind;
using envs::TaskFamily;
using envs::TaskSpec;
using numkit::Matrix;
using numkit::ParamStore;
using numkit::Rng;
using numkit::Vector;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TaskFamily bandit_family(int arms = 4, double noise = 0.3,
                         std::uint64_t seed = 5) {
  TaskFamily family;
  family.kind = FamilyKind::kBandit;
  family.horizon = 50;
  family.bandit = envs::make_bandit_family(seed, arms, 3, noise);
  return family;
}

TaskSpec bandit_task(const TaskFamily& family, std::uint64_t seed = 9) {
  TaskSpec task;
  task.kind = FamilyKind::kBandit;
  task.horizon = family.horizon;
  Rng rng(seed);
  task.theta = envs::sample_bandit_theta(family.bandit, rng);
  return task;
}

TaskFamily darkroom_family(int side = 5, int horizon = 20) {
  TaskFamily family;
  family.kind = FamilyKind::kDarkroom;
  family.horizon = horizon;
  family.darkroom_side = side;
  return family;
}

TaskSpec darkroom_task(int goal, int side = 5, int horizon = 20) {
  TaskSpec task;
  task.kind = FamilyKind::kDarkroom;
  task.horizon = horizon;
  task.goal = goal;
  task.side = side;
  return task;
}

// A policy whose logits are just the head bias: bias 0 gives the uniform
// policy; a large bias on one action gives a point mass.
PolicyHandle bias_policy(const TaskFamily& family, int horizon,
                         int favored_action = -1, const std::string& name =
                         "policy") {
  PolicyHandle policy;
  policy.name = name;
  policy.config = pretrain::policy_model_config(family, horizon, 1, 16);
  Rng rng(1);
  policy.params = seqmodel::init_params(policy.config, rng);
  for (auto& [key, tensor] : policy.params.tensors) tensor.setZero();
  if (favored_action >= 0)
    policy.params.at("head.b")(0, favored_action) = 50.0;
  return policy;
}

EvalRecord bandit_record(std::vector<double> gaps, const std::string& mode =
                         "offline") {
  EvalRecord record;
  record.mode = mode;
  record.algo = "test";
  double running = 0.0;
  double total = 0.0;
  for (double gap : gaps) {
    record.actions.push_back(0);
    record.rewards.push_back(1.0 - gap);
    total += 1.0 - gap;
    running += gap;
    record.step_suboptimality.push_back(gap);
    record.cumulative_regret.push_back(running);
  }
  record.episode_returns.push_back(total);
  return record;
}

}  // namespace

TEST_CASE("EvalRecord: validation catches broken invariants") {
  EvalRecord good = bandit_record({0.1, 0.0, 0.2});
  CHECK_NOTHROW(good.validate());
  CHECK(good.total_regret() == doctest::Approx(0.3));

  EvalRecord negative = good;
  negative.step_suboptimality[1] = -0.5;
  negative.cumulative_regret[1] = negative.cumulative_regret[0] - 0.5;
  negative.cumulative_regret[2] = negative.cumulative_regret[1] + 0.2;
  CHECK_THROWS_AS(negative.validate(), ContractError);

  EvalRecord drift = good;
  drift.cumulative_regret[2] = 0.05;  // not the running sum any more
  CHECK_THROWS_AS(drift.validate(), ContractError);

  EvalRecord ragged = good;
  ragged.rewards.pop_back();
  CHECK_THROWS_AS(ragged.validate(), ContractError);

  EvalRecord wrong_total = good;
  wrong_total.episode_returns[0] += 1.0;
  CHECK_THROWS_AS(wrong_total.validate(), ContractError);

  EvalRecord bad_mode = good;
  bad_mode.mode = "sideways";
  CHECK_THROWS_AS(bad_mode.validate(), ContractError);
}

TEST_CASE("baseline state: count/mean updates match batch statistics") {
  BanditBaselineState state;
  state.init(2);
  const std::vector<double> pulls = {0.4, 0.9, -0.2, 0.55, 0.1};
  double sum = 0.0;
  for (double r : pulls) {
    state.update(0, r);
    sum += r;
  }
  const double n = static_cast<double>(pulls.size());
  CHECK(state.counts[0] == n);
  CHECK(state.counts[1] == 0.0);
  CHECK(state.means[0] == doctest::Approx(sum / n).epsilon(1e-12));

  // Conjugate-normal closed form: precision 1 + n/var, mean sum/var over it.
  const double precision = 1.0 + n / state.obs_var;
  CHECK(state.post_var[0] == doctest::Approx(1.0 / precision).epsilon(1e-12));
  CHECK(state.post_mean[0] ==
        doctest::Approx((sum / state.obs_var) / precision).epsilon(1e-12));
  CHECK(state.post_mean[1] == 0.0);
  CHECK(state.post_var[1] == 1.0);

  CHECK_THROWS_AS(state.update(2, 0.0), ContractError);
}

TEST_CASE("baseline state: posterior collapses onto the empirical mean") {
  BanditBaselineState state;
  state.algo = BaselineAlgo::kTs;
  state.init(1);
  Rng rng(23);
  for (int i = 0; i < 10000; ++i) state.update(0, 0.7 + 0.3 * rng.normal());
  CHECK(state.post_var[0] < 1e-3);
  CHECK(std::abs(state.post_mean[0] - state.means[0]) < 1e-3);
  CHECK(std::abs(state.means[0] - 0.7) < 0.05);
}

TEST_CASE("bandit_baseline_step: hand-evaluated selection rules") {
  Rng rng(3);
  BanditBaselineState state;
  state.init(2);
  state.c = 1.0;
  // Arm 1 pulled 4 times at mean 0.5, arm 2 once at mean 0.4.
  state.counts << 4.0, 1.0;
  state.means << 0.5, 0.4;

  state.algo = BaselineAlgo::kUcb;  // bounds {1.0, 1.4}
  CHECK(bandit_baseline_step(state, rng) == 1);
  state.algo = BaselineAlgo::kLcb;  // bounds {0.0, -0.6}
  CHECK(bandit_baseline_step(state, rng) == 0);
  state.algo = BaselineAlgo::kEmp;
  CHECK(bandit_baseline_step(state, rng) == 0);

  // Online EMP forces untried arms in index order.
  BanditBaselineState fresh;
  fresh.algo = BaselineAlgo::kEmp;
  fresh.online = true;
  fresh.init(3);
  fresh.counts << 1.0, 0.0, 2.0;
  fresh.means << 5.0, 0.0, 4.0;
  CHECK(bandit_baseline_step(fresh, rng) == 1);
  fresh.counts[1] = 1.0;
  CHECK(bandit_baseline_step(fresh, rng) == 0);

  // TS in the collapsed-posterior limit picks the larger posterior mean.
  BanditBaselineState ts;
  ts.algo = BaselineAlgo::kTs;
  ts.init(2);
  ts.post_mean << 0.1, 0.5;
  ts.post_var << 1e-30, 1e-30;
  for (int trial = 0; trial < 50; ++trial)
    CHECK(bandit_baseline_step(ts, rng) == 1);
}

TEST_CASE("bandit_baseline_step: offline lcb needs observed arms") {
  Rng rng(4);
  BanditBaselineState state;
  state.algo = BaselineAlgo::kLcb;
  state.online = false;
  state.init(3);
  CHECK_THROWS_AS(bandit_baseline_step(state, rng), ContractError);
  state.counts[2] = 2.0;
  state.means[2] = -1.0;  // only observed arm wins despite a poor mean
  CHECK(bandit_baseline_step(state, rng) == 2);
}

TEST_CASE("run_baseline_online: EMP tries every arm once, in order") {
  const TaskFamily family = bandit_family(4);
  const TaskSpec task = bandit_task(family);
  const auto records =
      run_baseline_online(BaselineAlgo::kEmp, family, task, 12, 77);
  REQUIRE(records.size() == 12);
  for (int a = 0; a < 4; ++a) {
    CHECK(records[(std::size_t)a].actions.size() == 1);
    CHECK(records[(std::size_t)a].actions[0] == a);
  }
  const EvalRecord merged = concat_records(records);
  CHECK_NOTHROW(merged.validate());
  CHECK(merged.actions.size() == 12);
  CHECK(merged.episode_returns.size() == 12);

  const auto again =
      run_baseline_online(BaselineAlgo::kEmp, family, task, 12, 77);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(again[i].actions == records[i].actions);
    CHECK(again[i].rewards == records[i].rewards);
  }
}

TEST_CASE("run_baseline_offline: context statistics drive the pull") {
  const TaskFamily family = bandit_family(3);
  const TaskSpec task = bandit_task(family);
  ContextDataset d_off;
  d_off.actions = {2, 2, 1};
  d_off.rewards = {0.9, 0.8, 0.1};
  d_off.states = {0, 0, 0};
  d_off.next_states = {0, 0, 0};

  const EvalRecord lcb =
      run_baseline_offline(BaselineAlgo::kLcb, family, task, d_off, 13);
  // Observed arms only: arm 2 at 0.85 - 1/sqrt(2) beats arm 1 at 0.1 - 1.
  CHECK(lcb.actions[0] == 2);
  CHECK(lcb.mode == "offline");
  CHECK(lcb.algo == "lcb");
  CHECK_NOTHROW(lcb.validate());

  ContextDataset empty;
  CHECK_THROWS_AS(
      run_baseline_offline(BaselineAlgo::kLcb, family, task, empty, 13),
      ContractError);
  const EvalRecord emp =
      run_baseline_offline(BaselineAlgo::kEmp, family, task, empty, 13);
  CHECK(emp.actions[0] == 0);  // all means zero, lowest index wins
}

TEST_CASE("eval_offline: point mass on the best arm has zero suboptimality") {
  const TaskFamily family = bandit_family(4);
  const TaskSpec task = bandit_task(family);
  const int best = envs::bandit_best_arm(family.bandit, task.theta);
  const PolicyHandle policy = bias_policy(family, family.horizon, best);
  ContextDataset empty;
  const EvalRecord record =
      eval_offline(policy, family, task, empty, 21, ActionMode::kGreedy);
  REQUIRE(record.actions.size() == 1);  // bandit episodes are single pulls
  CHECK(record.actions[0] == best);
  CHECK(record.step_suboptimality[0] == 0.0);
  CHECK(record.total_regret() == 0.0);
  CHECK_NOTHROW(record.validate());

  const EvalRecord rerun =
      eval_offline(policy, family, task, empty, 21, ActionMode::kGreedy);
  CHECK(rerun.actions == record.actions);
  CHECK(rerun.rewards == record.rewards);
}

TEST_CASE("eval_online: point mass on a fixed arm has linear regret") {
  const TaskFamily family = bandit_family(4);
  const TaskSpec task = bandit_task(family);
  const Vector mus = envs::bandit_means(family.bandit, task.theta);
  const int best = envs::bandit_best_arm(family.bandit, task.theta);
  const int bad = best == 0 ? 1 : 0;
  const double gap = mus[best] - mus[bad];
  const PolicyHandle policy = bias_policy(family, family.horizon, bad);
  const auto episodes = eval_online(policy, family, task, 40, 31);
  REQUIRE(episodes.size() == 40);
  const EvalRecord merged = concat_records(episodes);
  CHECK_NOTHROW(merged.validate());
  REQUIRE(merged.cumulative_regret.size() == 40);
  for (int t = 0; t < 40; ++t) {
    CHECK(merged.actions[(std::size_t)t] == bad);
    CHECK(merged.cumulative_regret[(std::size_t)t] ==
          doctest::Approx(gap * (t + 1)).epsilon(1e-12));
  }
}

TEST_CASE("eval_online: first episode equals offline with empty context") {
  const TaskFamily bandit = bandit_family(4);
  const TaskSpec pull_task = bandit_task(bandit);
  PolicyHandle policy = bias_policy(bandit, bandit.horizon);
  Rng init(8);
  policy.params = seqmodel::init_params(policy.config, init);

  const auto online = eval_online(policy, bandit, pull_task, 1, 99);
  ContextDataset empty;
  const EvalRecord offline = eval_offline(policy, bandit, pull_task, empty,
                                          99, ActionMode::kSample);
  REQUIRE(online.size() == 1);
  CHECK(online[0].actions == offline.actions);
  CHECK(online[0].rewards == offline.rewards);
  CHECK(online[0].step_suboptimality == offline.step_suboptimality);

  const TaskFamily rooms = darkroom_family(5, 12);
  const TaskSpec room_task = darkroom_task(7, 5, 12);
  PolicyHandle walker = bias_policy(rooms, 12);
  Rng walk_init(9);
  walker.params = seqmodel::init_params(walker.config, walk_init);
  const auto room_online = eval_online(walker, rooms, room_task, 1, 101);
  const EvalRecord room_offline = eval_offline(walker, rooms, room_task,
                                               empty, 101,
                                               ActionMode::kSample);
  REQUIRE(room_online.size() == 1);
  CHECK(room_online[0].actions == room_offline.actions);
  CHECK(room_online[0].rewards == room_offline.rewards);
  CHECK(room_online[0].episode_returns == room_offline.episode_returns);
}

TEST_CASE("eval_online: earlier episodes are invariant to later ones") {
  const TaskFamily family = darkroom_family(5, 8);
  const TaskSpec task = darkroom_task(13, 5, 8);
  PolicyHandle policy = bias_policy(family, 8);
  Rng init(10);
  policy.params = seqmodel::init_params(policy.config, init);
  const auto three = eval_online(policy, family, task, 3, 55);
  const auto five = eval_online(policy, family, task, 5, 55);
  REQUIRE(five.size() == 5);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(three[k].actions == five[k].actions);
    CHECK(three[k].rewards == five[k].rewards);
  }
}

TEST_CASE("eval: contexts beyond the model window keep the recent tail") {
  const TaskFamily family = bandit_family(3);
  const TaskSpec task = bandit_task(family);
  PolicyHandle policy = bias_policy(family, 6);  // window of 6 transitions
  Rng init(11);
  policy.params = seqmodel::init_params(policy.config, init);

  ContextDataset long_context;
  Rng ctx(12);
  for (int i = 0; i < 40; ++i) {
    long_context.states.push_back(0);
    long_context.actions.push_back(ctx.uniform_int(3));
    long_context.rewards.push_back(ctx.uniform());
    long_context.next_states.push_back(0);
  }
  const EvalRecord record = eval_offline(policy, family, task, long_context,
                                         41, ActionMode::kGreedy);
  CHECK_NOTHROW(record.validate());

  ContextDataset tail;
  for (int i = 34; i < 40; ++i) {
    tail.states.push_back(long_context.states[(std::size_t)i]);
    tail.actions.push_back(long_context.actions[(std::size_t)i]);
    tail.rewards.push_back(long_context.rewards[(std::size_t)i]);
    tail.next_states.push_back(long_context.next_states[(std::size_t)i]);
  }
  const EvalRecord clipped =
      eval_offline(policy, family, task, tail, 41, ActionMode::kGreedy);
  CHECK(clipped.actions == record.actions);

  // Online runs longer than the window keep rolling without overflow.
  const auto episodes = eval_online(policy, family, task, 15, 43);
  CHECK(episodes.size() == 15);
}

TEST_CASE("eval_offline: uniform darkroom walker stays below the optimum") {
  const TaskFamily family = darkroom_family(5, 20);
  const TaskSpec task = darkroom_task(18, 5, 20);
  const PolicyHandle policy = bias_policy(family, 20);  // uniform actions
  ContextDataset empty;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EvalRecord record = eval_offline(policy, family, task, empty, seed,
                                           ActionMode::kSample);
    CHECK(record.episode_returns[0] <=
          envs::darkroom_optimal_return(0, task.goal, 5, 20));
    CHECK(record.step_suboptimality.empty());  // bandit-only series
  }
}

TEST_CASE("compute_metrics: direct-average oracle and error paths") {
  std::vector<EvalRecord> records;
  for (int i = 0; i < 100; ++i) {
    EvalRecord record = bandit_record({0.01 * i, 0.02 * i});
    record.task_id = i;
    records.push_back(record);
    if (i < 50) {
      records.back().episode_returns.clear();
      records.back().episode_returns.push_back(records.back().rewards[0]);
      records.back().episode_returns.push_back(records.back().rewards[1]);
    }
  }
  const MetricsSummary summary = compute_metrics(records);
  REQUIRE(summary.suboptimality.mean.size() == 2);
  double direct0 = 0.0, direct1 = 0.0;
  for (int i = 0; i < 100; ++i) {
    direct0 += 0.01 * i;
    direct1 += 0.01 * i + 0.02 * i;
  }
  CHECK(std::abs(summary.suboptimality.mean[0] - direct0 / 100.0) < 1e-12);
  CHECK(std::abs(summary.regret.mean[1] - direct1 / 100.0) < 1e-12);
  CHECK(summary.suboptimality.n[0] == 100);
  CHECK(summary.episode_return.n[0] == 100);
  CHECK(summary.episode_return.n[1] == 50);  // ragged episode counts

  const MetricsSummary single = compute_metrics({records[3]});
  CHECK(single.suboptimality.std_error[0] == 0.0);
  CHECK(single.suboptimality.n[0] == 1);

  CHECK_THROWS_AS(compute_metrics({}), ContractError);
  EvalRecord broken = bandit_record({0.1, 0.2});
  broken.cumulative_regret[1] = 0.0;  // regret would decrease
  CHECK_THROWS_AS(compute_metrics({records[0], broken}), ContractError);
}

TEST_CASE("records: JSON-lines round trip is exact and byte-stable") {
  const TaskFamily family = bandit_family(4);
  const TaskSpec task = bandit_task(family);
  std::vector<EvalRecord> records =
      run_baseline_online(BaselineAlgo::kUcb, family, task, 7, 3145);
  records.push_back(
      run_baseline_offline(BaselineAlgo::kEmp, family, task, {}, 77));

  const std::string path = temp_path("icrl_records.jsonl");
  write_records(records, path);
  const auto loaded = read_records(path);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].task_id == records[i].task_id);
    CHECK(loaded[i].seed == records[i].seed);
    CHECK(loaded[i].mode == records[i].mode);
    CHECK(loaded[i].algo == records[i].algo);
    CHECK(loaded[i].actions == records[i].actions);
    CHECK(loaded[i].rewards == records[i].rewards);
    CHECK(loaded[i].step_suboptimality == records[i].step_suboptimality);
    CHECK(loaded[i].cumulative_regret == records[i].cumulative_regret);
    CHECK(loaded[i].episode_returns == records[i].episode_returns);
  }
  const std::string again = temp_path("icrl_records2.jsonl");
  write_records(loaded, again);
  CHECK(read_text_file(path) == read_text_file(again));

  write_text_file(path, "{\"task_id\": 1}\nnot json\n");
  try {
    read_records(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("write_series_csv: schema and deterministic formatting") {
  MetricSeries series;
  series.mean = {0.5, 0.25};
  series.std_error = {0.0, 0.125};
  series.n = {3, 2};
  const std::string path = temp_path("icrl_series.csv");
  write_series_csv(path, {{"emp", series}, {"dit", series}});
  const std::string text = read_text_file(path);
  CHECK(text.find("step_or_episode,algo,mean,stderr,n") == 0);
  CHECK(text.find("0,emp,0.5,0,3") != std::string::npos);
  CHECK(text.find("1,dit,0.25,0.125,2") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("paired_context_eval: cyclic pairing over matched tasks") {
  const TaskFamily family = darkroom_family(5, 10);
  PolicyHandle policy = bias_policy(family, 10);
  Rng init(14);
  policy.params = seqmodel::init_params(policy.config, init);

  std::vector<ContextDataset> contexts;
  for (int i = 0; i < 3; ++i) {
    ContextDataset context;
    context.task = darkroom_task(6 * i, 5, 10);
    Rng walk(100 + static_cast<std::uint64_t>(i));
    int state = 0;
    for (int h = 0; h < 10; ++h) {
      const int action = walk.uniform_int(5);
      const auto [next, reward] =
          envs::darkroom_step(state, action, context.task.goal, 5);
      context.states.push_back(state);
      context.actions.push_back(action);
      context.rewards.push_back(reward);
      context.next_states.push_back(next);
      state = next;
    }
    contexts.push_back(std::move(context));
  }

  const PairedContextResult result =
      paired_context_eval(policy, family, contexts, 2024);
  REQUIRE(result.in_task.size() == 3);
  REQUIRE(result.out_task.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(result.in_task[(std::size_t)i].task_id == i);
    CHECK(result.out_task[(std::size_t)i].task_id == i);
    // Same task and seed on both sides of each pair.
    CHECK(result.in_task[(std::size_t)i].seed ==
          result.out_task[(std::size_t)i].seed);
  }
  const PairedContextResult rerun =
      paired_context_eval(policy, family, contexts, 2024);
  CHECK(rerun.mean_in == result.mean_in);
  CHECK(rerun.mean_out == result.mean_out);

  CHECK_THROWS_AS(paired_context_eval(policy, family, {contexts[0]}, 1),
                  ContractError);
}
