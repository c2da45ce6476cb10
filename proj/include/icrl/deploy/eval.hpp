#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "icrl/datagen/corpus.hpp"
#include "icrl/envs/task.hpp"
#include "icrl/numkit/tensor.hpp"
#include "icrl/seqmodel/model.hpp"

namespace icrl::deploy {

// How the policy head is turned into an action.
enum class ActionMode { kGreedy, kSample };

// A frozen pretrained policy: architecture plus parameters, with a label
// stamped onto every record it produces.
struct PolicyHandle {
  seqmodel::ModelConfig config;
  numkit::ParamStore params;
  std::string name = "policy";
};

// One evaluation run on one task.  Offline runs hold a single episode;
// online runs are usually merged across episodes with concat_records, so the
// step series continue across episode boundaries (cumulative regret keeps
// its running total).  Suboptimality/regret entries exist only for bandits.
struct EvalRecord {
  int task_id = 0;
  std::uint64_t seed = 0;
  std::string mode = "offline";  // "offline" or "online"
  std::string algo = "policy";

  std::vector<int> actions;                // one entry per step
  std::vector<double> rewards;             // realized rewards per step
  std::vector<double> step_suboptimality;  // mu(best arm) - mu(chosen arm)
  std::vector<double> cumulative_regret;   // running sum of the above
  std::vector<double> episode_returns;     // sum of rewards per episode

  double total_regret() const;
  double mean_return() const;
  // Size consistency, regret nondecreasing, suboptimality nonnegative.
  void validate() const;
};

// One episode with the context frozen to d_off (Algorithm-2 offline branch).
// Bandit episodes are a single pull; trajectory tasks run task.horizon steps
// (falling back to family.horizon) from the start state.  An empty d_off is
// allowed and conditions only on the query token.  Contexts longer than the
// model window keep their most recent transitions.  Greedy selection is the
// default for low-variance reporting; sampling is selectable.
EvalRecord eval_offline(const PolicyHandle& policy,
                        const envs::TaskFamily& family,
                        const envs::TaskSpec& task,
                        const datagen::ContextDataset& d_off,
                        std::uint64_t seed,
                        ActionMode mode = ActionMode::kGreedy,
                        int task_id = 0);

// Algorithm-2 online branch: the buffer starts empty, episode k conditions
// on every transition of episodes 1..k-1 (the buffer is frozen within an
// episode and extended after it), and the buffer keeps only its most recent
// transitions once the model window is exceeded.  Actions are sampled.
// Returns one record per episode with cumulative regret carried across
// episodes.
std::vector<EvalRecord> eval_online(const PolicyHandle& policy,
                                    const envs::TaskFamily& family,
                                    const envs::TaskSpec& task,
                                    int n_episodes,
                                    std::uint64_t seed,
                                    int task_id = 0);

// Merge per-episode records of one run into a single record: concatenated
// step series, one return entry per episode.
EvalRecord concat_records(const std::vector<EvalRecord>& episodes);

// Aligned per-index aggregates across records; std_error is 0 where only a
// single record covers an index.
struct MetricSeries {
  std::vector<double> mean;
  std::vector<double> std_error;
  std::vector<int> n;

  bool empty() const { return mean.empty(); }
};

struct MetricsSummary {
  MetricSeries suboptimality;    // per step
  MetricSeries regret;           // per step, cumulative
  MetricSeries episode_return;   // per episode
};

// Validates every record, then aggregates each series index-wise across
// records (records missing an index simply don't contribute to it).
MetricsSummary compute_metrics(const std::vector<EvalRecord>& records);

// JSON-lines stream of records (one object per line), byte-stable.
void write_records(const std::vector<EvalRecord>& records,
                   const std::string& path);
std::vector<EvalRecord> read_records(const std::string& path);

// CSV with columns step_or_episode,algo,mean,stderr,n ; one series per file.
void write_series_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, MetricSeries>>& by_algo);

// Context-alignment experiment: each task is evaluated offline with its own
// context and again with the next task's context (cyclic pairing), holding
// everything else fixed.  Requires at least two contexts.
struct PairedContextResult {
  std::vector<EvalRecord> in_task;
  std::vector<EvalRecord> out_task;
  double mean_in = 0.0;   // mean episode return with matched contexts
  double mean_out = 0.0;  // mean episode return with swapped contexts
};

PairedContextResult paired_context_eval(
    const PolicyHandle& policy, const envs::TaskFamily& family,
    const std::vector<datagen::ContextDataset>& contexts, std::uint64_t seed,
    ActionMode mode = ActionMode::kGreedy);

}  // namespace icrl::deploy
