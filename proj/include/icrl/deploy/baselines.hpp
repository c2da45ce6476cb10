#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icrl/datagen/corpus.hpp"
#include "icrl/deploy/eval.hpp"
#include "icrl/envs/task.hpp"
#include "icrl/numkit/rng.hpp"

namespace icrl::deploy {

// Classical bandit baselines: empirical best arm, optimism/pessimism bonus
// variants, and Gaussian Thompson sampling.
enum class BaselineAlgo { kEmp, kUcb, kLcb, kTs };

std::string baseline_name(BaselineAlgo algo);
BaselineAlgo baseline_from_name(const std::string& name);

// Sufficient statistics of the interaction history.  EMP/UCB/LCB act as pure
// functions of (counts, means); TS keeps a conjugate-normal posterior per arm
// with known observation variance (precision grows by 1/obs_var per pull, so
// the posterior collapses onto the empirical mean as counts grow).
struct BanditBaselineState {
  BaselineAlgo algo = BaselineAlgo::kEmp;
  double c = 1.0;        // exploration constant for ucb/lcb
  double obs_var = 0.3;  // ts likelihood variance (the generative pull noise)
  bool online = false;   // online runs force EMP to try every arm once

  numkit::Vector counts;     // pulls per arm, n_a >= 0
  numkit::Vector means;      // empirical mean reward per arm (0 when unseen)
  numkit::Vector post_mean;  // ts posterior mean, prior 0
  numkit::Vector post_var;   // ts posterior variance, prior 1, always > 0

  void init(int num_arms);
  void update(int arm, double reward);
  void validate() const;
};

// Chooses the next arm.  Deterministic for EMP/UCB/LCB (ties and the EMP
// forced-pull order resolve to the lowest index); TS consumes exactly one
// normal draw per arm, in index order.  Unseen arms score with mean 0 and
// count 1 for UCB/LCB bonuses; offline LCB restricts to observed arms and
// throws ContractError when the context observed none.
int bandit_baseline_step(const BanditBaselineState& state, numkit::Rng& rng);

// Feed the offline context through the statistics, then take one pull.
EvalRecord run_baseline_offline(BaselineAlgo algo,
                                const envs::TaskFamily& family,
                                const envs::TaskSpec& task,
                                const datagen::ContextDataset& d_off,
                                std::uint64_t seed, double c = 1.0,
                                int task_id = 0);

// Fresh statistics, n_steps sequential pulls with updates after each; one
// record per pull with cumulative regret carried across pulls.
std::vector<EvalRecord> run_baseline_online(BaselineAlgo algo,
                                            const envs::TaskFamily& family,
                                            const envs::TaskSpec& task,
                                            int n_steps, std::uint64_t seed,
                                            double c = 1.0, int task_id = 0);

}  // namespace icrl::deploy
