#pragma once

#include <json.hpp>

#include "icrl/envs/task.hpp"
#include "icrl/numkit/rng.hpp"
#include "icrl/numkit/tensor.hpp"

namespace icrl::datagen {

// The (suboptimal) data-collection policy for one task.
//
// bandit_mixture:   arm_probs = w * point_mass + (1 - w) * Dirichlet(1,..,1),
//                   with w drawn from the grid {0.0, 0.1, ..., 1.0}.
// darkroom_pmix:    each step plays the optimal action with probability
//                   p_opt, otherwise uniform over all actions.
// tabular_explicit: explicit S x A action probabilities.
struct BehaviorPolicy {
  enum class Kind { kBanditMixture, kDarkroomPMix, kTabularExplicit };
  Kind kind = Kind::kBanditMixture;

  numkit::Vector dirichlet_probs;
  int point_mass_arm = -1;
  double mix_weight = 0.0;
  numkit::Vector arm_probs;  // resolved bandit mixture

  double p_opt = 0.0;

  numkit::Matrix action_probs;  // tabular explicit

  void validate(const envs::TaskFamily& family) const;

  // Action distribution at `state` (bandits ignore the state).
  numkit::Vector action_distribution(const envs::TaskSpec& task,
                                     const envs::TaskFamily& family,
                                     int state) const;
  int act(const envs::TaskSpec& task, const envs::TaskFamily& family,
          int state, numkit::Rng& rng) const;
};

// Draws the behavior policy for one task.  `darkroom_p_opt` supplies the
// corpus-level calibrated optimal-action probability for darkroom tasks;
// bandit mixtures are drawn from `rng`.
BehaviorPolicy make_behavior_policy(const envs::TaskSpec& task,
                                    const envs::TaskFamily& family,
                                    numkit::Rng& rng,
                                    double darkroom_p_opt = 0.2);

// Explicit tabular behavior.
BehaviorPolicy make_tabular_behavior(const numkit::Matrix& action_probs);

// Monte-Carlo calibration of the darkroom p_opt: sweeps p over the grid
// {0.50, 0.45, ..., 0.00} and returns the largest p whose mean rollout
// return over `n_rollouts` (cycling through the given goals, starting at
// cell 0) stays below `target_ratio` of the mean optimal return.
double calibrate_darkroom_p(const envs::TaskFamily& family,
                            const std::vector<int>& goals, int horizon,
                            std::uint64_t seed, int n_rollouts = 1000,
                            double target_ratio = 0.30);

nlohmann::json behavior_to_json(const BehaviorPolicy& behavior);
BehaviorPolicy behavior_from_json(const nlohmann::json& j);

}  // namespace icrl::datagen
