#pragma once

#include <cstdint>

#include "icrl/numkit/rng.hpp"
#include "icrl/numkit/tensor.hpp"

namespace icrl::envs {

// A family of linear bandits sharing one feature table: arm a has features
// phi(a) (row a of `features`), and a task is a parameter vector theta with
// mean reward mu(a) = <theta, phi(a)>.  Pull noise is Gaussian with the
// family's variance.
struct BanditFamily {
  int num_arms = 0;
  int feature_dim = 0;
  double noise_var = 0.3;
  std::uint64_t seed = 0;
  numkit::Matrix features;  // num_arms x feature_dim

  void validate() const;
};

// Features phi(a) ~ N(0, I_d / d), drawn once per family from its own stream.
BanditFamily make_bandit_family(std::uint64_t seed, int num_arms,
                                int feature_dim, double noise_var);

// Task parameter theta ~ N(0, I_d / d).
numkit::Vector sample_bandit_theta(const BanditFamily& family,
                                   numkit::Rng& rng);

// Mean reward per arm: features * theta.
numkit::Vector bandit_means(const BanditFamily& family,
                            const numkit::Vector& theta);

// One pull: mu(arm) + N(0, noise_var).  With noise_var == 0 the reward is
// exactly the mean (test hook).
double bandit_pull(const BanditFamily& family, const numkit::Vector& theta,
                   int arm, numkit::Rng& rng);

// Best arm under the task's means (lowest index on ties).
int bandit_best_arm(const BanditFamily& family, const numkit::Vector& theta);

}  // namespace icrl::envs
