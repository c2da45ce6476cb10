#pragma once

#include <vector>

#include "icrl/numkit/rng.hpp"
#include "icrl/numkit/tensor.hpp"

namespace icrl::envs {

// Explicit finite MDP with exact dynamic-programming oracles.  Policies are
// S x A row-stochastic matrices.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<numkit::Matrix> transition;  // per action: S x S, rows sum to 1
  numkit::Matrix reward;                   // S x A
  double gamma = 0.8;
  numkit::Vector initial_dist;             // length S, sums to 1

  void validate() const;
};

struct DpSolution {
  numkit::Vector v;          // S
  numkit::Matrix q;          // S x A
  numkit::Matrix advantage;  // S x A, q - v
  numkit::Vector visitation; // discounted state occupancy d_pi, sums to 1
  double expected_return = 0.0;  // rho . v
};

// Infinite-horizon discounted solve for a fixed policy:
//   v = (I - gamma P_pi)^{-1} r_pi,   q = r + gamma P v,
//   d^T = (1 - gamma) rho^T (I - gamma P_pi)^{-1}.
DpSolution solve_discounted(const TabularMDP& mdp, const numkit::Matrix& policy);

// Finite-horizon backward induction for a fixed policy; values are discounted
// from the current step, matching in-trajectory returns-to-go.  Index h runs
// 0..H-1 with v[H-1] the final step.
struct FiniteHorizonValues {
  std::vector<numkit::Vector> v;  // H entries of length S
  std::vector<numkit::Matrix> q;  // H entries of S x A
};
FiniteHorizonValues solve_finite_horizon(const TabularMDP& mdp,
                                         const numkit::Matrix& policy,
                                         int horizon);

// Uniformly random row-stochastic policy (Dirichlet(1,...,1) rows).
numkit::Matrix random_policy(int num_states, int num_actions,
                             numkit::Rng& rng);

// Random MDP: Dirichlet transition rows, rewards uniform in [0, 1],
// uniform initial distribution.
TabularMDP random_mdp(int num_states, int num_actions, double gamma,
                      numkit::Rng& rng);

// Deterministic chain of n states with actions {0: left, 1: right}; moves
// clip at the ends and reward 1 is paid for landing on the last state.
TabularMDP chain_mdp(int num_states, double gamma);

// One environment step (for rollouts): samples s' from P(.|s,a).
int tabular_step(const TabularMDP& mdp, int state, int action,
                 numkit::Rng& rng);

// Optimal action-value function via value iteration (sup-norm tolerance).
numkit::Matrix optimal_q(const TabularMDP& mdp, double tol = 1e-12,
                         int max_iter = 100000);

}  // namespace icrl::envs
