#include "icrl/envs/tabular.hpp"

#include <cmath>

#include "icrl/errors.hpp"

namespace icrl::envs {

using numkit::Index;
using numkit::Matrix;
using numkit::Vector;

void TabularMDP::validate() const {
  if (num_states <= 0 || num_actions <= 0)
    throw ContractError("TabularMDP: state/action counts must be positive");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ContractError("TabularMDP: gamma must lie in (0,1)");
  if (static_cast<int>(transition.size()) != num_actions)
    throw ShapeError("TabularMDP: one transition matrix per action required");
  for (const Matrix& p : transition) {
    if (p.rows() != num_states || p.cols() != num_states)
      throw ShapeError("TabularMDP: transition matrix must be S x S");
    if ((p.array() < -1e-12).any())
      throw ContractError("TabularMDP: negative transition probability");
    for (Index s = 0; s < p.rows(); ++s)
      if (std::abs(p.row(s).sum() - 1.0) > 1e-9)
        throw ContractError("TabularMDP: transition row does not sum to 1");
  }
  if (reward.rows() != num_states || reward.cols() != num_actions)
    throw ShapeError("TabularMDP: reward must be S x A");
  if (initial_dist.size() != num_states)
    throw ShapeError("TabularMDP: initial distribution must have length S");
  if ((initial_dist.array() < -1e-12).any() ||
      std::abs(initial_dist.sum() - 1.0) > 1e-9)
    throw ContractError("TabularMDP: initial distribution invalid");
}

namespace {

void check_policy(const TabularMDP& mdp, const Matrix& policy) {
  if (policy.rows() != mdp.num_states || policy.cols() != mdp.num_actions)
    throw ShapeError("policy must be S x A");
  for (Index s = 0; s < policy.rows(); ++s) {
    if ((policy.row(s).array() < -1e-12).any())
      throw ContractError("policy has negative probabilities");
    if (std::abs(policy.row(s).sum() - 1.0) > 1e-9)
      throw ContractError("policy row does not sum to 1");
  }
}

// P_pi(s, s') = sum_a pi(a|s) P(s'|s, a);  r_pi(s) = sum_a pi(a|s) r(s, a).
Matrix policy_transition(const TabularMDP& mdp, const Matrix& policy) {
  Matrix p_pi = Matrix::Zero(mdp.num_states, mdp.num_states);
  for (int a = 0; a < mdp.num_actions; ++a)
    p_pi += policy.col(a).asDiagonal() * mdp.transition[static_cast<std::size_t>(a)];
  return p_pi;
}

}  // namespace

DpSolution solve_discounted(const TabularMDP& mdp, const Matrix& policy) {
  mdp.validate();
  check_policy(mdp, policy);
  const Index s_count = mdp.num_states;
  const Matrix p_pi = policy_transition(mdp, policy);
  const Vector r_pi = (policy.cwiseProduct(mdp.reward)).rowwise().sum();
  const Matrix system = Matrix::Identity(s_count, s_count) - mdp.gamma * p_pi;
  Eigen::PartialPivLU<Matrix> lu(system);
  DpSolution out;
  out.v = lu.solve(r_pi);
  if (!out.v.allFinite())
    throw NumericsError("solve_discounted: singular value system");
  out.q = Matrix::Zero(s_count, mdp.num_actions);
  for (int a = 0; a < mdp.num_actions; ++a)
    out.q.col(a) = mdp.reward.col(a) +
                   mdp.gamma * mdp.transition[static_cast<std::size_t>(a)] * out.v;
  out.advantage = out.q.colwise() - out.v;
  // d^T (I - gamma P_pi) = (1 - gamma) rho^T  =>  (I - gamma P_pi^T) d = ...
  Eigen::PartialPivLU<Matrix> lu_t(
      Matrix(Matrix::Identity(s_count, s_count) - mdp.gamma * p_pi.transpose()));
  out.visitation = lu_t.solve(Vector((1.0 - mdp.gamma) * mdp.initial_dist));
  if (!out.visitation.allFinite())
    throw NumericsError("solve_discounted: singular visitation system");
  out.expected_return = mdp.initial_dist.dot(out.v);
  return out;
}

FiniteHorizonValues solve_finite_horizon(const TabularMDP& mdp,
                                         const Matrix& policy, int horizon) {
  mdp.validate();
  check_policy(mdp, policy);
  if (horizon <= 0) throw ContractError("solve_finite_horizon: horizon must be positive");
  FiniteHorizonValues out;
  out.v.assign(static_cast<std::size_t>(horizon), Vector());
  out.q.assign(static_cast<std::size_t>(horizon), Matrix());
  Vector next_v = Vector::Zero(mdp.num_states);
  for (int h = horizon - 1; h >= 0; --h) {
    Matrix q_h(mdp.num_states, mdp.num_actions);
    for (int a = 0; a < mdp.num_actions; ++a)
      q_h.col(a) = mdp.reward.col(a) +
                   mdp.gamma * mdp.transition[static_cast<std::size_t>(a)] * next_v;
    Vector v_h = (policy.cwiseProduct(q_h)).rowwise().sum();
    out.q[static_cast<std::size_t>(h)] = std::move(q_h);
    out.v[static_cast<std::size_t>(h)] = v_h;
    next_v = std::move(v_h);
  }
  return out;
}

Matrix random_policy(int num_states, int num_actions, numkit::Rng& rng) {
  Matrix policy(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    policy.row(s) = rng.dirichlet_uniform(num_actions).transpose();
  return policy;
}

TabularMDP random_mdp(int num_states, int num_actions, double gamma,
                      numkit::Rng& rng) {
  TabularMDP mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.transition.reserve(static_cast<std::size_t>(num_actions));
  for (int a = 0; a < num_actions; ++a) {
    Matrix p(num_states, num_states);
    for (int s = 0; s < num_states; ++s)
      p.row(s) = rng.dirichlet_uniform(num_states).transpose();
    mdp.transition.push_back(std::move(p));
  }
  mdp.reward = Matrix::Zero(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) mdp.reward(s, a) = rng.uniform();
  mdp.initial_dist =
      Vector::Constant(num_states, 1.0 / static_cast<double>(num_states));
  mdp.validate();
  return mdp;
}

TabularMDP chain_mdp(int num_states, double gamma) {
  if (num_states < 2) throw ContractError("chain_mdp: need at least 2 states");
  TabularMDP mdp;
  mdp.num_states = num_states;
  mdp.num_actions = 2;
  mdp.gamma = gamma;
  const int last = num_states - 1;
  for (int a = 0; a < 2; ++a) {
    Matrix p = Matrix::Zero(num_states, num_states);
    for (int s = 0; s < num_states; ++s) {
      const int next = a == 0 ? std::max(0, s - 1) : std::min(last, s + 1);
      p(s, next) = 1.0;
    }
    mdp.transition.push_back(std::move(p));
  }
  mdp.reward = Matrix::Zero(num_states, 2);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < 2; ++a) {
      const int next = a == 0 ? std::max(0, s - 1) : std::min(last, s + 1);
      mdp.reward(s, a) = next == last ? 1.0 : 0.0;
    }
  mdp.initial_dist =
      Vector::Constant(num_states, 1.0 / static_cast<double>(num_states));
  mdp.validate();
  return mdp;
}

Matrix optimal_q(const TabularMDP& mdp, double tol, int max_iter) {
  mdp.validate();
  Vector v = Vector::Zero(mdp.num_states);
  Matrix q(mdp.num_states, mdp.num_actions);
  for (int iter = 0; iter < max_iter; ++iter) {
    for (int a = 0; a < mdp.num_actions; ++a)
      q.col(a) = mdp.reward.col(a) +
                 mdp.gamma * mdp.transition[static_cast<std::size_t>(a)] * v;
    const Vector next_v = q.rowwise().maxCoeff();
    const double delta = (next_v - v).cwiseAbs().maxCoeff();
    v = next_v;
    if (delta < tol) return q;
  }
  throw NumericsError("optimal_q: value iteration did not converge");
}

int tabular_step(const TabularMDP& mdp, int state, int action,
                 numkit::Rng& rng) {
  if (state < 0 || state >= mdp.num_states)
    throw ContractError("tabular_step: state out of range");
  if (action < 0 || action >= mdp.num_actions)
    throw ContractError("tabular_step: action out of range");
  return rng.categorical(
      mdp.transition[static_cast<std::size_t>(action)].row(state).transpose());
}

}  // namespace icrl::envs
