#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "icrl/envs/tabular.hpp"
#include "icrl/numkit/tensor.hpp"

namespace icrl::pretrain {

// Closed-form solution of the per-state weighted-likelihood problem:
// pi(a) = pi_b(a) exp(A(a)/eta) / Z with Z the per-state normalizer.  The
// solution is the exact minimizer of weighted_cross_entropy over the simplex.
struct ClosedFormPolicy {
  numkit::Vector pi;
  double z = 1.0;
};

ClosedFormPolicy tabular_wmle_closed_form(const numkit::Vector& pi_b,
                                          const numkit::Vector& advantage,
                                          double eta);

// The objective the closed form minimizes at one state:
// L(pi) = -sum_a pi_b(a) exp(A(a)/eta) log pi(a).
double weighted_cross_entropy(const numkit::Vector& pi_b,
                              const numkit::Vector& advantage, double eta,
                              const numkit::Vector& pi);

// KL(p || q) with 0 log 0 = 0; +infinity when q vanishes on p's support.
double kl_divergence(const numkit::Vector& p, const numkit::Vector& q);

// Per-state diagnostics of the exponential-weighting identity: z[s] is the
// per-state normalizer under the behavior policy's exact advantages and
// identity_residual[s] = sum_a pi_b(a|s) A(s,a), which is identically zero.
struct ZIdentity {
  numkit::Vector z;
  numkit::Vector identity_residual;
};

ZIdentity z_identity(const envs::TabularMDP& mdp, const numkit::Matrix& pi_b,
                     double eta);

// One exact policy-improvement check: reweights the behavior policy in
// closed form, solves both policies by dynamic programming, and evaluates
// the improvement bound
//   lhs = G(pi*) - G(pi_b)
//   rhs = eta/(1-gamma) C_D - 2 gamma/(1-gamma)^2 C_A sqrt(C_D/2)
// with C_D the behavior-occupancy-weighted KL(pi* || pi_b) and
// C_A = max_s |E_{pi*} A_b(s, .)|.
struct Prop2Record {
  double c_d = 0.0;
  double c_a = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

Prop2Record proposition2_instance(const envs::TabularMDP& mdp,
                                  const numkit::Matrix& pi_b, double eta);

struct PropositionReport {
  double eta = 1.0;
  double tolerance = 1e-9;
  std::vector<Prop2Record> records;

  bool all_pass() const;
};

// Random (MDP, behavior) instances checked against the improvement bound.
PropositionReport proposition2_suite(int n_instances, int num_states,
                                     int num_actions, double gamma, double eta,
                                     std::uint64_t seed);

nlohmann::json proposition_report_to_json(const PropositionReport& report);
void write_proposition_report(const PropositionReport& report,
                              const std::string& path);

// Brute-force confirmation that the closed form minimizes the weighted
// cross-entropy: on random 3-action instances, no simplex grid point may
// beat the closed-form loss (gap >= -1e-12), and the grid optimum must sit
// within `gap_bound` of it (the grid brackets the true minimizer).
struct Prop1Record {
  double closed_loss = 0.0;
  double grid_loss = 0.0;
  double gap = 0.0;  // grid_loss - closed_loss
  bool pass = false;
};

struct Prop1Report {
  double eta = 1.0;
  double grid_step = 2e-3;
  double gap_bound = 1e-3;
  std::vector<Prop1Record> records;

  bool all_pass() const;
};

Prop1Report proposition1_suite(int n_instances, double grid_step, double eta,
                               std::uint64_t seed);
nlohmann::json prop1_report_to_json(const Prop1Report& report);

// Exact-advantage identities on random MDPs: per state,
// sum_a pi_b(a|s) A_b(s,a) must vanish (|residual| <= 1e-10), and once the
// rewards are rescaled so max |A/eta| <= 0.1, the per-state normalizer obeys
// |Z(s) - 1| <= 0.01.
struct ZSuiteRecord {
  double max_identity_residual = 0.0;
  double max_z_deviation = 0.0;
  bool pass = false;
};

struct ZSuiteReport {
  double residual_tolerance = 1e-10;
  double z_tolerance = 0.01;
  std::vector<ZSuiteRecord> records;

  bool all_pass() const;
};

ZSuiteReport z_identity_suite(int n_instances, int num_states, int num_actions,
                              double gamma, double eta, std::uint64_t seed);
nlohmann::json z_suite_report_to_json(const ZSuiteReport& report);

}  // namespace icrl::pretrain
