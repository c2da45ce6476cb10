#include "icrl/pretrain/propositions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icrl/errors.hpp"
#include "icrl/numkit/rng.hpp"
#include "icrl/util.hpp"

namespace icrl::pretrain {

using envs::TabularMDP;
using nlohmann::json;
using numkit::Matrix;
using numkit::Rng;
using numkit::Vector;

namespace {

void check_distribution(const Vector& pi_b) {
  if (pi_b.size() < 1)
    throw ContractError("closed form: empty action distribution");
  double total = 0.0;
  for (numkit::Index a = 0; a < pi_b.size(); ++a) {
    if (pi_b[a] < 0.0)
      throw ContractError("closed form: negative probability");
    total += pi_b[a];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ContractError("closed form: probabilities do not sum to one");
}

}  // namespace

ClosedFormPolicy tabular_wmle_closed_form(const Vector& pi_b,
                                          const Vector& advantage,
                                          double eta) {
  check_distribution(pi_b);
  if (advantage.size() != pi_b.size())
    throw ShapeError("closed form: advantage/action size mismatch");
  if (!(eta > 0.0)) throw ContractError("closed form: eta must be > 0");
  for (numkit::Index a = 0; a < advantage.size(); ++a)
    if (!std::isfinite(advantage[a]))
      throw NumericsError("closed form: non-finite advantage");

  ClosedFormPolicy out;
  out.pi = Vector(pi_b.size());
  double z = 0.0;
  for (numkit::Index a = 0; a < pi_b.size(); ++a) {
    out.pi[a] = pi_b[a] * std::exp(advantage[a] / eta);
    z += out.pi[a];
  }
  out.z = z;
  out.pi /= z;
  return out;
}

double weighted_cross_entropy(const Vector& pi_b, const Vector& advantage,
                              double eta, const Vector& pi) {
  check_distribution(pi_b);
  if (advantage.size() != pi_b.size() || pi.size() != pi_b.size())
    throw ShapeError("weighted cross entropy: size mismatch");
  double loss = 0.0;
  for (numkit::Index a = 0; a < pi_b.size(); ++a) {
    const double coeff = pi_b[a] * std::exp(advantage[a] / eta);
    if (coeff == 0.0) continue;
    if (pi[a] <= 0.0) return std::numeric_limits<double>::infinity();
    loss -= coeff * std::log(pi[a]);
  }
  return loss;
}

double kl_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size())
    throw ShapeError("kl_divergence: size mismatch");
  double kl = 0.0;
  for (numkit::Index a = 0; a < p.size(); ++a) {
    if (p[a] == 0.0) continue;
    if (q[a] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[a] * std::log(p[a] / q[a]);
  }
  return kl;
}

ZIdentity z_identity(const TabularMDP& mdp, const Matrix& pi_b, double eta) {
  const envs::DpSolution sol = envs::solve_discounted(mdp, pi_b);
  ZIdentity out;
  out.z = Vector(mdp.num_states);
  out.identity_residual = Vector(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) {
    double z = 0.0;
    double residual = 0.0;
    for (int a = 0; a < mdp.num_actions; ++a) {
      z += pi_b(s, a) * std::exp(sol.advantage(s, a) / eta);
      residual += pi_b(s, a) * sol.advantage(s, a);
    }
    out.z[s] = z;
    out.identity_residual[s] = residual;
  }
  return out;
}

Prop2Record proposition2_instance(const TabularMDP& mdp, const Matrix& pi_b,
                                  double eta) {
  mdp.validate();
  if (pi_b.rows() != mdp.num_states || pi_b.cols() != mdp.num_actions)
    throw ShapeError("proposition2_instance: policy shape mismatch");
  const envs::DpSolution behavior = envs::solve_discounted(mdp, pi_b);

  Matrix pi_star(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    const ClosedFormPolicy cf = tabular_wmle_closed_form(
        pi_b.row(s).transpose(), behavior.advantage.row(s).transpose(), eta);
    pi_star.row(s) = cf.pi.transpose();
  }
  const envs::DpSolution reweighted = envs::solve_discounted(mdp, pi_star);

  Prop2Record record;
  for (int s = 0; s < mdp.num_states; ++s) {
    record.c_d += behavior.visitation[s] *
                  kl_divergence(pi_star.row(s).transpose(),
                                pi_b.row(s).transpose());
    double drift = 0.0;
    for (int a = 0; a < mdp.num_actions; ++a)
      drift += pi_star(s, a) * behavior.advantage(s, a);
    record.c_a = std::max(record.c_a, std::abs(drift));
  }
  record.lhs = reweighted.expected_return - behavior.expected_return;
  const double gamma = mdp.gamma;
  record.rhs = eta / (1.0 - gamma) * record.c_d -
               2.0 * gamma / ((1.0 - gamma) * (1.0 - gamma)) * record.c_a *
                   std::sqrt(record.c_d / 2.0);
  record.pass = record.lhs >= record.rhs - 1e-9;
  return record;
}

bool PropositionReport::all_pass() const {
  for (const auto& record : records)
    if (!record.pass) return false;
  return true;
}

PropositionReport proposition2_suite(int n_instances, int num_states,
                                     int num_actions, double gamma, double eta,
                                     std::uint64_t seed) {
  if (n_instances < 1)
    throw ContractError("proposition2_suite: need at least one instance");
  PropositionReport report;
  report.eta = eta;
  report.records.reserve(static_cast<std::size_t>(n_instances));
  for (int i = 0; i < n_instances; ++i) {
    Rng mdp_rng = Rng::derive(seed, "prop2_mdp", static_cast<std::uint64_t>(i));
    Rng pol_rng =
        Rng::derive(seed, "prop2_policy", static_cast<std::uint64_t>(i));
    const TabularMDP mdp = envs::random_mdp(num_states, num_actions, gamma,
                                            mdp_rng);
    const Matrix pi_b = envs::random_policy(num_states, num_actions, pol_rng);
    report.records.push_back(proposition2_instance(mdp, pi_b, eta));
  }
  return report;
}

json proposition_report_to_json(const PropositionReport& report) {
  json j;
  j["eta"] = report.eta;
  j["tolerance"] = report.tolerance;
  j["all_pass"] = report.all_pass();
  j["instances"] = json::array();
  for (const auto& record : report.records) {
    json row;
    row["c_d"] = record.c_d;
    row["c_a"] = record.c_a;
    row["lhs"] = record.lhs;
    row["rhs"] = record.rhs;
    row["pass"] = record.pass;
    j["instances"].push_back(row);
  }
  return j;
}

void write_proposition_report(const PropositionReport& report,
                              const std::string& path) {
  write_text_file(path, proposition_report_to_json(report).dump(2) + "\n");
}

bool Prop1Report::all_pass() const {
  for (const auto& record : records)
    if (!record.pass) return false;
  return true;
}

Prop1Report proposition1_suite(int n_instances, double grid_step, double eta,
                               std::uint64_t seed) {
  if (n_instances < 1)
    throw ContractError("proposition1_suite: n_instances must be >= 1");
  if (grid_step <= 0.0 || grid_step >= 0.5)
    throw ContractError("proposition1_suite: grid_step must be in (0, 0.5)");
  Prop1Report report;
  report.eta = eta;
  report.grid_step = grid_step;
  report.records.reserve(static_cast<std::size_t>(n_instances));
  for (int i = 0; i < n_instances; ++i) {
    Rng pol_rng =
        Rng::derive(seed, "prop1_policy", static_cast<std::uint64_t>(i));
    Rng adv_rng = Rng::derive(seed, "prop1_adv", static_cast<std::uint64_t>(i));
    const Vector pi_b = pol_rng.dirichlet_uniform(3);
    Vector advantage(3);
    for (int a = 0; a < 3; ++a) advantage[a] = adv_rng.uniform(-1.0, 1.0);

    Prop1Record record;
    const ClosedFormPolicy closed =
        tabular_wmle_closed_form(pi_b, advantage, eta);
    record.closed_loss = weighted_cross_entropy(pi_b, advantage, eta, closed.pi);
    record.grid_loss = std::numeric_limits<double>::infinity();
    for (double p0 = grid_step; p0 < 1.0; p0 += grid_step)
      for (double p1 = grid_step; p0 + p1 < 1.0; p1 += grid_step) {
        Vector pi(3);
        pi << p0, p1, 1.0 - p0 - p1;
        record.grid_loss = std::min(
            record.grid_loss, weighted_cross_entropy(pi_b, advantage, eta, pi));
      }
    record.gap = record.grid_loss - record.closed_loss;
    record.pass = record.gap >= -1e-12 && record.gap <= report.gap_bound;
    report.records.push_back(record);
  }
  return report;
}

json prop1_report_to_json(const Prop1Report& report) {
  json j;
  j["eta"] = report.eta;
  j["grid_step"] = report.grid_step;
  j["gap_bound"] = report.gap_bound;
  j["all_pass"] = report.all_pass();
  j["instances"] = json::array();
  for (const auto& record : report.records) {
    json row;
    row["closed_loss"] = record.closed_loss;
    row["grid_loss"] = record.grid_loss;
    row["gap"] = record.gap;
    row["pass"] = record.pass;
    j["instances"].push_back(row);
  }
  return j;
}

bool ZSuiteReport::all_pass() const {
  for (const auto& record : records)
    if (!record.pass) return false;
  return true;
}

ZSuiteReport z_identity_suite(int n_instances, int num_states, int num_actions,
                              double gamma, double eta, std::uint64_t seed) {
  if (n_instances < 1)
    throw ContractError("z_identity_suite: n_instances must be >= 1");
  ZSuiteReport report;
  report.records.reserve(static_cast<std::size_t>(n_instances));
  for (int i = 0; i < n_instances; ++i) {
    Rng mdp_rng =
        Rng::derive(seed, "zsuite_mdp", static_cast<std::uint64_t>(i));
    Rng pol_rng =
        Rng::derive(seed, "zsuite_policy", static_cast<std::uint64_t>(i));
    const TabularMDP mdp =
        envs::random_mdp(num_states, num_actions, gamma, mdp_rng);
    const Matrix pi_b = envs::random_policy(num_states, num_actions, pol_rng);

    ZSuiteRecord record;
    const ZIdentity raw = z_identity(mdp, pi_b, eta);
    record.max_identity_residual = raw.identity_residual.cwiseAbs().maxCoeff();

    // Rescale rewards so the advantages are small relative to eta, then the
    // per-state normalizer has to sit next to one.
    const envs::DpSolution sol = envs::solve_discounted(mdp, pi_b);
    const double peak = sol.advantage.cwiseAbs().maxCoeff();
    TabularMDP scaled = mdp;
    if (peak > 0.1 * eta) scaled.reward *= 0.1 * eta / peak;
    const ZIdentity small = z_identity(scaled, pi_b, eta);
    record.max_z_deviation = (small.z.array() - 1.0).abs().maxCoeff();
    record.pass =
        record.max_identity_residual <= report.residual_tolerance &&
        record.max_z_deviation <= report.z_tolerance;
    report.records.push_back(record);
  }
  return report;
}

json z_suite_report_to_json(const ZSuiteReport& report) {
  json j;
  j["residual_tolerance"] = report.residual_tolerance;
  j["z_tolerance"] = report.z_tolerance;
  j["all_pass"] = report.all_pass();
  j["instances"] = json::array();
  for (const auto& record : report.records) {
    json row;
    row["max_identity_residual"] = record.max_identity_residual;
    row["max_z_deviation"] = record.max_z_deviation;
    row["pass"] = record.pass;
    j["instances"].push_back(row);
  }
  return j;
}

}  // namespace icrl::pretrain
