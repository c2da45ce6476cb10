#include "icrl/datagen/behavior.hpp"

#include <cmath>

#include "icrl/envs/darkroom.hpp"
#include "icrl/errors.hpp"

namespace icrl::datagen {

using envs::FamilyKind;
using envs::TaskFamily;
using envs::TaskSpec;
using nlohmann::json;
using numkit::Matrix;
using numkit::Rng;
using numkit::Vector;

namespace {

void check_prob_vector(const Vector& v, const char* what) {
  if ((v.array() < -1e-12).any())
    throw ContractError(std::string(what) + ": negative probability");
  if (std::abs(v.sum() - 1.0) > 1e-12)
    throw ContractError(std::string(what) + ": probabilities do not sum to 1");
}

void check_mix_weight(double w) {
  const double scaled = w * 10.0;
  if (w < 0.0 || w > 1.0 || std::abs(scaled - std::round(scaled)) > 1e-9)
    throw ContractError("BehaviorPolicy: mix_weight must lie on the 0.1 grid");
}

}  // namespace

void BehaviorPolicy::validate(const TaskFamily& family) const {
  switch (kind) {
    case Kind::kBanditMixture: {
      if (family.kind != FamilyKind::kBandit)
        throw ContractError("BehaviorPolicy: bandit mixture on non-bandit family");
      const int k = family.bandit.num_arms;
      if (dirichlet_probs.size() != k || arm_probs.size() != k)
        throw ShapeError("BehaviorPolicy: arm probability size mismatch");
      if (point_mass_arm < 0 || point_mass_arm >= k)
        throw ContractError("BehaviorPolicy: point-mass arm out of range");
      check_mix_weight(mix_weight);
      check_prob_vector(dirichlet_probs, "BehaviorPolicy dirichlet");
      check_prob_vector(arm_probs, "BehaviorPolicy mixture");
      break;
    }
    case Kind::kDarkroomPMix:
      if (family.kind != FamilyKind::kDarkroom)
        throw ContractError("BehaviorPolicy: darkroom pmix on non-darkroom family");
      if (p_opt < 0.0 || p_opt > 1.0)
        throw ContractError("BehaviorPolicy: p_opt outside [0, 1]");
      break;
    case Kind::kTabularExplicit: {
      if (family.kind != FamilyKind::kTabular)
        throw ContractError("BehaviorPolicy: explicit table on non-tabular family");
      if (action_probs.rows() != family.mdp.num_states ||
          action_probs.cols() != family.mdp.num_actions)
        throw ShapeError("BehaviorPolicy: action table shape mismatch");
      for (numkit::Index s = 0; s < action_probs.rows(); ++s)
        check_prob_vector(action_probs.row(s).transpose(),
                          "BehaviorPolicy table row");
      break;
    }
  }
}

Vector BehaviorPolicy::action_distribution(const TaskSpec& task,
                                           const TaskFamily& family,
                                           int state) const {
  switch (kind) {
    case Kind::kBanditMixture:
      return arm_probs;
    case Kind::kDarkroomPMix: {
      const int opt = envs::darkroom_optimal_action(state, task.goal, task.side);
      Vector probs = Vector::Constant(envs::kDarkroomActionCount,
                                      (1.0 - p_opt) /
                                          envs::kDarkroomActionCount);
      probs[opt] += p_opt;
      return probs;
    }
    case Kind::kTabularExplicit: {
      if (state < 0 || state >= family.mdp.num_states)
        throw ContractError("BehaviorPolicy: state out of range");
      return action_probs.row(state).transpose();
    }
  }
  throw ContractError("BehaviorPolicy: unknown kind");
}

int BehaviorPolicy::act(const TaskSpec& task, const TaskFamily& family,
                        int state, Rng& rng) const {
  return rng.categorical(action_distribution(task, family, state));
}

BehaviorPolicy make_behavior_policy(const TaskSpec& task,
                                    const TaskFamily& family, Rng& rng,
                                    double darkroom_p_opt) {
  BehaviorPolicy behavior;
  switch (family.kind) {
    case FamilyKind::kBandit: {
      behavior.kind = BehaviorPolicy::Kind::kBanditMixture;
      const int k = family.bandit.num_arms;
      behavior.mix_weight = static_cast<double>(rng.uniform_int(11)) / 10.0;
      behavior.point_mass_arm = rng.uniform_int(k);
      behavior.dirichlet_probs = rng.dirichlet_uniform(k);
      behavior.arm_probs = (1.0 - behavior.mix_weight) * behavior.dirichlet_probs;
      behavior.arm_probs[behavior.point_mass_arm] += behavior.mix_weight;
      break;
    }
    case FamilyKind::kDarkroom:
      behavior.kind = BehaviorPolicy::Kind::kDarkroomPMix;
      behavior.p_opt = darkroom_p_opt;
      break;
    case FamilyKind::kTabular:
      throw ContractError(
          "make_behavior_policy: tabular families use make_tabular_behavior");
  }
  behavior.validate(family);
  return behavior;
}

BehaviorPolicy make_tabular_behavior(const Matrix& action_probs) {
  BehaviorPolicy behavior;
  behavior.kind = BehaviorPolicy::Kind::kTabularExplicit;
  behavior.action_probs = action_probs;
  return behavior;
}

double calibrate_darkroom_p(const TaskFamily& family,
                            const std::vector<int>& goals, int horizon,
                            std::uint64_t seed, int n_rollouts,
                            double target_ratio) {
  if (family.kind != FamilyKind::kDarkroom)
    throw ContractError("calibrate_darkroom_p: darkroom family required");
  if (goals.empty()) throw ContractError("calibrate_darkroom_p: no goals");
  const int side = family.darkroom_side;
  const int start = 0;
  for (int grid = 10; grid >= 0; --grid) {
    const double p = 0.05 * grid;
    Rng rng = Rng::derive(seed, "darkroom_calibration", static_cast<std::uint64_t>(grid));
    double total_return = 0.0;
    double total_optimal = 0.0;
    for (int i = 0; i < n_rollouts; ++i) {
      const int goal = goals[static_cast<std::size_t>(i) % goals.size()];
      TaskSpec task;
      task.kind = FamilyKind::kDarkroom;
      task.horizon = horizon;
      task.side = side;
      task.goal = goal;
      BehaviorPolicy behavior;
      behavior.kind = BehaviorPolicy::Kind::kDarkroomPMix;
      behavior.p_opt = p;
      int state = start;
      double ep_return = 0.0;
      for (int h = 0; h < horizon; ++h) {
        const int action = behavior.act(task, family, state, rng);
        auto [next, reward] = envs::darkroom_step(state, action, goal, side);
        ep_return += reward;
        state = next;
      }
      total_return += ep_return;
      total_optimal += envs::darkroom_optimal_return(start, goal, side, horizon);
    }
    if (total_return < target_ratio * total_optimal) return p;
  }
  return 0.0;
}

json behavior_to_json(const BehaviorPolicy& behavior) {
  json j;
  switch (behavior.kind) {
    case BehaviorPolicy::Kind::kBanditMixture: {
      j["kind"] = "bandit_mixture";
      json probs = json::array();
      for (numkit::Index i = 0; i < behavior.dirichlet_probs.size(); ++i)
        probs.push_back(behavior.dirichlet_probs[i]);
      j["dirichlet_probs"] = std::move(probs);
      j["point_mass_arm"] = behavior.point_mass_arm;
      j["mix_weight"] = behavior.mix_weight;
      break;
    }
    case BehaviorPolicy::Kind::kDarkroomPMix:
      j["kind"] = "darkroom_pmix";
      j["p_opt"] = behavior.p_opt;
      break;
    case BehaviorPolicy::Kind::kTabularExplicit: {
      j["kind"] = "tabular_explicit";
      json table = json::array();
      for (numkit::Index s = 0; s < behavior.action_probs.rows(); ++s) {
        json row = json::array();
        for (numkit::Index a = 0; a < behavior.action_probs.cols(); ++a)
          row.push_back(behavior.action_probs(s, a));
        table.push_back(std::move(row));
      }
      j["action_probs"] = std::move(table);
      break;
    }
  }
  return j;
}

BehaviorPolicy behavior_from_json(const json& j) {
  BehaviorPolicy behavior;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "bandit_mixture") {
    behavior.kind = BehaviorPolicy::Kind::kBanditMixture;
    const auto& probs = j.at("dirichlet_probs");
    behavior.dirichlet_probs.resize(static_cast<numkit::Index>(probs.size()));
    for (numkit::Index i = 0; i < behavior.dirichlet_probs.size(); ++i)
      behavior.dirichlet_probs[i] = probs[static_cast<std::size_t>(i)].get<double>();
    behavior.point_mass_arm = j.at("point_mass_arm").get<int>();
    behavior.mix_weight = j.at("mix_weight").get<double>();
    behavior.arm_probs = (1.0 - behavior.mix_weight) * behavior.dirichlet_probs;
    behavior.arm_probs[behavior.point_mass_arm] += behavior.mix_weight;
  } else if (kind == "darkroom_pmix") {
    behavior.kind = BehaviorPolicy::Kind::kDarkroomPMix;
    behavior.p_opt = j.at("p_opt").get<double>();
  } else if (kind == "tabular_explicit") {
    behavior.kind = BehaviorPolicy::Kind::kTabularExplicit;
    const auto& table = j.at("action_probs");
    const auto rows = static_cast<numkit::Index>(table.size());
    if (rows == 0) throw FormatError("behavior: empty action table");
    const auto cols = static_cast<numkit::Index>(table[0].size());
    behavior.action_probs.resize(rows, cols);
    for (numkit::Index s = 0; s < rows; ++s)
      for (numkit::Index a = 0; a < cols; ++a)
        behavior.action_probs(s, a) =
            table[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]
                .get<double>();
  } else {
    throw FormatError("behavior: unknown kind '" + kind + "'");
  }
  return behavior;
}

}  // namespace icrl::datagen
