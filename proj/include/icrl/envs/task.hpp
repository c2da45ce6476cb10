#pragma once

#include <string>

#include <json.hpp>

#include "icrl/envs/bandit.hpp"
#include "icrl/envs/darkroom.hpp"
#include "icrl/envs/tabular.hpp"

namespace icrl::envs {

enum class FamilyKind { kBandit, kDarkroom, kTabular };

std::string family_kind_name(FamilyKind kind);
FamilyKind family_kind_from_name(const std::string& name);

// A sampled decision task within a family.
struct TaskSpec {
  FamilyKind kind = FamilyKind::kBandit;
  int horizon = 0;
  numkit::Vector theta;       // bandit parameter
  int goal = -1;              // darkroom goal cell
  int side = 0;               // darkroom grid side
  std::string mdp_name;       // tabular family name
};

// Shared structure of a task distribution: the bandit feature table, the
// darkroom grid, or the explicit MDP.  Serialized into corpus headers and
// stand-alone family files so tasks can be reconstructed anywhere.
struct TaskFamily {
  FamilyKind kind = FamilyKind::kBandit;
  int horizon = 0;
  BanditFamily bandit;
  int darkroom_side = 5;
  TabularMDP mdp;
  std::string mdp_name;

  void validate() const;
};

void validate_task(const TaskSpec& task, const TaskFamily& family);

nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);

nlohmann::json family_to_json(const TaskFamily& family);
TaskFamily family_from_json(const nlohmann::json& j);

void write_family_file(const std::string& path, const TaskFamily& family);
TaskFamily read_family_file(const std::string& path);

}  // namespace icrl::envs
