#include "icrl/envs/task.hpp"

#include "icrl/errors.hpp"
#include "icrl/util.hpp"

namespace icrl::envs {

using nlohmann::json;
using numkit::Index;
using numkit::Matrix;
using numkit::Vector;

std::string family_kind_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::kBandit: return "bandit";
    case FamilyKind::kDarkroom: return "darkroom";
    case FamilyKind::kTabular: return "tabular";
  }
  throw ContractError("family_kind_name: unknown kind");
}

FamilyKind family_kind_from_name(const std::string& name) {
  if (name == "bandit") return FamilyKind::kBandit;
  if (name == "darkroom") return FamilyKind::kDarkroom;
  if (name == "tabular") return FamilyKind::kTabular;
  throw FormatError("unknown family kind '" + name + "'");
}

void TaskFamily::validate() const {
  if (horizon <= 0) throw ContractError("TaskFamily: horizon must be positive");
  switch (kind) {
    case FamilyKind::kBandit:
      bandit.validate();
      break;
    case FamilyKind::kDarkroom:
      if (darkroom_side <= 0)
        throw ContractError("TaskFamily: darkroom side must be positive");
      break;
    case FamilyKind::kTabular:
      mdp.validate();
      break;
  }
}

void validate_task(const TaskSpec& task, const TaskFamily& family) {
  if (task.kind != family.kind)
    throw ContractError("task kind does not match family kind");
  if (task.horizon <= 0)
    throw ContractError("TaskSpec: horizon must be positive");
  switch (task.kind) {
    case FamilyKind::kBandit:
      if (task.theta.size() != family.bandit.feature_dim)
        throw ContractError("TaskSpec: theta dimension mismatch");
      break;
    case FamilyKind::kDarkroom:
      if (task.side != family.darkroom_side)
        throw ContractError("TaskSpec: grid side mismatch");
      if (task.goal < 0 || task.goal >= task.side * task.side)
        throw ContractError("TaskSpec: goal outside grid");
      break;
    case FamilyKind::kTabular:
      if (task.mdp_name != family.mdp_name)
        throw ContractError("TaskSpec: MDP name mismatch");
      break;
  }
}

namespace {

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("expected JSON array for vector");
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i)
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty())
    throw FormatError("expected non-empty JSON array for matrix");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Index>(row.size()) != cols)
      throw FormatError("ragged JSON matrix");
    for (Index c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

json task_to_json(const TaskSpec& task) {
  json j;
  j["kind"] = family_kind_name(task.kind);
  j["horizon"] = task.horizon;
  switch (task.kind) {
    case FamilyKind::kBandit:
      j["theta"] = vector_to_json(task.theta);
      break;
    case FamilyKind::kDarkroom:
      j["goal"] = task.goal;
      j["side"] = task.side;
      break;
    case FamilyKind::kTabular:
      j["mdp_name"] = task.mdp_name;
      break;
  }
  return j;
}

TaskSpec task_from_json(const json& j) {
  TaskSpec task;
  task.kind = family_kind_from_name(j.at("kind").get<std::string>());
  task.horizon = j.at("horizon").get<int>();
  switch (task.kind) {
    case FamilyKind::kBandit:
      task.theta = vector_from_json(j.at("theta"));
      break;
    case FamilyKind::kDarkroom:
      task.goal = j.at("goal").get<int>();
      task.side = j.at("side").get<int>();
      break;
    case FamilyKind::kTabular:
      task.mdp_name = j.at("mdp_name").get<std::string>();
      break;
  }
  return task;
}

json family_to_json(const TaskFamily& family) {
  json j;
  j["kind"] = family_kind_name(family.kind);
  j["horizon"] = family.horizon;
  switch (family.kind) {
    case FamilyKind::kBandit:
      j["num_arms"] = family.bandit.num_arms;
      j["feature_dim"] = family.bandit.feature_dim;
      j["noise_var"] = family.bandit.noise_var;
      j["seed"] = family.bandit.seed;
      j["features"] = matrix_to_json(family.bandit.features);
      break;
    case FamilyKind::kDarkroom:
      j["side"] = family.darkroom_side;
      break;
    case FamilyKind::kTabular: {
      j["mdp_name"] = family.mdp_name;
      j["num_states"] = family.mdp.num_states;
      j["num_actions"] = family.mdp.num_actions;
      j["gamma"] = family.mdp.gamma;
      json transitions = json::array();
      for (const Matrix& p : family.mdp.transition)
        transitions.push_back(matrix_to_json(p));
      j["transition"] = std::move(transitions);
      j["reward"] = matrix_to_json(family.mdp.reward);
      j["initial_dist"] = vector_to_json(family.mdp.initial_dist);
      break;
    }
  }
  return j;
}

TaskFamily family_from_json(const json& j) {
  TaskFamily family;
  family.kind = family_kind_from_name(j.at("kind").get<std::string>());
  family.horizon = j.at("horizon").get<int>();
  switch (family.kind) {
    case FamilyKind::kBandit:
      family.bandit.num_arms = j.at("num_arms").get<int>();
      family.bandit.feature_dim = j.at("feature_dim").get<int>();
      family.bandit.noise_var = j.at("noise_var").get<double>();
      family.bandit.seed = j.at("seed").get<std::uint64_t>();
      family.bandit.features = matrix_from_json(j.at("features"));
      break;
    case FamilyKind::kDarkroom:
      family.darkroom_side = j.at("side").get<int>();
      break;
    case FamilyKind::kTabular: {
      family.mdp_name = j.at("mdp_name").get<std::string>();
      family.mdp.num_states = j.at("num_states").get<int>();
      family.mdp.num_actions = j.at("num_actions").get<int>();
      family.mdp.gamma = j.at("gamma").get<double>();
      family.mdp.transition.clear();
      for (const json& p : j.at("transition"))
        family.mdp.transition.push_back(matrix_from_json(p));
      family.mdp.reward = matrix_from_json(j.at("reward"));
      family.mdp.initial_dist = vector_from_json(j.at("initial_dist"));
      break;
    }
  }
  family.validate();
  return family;
}

void write_family_file(const std::string& path, const TaskFamily& family) {
  write_text_file(path, family_to_json(family).dump(2) + "\n");
}

TaskFamily read_family_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError("family file '" + path + "': " + e.what());
  }
  try {
    return family_from_json(j);
  } catch (const json::exception& e) {
    throw FormatError("family file '" + path + "': " + e.what());
  }
}

}  // namespace icrl::envs
