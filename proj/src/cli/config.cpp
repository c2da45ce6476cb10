#include "icrl/cli/config.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "icrl/errors.hpp"
#include "icrl/util.hpp"

namespace icrl::cli {

using advantage::BellmanForm;
using nlohmann::json;
using pretrain::Objective;
using pretrain::QueryMask;

namespace {

[[noreturn]] void key_error(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

// Strict object reader: known keys are consumed, leftovers are an error.
class Section {
 public:
  Section(json j, std::string prefix)
      : j_(std::move(j)), prefix_(std::move(prefix)) {
    if (!j_.is_object())
      throw ConfigError("config section '" + prefix_ +
                        "' must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    consumed_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      key_error(path(key), "wrong type");
    }
  }

  json object(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return json::object();
    consumed_.insert(key);
    if (!it->is_object()) key_error(path(key), "expected an object");
    return *it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (consumed_.find(key) == consumed_.end())
        throw ConfigError("unknown config key '" + path(key) + "'");
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

 private:
  json j_;
  std::string prefix_;
  std::set<std::string> consumed_;
};

std::string bellman_name(BellmanForm form) {
  return form == BellmanForm::kStandard ? "standard" : "as_written";
}

BellmanForm bellman_from_name(const std::string& name, const std::string& key) {
  if (name == "standard") return BellmanForm::kStandard;
  if (name == "as_written") return BellmanForm::kAsWritten;
  key_error(key, "must be 'standard' or 'as_written'");
}

std::string mask_name(QueryMask mask) {
  switch (mask) {
    case QueryMask::kActionReward: return "action_reward";
    case QueryMask::kActionRewardNextState: return "action_reward_next_state";
    case QueryMask::kNone: return "none";
  }
  throw ContractError("mask_name: unknown mask");
}

QueryMask mask_from_name(const std::string& name, const std::string& key) {
  if (name == "action_reward") return QueryMask::kActionReward;
  if (name == "action_reward_next_state")
    return QueryMask::kActionRewardNextState;
  if (name == "none") return QueryMask::kNone;
  key_error(key, "must be 'action_reward', 'action_reward_next_state', or "
                 "'none'");
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) key_error(key, what);
}

json deep_merge(json base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (const auto& [key, value] : patch.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      base[key] = deep_merge(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

void set_dotted(json& root, const std::string& dotted, const json& value) {
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty())
      throw ConfigError("config override has an empty key segment: '" +
                        dotted + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object())
      (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

}  // namespace

std::string objective_name(Objective objective) {
  switch (objective) {
    case Objective::kDit: return "dit";
    case Objective::kBc: return "bc";
    case Objective::kDpt: return "dpt";
  }
  throw ContractError("objective_name: unknown objective");
}

Objective objective_from_name(const std::string& name) {
  if (name == "dit") return Objective::kDit;
  if (name == "bc") return Objective::kBc;
  if (name == "dpt") return Objective::kDpt;
  throw ConfigError("config key 'policy.objective': must be 'dit', 'bc', or "
                    "'dpt'");
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["family"] = c.family;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;

  j["bandit"]["num_arms"] = c.bandit.num_arms;
  j["bandit"]["feature_dim"] = c.bandit.feature_dim;
  j["bandit"]["noise_var"] = c.bandit.noise_var;

  j["darkroom"]["side"] = c.darkroom.side;
  j["darkroom"]["train_goals"] = c.darkroom.train_goals;
  j["darkroom"]["test_goals"] = c.darkroom.test_goals;
  j["darkroom"]["contexts_per_goal"] = c.darkroom.contexts_per_goal;
  j["darkroom"]["test_contexts_per_goal"] = c.darkroom.test_contexts_per_goal;
  j["darkroom"]["p_opt"] = c.darkroom.p_opt;
  j["darkroom"]["calibrate"] = c.darkroom.calibrate;
  j["darkroom"]["target_ratio"] = c.darkroom.target_ratio;

  j["tabular"]["chain_states"] = c.tabular.chain_states;
  j["tabular"]["num_datasets"] = c.tabular.num_datasets;

  j["corpus"]["num_train_tasks"] = c.corpus.num_train_tasks;
  j["corpus"]["num_test_tasks"] = c.corpus.num_test_tasks;
  j["corpus"]["val_fraction"] = c.corpus.val_fraction;
  j["corpus"]["horizon"] = c.corpus.horizon;
  j["corpus"]["gamma"] = c.corpus.gamma;

  j["value"]["lambda"] = c.value.loss.lambda;
  j["value"]["bellman_form"] = bellman_name(c.value.loss.bellman_form);
  j["value"]["eta"] = c.value.loss.eta;
  j["value"]["weight_clip_max"] = c.value.loss.weight_clip_max;
  j["value"]["epochs"] = c.value.train.epochs;
  j["value"]["batch_size"] = c.value.train.batch_size;
  j["value"]["seed"] = c.value.train.seed;
  j["value"]["max_steps_per_epoch"] = c.value.train.max_steps_per_epoch;
  j["value"]["learning_rate"] = c.value.train.learning_rate;
  j["value"]["weight_decay"] = c.value.train.weight_decay;
  j["value"]["n_layers"] = c.value.n_layers;
  j["value"]["embed_dim"] = c.value.embed_dim;

  j["advantage"]["source"] = c.advantage.source;

  j["policy"]["objective"] = objective_name(c.policy.objective);
  j["policy"]["epochs"] = c.policy.epochs;
  j["policy"]["batch_size"] = c.policy.batch_size;
  j["policy"]["eta"] = c.policy.eta;
  j["policy"]["seed"] = c.policy.seed;
  j["policy"]["learning_rate"] = c.policy.learning_rate;
  j["policy"]["weight_decay"] = c.policy.weight_decay;
  j["policy"]["n_layers"] = c.policy.n_layers;
  j["policy"]["embed_dim"] = c.policy.embed_dim;
  j["policy"]["mask"] = mask_name(c.policy.mask);
  j["policy"]["max_steps_per_epoch"] = c.policy.max_steps_per_epoch;
  j["policy"]["val_samples"] = c.policy.val_samples;

  j["eval"]["n_test_tasks"] = c.eval.n_test_tasks;
  j["eval"]["n_episodes"] = c.eval.n_episodes;
  j["eval"]["context_source"] = c.eval.context_source;
  j["eval"]["offline_mode"] = c.eval.offline_mode;
  j["eval"]["baselines"] = c.eval.baselines;

  j["props"]["prop1_instances"] = c.props.prop1_instances;
  j["props"]["grid_step"] = c.props.grid_step;
  j["props"]["prop2_instances"] = c.props.prop2_instances;
  j["props"]["num_states"] = c.props.num_states;
  j["props"]["num_actions"] = c.props.num_actions;
  j["props"]["z_instances"] = c.props.z_instances;
  j["props"]["eta"] = c.props.eta;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.get("family", c.family);
  root.get("master_seed", c.master_seed);
  root.get("output_dir", c.output_dir);

  {
    Section s(root.object("bandit"), "bandit");
    s.get("num_arms", c.bandit.num_arms);
    s.get("feature_dim", c.bandit.feature_dim);
    s.get("noise_var", c.bandit.noise_var);
    s.finish();
  }
  {
    Section s(root.object("darkroom"), "darkroom");
    s.get("side", c.darkroom.side);
    s.get("train_goals", c.darkroom.train_goals);
    s.get("test_goals", c.darkroom.test_goals);
    s.get("contexts_per_goal", c.darkroom.contexts_per_goal);
    s.get("test_contexts_per_goal", c.darkroom.test_contexts_per_goal);
    s.get("p_opt", c.darkroom.p_opt);
    s.get("calibrate", c.darkroom.calibrate);
    s.get("target_ratio", c.darkroom.target_ratio);
    s.finish();
  }
  {
    Section s(root.object("tabular"), "tabular");
    s.get("chain_states", c.tabular.chain_states);
    s.get("num_datasets", c.tabular.num_datasets);
    s.finish();
  }
  {
    Section s(root.object("corpus"), "corpus");
    s.get("num_train_tasks", c.corpus.num_train_tasks);
    s.get("num_test_tasks", c.corpus.num_test_tasks);
    s.get("val_fraction", c.corpus.val_fraction);
    s.get("horizon", c.corpus.horizon);
    s.get("gamma", c.corpus.gamma);
    s.finish();
  }
  {
    Section s(root.object("value"), "value");
    s.get("lambda", c.value.loss.lambda);
    std::string form = bellman_name(c.value.loss.bellman_form);
    s.get("bellman_form", form);
    c.value.loss.bellman_form = bellman_from_name(form, "value.bellman_form");
    s.get("eta", c.value.loss.eta);
    s.get("weight_clip_max", c.value.loss.weight_clip_max);
    s.get("epochs", c.value.train.epochs);
    s.get("batch_size", c.value.train.batch_size);
    s.get("seed", c.value.train.seed);
    s.get("max_steps_per_epoch", c.value.train.max_steps_per_epoch);
    s.get("learning_rate", c.value.train.learning_rate);
    s.get("weight_decay", c.value.train.weight_decay);
    s.get("n_layers", c.value.n_layers);
    s.get("embed_dim", c.value.embed_dim);
    s.finish();
  }
  {
    Section s(root.object("advantage"), "advantage");
    s.get("source", c.advantage.source);
    s.finish();
  }
  {
    Section s(root.object("policy"), "policy");
    std::string objective = objective_name(c.policy.objective);
    s.get("objective", objective);
    c.policy.objective = objective_from_name(objective);
    s.get("epochs", c.policy.epochs);
    s.get("batch_size", c.policy.batch_size);
    s.get("eta", c.policy.eta);
    s.get("seed", c.policy.seed);
    s.get("learning_rate", c.policy.learning_rate);
    s.get("weight_decay", c.policy.weight_decay);
    s.get("n_layers", c.policy.n_layers);
    s.get("embed_dim", c.policy.embed_dim);
    std::string mask = mask_name(c.policy.mask);
    s.get("mask", mask);
    c.policy.mask = mask_from_name(mask, "policy.mask");
    s.get("max_steps_per_epoch", c.policy.max_steps_per_epoch);
    s.get("val_samples", c.policy.val_samples);
    s.finish();
  }
  {
    Section s(root.object("eval"), "eval");
    s.get("n_test_tasks", c.eval.n_test_tasks);
    s.get("n_episodes", c.eval.n_episodes);
    s.get("context_source", c.eval.context_source);
    s.get("offline_mode", c.eval.offline_mode);
    s.get("baselines", c.eval.baselines);
    s.finish();
  }
  {
    Section s(root.object("props"), "props");
    s.get("prop1_instances", c.props.prop1_instances);
    s.get("grid_step", c.props.grid_step);
    s.get("prop2_instances", c.props.prop2_instances);
    s.get("num_states", c.props.num_states);
    s.get("num_actions", c.props.num_actions);
    s.get("z_instances", c.props.z_instances);
    s.get("eta", c.props.eta);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  check(family == "bandit" || family == "darkroom" || family == "tabular",
        "family", "must be 'bandit', 'darkroom', or 'tabular'");
  check(!output_dir.empty(), "output_dir", "must not be empty");
  if (std::filesystem::exists(output_dir))
    check(std::filesystem::is_directory(output_dir), "output_dir",
          "exists but is not a directory");

  check(bandit.num_arms >= 2, "bandit.num_arms", "must be >= 2");
  check(bandit.feature_dim >= 1, "bandit.feature_dim", "must be >= 1");
  check(bandit.noise_var >= 0.0, "bandit.noise_var", "must be >= 0");

  check(darkroom.side >= 2, "darkroom.side", "must be >= 2");
  check(!darkroom.train_goals.empty(), "darkroom.train_goals",
        "must not be empty");
  const int cells = darkroom.side * darkroom.side;
  for (int goal : darkroom.train_goals)
    check(goal >= 0 && goal < cells, "darkroom.train_goals",
          "goal outside the grid");
  for (int goal : darkroom.test_goals)
    check(goal >= 0 && goal < cells, "darkroom.test_goals",
          "goal outside the grid");
  check(darkroom.contexts_per_goal >= 1, "darkroom.contexts_per_goal",
        "must be >= 1");
  check(darkroom.test_contexts_per_goal >= 0,
        "darkroom.test_contexts_per_goal", "must be >= 0");
  check(darkroom.p_opt >= 0.0 && darkroom.p_opt <= 1.0, "darkroom.p_opt",
        "must be in [0, 1]");
  check(darkroom.target_ratio > 0.0 && darkroom.target_ratio < 1.0,
        "darkroom.target_ratio", "must be in (0, 1)");

  check(tabular.chain_states >= 2, "tabular.chain_states", "must be >= 2");
  check(tabular.num_datasets >= 1, "tabular.num_datasets", "must be >= 1");

  check(corpus.num_train_tasks >= 1, "corpus.num_train_tasks", "must be >= 1");
  check(corpus.num_test_tasks >= 0, "corpus.num_test_tasks", "must be >= 0");
  check(corpus.val_fraction >= 0.0 && corpus.val_fraction < 1.0,
        "corpus.val_fraction", "must be in [0, 1)");
  check(corpus.horizon >= 1, "corpus.horizon", "must be >= 1");
  check(corpus.gamma > 0.0 && corpus.gamma < 1.0, "corpus.gamma",
        "must be in (0, 1)");

  check(value.loss.lambda >= 0.0, "value.lambda", "must be >= 0");
  check(value.loss.eta > 0.0, "value.eta", "must be positive");
  check(value.loss.weight_clip_max >= 1.0, "value.weight_clip_max",
        "must be >= 1");
  check(value.train.epochs >= 1, "value.epochs", "must be >= 1");
  check(value.train.batch_size >= 1, "value.batch_size", "must be >= 1");
  check(value.train.max_steps_per_epoch >= 0, "value.max_steps_per_epoch",
        "must be >= 0");
  check(value.train.learning_rate > 0.0, "value.learning_rate",
        "must be positive");
  check(value.train.weight_decay >= 0.0, "value.weight_decay",
        "must be >= 0");
  check(value.n_layers >= 1, "value.n_layers", "must be >= 1");
  check(value.embed_dim >= 4, "value.embed_dim", "must be >= 4");

  check(advantage.source == "model" || advantage.source == "oracle",
        "advantage.source", "must be 'model' or 'oracle'");
  if (advantage.source == "oracle")
    check(family == "tabular", "advantage.source",
          "'oracle' needs the tabular family (exact dynamic programming)");

  check(policy.epochs >= 1, "policy.epochs", "must be >= 1");
  check(policy.batch_size >= 1, "policy.batch_size", "must be >= 1");
  check(policy.eta > 0.0, "policy.eta", "must be positive");
  check(policy.learning_rate > 0.0, "policy.learning_rate",
        "must be positive");
  check(policy.weight_decay >= 0.0, "policy.weight_decay", "must be >= 0");
  check(policy.n_layers >= 1, "policy.n_layers", "must be >= 1");
  check(policy.embed_dim >= 4, "policy.embed_dim", "must be >= 4");
  check(policy.max_steps_per_epoch >= 0, "policy.max_steps_per_epoch",
        "must be >= 0");
  check(policy.val_samples >= 0, "policy.val_samples", "must be >= 0");
  if (policy.objective == Objective::kDit)
    check(std::abs(policy.eta - value.loss.eta) <= 1e-12, "policy.eta",
          "must equal value.eta so the stored weights match the objective");

  check(eval.n_test_tasks >= 1, "eval.n_test_tasks", "must be >= 1");
  check(eval.n_episodes >= 1, "eval.n_episodes", "must be >= 1");
  check(eval.context_source == "random_behavior" ||
            eval.context_source == "expert",
        "eval.context_source", "must be 'random_behavior' or 'expert'");
  check(eval.offline_mode == "greedy" || eval.offline_mode == "sample",
        "eval.offline_mode", "must be 'greedy' or 'sample'");
  for (const std::string& name : eval.baselines)
    check(name == "emp" || name == "ucb" || name == "lcb" || name == "ts",
          "eval.baselines", "unknown baseline '" + name + "'");

  check(props.prop1_instances >= 1, "props.prop1_instances", "must be >= 1");
  check(props.grid_step > 0.0 && props.grid_step < 0.5, "props.grid_step",
        "must be in (0, 0.5)");
  check(props.prop2_instances >= 1, "props.prop2_instances", "must be >= 1");
  check(props.num_states >= 2, "props.num_states", "must be >= 2");
  check(props.num_actions >= 2, "props.num_actions", "must be >= 2");
  check(props.z_instances >= 1, "props.z_instances", "must be >= 1");
  check(props.eta > 0.0, "props.eta", "must be positive");
}

ExperimentConfig parse_config(
    const std::string& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  json resolved = config_to_json(ExperimentConfig{});

  if (!config_path.empty()) {
    if (!file_exists(config_path))
      throw ConfigError("config file not found: " + config_path);
    json from_file;
    try {
      from_file = json::parse(read_text_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_path + ": " + e.what());
    }
    if (!from_file.is_object())
      throw ConfigError("config file " + config_path +
                        ": top level must be a JSON object");
    resolved = deep_merge(resolved, from_file);
  }

  if (const char* env_seed = std::getenv("ICRL_MASTER_SEED")) {
    try {
      resolved["master_seed"] = json::parse(std::string(env_seed));
    } catch (const json::exception&) {
      throw ConfigError("ICRL_MASTER_SEED: not a number: " +
                        std::string(env_seed));
    }
  }

  for (const auto& [key, text] : overrides) {
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;  // bare strings are legal override values
    }
    set_dotted(resolved, key, value);
  }

  return config_from_json(resolved);
}

std::string config_hash_hex(const ExperimentConfig& config) {
  // The hash identifies the experiment, not where its artifacts live, so the
  // output directory does not participate.
  json j = config_to_json(config);
  j.erase("output_dir");
  return hash_hex(fnv1a_hash(j.dump()));
}

}  // namespace icrl::cli
