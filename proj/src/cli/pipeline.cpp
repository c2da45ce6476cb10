#include "icrl/cli/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "icrl/advantage/value.hpp"
#include "icrl/datagen/behavior.hpp"
#include "icrl/datagen/corpus.hpp"
#include "icrl/deploy/baselines.hpp"
#include "icrl/deploy/eval.hpp"
#include "icrl/envs/bandit.hpp"
#include "icrl/envs/tabular.hpp"
#include "icrl/errors.hpp"
#include "icrl/numkit/checkpoint.hpp"
#include "icrl/pretrain/policy.hpp"
#include "icrl/pretrain/propositions.hpp"
#include "icrl/seqmodel/model.hpp"
#include "icrl/util.hpp"

namespace icrl::cli {

namespace fs = std::filesystem;
using datagen::ContextDataset;
using datagen::PretrainCorpus;
using deploy::EvalRecord;
using envs::FamilyKind;
using envs::TaskFamily;
using envs::TaskSpec;
using nlohmann::json;
using numkit::Rng;

namespace {

std::string file_hash(const std::string& path) {
  return hash_hex(fnv1a_hash(read_text_file(path)));
}

void ensure_layout(const RunPaths& paths) {
  fs::create_directories(paths.root);
  fs::create_directories(paths.manifest_dir());
  fs::create_directories(paths.eval_dir());
  fs::create_directories(paths.report_dir());
}

void write_config_echo(const ExperimentConfig& config, const RunPaths& paths) {
  write_text_file(paths.config_echo(),
                  config_to_json(config).dump(2) + "\n");
}

// Manifest paths are stored relative to the run root so identical configs
// produce identical bytes regardless of where the run lives.
std::string relative_to_root(const RunPaths& paths, const std::string& path) {
  return fs::relative(path, paths.root).string();
}

json manifest_to_json(const StageManifest& manifest) {
  json j;
  j["stage"] = manifest.stage;
  j["config_hash"] = manifest.config_hash;
  j["inputs"] = json::array();
  for (const auto& [path, hash] : manifest.inputs)
    j["inputs"].push_back({{"path", path}, {"hash", hash}});
  j["outputs"] = json::array();
  for (const auto& [path, hash] : manifest.outputs)
    j["outputs"].push_back({{"path", path}, {"hash", hash}});
  j["meta"] = manifest.meta.is_null() ? json::object() : manifest.meta;
  return j;
}

StageManifest manifest_from_json(const json& j) {
  StageManifest manifest;
  manifest.stage = j.at("stage").get<std::string>();
  manifest.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& row : j.at("inputs"))
    manifest.inputs.emplace_back(row.at("path").get<std::string>(),
                                 row.at("hash").get<std::string>());
  for (const auto& row : j.at("outputs"))
    manifest.outputs.emplace_back(row.at("path").get<std::string>(),
                                  row.at("hash").get<std::string>());
  manifest.meta = j.value("meta", json::object());
  return manifest;
}

// Records the stage run: inputs/outputs passed as absolute-or-root-relative
// paths and stored relative with content hashes.
void leave_manifest(const ExperimentConfig& config, const RunPaths& paths,
                    const std::string& stage,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const json& meta = json::object()) {
  StageManifest manifest;
  manifest.stage = stage;
  manifest.config_hash = config_hash_hex(config);
  for (const std::string& path : inputs)
    manifest.inputs.emplace_back(relative_to_root(paths, path),
                                 file_hash(path));
  for (const std::string& path : outputs)
    manifest.outputs.emplace_back(relative_to_root(paths, path),
                                  file_hash(path));
  manifest.meta = meta;
  write_stage_manifest(paths, manifest);
}

// Loads an upstream manifest, refusing missing, foreign-config, or modified
// artifacts.  `what` names the artifact in the error message.
StageManifest require_stage(const ExperimentConfig& config,
                            const RunPaths& paths, const std::string& stage,
                            const std::string& requesting,
                            const std::string& what) {
  const std::string path = paths.manifest(stage);
  if (!file_exists(path))
    throw PipelineError(requesting + ": missing " + what + " — run '" +
                        stage + "' first");
  StageManifest manifest;
  try {
    manifest = manifest_from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path + ": " + e.what());
  }
  if (manifest.config_hash != config_hash_hex(config))
    throw PipelineError(requesting + ": " + what +
                        " was produced under a different config (stage '" +
                        stage + "')");
  for (const auto& [rel, hash] : manifest.outputs) {
    const std::string artifact = paths.root + "/" + rel;
    if (!file_exists(artifact))
      throw PipelineError(requesting + ": artifact '" + rel +
                          "' recorded by stage '" + stage + "' is missing");
    if (file_hash(artifact) != hash)
      throw PipelineError(requesting + ": artifact '" + rel +
                          "' was modified after stage '" + stage + "' ran");
  }
  return manifest;
}

void write_curve_csv(const std::vector<advantage::TrainPoint>& curve,
                     const std::string& path) {
  CsvWriter csv({"epoch", "train_loss", "val_loss"});
  for (const auto& point : curve)
    csv.add_row({std::to_string(point.epoch), format_double(point.train_loss),
                 format_double(point.val_loss)});
  csv.save(path);
}

datagen::BehaviorPolicy make_expert_behavior(const TaskFamily& family,
                                             const TaskSpec& task) {
  datagen::BehaviorPolicy expert;
  switch (family.kind) {
    case FamilyKind::kBandit: {
      expert.kind = datagen::BehaviorPolicy::Kind::kBanditMixture;
      const int best = envs::bandit_best_arm(family.bandit, task.theta);
      numkit::Vector onehot = numkit::Vector::Zero(family.bandit.num_arms);
      onehot[best] = 1.0;
      expert.point_mass_arm = best;
      expert.mix_weight = 1.0;
      expert.dirichlet_probs = onehot;
      expert.arm_probs = onehot;
      break;
    }
    case FamilyKind::kDarkroom:
      expert.kind = datagen::BehaviorPolicy::Kind::kDarkroomPMix;
      expert.p_opt = 1.0;
      break;
    case FamilyKind::kTabular: {
      expert.kind = datagen::BehaviorPolicy::Kind::kTabularExplicit;
      const numkit::Matrix q = envs::optimal_q(family.mdp);
      numkit::Matrix greedy =
          numkit::Matrix::Zero(family.mdp.num_states, family.mdp.num_actions);
      for (int s = 0; s < family.mdp.num_states; ++s) {
        int best = 0;
        for (int a = 1; a < family.mdp.num_actions; ++a)
          if (q(s, a) > q(s, best)) best = a;
        greedy(s, best) = 1.0;
      }
      expert.action_probs = greedy;
      break;
    }
  }
  return expert;
}

advantage::ValueLossConfig loss_config_of(const ExperimentConfig& config) {
  advantage::ValueLossConfig loss = config.value.loss;
  loss.gamma = config.corpus.gamma;
  return loss;
}

std::vector<int> held_out_indices(const PretrainCorpus& corpus, int limit) {
  std::vector<int> indices;
  for (const std::string split : {"test", "val"}) {
    for (std::size_t i = 0; i < corpus.datasets.size(); ++i)
      if (corpus.datasets[i].split == split)
        indices.push_back(static_cast<int>(i));
    if (!indices.empty()) break;
  }
  if (static_cast<int>(indices.size()) > limit)
    indices.resize(static_cast<std::size_t>(limit));
  return indices;
}

}  // namespace

void write_stage_manifest(const RunPaths& paths,
                          const StageManifest& manifest) {
  write_text_file(paths.manifest(manifest.stage),
                  manifest_to_json(manifest).dump(2) + "\n");
}

StageManifest read_stage_manifest(const RunPaths& paths,
                                  const std::string& stage,
                                  const std::string& requesting_stage) {
  const std::string path = paths.manifest(stage);
  if (!file_exists(path))
    throw PipelineError(requesting_stage + ": stage '" + stage +
                        "' has not run (no manifest)");
  try {
    return manifest_from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path + ": " + e.what());
  }
}

TaskFamily family_from_config(const ExperimentConfig& config) {
  TaskFamily family;
  family.horizon = config.corpus.horizon;
  if (config.family == "bandit") {
    family.kind = FamilyKind::kBandit;
    family.bandit =
        envs::make_bandit_family(config.master_seed, config.bandit.num_arms,
                                 config.bandit.feature_dim,
                                 config.bandit.noise_var);
  } else if (config.family == "darkroom") {
    family.kind = FamilyKind::kDarkroom;
    family.darkroom_side = config.darkroom.side;
  } else {
    family.kind = FamilyKind::kTabular;
    family.mdp = envs::chain_mdp(config.tabular.chain_states,
                                 config.corpus.gamma);
    family.mdp_name = "chain" + std::to_string(config.tabular.chain_states);
  }
  return family;
}

void run_gen_data(const ExperimentConfig& config) {
  const RunPaths paths{config.output_dir};
  ensure_layout(paths);
  write_config_echo(config, paths);

  const TaskFamily family = family_from_config(config);
  PretrainCorpus corpus;
  json meta = json::object();
  if (config.family == "bandit") {
    datagen::BanditCorpusConfig cc;
    cc.num_train_tasks = config.corpus.num_train_tasks;
    cc.num_test_tasks = config.corpus.num_test_tasks;
    cc.val_fraction = config.corpus.val_fraction;
    cc.horizon = config.corpus.horizon;
    cc.gamma = config.corpus.gamma;
    corpus = datagen::generate_bandit_corpus(family, cc, config.master_seed);
  } else if (config.family == "darkroom") {
    datagen::DarkroomCorpusConfig cc;
    cc.train_goals = config.darkroom.train_goals;
    cc.test_goals = config.darkroom.test_goals;
    cc.contexts_per_goal = config.darkroom.contexts_per_goal;
    cc.test_contexts_per_goal = config.darkroom.test_contexts_per_goal;
    cc.val_fraction = config.corpus.val_fraction;
    cc.horizon = config.corpus.horizon;
    cc.gamma = config.corpus.gamma;
    cc.p_opt = config.darkroom.p_opt;
    if (config.darkroom.calibrate) {
      cc.p_opt = datagen::calibrate_darkroom_p(
          family, cc.train_goals, cc.horizon, config.master_seed, 1000,
          config.darkroom.target_ratio);
      meta["calibrated_p_opt"] = cc.p_opt;
    }
    corpus = datagen::generate_darkroom_corpus(family, cc, config.master_seed);
  } else {
    datagen::TabularCorpusConfig cc;
    cc.num_datasets = config.tabular.num_datasets;
    cc.val_fraction = config.corpus.val_fraction;
    cc.horizon = config.corpus.horizon;
    cc.gamma = config.corpus.gamma;
    corpus = datagen::generate_tabular_corpus(family, cc, config.master_seed);
  }
  datagen::write_corpus(corpus, paths.corpus());
  leave_manifest(config, paths, "gen-data", {}, {paths.corpus()}, meta);
}

void run_train_value(const ExperimentConfig& config) {
  const RunPaths paths{config.output_dir};
  ensure_layout(paths);
  write_config_echo(config, paths);
  require_stage(config, paths, "gen-data", "train-value", "corpus");

  const PretrainCorpus corpus = datagen::read_corpus(paths.corpus());
  const advantage::ValueEstimators estimators =
      advantage::train_value_estimators(corpus, loss_config_of(config),
                                        config.value.train,
                                        config.value.n_layers,
                                        config.value.embed_dim);
  numkit::save_checkpoint(
      paths.value_q(),
      seqmodel::make_model_checkpoint(estimators.q_config, estimators.q_params,
                                      {{"role", "value_q"}}));
  numkit::save_checkpoint(
      paths.value_v(),
      seqmodel::make_model_checkpoint(estimators.v_config, estimators.v_params,
                                      {{"role", "value_v"}}));
  write_curve_csv(estimators.curve, paths.value_curve());
  leave_manifest(config, paths, "train-value", {paths.corpus()},
                 {paths.value_q(), paths.value_v(), paths.value_curve()});
}

void run_estimate_adv(const ExperimentConfig& config) {
  const RunPaths paths{config.output_dir};
  ensure_layout(paths);
  write_config_echo(config, paths);
  require_stage(config, paths, "gen-data", "estimate-adv", "corpus");

  const PretrainCorpus corpus = datagen::read_corpus(paths.corpus());
  advantage::AdvantageTable table;
  std::vector<std::string> inputs = {paths.corpus()};
  if (config.advantage.source == "oracle") {
    table = advantage::oracle_advantages(corpus, loss_config_of(config));
  } else {
    require_stage(config, paths, "train-value", "estimate-adv",
                  "value model checkpoints");
    const seqmodel::LoadedModel q = seqmodel::load_model_checkpoint(
        paths.value_q());
    const seqmodel::LoadedModel v = seqmodel::load_model_checkpoint(
        paths.value_v());
    advantage::ValueEstimators estimators;
    estimators.q_config = q.config;
    estimators.q_params = q.params;
    estimators.v_config = v.config;
    estimators.v_params = v.params;
    table = advantage::estimate_advantages(corpus, estimators,
                                           loss_config_of(config));
    inputs.push_back(paths.value_q());
    inputs.push_back(paths.value_v());
  }
  advantage::write_advantage_table(table, paths.advantage_table());
  leave_manifest(config, paths, "estimate-adv", inputs,
                 {paths.advantage_table()});
}

void run_train_policy(const ExperimentConfig& config) {
  const RunPaths paths{config.output_dir};
  ensure_layout(paths);
  write_config_echo(config, paths);
  require_stage(config, paths, "gen-data", "train-policy", "corpus");

  const PretrainCorpus corpus = datagen::read_corpus(paths.corpus());
  std::vector<std::string> inputs = {paths.corpus()};
  pretrain::PolicyTrainResult result;
  if (config.policy.objective == pretrain::Objective::kDit) {
    require_stage(config, paths, "estimate-adv", "train-policy",
                  "advantage table");
    const advantage::AdvantageTable table =
        advantage::read_advantage_table(paths.advantage_table());
    inputs.push_back(paths.advantage_table());
    result = pretrain::train_policy(corpus, config.policy, &table);
  } else {
    result = pretrain::train_policy(corpus, config.policy);
  }
  numkit::save_checkpoint(
      paths.policy_ckpt(),
      seqmodel::make_model_checkpoint(
          result.config, result.params,
          {{"objective", objective_name(result.objective)}}));
  write_curve_csv(result.curve, paths.policy_curve());
  leave_manifest(config, paths, "train-policy", inputs,
                 {paths.policy_ckpt(), paths.policy_curve()});
}

void run_eval(const ExperimentConfig& config) {
  const RunPaths paths{config.output_dir};
  ensure_layout(paths);
  write_config_echo(config, paths);
  require_stage(config, paths, "gen-data", "eval", "corpus");
  require_stage(config, paths, "train-policy", "eval", "policy checkpoint");

  const PretrainCorpus corpus = datagen::read_corpus(paths.corpus());
  const TaskFamily& family = corpus.family;
  const seqmodel::LoadedModel loaded =
      seqmodel::load_model_checkpoint(paths.policy_ckpt());
  deploy::PolicyHandle policy;
  policy.config = loaded.config;
  policy.params = loaded.params;
  policy.name = loaded.metadata.value("objective", std::string("policy"));

  const std::vector<int> held_out =
      held_out_indices(corpus, config.eval.n_test_tasks);
  if (held_out.empty())
    throw PipelineError("eval: corpus has no held-out datasets");
  const deploy::ActionMode mode = config.eval.offline_mode == "greedy"
                                      ? deploy::ActionMode::kGreedy
                                      : deploy::ActionMode::kSample;

  std::map<std::string, std::vector<EvalRecord>> offline;
  std::map<std::string, std::vector<EvalRecord>> online;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    const ContextDataset& dataset =
        corpus.datasets[static_cast<std::size_t>(held_out[i])];
    const TaskSpec& task = dataset.task;
    const int task_id = static_cast<int>(i);

    ContextDataset context = dataset;
    if (config.eval.context_source == "expert") {
      ContextDataset expert_ctx;
      expert_ctx.task = task;
      expert_ctx.behavior = make_expert_behavior(family, task);
      Rng rng = Rng::derive(config.master_seed, "eval_expert_ctx",
                            static_cast<std::uint64_t>(i));
      datagen::roll_context(expert_ctx, family, dataset.horizon(),
                            corpus.gamma, rng);
      context = std::move(expert_ctx);
    }

    const std::uint64_t policy_seed =
        Rng::derive(config.master_seed, "eval_policy",
                    static_cast<std::uint64_t>(i))
            .next_u64();
    offline[policy.name].push_back(deploy::eval_offline(
        policy, family, task, context, policy_seed, mode, task_id));
    online[policy.name].push_back(deploy::concat_records(deploy::eval_online(
        policy, family, task, config.eval.n_episodes, policy_seed, task_id)));

    if (family.kind == FamilyKind::kBandit) {
      for (const std::string& name : config.eval.baselines) {
        const deploy::BaselineAlgo algo = deploy::baseline_from_name(name);
        const std::uint64_t baseline_seed =
            Rng::derive(config.master_seed, "eval_" + name,
                        static_cast<std::uint64_t>(i))
                .next_u64();
        offline[name].push_back(deploy::run_baseline_offline(
            algo, family, task, context, baseline_seed, 1.0, task_id));
        online[name].push_back(deploy::concat_records(
            deploy::run_baseline_online(algo, family, task,
                                        config.eval.n_episodes, baseline_seed,
                                        1.0, task_id)));
      }
    }
  }

  std::vector<std::string> outputs;
  for (const auto& [algo, records] : offline) {
    const std::string path = paths.eval_dir() + "/offline_" + algo + ".jsonl";
    deploy::write_records(records, path);
    outputs.push_back(path);
  }
  for (const auto& [algo, records] : online) {
    const std::string path = paths.eval_dir() + "/online_" + algo + ".jsonl";
    deploy::write_records(records, path);
    outputs.push_back(path);
  }
  leave_manifest(config, paths, "eval",
                 {paths.corpus(), paths.policy_ckpt()}, outputs);
}

bool run_verify_props(const ExperimentConfig& config) {
  const RunPaths paths{config.output_dir};
  ensure_layout(paths);
  write_config_echo(config, paths);

  const pretrain::Prop1Report prop1 = pretrain::proposition1_suite(
      config.props.prop1_instances, config.props.grid_step, config.props.eta,
      config.master_seed);
  const pretrain::PropositionReport prop2 = pretrain::proposition2_suite(
      config.props.prop2_instances, config.props.num_states,
      config.props.num_actions, config.corpus.gamma, config.props.eta,
      config.master_seed);
  const pretrain::ZSuiteReport z = pretrain::z_identity_suite(
      config.props.z_instances, config.props.num_states,
      config.props.num_actions, config.corpus.gamma, config.props.eta,
      config.master_seed);

  const bool all_pass = prop1.all_pass() && prop2.all_pass() && z.all_pass();
  json bundle;
  bundle["prop1"] = pretrain::prop1_report_to_json(prop1);
  bundle["prop2"] = pretrain::proposition_report_to_json(prop2);
  bundle["z_identity"] = pretrain::z_suite_report_to_json(z);
  bundle["all_pass"] = all_pass;
  write_text_file(paths.propositions(), bundle.dump(2) + "\n");
  leave_manifest(config, paths, "verify-props", {}, {paths.propositions()});
  return all_pass;
}

namespace {

struct EvalGroup {
  std::string algo;
  deploy::MetricsSummary summary;
  int n_records = 0;
};

std::vector<EvalGroup> load_groups(const RunPaths& paths,
                                   const std::string& prefix) {
  std::vector<std::string> files;
  if (fs::exists(paths.eval_dir()))
    for (const auto& entry : fs::directory_iterator(paths.eval_dir())) {
      const std::string name = entry.path().filename().string();
      if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size() + 6 &&
          name.substr(name.size() - 6) == ".jsonl")
        files.push_back(name);
    }
  std::sort(files.begin(), files.end());
  std::vector<EvalGroup> groups;
  for (const std::string& name : files) {
    const auto records = deploy::read_records(paths.eval_dir() + "/" + name);
    if (records.empty()) continue;
    EvalGroup group;
    group.algo = name.substr(prefix.size(),
                             name.size() - prefix.size() - 6);
    group.summary = deploy::compute_metrics(records);
    group.n_records = static_cast<int>(records.size());
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace

void run_report(const ExperimentConfig& config, bool force) {
  const RunPaths paths{config.output_dir};
  ensure_layout(paths);
  write_config_echo(config, paths);

  // Refuse to combine artifacts from different configurations.
  std::set<std::string> hashes;
  for (const std::string stage : {"gen-data", "train-value", "estimate-adv",
                                  "train-policy", "eval", "verify-props"})
    if (file_exists(paths.manifest(stage)))
      hashes.insert(read_stage_manifest(paths, stage, "report").config_hash);
  if (hashes.size() > 1 && !force)
    throw PipelineError(
        "report: stage manifests carry mixed config hashes; rerun the stale "
        "stages or pass --force to combine them anyway");

  const std::vector<EvalGroup> offline = load_groups(paths, "offline_");
  const std::vector<EvalGroup> online = load_groups(paths, "online_");

  std::vector<std::pair<std::string, deploy::MetricSeries>> suboptimality;
  for (const EvalGroup& group : offline)
    if (!group.summary.suboptimality.empty())
      suboptimality.emplace_back(group.algo, group.summary.suboptimality);
  deploy::write_series_csv(paths.report_dir() + "/offline_suboptimality.csv",
                           suboptimality);

  std::vector<std::pair<std::string, deploy::MetricSeries>> regret;
  for (const EvalGroup& group : online)
    if (!group.summary.regret.empty())
      regret.emplace_back(group.algo, group.summary.regret);
  deploy::write_series_csv(paths.report_dir() + "/online_regret.csv", regret);

  std::vector<std::pair<std::string, deploy::MetricSeries>> returns;
  for (const EvalGroup& group : online)
    if (!group.summary.episode_return.empty())
      returns.emplace_back(group.algo, group.summary.episode_return);
  deploy::write_series_csv(paths.report_dir() + "/episode_returns.csv",
                           returns);

  std::string text;
  text += "Experiment report\n=================\n";
  text += "config hash: " + config_hash_hex(config) + "\n\n";

  text += "Offline evaluation\n------------------\n";
  if (offline.empty()) {
    text += "no data\n";
  } else {
    for (const EvalGroup& group : offline) {
      text += group.algo + ": ";
      if (!group.summary.suboptimality.empty())
        text += "mean suboptimality " +
                format_double_short(group.summary.suboptimality.mean[0]) +
                " | ";
      text += "mean return " +
              format_double_short(group.summary.episode_return.mean.empty()
                                      ? 0.0
                                      : group.summary.episode_return.mean[0]) +
              " (n=" + std::to_string(group.n_records) + ")\n";
    }
  }
  text += "\nOnline evaluation\n-----------------\n";
  if (online.empty()) {
    text += "no data\n";
  } else {
    for (const EvalGroup& group : online) {
      text += group.algo + ": ";
      if (!group.summary.regret.empty())
        text += "final cumulative regret " +
                format_double_short(group.summary.regret.mean.back()) +
                " over " + std::to_string(group.summary.regret.mean.size()) +
                " steps | ";
      text += "final-episode mean return " +
              format_double_short(
                  group.summary.episode_return.mean.empty()
                      ? 0.0
                      : group.summary.episode_return.mean.back()) +
              " (n=" + std::to_string(group.n_records) + ")\n";
    }
  }
  text += "\nProposition checks\n------------------\n";
  if (file_exists(paths.propositions())) {
    try {
      const json bundle = json::parse(read_text_file(paths.propositions()));
      const auto count = [](const json& report) {
        int pass = 0;
        for (const auto& row : report.at("instances"))
          if (row.at("pass").get<bool>()) ++pass;
        return std::to_string(pass) + "/" +
               std::to_string(report.at("instances").size());
      };
      text += "closed-form minimizer " + count(bundle.at("prop1")) +
              " pass; improvement bound " + count(bundle.at("prop2")) +
              " pass; normalizer identity " + count(bundle.at("z_identity")) +
              " pass\n";
      text += std::string("all_pass: ") +
              (bundle.at("all_pass").get<bool>() ? "true" : "false") + "\n";
    } catch (const json::exception& e) {
      throw FormatError(std::string("report: propositions.json: ") + e.what());
    }
  } else {
    text += "no data\n";
  }
  write_text_file(paths.report_dir() + "/summary.txt", text);

  std::vector<std::string> outputs = {
      paths.report_dir() + "/offline_suboptimality.csv",
      paths.report_dir() + "/online_regret.csv",
      paths.report_dir() + "/episode_returns.csv",
      paths.report_dir() + "/summary.txt"};
  leave_manifest(config, paths, "report", {}, outputs);
}

int run_stage(const std::string& subcommand, const ExperimentConfig& config,
              bool force) {
  if (subcommand == "gen-data") {
    run_gen_data(config);
  } else if (subcommand == "train-value") {
    run_train_value(config);
  } else if (subcommand == "estimate-adv") {
    run_estimate_adv(config);
  } else if (subcommand == "train-policy") {
    run_train_policy(config);
  } else if (subcommand == "eval") {
    run_eval(config);
  } else if (subcommand == "verify-props") {
    if (!run_verify_props(config)) return 4;
  } else if (subcommand == "report") {
    run_report(config, force);
  } else {
    throw ConfigError("unknown subcommand '" + subcommand + "'");
  }
  return 0;
}

}  // namespace icrl::cli
