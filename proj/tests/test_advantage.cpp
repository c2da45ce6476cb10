#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "icrl/advantage/sequences.hpp"
#include "icrl/advantage/value.hpp"
#include "icrl/datagen/corpus.hpp"
#include "icrl/envs/bandit.hpp"
#include "icrl/envs/tabular.hpp"
#include "icrl/errors.hpp"
#include "icrl/util.hpp"

using namespace icrl;
using namespace icrl::advantage;
using datagen::ContextDataset;
using datagen::PretrainCorpus;
using datagen::RewardNormalizer;
using datagen::TabularCorpusConfig;
using envs::FamilyKind;
using envs::TaskFamily;
using numkit::Matrix;
using numkit::ParamStore;
using numkit::Rng;
using numkit::Vector;
using seqmodel::ForwardCache;
using seqmodel::ModelConfig;
using seqmodel::TokenFormat;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TaskFamily chain_family(int states = 3, double gamma = 0.8, int horizon = 10) {
  TaskFamily family;
  family.kind = FamilyKind::kTabular;
  family.horizon = horizon;
  family.mdp = envs::chain_mdp(states, gamma);
  family.mdp_name = "chain";
  return family;
}

TaskFamily bandit_family(int arms = 5, int horizon = 20) {
  TaskFamily family;
  family.kind = FamilyKind::kBandit;
  family.horizon = horizon;
  family.bandit = envs::make_bandit_family(11, arms, 3, 0.3);
  return family;
}

TaskFamily loop_family(int horizon) {
  // Single absorbing state, two actions, zero reward everywhere.
  TaskFamily family;
  family.kind = FamilyKind::kTabular;
  family.horizon = horizon;
  envs::TabularMDP mdp;
  mdp.num_states = 1;
  mdp.num_actions = 2;
  mdp.gamma = 0.8;
  mdp.transition = {Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  mdp.reward = Matrix::Zero(1, 2);
  mdp.initial_dist = Vector::Ones(1);
  mdp.validate();
  family.mdp = std::move(mdp);
  family.mdp_name = "loop";
  return family;
}

PretrainCorpus small_chain_corpus(int n, int horizon, std::uint64_t seed,
                                  double val_fraction = 0.0) {
  TabularCorpusConfig config;
  config.num_datasets = n;
  config.val_fraction = val_fraction;
  config.horizon = horizon;
  return generate_tabular_corpus(chain_family(3, 0.8, horizon), config, seed);
}

ContextDataset hand_dataset() {
  ContextDataset d;
  d.task.kind = FamilyKind::kTabular;
  d.states = {0, 1, 2};
  d.actions = {1, 1, 0};
  d.rewards = {0.0, 1.0, 0.0};
  d.next_states = {1, 2, 1};
  d.returns = datagen::returns_to_go(d.rewards, 0.8);
  d.query_state = 0;
  return d;
}

void zero_params(ParamStore& params) {
  for (auto& [name, tensor] : params.tensors) tensor.setZero();
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, tensor] : a.tensors) {
    if (!b.contains(name)) return false;
    const Matrix& other = b.at(name);
    if (tensor.rows() != other.rows() || tensor.cols() != other.cols())
      return false;
    if ((tensor - other).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("family_vocab: one-hot widths per family") {
  const auto bandit = family_vocab(bandit_family(5));
  CHECK(bandit.state_dim == 1);
  CHECK(bandit.action_count == 5);

  TaskFamily dark;
  dark.kind = FamilyKind::kDarkroom;
  dark.darkroom_side = 5;
  dark.horizon = 20;
  const auto room = family_vocab(dark);
  CHECK(room.state_dim == 25);
  CHECK(room.action_count == 5);

  const auto chain = family_vocab(chain_family(3));
  CHECK(chain.state_dim == 3);
  CHECK(chain.action_count == 2);
}

TEST_CASE("value_model_config: scalar head over family vocab") {
  const TaskFamily family = chain_family(3, 0.8, 10);
  const ModelConfig q = value_model_config(family, 10, true, 2, 32);
  CHECK(q.token_format == TokenFormat::kStateActionReturn);
  CHECK(q.head_kind == seqmodel::HeadKind::kScalarValue);
  CHECK(q.max_context == 10);
  CHECK(q.vocab.state_dim == 3);
  CHECK(q.vocab.action_count == 2);
  CHECK(q.output_dim() == 1);
  const ModelConfig v = value_model_config(family, 10, false, 2, 32);
  CHECK(v.token_format == TokenFormat::kStateReturn);
}

TEST_CASE("value_sequence: return channel is shifted back one step") {
  const ContextDataset d = hand_dataset();
  RewardNormalizer norm;
  norm.mean = 0.25;
  norm.std = 2.0;

  const auto qa = value_sequence(d, norm, TokenFormat::kStateActionReturn);
  REQUIRE(qa.tokens.size() == 3);
  CHECK(qa.tokens[0].state == 0);
  CHECK(qa.tokens[1].state == 1);
  CHECK(qa.tokens[2].state == 2);
  CHECK(qa.tokens[0].action == 1);
  CHECK(qa.tokens[1].action == 1);
  CHECK(qa.tokens[2].action == 0);
  CHECK(qa.tokens[0].ret == 0.0);
  CHECK(qa.tokens[1].ret == doctest::Approx((0.8 - 0.25) / 2.0).epsilon(1e-15));
  CHECK(qa.tokens[2].ret == doctest::Approx((1.0 - 0.25) / 2.0).epsilon(1e-15));

  const auto sv = value_sequence(d, norm, TokenFormat::kStateReturn);
  for (const auto& tok : sv.tokens) CHECK(tok.action == -1);
  CHECK(sv.tokens[1].ret == qa.tokens[1].ret);

  CHECK_THROWS_AS(value_sequence(d, norm, TokenFormat::kTransition),
                  ContractError);
}

TEST_CASE("value_sequence_with_action: substitutes only the queried step") {
  const ContextDataset d = hand_dataset();
  RewardNormalizer norm;
  const auto base = value_sequence(d, norm, TokenFormat::kStateActionReturn);
  const auto sub = value_sequence_with_action(d, norm, 1, 0);
  REQUIRE(sub.tokens.size() == base.tokens.size());
  CHECK(sub.tokens[1].action == 0);
  CHECK(sub.tokens[0].action == base.tokens[0].action);
  CHECK(sub.tokens[2].action == base.tokens[2].action);
  for (std::size_t h = 0; h < base.tokens.size(); ++h)
    CHECK(sub.tokens[h].ret == base.tokens[h].ret);
  CHECK_THROWS_AS(value_sequence_with_action(d, norm, 3, 0), ContractError);
  CHECK_THROWS_AS(value_sequence_with_action(d, norm, -1, 0), ContractError);
  CHECK_THROWS_AS(value_sequence_with_action(d, norm, 0, -2), ContractError);
}

TEST_CASE("value_targets and bellman_rewards: normalized slices") {
  const ContextDataset d = hand_dataset();
  RewardNormalizer norm;
  norm.mean = 0.5;
  norm.std = 1.5;
  const Vector targets = value_targets(d, norm);
  REQUIRE(targets.size() == 3);
  for (int h = 0; h < 3; ++h)
    CHECK(targets[h] ==
          doctest::Approx(norm.normalize_return(d.returns[(std::size_t)h]))
              .epsilon(1e-15));
  const Vector rewards = bellman_rewards(d, norm, 0.8);
  REQUIRE(rewards.size() == 2);
  for (int h = 0; h < 2; ++h)
    CHECK(rewards[h] ==
          doctest::Approx(norm.normalize_reward(d.rewards[(std::size_t)h], 0.8))
              .epsilon(1e-15));

  ContextDataset single = hand_dataset();
  single.states = {0};
  single.actions = {1};
  single.rewards = {1.0};
  single.next_states = {1};
  single.returns = {1.0};
  CHECK(bellman_rewards(single, norm, 0.8).size() == 0);
}

TEST_CASE("normalized returns satisfy the one-step recursion") {
  const PretrainCorpus corpus = small_chain_corpus(6, 8, 21);
  for (const auto& d : corpus.datasets) {
    const Vector g = value_targets(d, corpus.normalizer);
    const Vector r = bellman_rewards(d, corpus.normalizer, corpus.gamma);
    for (int h = 0; h + 1 < d.horizon(); ++h)
      CHECK(std::abs(g[h] - (r[h] + corpus.gamma * g[h + 1])) < 1e-12);
  }
}

TEST_CASE("value_loss: decomposition matches a direct recomputation") {
  const PretrainCorpus corpus = small_chain_corpus(8, 6, 13);
  const ModelConfig qc = value_model_config(corpus.family, 6, true, 1, 16);
  const ModelConfig vc = value_model_config(corpus.family, 6, false, 1, 16);
  Rng qr(101), vr(202);
  const ParamStore qp = seqmodel::init_params(qc, qr);
  const ParamStore vp = seqmodel::init_params(vc, vr);
  const auto batch = corpus.split("train");

  for (const BellmanForm form : {BellmanForm::kStandard,
                                 BellmanForm::kAsWritten}) {
    ValueLossConfig config;
    config.lambda = 0.3;
    config.gamma = corpus.gamma;
    config.bellman_form = form;
    const ValueLossParts parts =
        value_loss(batch, corpus.normalizer, qc, qp, vc, vp, config);

    double reg = 0.0, qb = 0.0, vb = 0.0;
    ForwardCache qcache(qc), vcache(vc);
    for (const auto* d : batch) {
      const int H = d->horizon();
      const Vector g = value_targets(*d, corpus.normalizer);
      const Vector r = bellman_rewards(*d, corpus.normalizer, corpus.gamma);
      const Matrix& qo = qcache.run(
          value_sequence(*d, corpus.normalizer, qc.token_format), qp);
      const Matrix& vo = vcache.run(
          value_sequence(*d, corpus.normalizer, vc.token_format), vp);
      for (int h = 0; h < H; ++h) {
        reg += (qo(h, 0) - g[h]) * (qo(h, 0) - g[h]) / H;
        reg += (vo(h, 0) - g[h]) * (vo(h, 0) - g[h]) / H;
      }
      for (int h = 0; h + 1 < H; ++h) {
        const double rq =
            form == BellmanForm::kStandard
                ? qo(h, 0) - (r[h] + corpus.gamma * qo(h + 1, 0))
                : r[h] + corpus.gamma * qo(h, 0) - qo(h + 1, 0);
        const double rv =
            form == BellmanForm::kStandard
                ? vo(h, 0) - (r[h] + corpus.gamma * vo(h + 1, 0))
                : r[h] + corpus.gamma * vo(h, 0) - vo(h + 1, 0);
        qb += rq * rq / H;
        vb += rv * rv / H;
      }
    }
    const double n = static_cast<double>(batch.size());
    CHECK(std::abs(parts.reg - reg / n) < 1e-12);
    CHECK(std::abs(parts.q_bellman - qb / n) < 1e-12);
    CHECK(std::abs(parts.v_bellman - vb / n) < 1e-12);
    CHECK(std::abs(parts.total -
                   (parts.reg + 0.3 * (parts.q_bellman + parts.v_bellman))) <
          1e-15);
  }

  ValueLossConfig no_penalty;
  no_penalty.lambda = 0.0;
  no_penalty.gamma = corpus.gamma;
  const ValueLossParts parts =
      value_loss(batch, corpus.normalizer, qc, qp, vc, vp, no_penalty);
  CHECK(parts.total == parts.reg);
}

TEST_CASE("value loss config: rejects out-of-range settings") {
  ValueLossConfig config;
  config.eta = 0.0;
  CHECK_THROWS_AS(config.validate(), ContractError);
  config = ValueLossConfig{};
  config.weight_clip_max = 0.5;
  CHECK_THROWS_AS(config.validate(), ContractError);
  config = ValueLossConfig{};
  config.lambda = -1.0;
  CHECK_THROWS_AS(config.validate(), ContractError);
  config = ValueLossConfig{};
  config.gamma = 1.0;
  CHECK_THROWS_AS(config.validate(), ContractError);
}

TEST_CASE("estimate_advantages: zero models give zero advantages, unit weights") {
  const PretrainCorpus corpus = small_chain_corpus(6, 5, 17);
  ValueEstimators est;
  est.q_config = value_model_config(corpus.family, 5, true, 1, 16);
  est.v_config = value_model_config(corpus.family, 5, false, 1, 16);
  Rng qr(1), vr(2);
  est.q_params = seqmodel::init_params(est.q_config, qr);
  est.v_params = seqmodel::init_params(est.v_config, vr);
  zero_params(est.q_params);
  zero_params(est.v_params);

  const AdvantageTable table =
      estimate_advantages(corpus, est, ValueLossConfig{});
  REQUIRE(table.rows.size() == corpus.datasets.size());
  for (const auto& row : table.rows) {
    REQUIRE(static_cast<int>(row.size()) == 5);
    for (const auto& entry : row) {
      CHECK(entry.q_hat == 0.0);
      CHECK(entry.v_hat == 0.0);
      CHECK(entry.a_hat == 0.0);
      CHECK(entry.weight == 1.0);
    }
  }
}

TEST_CASE("estimate_advantages: rejects models built for another family") {
  const PretrainCorpus corpus = small_chain_corpus(4, 5, 19);
  ValueEstimators est;
  est.q_config = value_model_config(bandit_family(5, 5), 5, true, 1, 16);
  est.v_config = value_model_config(bandit_family(5, 5), 5, false, 1, 16);
  Rng qr(1), vr(2);
  est.q_params = seqmodel::init_params(est.q_config, qr);
  est.v_params = seqmodel::init_params(est.v_config, vr);
  CHECK_THROWS_AS(estimate_advantages(corpus, est, ValueLossConfig{}),
                  ContractError);
}

TEST_CASE("oracle_advantages: zero-reward task has zero advantage everywhere") {
  TabularCorpusConfig config;
  config.num_datasets = 3;
  config.val_fraction = 0.0;
  config.horizon = 4;
  const PretrainCorpus corpus =
      generate_tabular_corpus(loop_family(4), config, 7);
  const AdvantageTable table = oracle_advantages(corpus, ValueLossConfig{});
  for (const auto& row : table.rows)
    for (const auto& entry : row) {
      CHECK(entry.a_hat == 0.0);
      CHECK(entry.weight == 1.0);
    }
}

TEST_CASE("oracle_advantages: matches exact DP on the chain") {
  const PretrainCorpus corpus = small_chain_corpus(5, 6, 23);
  const AdvantageTable table = oracle_advantages(corpus, ValueLossConfig{});
  REQUIRE(table.rows.size() == corpus.datasets.size());
  for (std::size_t i = 0; i < corpus.datasets.size(); ++i) {
    const ContextDataset& d = corpus.datasets[i];
    const envs::DpSolution sol =
        envs::solve_discounted(corpus.family.mdp, d.behavior.action_probs);
    for (int h = 0; h < d.horizon(); ++h) {
      const int s = d.states[(std::size_t)h];
      const int a = d.actions[(std::size_t)h];
      const AdvantageEntry& entry = table.rows[i][(std::size_t)h];
      CHECK(std::abs(entry.a_hat * corpus.normalizer.std -
                     sol.advantage(s, a)) < 1e-12);
      CHECK(std::abs(entry.q_hat * corpus.normalizer.std +
                     corpus.normalizer.mean - sol.q(s, a)) < 1e-12);
      CHECK(std::abs(entry.v_hat * corpus.normalizer.std +
                     corpus.normalizer.mean - sol.v(s)) < 1e-12);
    }
  }
}

TEST_CASE("oracle_advantages: refuses non-tabular corpora") {
  datagen::BanditCorpusConfig config;
  config.num_train_tasks = 3;
  config.num_test_tasks = 1;
  config.val_fraction = 0.0;
  config.horizon = 5;
  const PretrainCorpus corpus =
      generate_bandit_corpus(bandit_family(5, 5), config, 3);
  CHECK_THROWS_AS(oracle_advantages(corpus, ValueLossConfig{}), ContractError);
}

TEST_CASE("weights_from_advantages: temperature, clipping, and the eta limit") {
  AdvantageTable table;
  table.rows = {{AdvantageEntry{0.0, 0.0, 0.0, 1.0},
                 AdvantageEntry{1.0, 0.0, 1.0, 1.0},
                 AdvantageEntry{10.0, 0.0, 10.0, 1.0},
                 AdvantageEntry{-3.0, 0.0, -3.0, 1.0}}};

  ValueLossConfig config;
  config.eta = 1.0;
  config.weight_clip_max = 20.0;
  weights_from_advantages(table, config);
  CHECK(table.rows[0][0].weight == 1.0);
  CHECK(table.rows[0][1].weight == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  CHECK(table.rows[0][2].weight == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(table.rows[0][3].weight ==
        doctest::Approx(std::exp(-3.0)).epsilon(1e-15));

  config.weight_clip_max = std::numeric_limits<double>::infinity();
  weights_from_advantages(table, config);
  CHECK(table.rows[0][2].weight ==
        doctest::Approx(std::exp(10.0)).epsilon(1e-12));

  double previous = std::numeric_limits<double>::infinity();
  for (const double eta : {1.0, 10.0, 1e6}) {
    config.eta = eta;
    config.weight_clip_max = 20.0;
    weights_from_advantages(table, config);
    const double w = table.rows[0][1].weight;
    CHECK(w <= previous);
    CHECK(w >= 1.0);
    previous = w;
  }
  CHECK(std::abs(previous - 1.0) < 1e-5);
}

TEST_CASE("q_values_at_step: equals manual action substitution") {
  const PretrainCorpus corpus = small_chain_corpus(3, 6, 29);
  const ModelConfig qc = value_model_config(corpus.family, 6, true, 1, 16);
  Rng rng(5);
  const ParamStore qp = seqmodel::init_params(qc, rng);
  const ContextDataset& d = corpus.datasets[1];
  ForwardCache cache(qc);
  for (int h = 0; h < d.horizon(); ++h) {
    const Vector q = q_values_at_step(d, corpus.normalizer, qc, qp, h);
    REQUIRE(q.size() == 2);
    for (int a = 0; a < 2; ++a) {
      const Matrix& out = cache.run(
          value_sequence_with_action(d, corpus.normalizer, h, a), qp);
      CHECK(q[a] == out(h, 0));
    }
  }

  const ModelConfig vc = value_model_config(corpus.family, 6, false, 1, 16);
  Rng vrng(6);
  const ParamStore vp = seqmodel::init_params(vc, vrng);
  CHECK_THROWS_AS(q_values_at_step(d, corpus.normalizer, vc, vp, 0),
                  ContractError);
}

TEST_CASE("training: memorizes a single-trajectory corpus") {
  const PretrainCorpus corpus = small_chain_corpus(1, 10, 5);
  ValueTrainConfig train;
  train.epochs = 400;
  train.batch_size = 1;
  train.seed = 3;
  train.learning_rate = 3e-3;
  const ValueEstimators est =
      train_value_estimators(corpus, ValueLossConfig{}, train, 1, 32);
  REQUIRE(!est.curve.empty());
  CHECK(est.curve.back().train_loss < 1e-4);
}

TEST_CASE("training: identical runs for a fixed seed") {
  const PretrainCorpus corpus = small_chain_corpus(8, 5, 11, 0.25);
  ValueTrainConfig train;
  train.epochs = 3;
  train.batch_size = 4;
  train.seed = 9;
  const ValueEstimators a =
      train_value_estimators(corpus, ValueLossConfig{}, train, 1, 16);
  const ValueEstimators b =
      train_value_estimators(corpus, ValueLossConfig{}, train, 1, 16);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].train_loss == b.curve[i].train_loss);
    CHECK(a.curve[i].val_loss == b.curve[i].val_loss);
  }
  CHECK(same_params(a.q_params, b.q_params));
  CHECK(same_params(a.v_params, b.v_params));
}

TEST_CASE("training: returns the best-validation checkpoint") {
  const PretrainCorpus corpus = small_chain_corpus(16, 5, 37, 0.25);
  ValueTrainConfig train;
  train.epochs = 25;
  train.batch_size = 8;
  train.seed = 4;
  const ValueEstimators est =
      train_value_estimators(corpus, ValueLossConfig{}, train, 1, 16);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& point : est.curve) best = std::min(best, point.val_loss);
  const ValueLossParts parts =
      value_loss(corpus.split("val"), corpus.normalizer, est.q_config,
                 est.q_params, est.v_config, est.v_params, ValueLossConfig{});
  CHECK(std::abs(parts.total - best) < 1e-12);
}

TEST_CASE("training: diverging loss raises a step-indexed error") {
  const PretrainCorpus corpus = small_chain_corpus(2, 5, 5);
  ValueTrainConfig train;
  train.epochs = 4;
  train.batch_size = 1;
  train.seed = 3;
  train.learning_rate = 1e200;
  try {
    train_value_estimators(corpus, ValueLossConfig{}, train, 1, 16);
    FAIL("expected NumericsError");
  } catch (const NumericsError& e) {
    CHECK(std::string(e.what()).find("diverged at step") != std::string::npos);
  }
}

TEST_CASE("advantage table: disk round trip is exact and repeatable") {
  const PretrainCorpus corpus = small_chain_corpus(4, 5, 41);
  const AdvantageTable table = oracle_advantages(corpus, ValueLossConfig{});
  const std::string path = temp_path("icrl_adv_table.jsonl");
  write_advantage_table(table, path);
  const AdvantageTable reread = read_advantage_table(path);
  REQUIRE(reread.rows.size() == table.rows.size());
  CHECK(reread.eta == table.eta);
  CHECK(reread.weight_clip_max == table.weight_clip_max);
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    for (std::size_t h = 0; h < table.rows[i].size(); ++h) {
      CHECK(reread.rows[i][h].q_hat == table.rows[i][h].q_hat);
      CHECK(reread.rows[i][h].v_hat == table.rows[i][h].v_hat);
      CHECK(reread.rows[i][h].a_hat == table.rows[i][h].a_hat);
      CHECK(reread.rows[i][h].weight == table.rows[i][h].weight);
    }
  const std::string first = read_text_file(path);
  write_advantage_table(reread, path);
  CHECK(read_text_file(path) == first);
  std::filesystem::remove(path);
}

TEST_CASE("advantage table: corrupted files fail with located errors") {
  const PretrainCorpus corpus = small_chain_corpus(2, 3, 43);
  const AdvantageTable table = oracle_advantages(corpus, ValueLossConfig{});
  const std::string path = temp_path("icrl_adv_corrupt.jsonl");
  write_advantage_table(table, path);
  const std::string text = read_text_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  REQUIRE(lines.size() == 7);  // header + 2 datasets x 3 steps

  SUBCASE("missing entries") {
    write_text_file(path, lines[0] + "\n" + lines[1] + "\n");
    try {
      read_advantage_table(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("entries") != std::string::npos);
    }
  }
  SUBCASE("malformed record names its line") {
    std::string broken;
    for (std::size_t i = 0; i < lines.size(); ++i)
      broken += (i == 2 ? "{not json" : lines[i]) + "\n";
    try {
      read_advantage_table(path + "x");
      FAIL("expected FormatError");
    } catch (const FormatError&) {
    }
    write_text_file(path, broken);
    try {
      read_advantage_table(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("steps out of order") {
    std::swap(lines[1], lines[2]);
    std::string swapped;
    for (const auto& line : lines) swapped += line + "\n";
    write_text_file(path, swapped);
    try {
      read_advantage_table(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("steps out of order") !=
            std::string::npos);
    }
  }
  std::filesystem::remove(path);
}

// Fidelity on held-out data: predictions aggregate to dynamic-programming
// values even though the per-sample target is the sampled return, and the
// action-substituted estimates rank actions the way exact DP does.
TEST_CASE("training: held-out estimates track DP values on the chain") {
  TabularCorpusConfig cc;
  cc.num_datasets = 500;
  cc.val_fraction = 0.3;
  cc.horizon = 10;
  const TaskFamily family = chain_family(3, 0.8, 10);
  const PretrainCorpus corpus = generate_tabular_corpus(family, cc, 1);
  ValueTrainConfig train;
  train.epochs = 30;
  train.batch_size = 128;
  train.seed = 0;
  const ValueEstimators est =
      train_value_estimators(corpus, ValueLossConfig{}, train, 2, 64);

  const auto val = corpus.split("val");
  double sum_vhat[3] = {0.0, 0.0, 0.0};
  double sum_vdp[3] = {0.0, 0.0, 0.0};
  double count[3] = {0.0, 0.0, 0.0};
  double agree = 0.0, total = 0.0;
  ForwardCache vcache(est.v_config);
  for (const auto* d : val) {
    const auto fh = envs::solve_finite_horizon(
        family.mdp, d->behavior.action_probs, 10);
    const Matrix& vout = vcache.run(
        value_sequence(*d, corpus.normalizer, TokenFormat::kStateReturn),
        est.v_params);
    for (int h = 0; h < 10; ++h) {
      const int s = d->states[(std::size_t)h];
      sum_vhat[s] += corpus.normalizer.denormalize_return(vout(h, 0));
      sum_vdp[s] += fh.v[(std::size_t)h][s];
      count[s] += 1.0;

      const Vector qhat =
          q_values_at_step(*d, corpus.normalizer, est.q_config, est.q_params, h);
      const double q0 = fh.q[(std::size_t)h](s, 0);
      const double q1 = fh.q[(std::size_t)h](s, 1);
      const bool tie = std::abs(q0 - q1) < 1e-12;
      if (tie || ((qhat[0] >= qhat[1]) == (q0 > q1))) agree += 1.0;
      total += 1.0;
    }
  }
  double mae = 0.0, weight = 0.0;
  for (int s = 0; s < 3; ++s) {
    REQUIRE(count[s] > 0.0);
    mae += count[s] * std::abs(sum_vhat[s] / count[s] - sum_vdp[s] / count[s]);
    weight += count[s];
  }
  CHECK(mae / weight < 0.1);
  CHECK(agree / total >= 0.9);
}
