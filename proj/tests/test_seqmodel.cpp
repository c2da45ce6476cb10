#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "gradcheck_cases.hpp"
#include "icrl/numkit/adamw.hpp"
#include "icrl/seqmodel/model.hpp"

using namespace icrl;
using namespace icrl::seqmodel;
using numkit::GradMap;
using numkit::Matrix;
using numkit::ParamStore;
using numkit::Rng;
using numkit::Var;
using numkit::Vector;

namespace {

ModelConfig small_policy_config(int state_dim = 3, int actions = 4) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.embed_dim = 16;
  cfg.max_context = 12;
  cfg.vocab.state_dim = state_dim;
  cfg.vocab.action_count = actions;
  cfg.head_kind = HeadKind::kPolicyLogits;
  cfg.token_format = TokenFormat::kTransition;
  return cfg;
}

Token transition_token(int s, int a, double r, int sp) {
  Token t;
  t.kind = TokenKind::kTransition;
  t.state = s;
  t.action = a;
  t.reward = r;
  t.next_state = sp;
  return t;
}

Token query_token(int s) {
  Token t;
  t.kind = TokenKind::kQueryState;
  t.state = s;
  return t;
}

TokenSequence random_policy_sequence(const ModelConfig& cfg, int context_len,
                                     Rng& rng, bool with_query = true) {
  TokenSequence seq;
  for (int i = 0; i < context_len; ++i)
    seq.tokens.push_back(transition_token(
        rng.uniform_int(cfg.vocab.state_dim),
        rng.uniform_int(cfg.vocab.action_count), rng.normal(),
        rng.uniform_int(cfg.vocab.state_dim)));
  if (with_query)
    seq.tokens.push_back(query_token(rng.uniform_int(cfg.vocab.state_dim)));
  return seq;
}

}  // namespace

TEST_CASE("encode: shapes, per-token independence, permutation") {
  ModelConfig cfg = small_policy_config();
  Rng rng(1);
  ParamStore params = init_params(cfg, rng);

  TokenSequence only_query;
  only_query.tokens.push_back(query_token(1));
  const Matrix e1 = encode(only_query, cfg, params);
  CHECK(e1.rows() == 1);
  CHECK(e1.cols() == cfg.embed_dim);

  TokenSequence twins;
  twins.tokens.push_back(transition_token(0, 1, 0.5, 2));
  twins.tokens.push_back(transition_token(0, 1, 0.5, 2));
  const Matrix e2 = encode(twins, cfg, params);
  CHECK((e2.row(0) - e2.row(1)).cwiseAbs().maxCoeff() == 0.0);

  TokenSequence seq;
  seq.tokens.push_back(transition_token(0, 1, 0.1, 1));
  seq.tokens.push_back(transition_token(1, 2, 0.2, 2));
  seq.tokens.push_back(transition_token(2, 3, 0.3, 0));
  const Matrix before = encode(seq, cfg, params);
  std::swap(seq.tokens[0], seq.tokens[2]);
  const Matrix after = encode(seq, cfg, params);
  // Rows match up to accumulation-order noise (blocked matmul kernels may
  // sum a row differently depending on its position).
  CHECK((after.row(0) - before.row(2)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((after.row(2) - before.row(0)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((after.row(1) - before.row(1)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("init: weight scale and zero biases") {
  ModelConfig cfg = small_policy_config();
  Rng rng(2);
  ParamStore params = init_params(cfg, rng);
  CHECK(params.at("enc.b1").cwiseAbs().maxCoeff() == 0.0);
  CHECK(params.at("head.b").cwiseAbs().maxCoeff() == 0.0);
  CHECK((params.at("blk0.ln1.g").array() == 1.0).all());
  double acc = 0.0;
  int count = 0;
  for (const auto& [name, tensor] : params.tensors) {
    if (name.find(".w") == std::string::npos && name != "pos") continue;
    acc += tensor.array().square().sum();
    count += static_cast<int>(tensor.size());
  }
  const double sample_std = std::sqrt(acc / count);
  CHECK(sample_std == doctest::Approx(0.02).epsilon(0.1));
}

TEST_CASE("causal_forward: strict causality on 50 random sequences") {
  ModelConfig cfg = small_policy_config();
  Rng rng(3);
  ParamStore params = init_params(cfg, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const int len = 2 + rng.uniform_int(6);
    TokenSequence seq = random_policy_sequence(cfg, len, rng, false);
    const Matrix base = causal_forward(seq, cfg, params);
    const int t = rng.uniform_int(len - 1);  // perturb a token after t
    TokenSequence mutated = seq;
    Token& victim = mutated.tokens[static_cast<std::size_t>(t + 1)];
    victim.state = (victim.state + 1) % cfg.vocab.state_dim;
    victim.reward += 1.5;
    const Matrix out = causal_forward(mutated, cfg, params);
    for (int p = 0; p <= t; ++p)
      CHECK((out.row(p) - base.row(p)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out.row(t + 1) - base.row(t + 1)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("causal_forward: positions match prefix-only recomputation") {
  ModelConfig cfg = small_policy_config();
  Rng rng(4);
  ParamStore params = init_params(cfg, rng);
  TokenSequence seq = random_policy_sequence(cfg, 6, rng, false);
  const Matrix full = causal_forward(seq, cfg, params);
  for (int t = 1; t <= 6; ++t) {
    TokenSequence prefix;
    prefix.tokens.assign(seq.tokens.begin(), seq.tokens.begin() + t);
    const Matrix part = causal_forward(prefix, cfg, params);
    CHECK((part.row(t - 1) - full.row(t - 1)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("causal_forward: length limits enforced") {
  ModelConfig cfg = small_policy_config();
  Rng rng(5);
  ParamStore params = init_params(cfg, rng);
  TokenSequence too_long = random_policy_sequence(cfg, cfg.max_context, rng);
  CHECK_THROWS_AS(causal_forward(too_long, cfg, params), ContractError);
  TokenSequence empty;
  CHECK_THROWS_AS(causal_forward(empty, cfg, params), ContractError);
}

TEST_CASE("policy_distribution: normalization, uniformity, shift invariance") {
  ModelConfig cfg = small_policy_config();
  Rng rng(6);
  ParamStore params = init_params(cfg, rng);

  TokenSequence seq = random_policy_sequence(cfg, 4, rng);
  Vector p = policy_distribution(seq, cfg, params);
  CHECK(p.size() == cfg.vocab.action_count);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((p.array() > 0.0).all());

  // Zeroed head -> uniform distribution.
  ParamStore zero_head = params;
  zero_head.at("head.w").setZero();
  zero_head.at("head.b").setZero();
  Vector u = policy_distribution(seq, cfg, zero_head);
  for (int a = 0; a < cfg.vocab.action_count; ++a)
    CHECK(u[a] == doctest::Approx(0.25).epsilon(1e-12));

  // Adding a constant to every logit leaves the distribution unchanged.
  ParamStore shifted = params;
  shifted.at("head.b").array() += 3.7;
  Vector q = policy_distribution(seq, cfg, shifted);
  CHECK((q - p).cwiseAbs().maxCoeff() < 1e-12);

  // Single action -> probability one.
  ModelConfig one = small_policy_config(3, 1);
  Rng rng1(7);
  ParamStore params1 = init_params(one, rng1);
  TokenSequence seq1 = random_policy_sequence(one, 2, rng1);
  Vector p1 = policy_distribution(seq1, one, params1);
  CHECK(p1.size() == 1);
  CHECK(p1[0] == doctest::Approx(1.0).epsilon(1e-15));

  // Sequence not ending in a query is rejected.
  TokenSequence no_query = random_policy_sequence(cfg, 3, rng, false);
  CHECK_THROWS_AS(policy_distribution(no_query, cfg, params), ContractError);
}

TEST_CASE("value_outputs: shapes, causality, and kind checks") {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.embed_dim = 8;
  cfg.max_context = 8;
  cfg.vocab.state_dim = 3;
  cfg.vocab.action_count = 2;
  cfg.head_kind = HeadKind::kScalarValue;
  cfg.token_format = TokenFormat::kStateActionReturn;
  Rng rng(8);
  ParamStore params = init_params(cfg, rng);

  auto value_token = [](int s, int a, double g) {
    Token t;
    t.kind = TokenKind::kStateActionReturn;
    t.state = s;
    t.action = a;
    t.ret = g;
    return t;
  };

  TokenSequence seq;
  seq.tokens = {value_token(0, 1, 0.0), value_token(1, 0, 0.4),
                value_token(2, 1, 0.2)};
  Vector v = value_outputs(seq, cfg, params);
  CHECK(v.size() == 3);

  // Diverge after position 1: outputs through position 1 unchanged.
  TokenSequence other = seq;
  other.tokens[2] = value_token(0, 0, -1.0);
  Vector w = value_outputs(other, cfg, params);
  CHECK(w[0] == v[0]);
  CHECK(w[1] == v[1]);

  // Mixed token kinds rejected.
  TokenSequence mixed = seq;
  Token wrong;
  wrong.kind = TokenKind::kStateReturn;
  mixed.tokens.push_back(wrong);
  CHECK_THROWS_AS(value_outputs(mixed, cfg, params), ContractError);

  // Policy model rejected by value_outputs and vice versa.
  ModelConfig pol = small_policy_config();
  Rng rng2(9);
  ParamStore pol_params = init_params(pol, rng2);
  TokenSequence pseq = random_policy_sequence(pol, 2, rng2);
  CHECK_THROWS_AS(value_outputs(pseq, pol, pol_params), ContractError);
  CHECK_THROWS_AS(policy_distribution(seq, cfg, params), ContractError);
}

TEST_CASE("training: overfit a constant-return trajectory to near-zero loss") {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.embed_dim = 8;
  cfg.max_context = 6;
  cfg.vocab.state_dim = 2;
  cfg.vocab.action_count = 2;
  cfg.head_kind = HeadKind::kScalarValue;
  cfg.token_format = TokenFormat::kStateReturn;
  Rng rng(10);
  ParamStore params = init_params(cfg, rng);

  TokenSequence seq;
  for (int i = 0; i < 4; ++i) {
    Token t;
    t.kind = TokenKind::kStateReturn;
    t.state = i % 2;
    t.ret = 0.7;
    seq.tokens.push_back(t);
  }

  auto fg = build_forward_graph(cfg, 4);
  Var target = fg->graph.input("target", 4, 1);
  Var loss = numkit::mean(numkit::square(numkit::sub(fg->outputs, target)));
  const numkit::NamedTensors inputs{
      {"tokens", token_matrix(seq, cfg)},
      {"target", Matrix::Constant(4, 1, 0.7)}};

  numkit::OptimState opt;
  opt.learning_rate = 1e-2;
  opt.weight_decay = 0.0;
  double final_loss = 1.0;
  for (int step = 0; step < 4000 && final_loss > 1e-7; ++step) {
    fg->graph.forward(inputs, params);
    final_loss = fg->graph.value(loss)(0, 0);
    GradMap grads = fg->graph.backward(loss);
    adamw_step(params, grads, opt);
  }
  CHECK(final_loss < 1e-6);
  const Vector out = value_outputs(seq, cfg, params);
  for (int i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.7).epsilon(1e-2));
}

TEST_CASE("gradcheck: one-layer sequence model end to end") {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.embed_dim = 8;
  cfg.max_context = 5;
  cfg.vocab.state_dim = 2;
  cfg.vocab.action_count = 3;
  cfg.head_kind = HeadKind::kPolicyLogits;
  cfg.token_format = TokenFormat::kTransition;
  Rng rng(11);
  ParamStore params = init_params(cfg, rng);
  TokenSequence seq = random_policy_sequence(cfg, 2, rng);

  auto fg = build_forward_graph(cfg, seq.length());
  Var logp = numkit::log_softmax_rows(fg->outputs);
  Var loss = numkit::scale(numkit::pick(logp, seq.length() - 1, 1), -1.0);
  numkit::NamedTensors inputs{{"tokens", token_matrix(seq, cfg)}};
  auto report = numkit::finite_diff_check(fg->graph, loss, inputs, params, 1e-4);
  INFO("worst ", report.worst_param, " err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("model checkpoint round trip preserves config and params") {
  ModelConfig cfg = small_policy_config();
  Rng rng(12);
  ParamStore params = init_params(cfg, rng);
  const std::string dir = "seqmodel_ckpt_tmp";
  std::filesystem::create_directories(dir);
  nlohmann::json extra;
  extra["stage"] = "unit";
  numkit::save_checkpoint(dir + "/m.ckpt",
                          make_model_checkpoint(cfg, params, extra));
  LoadedModel loaded = load_model_checkpoint(dir + "/m.ckpt");
  CHECK(loaded.config.embed_dim == cfg.embed_dim);
  CHECK(loaded.config.vocab.action_count == cfg.vocab.action_count);
  CHECK(loaded.metadata.at("stage") == "unit");
  CHECK(loaded.params.size() == params.size());
  CHECK((loaded.params.at("enc.w1") - params.at("enc.w1")).cwiseAbs().maxCoeff() == 0.0);

  Rng rng2(13);
  TokenSequence seq = random_policy_sequence(cfg, 3, rng2);
  const Vector before = policy_distribution(seq, cfg, params);
  const Vector after = policy_distribution(seq, loaded.config, loaded.params);
  CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove_all(dir);
}
