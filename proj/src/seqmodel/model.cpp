#include "icrl/seqmodel/model.hpp"

#include <cmath>

#include "icrl/errors.hpp"

namespace icrl::seqmodel {

using numkit::Index;
using numkit::Matrix;
using numkit::ParamStore;
using numkit::Var;
using numkit::Vector;

int ModelConfig::input_width() const {
  switch (token_format) {
    case TokenFormat::kTransition:
      // [state one-hot | action one-hot | reward | next-state one-hot]
      return vocab.state_dim + vocab.action_count + vocab.reward_dim +
             vocab.state_dim;
    case TokenFormat::kStateActionReturn:
      return vocab.state_dim + vocab.action_count + vocab.reward_dim;
    case TokenFormat::kStateReturn:
      return vocab.state_dim + vocab.reward_dim;
  }
  throw ContractError("ModelConfig: unknown token format");
}

int ModelConfig::output_dim() const {
  return head_kind == HeadKind::kPolicyLogits ? vocab.action_count : 1;
}

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || embed_dim <= 0 || max_context <= 0)
    throw ContractError("ModelConfig: counts must be positive");
  if (embed_dim % n_heads != 0)
    throw ContractError("ModelConfig: embed_dim must be divisible by n_heads");
  if (vocab.state_dim <= 0 || vocab.action_count <= 0 || vocab.reward_dim != 1)
    throw ContractError("ModelConfig: invalid vocab spec");
}

nlohmann::json model_config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["n_layers"] = config.n_layers;
  j["n_heads"] = config.n_heads;
  j["embed_dim"] = config.embed_dim;
  j["max_context"] = config.max_context;
  j["state_dim"] = config.vocab.state_dim;
  j["action_count"] = config.vocab.action_count;
  j["head_kind"] =
      config.head_kind == HeadKind::kPolicyLogits ? "policy_logits" : "scalar_value";
  switch (config.token_format) {
    case TokenFormat::kTransition: j["token_format"] = "transition"; break;
    case TokenFormat::kStateActionReturn:
      j["token_format"] = "state_action_return";
      break;
    case TokenFormat::kStateReturn: j["token_format"] = "state_return"; break;
  }
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig config;
  config.n_layers = j.at("n_layers").get<int>();
  config.n_heads = j.at("n_heads").get<int>();
  config.embed_dim = j.at("embed_dim").get<int>();
  config.max_context = j.at("max_context").get<int>();
  config.vocab.state_dim = j.at("state_dim").get<int>();
  config.vocab.action_count = j.at("action_count").get<int>();
  const std::string head = j.at("head_kind").get<std::string>();
  if (head == "policy_logits")
    config.head_kind = HeadKind::kPolicyLogits;
  else if (head == "scalar_value")
    config.head_kind = HeadKind::kScalarValue;
  else
    throw FormatError("model config: unknown head kind '" + head + "'");
  const std::string fmt = j.at("token_format").get<std::string>();
  if (fmt == "transition")
    config.token_format = TokenFormat::kTransition;
  else if (fmt == "state_action_return")
    config.token_format = TokenFormat::kStateActionReturn;
  else if (fmt == "state_return")
    config.token_format = TokenFormat::kStateReturn;
  else
    throw FormatError("model config: unknown token format '" + fmt + "'");
  config.validate();
  return config;
}

void validate_sequence(const TokenSequence& seq, const ModelConfig& config) {
  const int length = seq.length();
  if (length < 1) throw ContractError("TokenSequence: empty sequence");
  if (length > config.max_context)
    throw ContractError("TokenSequence: length " + std::to_string(length) +
                        " exceeds max_context " +
                        std::to_string(config.max_context));
  int query_count = 0;
  for (int t = 0; t < length; ++t) {
    const Token& tok = seq.tokens[static_cast<std::size_t>(t)];
    if (tok.kind == TokenKind::kQueryState) {
      ++query_count;
      if (t != length - 1)
        throw ContractError("TokenSequence: query_state must be the last token");
      if (config.token_format != TokenFormat::kTransition)
        throw ContractError("TokenSequence: query token in a value sequence");
      continue;
    }
    const bool ok =
        (config.token_format == TokenFormat::kTransition &&
         tok.kind == TokenKind::kTransition) ||
        (config.token_format == TokenFormat::kStateActionReturn &&
         tok.kind == TokenKind::kStateActionReturn) ||
        (config.token_format == TokenFormat::kStateReturn &&
         tok.kind == TokenKind::kStateReturn);
    if (!ok)
      throw ContractError("TokenSequence: token kind does not match model format");
  }
  if (query_count > 1)
    throw ContractError("TokenSequence: more than one query_state token");
}

Matrix token_matrix(const TokenSequence& seq, const ModelConfig& config) {
  validate_sequence(seq, config);
  const int width = config.input_width();
  const int s_dim = config.vocab.state_dim;
  const int a_dim = config.vocab.action_count;
  Matrix rows = Matrix::Zero(seq.length(), width);
  for (int t = 0; t < seq.length(); ++t) {
    const Token& tok = seq.tokens[static_cast<std::size_t>(t)];
    if (tok.state < 0 || tok.state >= s_dim)
      throw ShapeError("token_matrix: state out of vocab range");
    rows(t, tok.state) = 1.0;
    if (config.token_format == TokenFormat::kStateReturn) {
      rows(t, s_dim) = tok.ret;
      continue;
    }
    if (tok.action >= a_dim)
      throw ShapeError("token_matrix: action out of vocab range");
    if (tok.action >= 0) rows(t, s_dim + tok.action) = 1.0;
    if (config.token_format == TokenFormat::kStateActionReturn) {
      rows(t, s_dim + a_dim) = tok.ret;
      continue;
    }
    // Transition format: reward then next-state block.
    rows(t, s_dim + a_dim) = tok.reward;
    if (tok.next_state >= s_dim)
      throw ShapeError("token_matrix: next_state out of vocab range");
    if (tok.next_state >= 0) rows(t, s_dim + a_dim + 1 + tok.next_state) = 1.0;
  }
  return rows;
}

namespace {

std::string layer_prefix(int layer) { return "blk" + std::to_string(layer) + "."; }

// Layer norm with learned affine parameters.
Var affine_layer_norm(numkit::Graph& g, Var x, const std::string& name,
                      int embed_dim) {
  Var gain = g.param(name + ".g", 1, embed_dim);
  Var bias = g.param(name + ".b", 1, embed_dim);
  return add_row_vector(mul_row_vector(layer_norm_rows(x), gain), bias);
}

Var build_encoder(numkit::Graph& g, Var tokens, const ModelConfig& config) {
  const int width = config.input_width();
  const int d = config.embed_dim;
  Var h = add_row_vector(matmul(tokens, g.param("enc.w1", width, d)),
                         g.param("enc.b1", 1, d));
  h = gelu(h);
  h = gelu(add_row_vector(matmul(h, g.param("enc.w2", d, d)),
                          g.param("enc.b2", 1, d)));
  return add_row_vector(matmul(h, g.param("enc.w3", d, d)),
                        g.param("enc.b3", 1, d));
}

}  // namespace

std::unique_ptr<ForwardGraph> build_forward_graph(const ModelConfig& config,
                                                  int length) {
  config.validate();
  if (length < 1 || length > config.max_context)
    throw ContractError("build_forward_graph: length out of range");
  auto fg = std::make_unique<ForwardGraph>();
  fg->length = length;
  numkit::Graph& g = fg->graph;
  const int d = config.embed_dim;
  const int dh = d / config.n_heads;
  const int hidden = 4 * d;

  fg->tokens = g.input("tokens", length, config.input_width());
  Var x = build_encoder(g, fg->tokens, config);
  x = add(x, rows(g.param("pos", config.max_context, d), 0, length));

  for (int layer = 0; layer < config.n_layers; ++layer) {
    const std::string pfx = layer_prefix(layer);
    Var a = affine_layer_norm(g, x, pfx + "ln1", d);
    Var attn{};
    for (int head = 0; head < config.n_heads; ++head) {
      const std::string hp = pfx + "h" + std::to_string(head) + ".";
      Var q = add_row_vector(matmul(a, g.param(hp + "wq", d, dh)),
                             g.param(hp + "bq", 1, dh));
      Var k = add_row_vector(matmul(a, g.param(hp + "wk", d, dh)),
                             g.param(hp + "bk", 1, dh));
      Var v = add_row_vector(matmul(a, g.param(hp + "wv", d, dh)),
                             g.param(hp + "bv", 1, dh));
      Var scores = scale(matmul(q, transpose(k)),
                         1.0 / std::sqrt(static_cast<double>(dh)));
      Var ctx = matmul(causal_softmax(scores), v);
      Var proj = matmul(ctx, g.param(hp + "wo", dh, d));
      attn = head == 0 ? proj : add(attn, proj);
    }
    attn = add_row_vector(attn, g.param(pfx + "attn.bo", 1, d));
    x = add(x, attn);
    Var m = affine_layer_norm(g, x, pfx + "ln2", d);
    Var up = gelu(add_row_vector(matmul(m, g.param(pfx + "mlp.w1", d, hidden)),
                                 g.param(pfx + "mlp.b1", 1, hidden)));
    Var down = add_row_vector(matmul(up, g.param(pfx + "mlp.w2", hidden, d)),
                              g.param(pfx + "mlp.b2", 1, d));
    x = add(x, down);
  }
  Var final_norm = affine_layer_norm(g, x, "final.ln", d);
  fg->outputs =
      add_row_vector(matmul(final_norm, g.param("head.w", d, config.output_dim())),
                     g.param("head.b", 1, config.output_dim()));
  return fg;
}

ParamStore init_params(const ModelConfig& config, numkit::Rng& rng) {
  config.validate();
  const int d = config.embed_dim;
  const int dh = d / config.n_heads;
  const int hidden = 4 * d;
  const double sigma = 0.02;
  ParamStore ps;
  auto weight = [&](const std::string& name, int r, int c) {
    ps.insert(name, rng.normal_matrix(r, c) * sigma);
  };
  auto zeros = [&](const std::string& name, int r, int c) {
    ps.insert(name, Matrix::Zero(r, c));
  };
  auto ones = [&](const std::string& name, int r, int c) {
    ps.insert(name, Matrix::Ones(r, c));
  };
  weight("enc.w1", config.input_width(), d);
  zeros("enc.b1", 1, d);
  weight("enc.w2", d, d);
  zeros("enc.b2", 1, d);
  weight("enc.w3", d, d);
  zeros("enc.b3", 1, d);
  weight("pos", config.max_context, d);
  for (int layer = 0; layer < config.n_layers; ++layer) {
    const std::string pfx = layer_prefix(layer);
    ones(pfx + "ln1.g", 1, d);
    zeros(pfx + "ln1.b", 1, d);
    for (int head = 0; head < config.n_heads; ++head) {
      const std::string hp = pfx + "h" + std::to_string(head) + ".";
      weight(hp + "wq", d, dh);
      zeros(hp + "bq", 1, dh);
      weight(hp + "wk", d, dh);
      zeros(hp + "bk", 1, dh);
      weight(hp + "wv", d, dh);
      zeros(hp + "bv", 1, dh);
      weight(hp + "wo", dh, d);
    }
    zeros(pfx + "attn.bo", 1, d);
    ones(pfx + "ln2.g", 1, d);
    zeros(pfx + "ln2.b", 1, d);
    weight(pfx + "mlp.w1", d, hidden);
    zeros(pfx + "mlp.b1", 1, hidden);
    weight(pfx + "mlp.w2", hidden, d);
    zeros(pfx + "mlp.b2", 1, d);
  }
  ones("final.ln.g", 1, d);
  zeros("final.ln.b", 1, d);
  weight("head.w", d, config.output_dim());
  zeros("head.b", 1, config.output_dim());
  return ps;
}

Matrix encode(const TokenSequence& seq, const ModelConfig& config,
              const ParamStore& params) {
  validate_sequence(seq, config);
  numkit::Graph g;
  Var tokens = g.input("tokens", seq.length(), config.input_width());
  Var embedded = build_encoder(g, tokens, config);
  g.forward({{"tokens", token_matrix(seq, config)}}, params);
  return g.value(embedded);
}

Matrix causal_forward(const TokenSequence& seq, const ModelConfig& config,
                      const ParamStore& params) {
  validate_sequence(seq, config);
  auto fg = build_forward_graph(config, seq.length());
  fg->graph.forward({{"tokens", token_matrix(seq, config)}}, params);
  return fg->graph.value(fg->outputs);
}

Vector policy_distribution(const TokenSequence& seq, const ModelConfig& config,
                           const ParamStore& params) {
  if (config.head_kind != HeadKind::kPolicyLogits)
    throw ContractError("policy_distribution: model head is not policy_logits");
  if (seq.length() < 1 ||
      seq.tokens.back().kind != TokenKind::kQueryState)
    throw ContractError("policy_distribution: sequence must end in query_state");
  const Matrix out = causal_forward(seq, config, params);
  return numkit::softmax(out.row(out.rows() - 1).transpose());
}

Vector value_outputs(const TokenSequence& seq, const ModelConfig& config,
                     const ParamStore& params) {
  if (config.head_kind != HeadKind::kScalarValue)
    throw ContractError("value_outputs: model head is not scalar_value");
  return causal_forward(seq, config, params).col(0);
}

ForwardCache::ForwardCache(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
}

const Matrix& ForwardCache::run(const TokenSequence& seq,
                                const ParamStore& params) {
  validate_sequence(seq, config_);
  auto it = graphs_.find(seq.length());
  if (it == graphs_.end())
    it = graphs_.emplace(seq.length(),
                         build_forward_graph(config_, seq.length()))
             .first;
  ForwardGraph& fg = *it->second;
  fg.graph.forward({{"tokens", token_matrix(seq, config_)}}, params);
  return fg.graph.value(fg.outputs);
}

numkit::Checkpoint make_model_checkpoint(const ModelConfig& config,
                                         const ParamStore& params,
                                         const nlohmann::json& extra) {
  nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
  meta["model"] = model_config_to_json(config);
  numkit::Checkpoint ckpt;
  ckpt.metadata = meta.dump();
  ckpt.params = params;
  return ckpt;
}

LoadedModel load_model_checkpoint(const std::string& path) {
  numkit::Checkpoint ckpt = numkit::load_checkpoint(path);
  LoadedModel out;
  try {
    out.metadata = nlohmann::json::parse(ckpt.metadata);
    out.config = model_config_from_json(out.metadata.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model checkpoint '" + path + "': " + e.what());
  }
  out.params = std::move(ckpt.params);
  return out;
}

}  // namespace icrl::seqmodel
