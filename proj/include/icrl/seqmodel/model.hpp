#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "icrl/numkit/checkpoint.hpp"
#include "icrl/numkit/graph.hpp"
#include "icrl/numkit/rng.hpp"

namespace icrl::seqmodel {

// Field dimensions of the task family as seen by the model.
struct VocabSpec {
  int state_dim = 1;     // one-hot width of states
  int action_count = 1;  // one-hot width of actions
  int reward_dim = 1;    // scalar reward / return channel
};

enum class HeadKind { kPolicyLogits, kScalarValue };

// Which token record a model consumes.  Policy models read transition
// tokens (s, a, r, s') plus one final query-state token; value models read
// homogeneous (s, a, G) or (s, G) tokens.
enum class TokenFormat { kTransition, kStateActionReturn, kStateReturn };

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 1;
  int embed_dim = 64;
  int max_context = 64;
  VocabSpec vocab;
  HeadKind head_kind = HeadKind::kPolicyLogits;
  TokenFormat token_format = TokenFormat::kTransition;

  int input_width() const;
  int output_dim() const;  // action_count for policy heads, 1 for value heads
  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class TokenKind { kTransition, kStateReturn, kStateActionReturn, kQueryState };

// One embeddable record.  `action == -1` or `next_state == -1` encode as an
// all-zero block (used for masked fields and query tokens).
struct Token {
  TokenKind kind = TokenKind::kTransition;
  int state = 0;
  int action = -1;
  double reward = 0.0;
  int next_state = -1;
  double ret = 0.0;  // return-to-go label channel for value tokens
};

struct TokenSequence {
  std::vector<Token> tokens;

  int length() const { return static_cast<int>(tokens.size()); }
};

// Throws ContractError when the sequence breaks the model's contract:
// empty, longer than max_context, query token not last / duplicated, or
// token kinds that do not match the model's token format.
void validate_sequence(const TokenSequence& seq, const ModelConfig& config);

// Raw per-token feature rows (L x input_width), one-hot fields concatenated.
numkit::Matrix token_matrix(const TokenSequence& seq, const ModelConfig& config);

// Fresh parameters: N(0, 0.02) weights, zero biases, unit layer-norm gains.
numkit::ParamStore init_params(const ModelConfig& config, numkit::Rng& rng);

// A reusable static graph computing head outputs for sequences of one fixed
// length.  The token matrix binds to input "tokens"; extend the graph with
// loss nodes before the first forward() if training.
struct ForwardGraph {
  numkit::Graph graph;
  numkit::Var tokens;
  numkit::Var outputs;  // L x output_dim
  int length = 0;
};

std::unique_ptr<ForwardGraph> build_forward_graph(const ModelConfig& config,
                                                  int length);

// Encoder-only embedding of each token (L x embed_dim); per-token, no mixing.
numkit::Matrix encode(const TokenSequence& seq, const ModelConfig& config,
                      const numkit::ParamStore& params);

// Full causal transformer pass; row t depends only on tokens 0..t.
numkit::Matrix causal_forward(const TokenSequence& seq,
                              const ModelConfig& config,
                              const numkit::ParamStore& params);

// Softmax over the final position's logits.  Requires a policy head and a
// trailing query_state token.
numkit::Vector policy_distribution(const TokenSequence& seq,
                                   const ModelConfig& config,
                                   const numkit::ParamStore& params);

// Per-position scalar predictions (length L).  Requires a value head.
numkit::Vector value_outputs(const TokenSequence& seq,
                             const ModelConfig& config,
                             const numkit::ParamStore& params);

// Caches one ForwardGraph per sequence length so deployment loops with
// growing contexts do not rebuild graphs.  Single-thread workspace.
class ForwardCache {
 public:
  explicit ForwardCache(ModelConfig config);
  const numkit::Matrix& run(const TokenSequence& seq,
                            const numkit::ParamStore& params);
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  std::map<int, std::unique_ptr<ForwardGraph>> graphs_;
};

// Checkpoint plumbing: the model config (and optional extra fields) ride in
// the checkpoint metadata JSON under "model".
numkit::Checkpoint make_model_checkpoint(const ModelConfig& config,
                                         const numkit::ParamStore& params,
                                         const nlohmann::json& extra = {});
struct LoadedModel {
  ModelConfig config;
  numkit::ParamStore params;
  nlohmann::json metadata;
};
LoadedModel load_model_checkpoint(const std::string& path);

}  // namespace icrl::seqmodel
