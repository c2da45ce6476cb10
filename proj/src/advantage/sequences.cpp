#include "icrl/advantage/sequences.hpp"

#include "icrl/envs/darkroom.hpp"
#include "icrl/errors.hpp"

namespace icrl::advantage {

using datagen::ContextDataset;
using datagen::RewardNormalizer;
using envs::FamilyKind;
using envs::TaskFamily;
using numkit::Vector;
using seqmodel::Token;
using seqmodel::TokenFormat;
using seqmodel::TokenKind;
using seqmodel::TokenSequence;
using seqmodel::VocabSpec;

VocabSpec family_vocab(const TaskFamily& family) {
  VocabSpec vocab;
  switch (family.kind) {
    case FamilyKind::kBandit:
      vocab.state_dim = 1;
      vocab.action_count = family.bandit.num_arms;
      break;
    case FamilyKind::kDarkroom:
      vocab.state_dim = family.darkroom_side * family.darkroom_side;
      vocab.action_count = envs::kDarkroomActionCount;
      break;
    case FamilyKind::kTabular:
      vocab.state_dim = family.mdp.num_states;
      vocab.action_count = family.mdp.num_actions;
      break;
  }
  return vocab;
}

TokenSequence value_sequence(const ContextDataset& dataset,
                             const RewardNormalizer& normalizer,
                             TokenFormat format) {
  if (format != TokenFormat::kStateActionReturn &&
      format != TokenFormat::kStateReturn)
    throw ContractError("value_sequence: value token format required");
  dataset.validate();
  const int horizon = dataset.horizon();
  TokenSequence seq;
  seq.tokens.reserve(static_cast<std::size_t>(horizon));
  for (int h = 0; h < horizon; ++h) {
    Token tok;
    tok.kind = format == TokenFormat::kStateActionReturn
                   ? TokenKind::kStateActionReturn
                   : TokenKind::kStateReturn;
    tok.state = dataset.states[static_cast<std::size_t>(h)];
    if (format == TokenFormat::kStateActionReturn)
      tok.action = dataset.actions[static_cast<std::size_t>(h)];
    tok.ret = h == 0 ? 0.0
                     : normalizer.normalize_return(
                           dataset.returns[static_cast<std::size_t>(h - 1)]);
    seq.tokens.push_back(tok);
  }
  return seq;
}

TokenSequence value_sequence_with_action(const ContextDataset& dataset,
                                         const RewardNormalizer& normalizer,
                                         int step, int action) {
  if (step < 0 || step >= dataset.horizon())
    throw ContractError("value_sequence_with_action: step out of range");
  if (action < 0)
    throw ContractError("value_sequence_with_action: negative action");
  TokenSequence seq =
      value_sequence(dataset, normalizer, TokenFormat::kStateActionReturn);
  seq.tokens[static_cast<std::size_t>(step)].action = action;
  return seq;
}

Vector value_targets(const ContextDataset& dataset,
                     const RewardNormalizer& normalizer) {
  const int horizon = dataset.horizon();
  Vector targets(horizon);
  for (int h = 0; h < horizon; ++h)
    targets[h] = normalizer.normalize_return(
        dataset.returns[static_cast<std::size_t>(h)]);
  return targets;
}

Vector bellman_rewards(const ContextDataset& dataset,
                       const RewardNormalizer& normalizer, double gamma) {
  const int horizon = dataset.horizon();
  if (horizon < 2) return Vector(0);
  Vector rewards(horizon - 1);
  for (int h = 0; h + 1 < horizon; ++h)
    rewards[h] = normalizer.normalize_reward(
        dataset.rewards[static_cast<std::size_t>(h)], gamma);
  return rewards;
}

}  // namespace icrl::advantage
