#pragma once

#include "icrl/datagen/corpus.hpp"
#include "icrl/envs/task.hpp"
#include "icrl/seqmodel/model.hpp"

namespace icrl::advantage {

// One-hot widths of a task family as the models see it.  Bandits use a
// single dummy state so every family shares one sequence code path.
seqmodel::VocabSpec family_vocab(const envs::TaskFamily& family);

// Value-model input for one dataset: homogeneous (s, a, G) or (s, G) tokens.
// The return channel is shifted one step back (token h carries the step h-1
// label, token 0 carries 0), so under the causal mask position h conditions
// on exactly the earlier steps' labelled records plus its own unlabelled
// state/action.  Returns are in normalized units.
seqmodel::TokenSequence value_sequence(const datagen::ContextDataset& dataset,
                                       const datagen::RewardNormalizer& normalizer,
                                       seqmodel::TokenFormat format);

// Same sequence with the action at `step` replaced by `action`; positions
// before `step` are untouched, so the causally-masked output at `step` reads
// as the action-value of the substituted action in the same context.
seqmodel::TokenSequence value_sequence_with_action(
    const datagen::ContextDataset& dataset,
    const datagen::RewardNormalizer& normalizer, int step, int action);

// Normalized regression targets G_h for every position (length H).
numkit::Vector value_targets(const datagen::ContextDataset& dataset,
                             const datagen::RewardNormalizer& normalizer);

// Normalized rewards r_h for positions 0..H-2 (length H-1), the fixed part
// of the one-step consistency residuals.
numkit::Vector bellman_rewards(const datagen::ContextDataset& dataset,
                               const datagen::RewardNormalizer& normalizer,
                               double gamma);

}  // namespace icrl::advantage
