#include "core/preference.hpp"

namespace prefopt::pref {

using ad::Tape;
using ad::Tensor;
using model::Model;
using model::ScoreSpan;
using model::StructureCache;

Tensor nll_loss(Tape& tape, const Model& policy,
                const std::vector<ScoredSequence>& batch, ScoreSpan span,
                StructureCache* cache) {
  if (batch.empty()) throw DomainError("nll_loss: empty batch");
  Tensor acc;
  bool first = true;
  for (const ScoredSequence& item : batch) {
    Tensor sum_ll =
        policy.sequence_loglik(tape, *item.structure, item.sequence, span, cache)
            .sum_ll;
    acc = first ? sum_ll : tape.add(acc, sum_ll);
    first = false;
  }
  return tape.scale(acc, -1.0 / static_cast<double>(batch.size()));
}

Tensor dpo_reward(Tape& tape, const Model& policy, const Model& reference,
                  const ScoredSequence& seq, const PreferenceHyperparams& hp,
                  ScoreSpan span, StructureCache* policy_cache,
                  StructureCache* reference_cache) {
  hp.validate();
  for (const model::Param& p : reference.params())
    if (p.tensor.requires_grad())
      throw UsageError("dpo_reward: reference parameters must be frozen");
  Tensor policy_sum =
      policy.sequence_loglik(tape, *seq.structure, seq.sequence, span,
                             policy_cache)
          .sum_ll;
  Tensor ref_sum =
      reference.sequence_loglik(tape, *seq.structure, seq.sequence, span,
                                reference_cache)
          .sum_ll;
  return tape.scale(tape.sub(policy_sum, ref_sum), hp.beta);
}

Tensor dpo_loss(Tape& tape, const Model& policy, const Model& reference,
                const ScoredSequence& winner, const ScoredSequence& loser,
                const PreferenceHyperparams& hp, ScoreSpan span,
                StructureCache* policy_cache, StructureCache* reference_cache) {
  Tensor rw = dpo_reward(tape, policy, reference, winner, hp, span,
                         policy_cache, reference_cache);
  Tensor rl = dpo_reward(tape, policy, reference, loser, hp, span,
                         policy_cache, reference_cache);
  return tape.scale(tape.log_sigmoid(tape.sub(rw, rl)), -1.0);
}

Tensor simpo_reward(Tape& tape, const Model& policy, const ScoredSequence& seq,
                    const PreferenceHyperparams& hp, ScoreSpan span,
                    StructureCache* cache) {
  hp.validate();
  Tensor mean_ll =
      policy.sequence_loglik(tape, *seq.structure, seq.sequence, span, cache)
          .mean_ll;
  return tape.scale(mean_ll, hp.beta);
}

Tensor simpo_loss(Tape& tape, const Model& policy, const ScoredSequence& winner,
                  const ScoredSequence& loser, const PreferenceHyperparams& hp,
                  ScoreSpan span, StructureCache* cache) {
  Tensor rw = simpo_reward(tape, policy, winner, hp, span, cache);
  Tensor rl = simpo_reward(tape, policy, loser, hp, span, cache);
  Tensor gap = tape.add_const(tape.sub(rw, rl), -hp.gamma);
  return tape.scale(tape.log_sigmoid(gap), -1.0);
}

double pair_ranking_accuracy(const Model& policy,
                             const std::vector<RankedPairJob>& pairs,
                             const PreferenceHyperparams& hp, ScoreSpan span,
                             StructureCache* cache) {
  if (pairs.empty()) throw DomainError("pair_ranking_accuracy: no pairs");
  double credit = 0.0;
  for (const RankedPairJob& pair : pairs) {
    Tape tape(/*recording=*/false);
    const double rw =
        simpo_reward(tape, policy, pair.winner, hp, span, cache).item();
    const double rl =
        simpo_reward(tape, policy, pair.loser, hp, span, cache).item();
    if (rw > rl)
      credit += 1.0;
    else if (rw == rl)
      credit += 0.5;
  }
  return credit / static_cast<double>(pairs.size());
}

}  // namespace prefopt::pref
