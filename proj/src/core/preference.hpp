#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace prefopt::pref {

struct PreferenceHyperparams {
  double beta = 0.1;   // reward scale, > 0
  double gamma = 0.1;  // reward margin, >= 0

  void validate() const {
    if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
    if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
  }
};

// Winner/loser indices refer to one shared record list (dataio order).
struct PreferencePair {
  size_t winner = 0;
  size_t loser = 0;
  std::string assay_id;
  std::string structure_id;
  double score_gap = 0.0;  // winner score - loser score, > 0
};

// One scoring job: the structure context plus the full token stream.
struct ScoredSequence {
  const geom::BackboneStructure* structure = nullptr;
  std::string sequence;
};

// L_NLL = mean over the batch of -sum_ll (mean reduction keeps the loss
// scale independent of batch size).
ad::Tensor nll_loss(ad::Tape& tape, const model::Model& policy,
                    const std::vector<ScoredSequence>& batch,
                    model::ScoreSpan span = model::ScoreSpan::kFull,
                    model::StructureCache* cache = nullptr);

// r_DPO = beta * (sum_ll under the policy - sum_ll under the reference).
ad::Tensor dpo_reward(ad::Tape& tape, const model::Model& policy,
                      const model::Model& reference, const ScoredSequence& seq,
                      const PreferenceHyperparams& hp,
                      model::ScoreSpan span = model::ScoreSpan::kFull,
                      model::StructureCache* policy_cache = nullptr,
                      model::StructureCache* reference_cache = nullptr);

// L_DPO = -log sigmoid(r_w - r_l).
ad::Tensor dpo_loss(ad::Tape& tape, const model::Model& policy,
                    const model::Model& reference, const ScoredSequence& winner,
                    const ScoredSequence& loser, const PreferenceHyperparams& hp,
                    model::ScoreSpan span = model::ScoreSpan::kFull,
                    model::StructureCache* policy_cache = nullptr,
                    model::StructureCache* reference_cache = nullptr);

// r_SimPO = beta * mean_ll; no reference model is consulted.
ad::Tensor simpo_reward(ad::Tape& tape, const model::Model& policy,
                        const ScoredSequence& seq,
                        const PreferenceHyperparams& hp,
                        model::ScoreSpan span = model::ScoreSpan::kFull,
                        model::StructureCache* cache = nullptr);

// L_SimPO = -log sigmoid(r_w - r_l - gamma).
ad::Tensor simpo_loss(ad::Tape& tape, const model::Model& policy,
                      const ScoredSequence& winner, const ScoredSequence& loser,
                      const PreferenceHyperparams& hp,
                      model::ScoreSpan span = model::ScoreSpan::kFull,
                      model::StructureCache* cache = nullptr);

struct RankedPairJob {
  ScoredSequence winner;
  ScoredSequence loser;
};

// Fraction of pairs whose winner out-scores the loser under the SimPO reward;
// ties count one half.
double pair_ranking_accuracy(const model::Model& policy,
                             const std::vector<RankedPairJob>& pairs,
                             const PreferenceHyperparams& hp,
                             model::ScoreSpan span = model::ScoreSpan::kFull,
                             model::StructureCache* cache = nullptr);

}  // namespace prefopt::pref
