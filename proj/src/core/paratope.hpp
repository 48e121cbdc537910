#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/dataio.hpp"
#include "core/evalkit.hpp"
#include "core/model.hpp"
#include "core/optim.hpp"

namespace prefopt::paratope {

// Two-layer per-residue classification head on top of the frozen base
// model's residue embeddings: d -> hidden (tanh) -> 1 -> logistic. The
// second layer starts at zero so every initial probability is exactly 0.5.
struct ParatopeHead {
  std::vector<model::Param> params;  // w1, b1, w2, b2
  int64_t input_width = 0;
  int64_t hidden = 0;

  static ParatopeHead create(int64_t input_width, int64_t hidden,
                             uint64_t seed);
  ad::Tensor logits(ad::Tape& tape, const ad::Tensor& embeddings) const;
  ad::Tensor probabilities(ad::Tape& tape, const ad::Tensor& embeddings) const;
};

// Residue labels aligned to one antibody structure; -1 marks unlabeled
// positions excluded from the masked loss and the evaluation pool.
struct LabeledAntibody {
  std::string antibody_id;  // equals the structure id
  const geom::BackboneStructure* structure = nullptr;
  std::vector<int> labels;
};

// CSV (antibody_id,chain_id,residue_index,label) joined against structures
// by (antibody_id, chain_id, residue_index); any unmatched row is an error.
std::vector<LabeledAntibody> load_labels(const std::string& csv_path,
                                         const data::StructureStore& store);

// Per-residue paratope probabilities for one structure.
std::vector<double> head_forward(const model::Model& base,
                                 const ParatopeHead& head,
                                 const geom::BackboneStructure& structure,
                                 model::StructureCache* cache = nullptr);

struct HeadTrainConfig {
  int64_t epochs = 30;
  trainer::AdamWConfig optimizer;  // lr overridden below
  uint64_t seed = 0;

  HeadTrainConfig() { optimizer.lr = 1e-2; }
};

struct HeadTrainResult {
  std::vector<double> loss_curve;  // masked-mean BCE per epoch
};

// Minimizes masked-mean binary cross-entropy with AdamW on head parameters
// only; the base model is never touched.
HeadTrainResult train_head(const model::Model& base, ParatopeHead& head,
                           const std::vector<LabeledAntibody>& labeled,
                           const HeadTrainConfig& config,
                           model::StructureCache* cache = nullptr);

struct HeadEvaluation {
  evalkit::RocCurve roc;
  evalkit::PrCurve pr;
  double roc_auc = 0.0;
  double average_precision = 0.0;
  int64_t n_residues = 0;
};

// Pooled evaluation: one concatenated label/score vector across antibodies.
HeadEvaluation evaluate_head(const model::Model& base, const ParatopeHead& head,
                             const std::vector<LabeledAntibody>& test_set,
                             model::StructureCache* cache = nullptr);

}  // namespace prefopt::paratope
