#include "core/paratope.hpp"

#include <algorithm>
#include <cmath>

#include "core/ioutil.hpp"

namespace prefopt::paratope {

using ad::Tape;
using ad::Tensor;
using model::Model;

ParatopeHead ParatopeHead::create(int64_t input_width, int64_t hidden,
                                  uint64_t seed) {
  if (input_width < 1 || hidden < 1)
    throw ConfigError("paratope head: widths must be >= 1");
  ParatopeHead head;
  head.input_width = input_width;
  head.hidden = hidden;
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(input_width));
  std::vector<double> w1(static_cast<size_t>(input_width * hidden));
  for (double& v : w1) v = rng.gaussian(0.0, sd);
  head.params.push_back({"head.w1", model::ParamGroup::kDecoder,
                         Tensor::from_values({input_width, hidden}, w1)});
  head.params.push_back(
      {"head.b1", model::ParamGroup::kDecoder, Tensor::zeros({hidden})});
  head.params.push_back({"head.w2", model::ParamGroup::kDecoder,
                         Tensor::zeros({hidden, 1})});
  head.params.push_back(
      {"head.b2", model::ParamGroup::kDecoder, Tensor::zeros({1})});
  return head;
}

Tensor ParatopeHead::logits(Tape& tape, const Tensor& embeddings) const {
  if (embeddings.shape().size() != 2 || embeddings.shape()[1] != input_width)
    throw DimensionError("paratope head: embeddings " +
                         ad::shape_str(embeddings.shape()) +
                         " do not match input width " +
                         std::to_string(input_width));
  Tensor h = tape.tanh(tape.add_rowvec(
      tape.matmul(embeddings, params[0].tensor), params[1].tensor));
  return tape.add_rowvec(tape.matmul(h, params[2].tensor), params[3].tensor);
}

Tensor ParatopeHead::probabilities(Tape& tape, const Tensor& embeddings) const {
  return tape.sigmoid(logits(tape, embeddings));
}

std::vector<LabeledAntibody> load_labels(const std::string& csv_path,
                                         const data::StructureStore& store) {
  const io::CsvTable table = io::read_csv(
      csv_path, {"antibody_id", "chain_id", "residue_index", "label"});
  std::map<std::string, LabeledAntibody> by_antibody;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::string where = csv_path + ":" + std::to_string(i + 2);
    const std::string& antibody_id = f[0];
    const geom::BackboneStructure* structure = nullptr;
    try {
      structure = &store.get(antibody_id);
    } catch (const DataError&) {
      throw DataError(where + ": antibody_id '" + antibody_id +
                      "' has no structure");
    }
    auto [it, inserted] = by_antibody.try_emplace(antibody_id);
    LabeledAntibody& entry = it->second;
    if (inserted) {
      entry.antibody_id = antibody_id;
      entry.structure = structure;
      entry.labels.assign(structure->size(), -1);
    }
    const int64_t index = io::parse_int(f[2], where + ": residue_index");
    const int64_t label = io::parse_int(f[3], where + ": label");
    if (label != 0 && label != 1)
      throw DataError(where + ": label must be 0 or 1");
    bool matched = false;
    for (size_t r = 0; r < structure->residues.size(); ++r) {
      if (structure->residues[r].chain_id == f[1] &&
          structure->residues[r].index == index) {
        entry.labels[r] = static_cast<int>(label);
        matched = true;
        break;
      }
    }
    if (!matched)
      throw DataError(where + ": no residue (" + f[1] + ", " +
                      std::to_string(index) + ") in structure '" +
                      antibody_id + "'");
  }
  std::vector<LabeledAntibody> out;
  out.reserve(by_antibody.size());
  for (auto& [id, entry] : by_antibody) out.push_back(std::move(entry));
  return out;
}

std::vector<double> head_forward(const Model& base, const ParatopeHead& head,
                                 const geom::BackboneStructure& structure,
                                 model::StructureCache* cache) {
  Tape tape(/*recording=*/false);
  Tensor e = base.embeddings_for(tape, structure, cache);
  return head.probabilities(tape, e).values();
}

namespace {

Tensor masked_bce(Tape& tape, const Tensor& logits,
                  const std::vector<int>& labels) {
  // -[y log sigma(z) + (1-y) log sigma(-z)] over labeled residues
  std::vector<int64_t> rows;
  std::vector<double> sign;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    rows.push_back(static_cast<int64_t>(i));
    sign.push_back(labels[i] == 1 ? 1.0 : -1.0);
  }
  if (rows.empty()) throw DomainError("bce: no labeled residues");
  const int64_t count = static_cast<int64_t>(rows.size());
  Tensor picked = tape.gather_rows(logits, rows);  // (m, 1)
  Tensor signs = Tensor::from_values({count, 1}, std::move(sign));
  Tensor signed_logits = tape.mul(picked, signs);
  return tape.scale(tape.mean(tape.log_sigmoid(signed_logits)), -1.0);
}

}  // namespace

HeadTrainResult train_head(const Model& base, ParatopeHead& head,
                           const std::vector<LabeledAntibody>& labeled,
                           const HeadTrainConfig& config,
                           model::StructureCache* cache) {
  if (base.encoder_requires_grad())
    throw UsageError("train_head: base model must be frozen");
  int64_t n_pos = 0, n_neg = 0;
  for (const LabeledAntibody& ab : labeled)
    for (int l : ab.labels) {
      n_pos += l == 1;
      n_neg += l == 0;
    }
  if (n_pos == 0 || n_neg == 0)
    throw DomainError("train_head: need at least one positive and one "
                      "negative residue overall");

  trainer::AdamW optimizer(head.params, trainer::FreezeMask::none(),
                           config.optimizer);
  HeadTrainResult result;
  model::StructureCache local_cache;
  if (cache == nullptr) cache = &local_cache;

  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    int64_t count = 0;
    for (const LabeledAntibody& ab : labeled) {
      optimizer.zero_grad();
      Tape tape;
      Tensor e = base.embeddings_for(tape, *ab.structure, cache);
      Tensor loss = masked_bce(tape, head.logits(tape, e), ab.labels);
      loss_sum += loss.item();
      ++count;
      tape.backward(loss);
      optimizer.step();
    }
    result.loss_curve.push_back(loss_sum / static_cast<double>(count));
  }
  return result;
}

HeadEvaluation evaluate_head(const Model& base, const ParatopeHead& head,
                             const std::vector<LabeledAntibody>& test_set,
                             model::StructureCache* cache) {
  std::vector<int> labels;
  std::vector<double> scores;
  model::StructureCache local_cache;
  if (cache == nullptr) cache = &local_cache;
  for (const LabeledAntibody& ab : test_set) {
    const std::vector<double> probs =
        head_forward(base, head, *ab.structure, cache);
    for (size_t i = 0; i < ab.labels.size(); ++i) {
      if (ab.labels[i] < 0) continue;
      labels.push_back(ab.labels[i]);
      scores.push_back(probs[i]);
    }
  }
  HeadEvaluation out;
  out.n_residues = static_cast<int64_t>(labels.size());
  out.roc = evalkit::roc_curve(labels, scores);
  out.roc_auc = out.roc.auc;
  out.pr = evalkit::pr_curve(labels, scores);
  out.average_precision = out.pr.average_precision;
  return out;
}

}  // namespace prefopt::paratope
