#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/structure.hpp"

namespace prefopt::data {

enum class ScoreType { kNegLogKd, kLogEnrichment };

ScoreType score_type_from_string(const std::string& s);
std::string score_type_to_string(ScoreType t);

struct VariantRecord {
  std::string assay_id;
  std::string variant_id;
  std::string heavy_chain_seq;
  std::string antigen_seq;
  double binding_score = 0.0;
  ScoreType score_type = ScoreType::kNegLogKd;
  std::string structure_id;

  // Token stream: heavy chain followed by antigen, matching the structure's
  // chain order (antibody chain "H" sorts first).
  std::string full_sequence() const { return heavy_chain_seq + antigen_seq; }
};

struct AssayGroup {
  std::string assay_id;
  std::vector<size_t> rows;  // indices into Dataset::records, file order
};

struct Dataset {
  std::vector<VariantRecord> records;
  std::vector<AssayGroup> assays;  // first-appearance order

  static Dataset from_records(std::vector<VariantRecord> records);
  const AssayGroup* find_assay(const std::string& assay_id) const;
  size_t size() const { return records.size(); }
};

// Exact header:
// assay_id,variant_id,heavy_chain_seq,antigen_seq,binding_score,score_type,structure_id
extern const std::array<const char*, 7> kAssayCsvHeader;

Dataset load_assays(const std::string& csv_path);
std::string dataset_to_csv(const Dataset& dataset);
void save_assays(const Dataset& dataset, const std::string& csv_path);

enum class SplitMode { kSupervised, kZeroShot };

struct DatasetSplit {
  SplitMode mode = SplitMode::kSupervised;
  uint64_t seed = 0;
  std::vector<std::string> holdout_assays;
  std::vector<size_t> train, val, test;  // record indices, ascending
  std::vector<std::string> flags;        // e.g. tiny assays folded into train
};

// Per-assay permutation then contiguous cuts: floor(r0*n) to train,
// floor(r1*n) to test, remainder to validation. Ratios are ordered
// (train, test, validation). Assays with n < 3 go entirely to train, flagged.
DatasetSplit split_supervised(const Dataset& dataset,
                              std::array<double, 3> ratios, uint64_t seed);

// Holdout assays entirely to test; remaining assays split 85/15 train/val
// per assay (floor on train).
DatasetSplit split_zero_shot(const Dataset& dataset,
                             const std::vector<std::string>& holdout_assays,
                             uint64_t seed);

std::string split_to_json(const Dataset& dataset, const DatasetSplit& split);
DatasetSplit split_from_json(const Dataset& dataset, const std::string& text);

// --- synthetic oracle ------------------------------------------------------

struct SyntheticOracleConfig {
  uint64_t seed = 0;
  int64_t n_assays = 3;
  int64_t variants_per_assay = 2000;
  int64_t sequence_length = 20;  // heavy chain
  int64_t antigen_length = 10;
  int64_t max_mutations = 5;
  double noise_sd = 0.0;

  void validate() const;
};

// Hidden energy model over the full token stream: per-position residue
// energies plus pairwise contact energies on CA contacts of the assay
// structure. score() is the noiseless ground-truth binding score (higher is
// better); dataset rows add gaussian noise with sd noise_sd.
class SyntheticOracle {
 public:
  SyntheticOracle(const geom::BackboneStructure& structure, Rng rng);

  double score(const std::string& full_sequence) const;

  // hidden internals, exposed so tests can recompute scores independently
  const std::vector<std::array<double, 21>>& position_energy() const {
    return position_energy_;
  }
  const std::vector<std::pair<int64_t, int64_t>>& contacts() const {
    return contacts_;
  }
  const std::array<std::array<double, 21>, 21>& pair_energy() const {
    return pair_energy_;
  }

 private:
  std::vector<std::array<double, 21>> position_energy_;
  std::vector<std::pair<int64_t, int64_t>> contacts_;
  std::array<std::array<double, 21>, 21> pair_energy_;
};

struct SynthResult {
  Dataset dataset;
  std::vector<geom::BackboneStructure> structures;  // one per assay
  std::vector<SyntheticOracle> oracles;             // parallel to structures
};

SynthResult synth_generate(const SyntheticOracleConfig& config);

// Structures addressable by id; the trainer and scorers resolve through this.
struct StructureStore {
  std::map<std::string, geom::BackboneStructure> by_id;

  void add(geom::BackboneStructure s);
  const geom::BackboneStructure& get(const std::string& id) const;
  static StructureStore from_dir(const std::string& dir);
};

}  // namespace prefopt::data
