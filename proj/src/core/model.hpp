#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/structure.hpp"
#include "core/tensor.hpp"
#include "core/vocab.hpp"

namespace prefopt::model {

struct ModelConfig {
  int64_t d = 64;            // embedding width
  int64_t heads = 4;         // attention heads; d % heads == 0
  int64_t k_neighbors = 8;   // nearest-CA neighbors in the featurizer
  int64_t vocab_size = Vocabulary::kSize;

  int64_t head_dim() const;
  int64_t feature_width() const {
    return static_cast<int64_t>(geom::kDihedralFeatures) + k_neighbors;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamGroup { kEncoder, kDecoder };

struct Param {
  std::string name;
  ParamGroup group;
  ad::Tensor tensor;
};

// Which part of the token stream enters the log-likelihood sums: the full
// heavy-chain+antigen stream, or only residues of the antibody chain "H".
enum class ScoreSpan { kFull, kAntibodyOnly };

ScoreSpan score_span_from_string(const std::string& s);
std::string score_span_to_string(ScoreSpan span);

// Caches keyed by structure id. Features are parameter-independent;
// embeddings are reused only while the encoder is entirely frozen.
struct StructureCache {
  std::map<std::string, geom::ResidueFeatures> features;
  std::map<std::string, ad::Tensor> embeddings;
};

struct LogLik {
  ad::Tensor sum_ll;   // scalar, differentiable when on a recording tape
  ad::Tensor mean_ll;  // sum_ll / |scored span|
  double sum() const { return sum_ll.item(); }
  double mean() const { return mean_ll.item(); }
};

// Miniature inverse-folding model: linear feature projection + one k-NN
// neighborhood mean-mixing layer (encoder), token embeddings + one causal
// multi-head self-attention block over [token embedding | structure
// embedding] rows + linear output head (decoder).
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);
  static Model zero_initialized(ModelConfig cfg);

  const ModelConfig& config() const { return config_; }
  uint64_t init_seed() const { return init_seed_; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  ad::Tensor param(const std::string& name) const;
  bool has_param(const std::string& name) const;

  int64_t total_param_count() const;
  int64_t group_param_count(ParamGroup g) const;
  bool encoder_requires_grad() const;

  // E = f_enc(features): n x d, deterministic in (features, params).
  ad::Tensor encode(ad::Tape& tape, const geom::ResidueFeatures& feat) const;

  // Per-position log-probability rows (|y| x vocab). Row i conditions on the
  // structure embedding row i and tokens < i (BOS at i = 0).
  ad::Tensor decode_logprobs(ad::Tape& tape, const ad::Tensor& embeddings,
                             const std::vector<int64_t>& tokens) const;

  // Embeddings for a structure, via the cache when legal (encoder frozen).
  ad::Tensor embeddings_for(ad::Tape& tape, const geom::BackboneStructure& s,
                            StructureCache* cache) const;

  LogLik sequence_loglik(ad::Tape& tape, const geom::BackboneStructure& s,
                         const std::string& sequence,
                         ScoreSpan span = ScoreSpan::kFull,
                         StructureCache* cache = nullptr) const;

 private:
  Model(ModelConfig cfg, uint64_t seed, bool zero);
  void add_param(const std::string& name, ParamGroup group, ad::Shape shape,
                 double init_sd, Rng* rng);

  ModelConfig config_;
  uint64_t init_seed_ = 0;
  std::vector<Param> params_;
  std::map<std::string, size_t> by_name_;
};

// Teacher-forced per-position rows for the wild-type stream (no gradients).
ad::Tensor teacher_forced_rows(const Model& m,
                               const geom::BackboneStructure& s,
                               const std::string& wildtype,
                               StructureCache* cache = nullptr);

// Positions p in region_mask where some residue token t != wildtype[p]
// (BOS/PAD excluded) has a strictly higher teacher-forced log-probability
// than the wild-type token. Sorted ascending.
std::vector<int64_t> mutable_pool(const Model& m,
                                  const geom::BackboneStructure& s,
                                  const std::string& wildtype,
                                  const std::vector<int64_t>& region_mask,
                                  StructureCache* cache = nullptr);

struct GenerateConfig {
  int64_t max_subs = 5;
  int64_t count = 1;
  double temperature = 1.0;
  uint64_t seed = 0;
};

struct GeneratedVariant {
  std::string sequence;
  std::vector<int64_t> positions;  // substituted positions, ascending
};

struct GenerateResult {
  std::vector<GeneratedVariant> variants;
  // Set when fewer distinct variants are reachable than requested; the full
  // reachable set is returned in that case.
  bool exhausted = false;
};

// Samples variants of the wild type differing only at mutable-pool positions,
// 1..max_subs substitutions each, deduplicated, deterministic per seed.
// Substitution count is uniform on 1..max_subs (clamped to the pool size),
// positions are drawn without replacement weighted by their best
// log-likelihood gain, and replacement tokens are drawn from the
// teacher-forced row restricted to improving tokens, tempered.
GenerateResult generate_variants(const Model& m,
                                 const geom::BackboneStructure& s,
                                 const std::string& wildtype,
                                 const std::vector<int64_t>& region_mask,
                                 const GenerateConfig& cfg,
                                 StructureCache* cache = nullptr);

}  // namespace prefopt::model
