#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "core/dataio.hpp"
#include "core/optim.hpp"
#include "core/preference.hpp"

namespace prefopt::trainer {

enum class Objective { kNll, kDpo, kSimpo };

Objective objective_from_string(const std::string& s);
std::string objective_to_string(Objective o);

struct TrainConfig {
  Objective objective = Objective::kSimpo;
  int64_t epochs = 3;
  int64_t batch_size = 32;
  pref::PreferenceHyperparams hp;  // beta 0.1, gamma 0.1
  double delta_min = 0.2;
  double pair_gap_max = std::numeric_limits<double>::infinity();
  int64_t max_pairs = 50000;
  int64_t max_val_pairs = 2000;
  uint64_t seed = 0;
  AdamWConfig optimizer;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
  model::ScoreSpan span = model::ScoreSpan::kFull;
  std::string checkpoint_dir;  // empty: keep checkpoints in memory only
  int64_t eval_every = 1;

  void validate() const;
  uint64_t fingerprint() const;
};

// Uniform sample (without replacement) over all admissible within-assay
// pairs in `subset`: winner - loser >= delta_min, strictly positive, and
// <= gap_max. Returns every admissible pair when there are at most
// max_pairs of them. Deterministic per seed.
std::vector<pref::PreferencePair> sample_pairs(
    const data::Dataset& dataset, const std::vector<size_t>& subset,
    double delta_min, double gap_max, int64_t max_pairs, uint64_t seed);

struct EpochMetrics {
  int64_t epoch = 0;
  std::string split;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double ranking_acc = std::numeric_limits<double>::quiet_NaN();
  double spearman_mean = std::numeric_limits<double>::quiet_NaN();
};

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics);

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  int64_t best_epoch = -1;
  double best_spearman = std::numeric_limits<double>::quiet_NaN();
  std::string best_checkpoint_path;
  std::string final_checkpoint_path;
  std::vector<std::string> warnings;
};

// --- checkpoints -----------------------------------------------------------

struct CheckpointMeta {
  model::ModelConfig dims;
  std::vector<std::string> frozen_names;
  std::string objective = "simpo";
  uint64_t seed = 0;
  uint64_t config_fingerprint = 0;
  int64_t epochs_completed = 0;
  int64_t best_epoch = -1;
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  bool has_optimizer_state = false;
  bool has_reference = false;  // dpo runs store the frozen reference too
};

// Versioned binary container: header JSON, then named tensors as row-major
// 64-bit little-endian values, then optional optimizer state and optional
// reference-model tensors.
void checkpoint_save(const std::string& path, const model::Model& m,
                     const CheckpointMeta& meta, const AdamW* optimizer,
                     const model::Model* reference = nullptr);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  model::Model model;
  int64_t optimizer_t = 0;
  std::vector<AdamW::SlotState> optimizer_slots;
  std::optional<model::Model> reference;
};

LoadedCheckpoint checkpoint_load(const std::string& path);

// Loads tensors from a checkpoint into an existing model; shapes must match.
void checkpoint_load_into(const std::string& path, model::Model& m,
                          CheckpointMeta* meta_out = nullptr,
                          int64_t* optimizer_t = nullptr,
                          std::vector<AdamW::SlotState>* slots = nullptr,
                          std::optional<model::Model>* reference = nullptr);

// --- training loop ---------------------------------------------------------

struct TrainInputs {
  const data::Dataset* dataset = nullptr;
  const data::DatasetSplit* split = nullptr;
  const data::StructureStore* structures = nullptr;
};

// AdamW optimization of the chosen objective with the encoder frozen by
// default. For dpo a reference snapshot is taken at start and never updated;
// for nll the training items are the winners of the sampled pairs.
// Checkpoints are written per epoch when checkpoint_dir is set, with the best
// epoch (highest validation mean per-assay Spearman) retained separately.
// resume_from continues a run bit-exactly from a saved epoch checkpoint.
TrainResult train(model::Model& m, const TrainInputs& inputs,
                  const TrainConfig& config, const FreezeMask& mask,
                  const std::string& resume_from = "");

}  // namespace prefopt::trainer
