#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/structure.hpp"

namespace prefopt::screen {

enum class Orientation { kHigherBetter, kLowerBetter };
enum class MetricStage { kStage1, kStage2, kReportOnly };

struct MetricSpec {
  std::string name;
  Orientation orientation = Orientation::kHigherBetter;
  MetricStage stage = MetricStage::kStage2;
};

// The paper-shaped default channels: stage 1 = sequence plausibility +
// predicted binding energy change; stage 2 = structure confidence, interface
// burial, inverse-folding likelihood; ptm/iplddt ride along as report-only.
std::vector<MetricSpec> default_metric_specs();

// Unique names; ddg must be lower-better; exactly two stage-1 metrics.
void validate_specs(const std::vector<MetricSpec>& specs);

struct Candidate {
  std::string variant_id;
  std::string sequence;  // full token stream
};

struct ScoreOutcome {
  std::map<std::string, double> values;       // by variant_id
  std::map<std::string, std::string> failures;  // by variant_id, reason
};

// Behavioral contract for one metric channel: total over the requested
// candidates or a per-candidate structured failure; deterministic given
// inputs and the declared seed.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string id() const = 0;
  virtual ScoreOutcome score(const std::vector<Candidate>& candidates,
                             const geom::BackboneStructure& structure) = 0;
};

using ScorerRegistry = std::map<std::string, std::shared_ptr<Scorer>>;

struct CandidateScore {
  std::string variant_id;
  std::map<std::string, double> values;      // metric -> value
  std::map<std::string, std::string> provenance;  // metric -> scorer id
};

struct Stage1Result {
  std::vector<size_t> survivors;  // indices, input order
  std::vector<std::string> flags;
};

// Orientation-aware nearest-rank top-quantile cut per stage-1 channel with
// boundary ties included; survivors pass both channels.
Stage1Result stage1_filter(const std::vector<CandidateScore>& candidates,
                           const std::vector<MetricSpec>& specs,
                           double quantile = 0.2);

// Non-dominated set under weak dominance with at least one strict
// inequality, after orientation normalization. Exact duplicates are all
// retained. Result ordered by variant_id.
std::vector<size_t> pareto_front(const std::vector<CandidateScore>& candidates,
                                 const std::vector<MetricSpec>& metrics);

struct PipelineConfig {
  double quantile = 0.2;
  uint64_t seed = 0;
};

struct DroppedCandidate {
  std::string variant_id;
  std::string reason;
};

struct PipelineCounts {
  int64_t candidates = 0;
  int64_t stage1_scored = 0;
  int64_t stage1_survivors = 0;
  int64_t stage2_scored = 0;
  int64_t panel = 0;
};

struct PipelineResult {
  std::vector<CandidateScore> table;        // every candidate, scored metrics
  std::vector<std::string> stage1_survivors;  // variant ids, input order
  std::vector<std::string> panel;             // variant ids, ascending
  std::vector<DroppedCandidate> dropped;
  std::vector<std::string> flags;
  PipelineCounts counts;
};

// Stage-1 scorers run on every candidate; stage-2 and report-only scorers
// run on stage-1 survivors only. The final panel is the Pareto front over
// the frontier metrics (both stage-1 plus the three stage-2 channels).
PipelineResult run_pipeline(const std::vector<Candidate>& candidates,
                            const geom::BackboneStructure& structure,
                            ScorerRegistry& registry,
                            const std::vector<MetricSpec>& specs,
                            const PipelineConfig& config);

// Deterministic stand-ins for the external scorers, driven by seeded hidden
// weights over sequence composition and structure contacts.
ScorerRegistry surrogate_scorers(uint64_t seed, const std::string& wildtype);

// The ddg surrogate's hidden energy, exposed for white-box verification.
class DdgSurrogate : public Scorer {
 public:
  DdgSurrogate(uint64_t seed, std::string wildtype);
  std::string id() const override { return "surrogate.ddg"; }
  ScoreOutcome score(const std::vector<Candidate>& candidates,
                     const geom::BackboneStructure& structure) override;
  double hidden_energy(const std::string& sequence,
                       const geom::BackboneStructure& structure) const;

 private:
  std::string wildtype_;
  std::vector<std::array<double, 21>> position_energy_;  // by i mod 32
  std::array<std::array<double, 21>, 21> pair_energy_;
};

// Reads metric values from a scores CSV (variant_id,metric,value), so
// externally computed channels can replace surrogates without code changes.
std::shared_ptr<Scorer> csv_scorer(const std::string& metric,
                                   const std::string& csv_path);

std::string panel_to_json(const PipelineResult& result,
                          const std::vector<MetricSpec>& specs,
                          uint64_t config_fingerprint);
std::string score_table_to_csv(const PipelineResult& result,
                               const std::vector<MetricSpec>& specs);

}  // namespace prefopt::screen
