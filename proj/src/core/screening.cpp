#include "core/screening.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/ioutil.hpp"
#include "core/vocab.hpp"

namespace prefopt::screen {

std::vector<MetricSpec> default_metric_specs() {
  return {
      {"seq_pll", Orientation::kHigherBetter, MetricStage::kStage1},
      {"ddg", Orientation::kLowerBetter, MetricStage::kStage1},
      {"plddt", Orientation::kHigherBetter, MetricStage::kStage2},
      {"delta_sasa", Orientation::kLowerBetter, MetricStage::kStage2},
      {"mpnn_ll", Orientation::kHigherBetter, MetricStage::kStage2},
      {"ptm", Orientation::kHigherBetter, MetricStage::kReportOnly},
      {"iplddt", Orientation::kHigherBetter, MetricStage::kReportOnly},
  };
}

void validate_specs(const std::vector<MetricSpec>& specs) {
  std::set<std::string> names;
  int64_t stage1 = 0;
  for (const MetricSpec& spec : specs) {
    if (!names.insert(spec.name).second)
      throw ConfigError("duplicate metric name '" + spec.name + "'");
    if (spec.name == "ddg" && spec.orientation != Orientation::kLowerBetter)
      throw ConfigError("metric 'ddg' must be lower_better");
    stage1 += spec.stage == MetricStage::kStage1;
  }
  if (stage1 != 2)
    throw ConfigError("exactly two stage-1 metrics required, got " +
                      std::to_string(stage1));
}

namespace {

double oriented(const MetricSpec& spec, double v) {
  return spec.orientation == Orientation::kHigherBetter ? v : -v;
}

double metric_value(const CandidateScore& c, const MetricSpec& spec) {
  auto it = c.values.find(spec.name);
  if (it == c.values.end())
    throw DataError("candidate '" + c.variant_id + "' lacks metric '" +
                    spec.name + "'");
  return it->second;
}

}  // namespace

Stage1Result stage1_filter(const std::vector<CandidateScore>& candidates,
                           const std::vector<MetricSpec>& specs,
                           double quantile) {
  validate_specs(specs);
  if (candidates.empty()) throw DomainError("stage1_filter: no candidates");
  if (!(quantile > 0.0) || quantile > 1.0)
    throw ConfigError("stage1_filter: quantile must be in (0, 1]");

  const size_t n = candidates.size();
  const size_t cut = static_cast<size_t>(
      std::ceil(quantile * static_cast<double>(n)));
  Stage1Result result;
  std::vector<char> pass(n, 1);
  for (const MetricSpec& spec : specs) {
    if (spec.stage != MetricStage::kStage1) continue;
    std::vector<double> values(n);
    for (size_t i = 0; i < n; ++i)
      values[i] = oriented(spec, metric_value(candidates[i], spec));
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const double threshold = sorted[cut - 1];
    if (sorted.front() == sorted.back())
      result.flags.push_back("metric '" + spec.name +
                             "' fully tied; all candidates pass");
    for (size_t i = 0; i < n; ++i)
      if (values[i] < threshold) pass[i] = 0;  // boundary ties stay in
  }
  for (size_t i = 0; i < n; ++i)
    if (pass[i]) result.survivors.push_back(i);
  return result;
}

std::vector<size_t> pareto_front(const std::vector<CandidateScore>& candidates,
                                 const std::vector<MetricSpec>& metrics) {
  if (candidates.empty()) return {};
  const size_t n = candidates.size();
  const size_t m = metrics.size();
  if (m == 0) throw ConfigError("pareto_front: no metrics given");
  std::vector<std::vector<double>> pts(n, std::vector<double>(m));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j)
      pts[i][j] = oriented(metrics[j], metric_value(candidates[i], metrics[j]));

  std::vector<size_t> front;
  for (size_t i = 0; i < n; ++i) {
    bool dominated = false;
    for (size_t j = 0; j < n && !dominated; ++j) {
      if (i == j) continue;
      bool all_geq = true, any_gt = false;
      for (size_t k = 0; k < m; ++k) {
        if (pts[j][k] < pts[i][k]) {
          all_geq = false;
          break;
        }
        if (pts[j][k] > pts[i][k]) any_gt = true;
      }
      dominated = all_geq && any_gt;
    }
    if (!dominated) front.push_back(i);
  }
  std::sort(front.begin(), front.end(), [&](size_t a, size_t b) {
    return candidates[a].variant_id < candidates[b].variant_id;
  });
  return front;
}

PipelineResult run_pipeline(const std::vector<Candidate>& candidates,
                            const geom::BackboneStructure& structure,
                            ScorerRegistry& registry,
                            const std::vector<MetricSpec>& specs,
                            const PipelineConfig& config) {
  validate_specs(specs);
  for (const MetricSpec& spec : specs)
    if (registry.find(spec.name) == registry.end())
      throw ConfigError("no scorer registered for metric '" + spec.name + "'");
  {
    std::set<std::string> ids;
    for (const Candidate& c : candidates)
      if (!ids.insert(c.variant_id).second)
        throw DataError("duplicate candidate variant_id '" + c.variant_id +
                        "'");
  }

  PipelineResult result;
  result.counts.candidates = static_cast<int64_t>(candidates.size());
  result.table.resize(candidates.size());
  std::map<std::string, size_t> row_of;
  for (size_t i = 0; i < candidates.size(); ++i) {
    result.table[i].variant_id = candidates[i].variant_id;
    row_of[candidates[i].variant_id] = i;
  }
  std::vector<char> alive(candidates.size(), 1);

  auto run_metric = [&](const MetricSpec& spec,
                        const std::vector<Candidate>& subset) {
    Scorer& scorer = *registry.at(spec.name);
    const ScoreOutcome outcome = scorer.score(subset, structure);
    for (const Candidate& c : subset) {
      const size_t row = row_of.at(c.variant_id);
      auto vit = outcome.values.find(c.variant_id);
      if (vit != outcome.values.end() && std::isfinite(vit->second)) {
        result.table[row].values[spec.name] = vit->second;
        result.table[row].provenance[spec.name] = scorer.id();
        continue;
      }
      auto fit = outcome.failures.find(c.variant_id);
      const std::string reason =
          fit != outcome.failures.end()
              ? fit->second
              : std::string("no value returned");
      if (alive[row]) {
        alive[row] = 0;
        result.dropped.push_back(
            {c.variant_id, spec.name + " (" + scorer.id() + "): " + reason});
      }
    }
  };

  // stage 1 on everything
  std::vector<Candidate> stage1_subset = candidates;
  result.counts.stage1_scored = static_cast<int64_t>(stage1_subset.size());
  for (const MetricSpec& spec : specs)
    if (spec.stage == MetricStage::kStage1) run_metric(spec, stage1_subset);

  std::vector<CandidateScore> filter_input;
  std::vector<size_t> filter_rows;
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (!alive[i]) continue;
    filter_input.push_back(result.table[i]);
    filter_rows.push_back(i);
  }
  if (filter_input.empty())
    throw DomainError("run_pipeline: every candidate failed stage-1 scoring");

  const Stage1Result stage1 =
      stage1_filter(filter_input, specs, config.quantile);
  result.flags = stage1.flags;
  std::vector<Candidate> survivors;
  for (size_t idx : stage1.survivors) {
    const size_t row = filter_rows[idx];
    survivors.push_back(candidates[row]);
    result.stage1_survivors.push_back(candidates[row].variant_id);
  }
  result.counts.stage1_survivors = static_cast<int64_t>(survivors.size());

  // stage 2 and report-only channels on survivors only
  result.counts.stage2_scored = static_cast<int64_t>(survivors.size());
  for (const MetricSpec& spec : specs)
    if (spec.stage != MetricStage::kStage1) run_metric(spec, survivors);

  std::vector<MetricSpec> frontier;
  for (const MetricSpec& spec : specs)
    if (spec.stage != MetricStage::kReportOnly) frontier.push_back(spec);

  std::vector<CandidateScore> panel_input;
  for (const Candidate& c : survivors) {
    const size_t row = row_of.at(c.variant_id);
    if (alive[row]) panel_input.push_back(result.table[row]);
  }
  for (size_t idx : pareto_front(panel_input, frontier))
    result.panel.push_back(panel_input[idx].variant_id);
  result.counts.panel = static_cast<int64_t>(result.panel.size());
  return result;
}

// --- surrogates --------------------------------------------------------------

namespace {

constexpr size_t kPositionClasses = 32;

int64_t residue_index(char c) {
  return model::Vocabulary::instance().index_of(c);
}

// Kyte-Doolittle hydropathy; X neutral.
double hydropathy(char c) {
  switch (c) {
    case 'A': return 1.8;
    case 'C': return 2.5;
    case 'D': return -3.5;
    case 'E': return -3.5;
    case 'F': return 2.8;
    case 'G': return -0.4;
    case 'H': return -3.2;
    case 'I': return 4.5;
    case 'K': return -3.9;
    case 'L': return 3.8;
    case 'M': return 1.9;
    case 'N': return -3.5;
    case 'P': return -1.6;
    case 'Q': return -3.5;
    case 'R': return -4.5;
    case 'S': return -0.8;
    case 'T': return -0.7;
    case 'V': return 4.2;
    case 'W': return -0.9;
    case 'Y': return -1.3;
    default: return 0.0;
  }
}

std::vector<std::array<double, 21>> seeded_table(Rng rng) {
  std::vector<std::array<double, 21>> table(kPositionClasses);
  for (auto& row : table)
    for (double& v : row) v = rng.gaussian(0.0, 1.0);
  return table;
}

// Mean of per-position hidden weights; the shared core of several channels.
class CompositionScorer : public Scorer {
 public:
  CompositionScorer(std::string metric_id, Rng rng, double offset,
                    double scale, bool squashed)
      : id_("surrogate." + metric_id),
        table_(seeded_table(rng)),
        offset_(offset),
        scale_(scale),
        squashed_(squashed) {}

  std::string id() const override { return id_; }

  ScoreOutcome score(const std::vector<Candidate>& candidates,
                     const geom::BackboneStructure& structure) override {
    ScoreOutcome out;
    for (const Candidate& c : candidates) {
      if (c.sequence.size() != structure.size()) {
        out.failures[c.variant_id] = "sequence length " +
                                     std::to_string(c.sequence.size()) +
                                     " does not match the structure";
        continue;
      }
      double acc = 0.0;
      for (size_t i = 0; i < c.sequence.size(); ++i)
        acc += table_[i % kPositionClasses][static_cast<size_t>(
            residue_index(c.sequence[i]))];
      acc /= static_cast<double>(c.sequence.size());
      out.values[c.variant_id] =
          squashed_ ? offset_ + scale_ * std::tanh(acc) : offset_ + scale_ * acc;
    }
    return out;
  }

 private:
  std::string id_;
  std::vector<std::array<double, 21>> table_;
  double offset_, scale_;
  bool squashed_;
};

// Signed hydropathy delta against the wild type on mutated positions.
class DeltaSasaSurrogate : public Scorer {
 public:
  DeltaSasaSurrogate(Rng rng, std::string wildtype)
      : wildtype_(std::move(wildtype)) {
    weights_.resize(kPositionClasses);
    for (double& w : weights_) w = 1.0 + 0.3 * rng.gaussian();
  }

  std::string id() const override { return "surrogate.delta_sasa"; }

  ScoreOutcome score(const std::vector<Candidate>& candidates,
                     const geom::BackboneStructure& structure) override {
    ScoreOutcome out;
    (void)structure;
    for (const Candidate& c : candidates) {
      if (c.sequence.size() != wildtype_.size()) {
        out.failures[c.variant_id] = "length differs from the wild type";
        continue;
      }
      double delta = 0.0;
      for (size_t i = 0; i < c.sequence.size(); ++i) {
        if (c.sequence[i] == wildtype_[i]) continue;
        delta += (hydropathy(wildtype_[i]) - hydropathy(c.sequence[i])) *
                 weights_[i % kPositionClasses];
      }
      out.values[c.variant_id] = delta;
    }
    return out;
  }

 private:
  std::string wildtype_;
  std::vector<double> weights_;
};

}  // namespace

DdgSurrogate::DdgSurrogate(uint64_t seed, std::string wildtype)
    : wildtype_(std::move(wildtype)) {
  Rng rng(seed);
  position_energy_ = seeded_table(rng.fork("position"));
  Rng pair_rng = rng.fork("pair");
  for (auto& row : pair_energy_)
    for (double& v : row) v = pair_rng.gaussian(0.0, 0.3);
  for (size_t a = 0; a < 21; ++a)
    for (size_t b = 0; b < a; ++b) pair_energy_[a][b] = pair_energy_[b][a];
}

double DdgSurrogate::hidden_energy(
    const std::string& sequence,
    const geom::BackboneStructure& structure) const {
  if (sequence.size() != structure.size())
    throw DimensionError("ddg surrogate: sequence does not match structure");
  double energy = 0.0;
  for (size_t i = 0; i < sequence.size(); ++i)
    energy += position_energy_[i % kPositionClasses]
                              [static_cast<size_t>(residue_index(sequence[i]))];
  constexpr double kContactCutoff = 8.0;
  for (size_t i = 0; i < structure.size(); ++i)
    for (size_t j = i + 3; j < structure.size(); ++j)
      if ((structure.residues[i].ca - structure.residues[j].ca).norm() <
          kContactCutoff)
        energy += pair_energy_[static_cast<size_t>(residue_index(sequence[i]))]
                              [static_cast<size_t>(residue_index(sequence[j]))];
  return energy;
}

ScoreOutcome DdgSurrogate::score(const std::vector<Candidate>& candidates,
                                 const geom::BackboneStructure& structure) {
  ScoreOutcome out;
  double wt_energy = 0.0;
  bool wt_ok = true;
  try {
    wt_energy = hidden_energy(wildtype_, structure);
  } catch (const DimensionError&) {
    wt_ok = false;
  }
  for (const Candidate& c : candidates) {
    if (!wt_ok) {
      out.failures[c.variant_id] = "wild type does not match the structure";
      continue;
    }
    try {
      out.values[c.variant_id] = hidden_energy(c.sequence, structure) - wt_energy;
    } catch (const DimensionError& e) {
      out.failures[c.variant_id] = e.what();
    }
  }
  return out;
}

ScorerRegistry surrogate_scorers(uint64_t seed, const std::string& wildtype) {
  Rng root(seed);
  ScorerRegistry registry;
  registry["seq_pll"] = std::make_shared<CompositionScorer>(
      "seq_pll", root.fork("seq_pll"), 0.0, 1.0, false);
  registry["mpnn_ll"] = std::make_shared<CompositionScorer>(
      "mpnn_ll", root.fork("mpnn_ll"), 0.0, 1.0, false);
  registry["plddt"] = std::make_shared<CompositionScorer>(
      "plddt", root.fork("plddt"), 70.0, 15.0, true);
  registry["ptm"] = std::make_shared<CompositionScorer>(
      "ptm", root.fork("ptm"), 0.7, 0.2, true);
  registry["iplddt"] = std::make_shared<CompositionScorer>(
      "iplddt", root.fork("iplddt"), 65.0, 20.0, true);
  registry["delta_sasa"] =
      std::make_shared<DeltaSasaSurrogate>(root.fork("delta_sasa"), wildtype);
  registry["ddg"] =
      std::make_shared<DdgSurrogate>(root.fork("ddg").seed(), wildtype);
  return registry;
}

namespace {

class CsvScorer : public Scorer {
 public:
  CsvScorer(std::string metric, const std::string& path)
      : metric_(std::move(metric)), path_(path) {
    const io::CsvTable table =
        io::read_csv(path, {"variant_id", "metric", "value"});
    for (size_t i = 0; i < table.rows.size(); ++i) {
      const auto& f = table.rows[i];
      if (f[1] != metric_) continue;
      values_[f[0]] = io::parse_double(
          f[2], path + ":" + std::to_string(i + 2) + ": value");
    }
  }

  std::string id() const override { return "csv:" + path_; }

  ScoreOutcome score(const std::vector<Candidate>& candidates,
                     const geom::BackboneStructure&) override {
    ScoreOutcome out;
    for (const Candidate& c : candidates) {
      auto it = values_.find(c.variant_id);
      if (it == values_.end())
        out.failures[c.variant_id] = "no '" + metric_ + "' row in " + path_;
      else
        out.values[c.variant_id] = it->second;
    }
    return out;
  }

 private:
  std::string metric_;
  std::string path_;
  std::map<std::string, double> values_;
};

}  // namespace

std::shared_ptr<Scorer> csv_scorer(const std::string& metric,
                                   const std::string& csv_path) {
  return std::make_shared<CsvScorer>(metric, csv_path);
}

std::string panel_to_json(const PipelineResult& result,
                          const std::vector<MetricSpec>& specs,
                          uint64_t config_fingerprint) {
  using nlohmann::json;
  json panel = json::array();
  std::map<std::string, const CandidateScore*> by_id;
  for (const CandidateScore& c : result.table) by_id[c.variant_id] = &c;
  for (const std::string& id : result.panel) {
    const CandidateScore& c = *by_id.at(id);
    json metrics;
    for (const MetricSpec& spec : specs) {
      auto it = c.values.find(spec.name);
      metrics[spec.name] = it == c.values.end() ? json(nullptr) : json(it->second);
    }
    panel.push_back({{"variant_id", id}, {"metrics", metrics}});
  }
  json dropped = json::array();
  for (const DroppedCandidate& d : result.dropped)
    dropped.push_back({{"variant_id", d.variant_id}, {"reason", d.reason}});
  return json{{"config_fingerprint", config_fingerprint},
              {"counts",
               {{"candidates", result.counts.candidates},
                {"stage1_scored", result.counts.stage1_scored},
                {"stage1_survivors", result.counts.stage1_survivors},
                {"stage2_scored", result.counts.stage2_scored},
                {"panel", result.counts.panel}}},
              {"panel", panel},
              {"dropped", dropped},
              {"flags", result.flags}}
      .dump(2);
}

std::string score_table_to_csv(const PipelineResult& result,
                               const std::vector<MetricSpec>& specs) {
  std::ostringstream out;
  std::vector<std::string> header = {"variant_id"};
  for (const MetricSpec& spec : specs) header.push_back(spec.name);
  out << io::join_csv(header) << "\n";
  for (const CandidateScore& c : result.table) {
    std::vector<std::string> row = {c.variant_id};
    for (const MetricSpec& spec : specs) {
      auto it = c.values.find(spec.name);
      row.push_back(it == c.values.end() ? "" : io::format_double(it->second));
    }
    out << io::join_csv(row) << "\n";
  }
  return out.str();
}

}  // namespace prefopt::screen
