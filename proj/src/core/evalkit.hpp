#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace prefopt::evalkit {

// Fractional (average) ranks, 1-based.
std::vector<double> fractional_ranks(const std::vector<double>& xs);

// Spearman rho = Pearson correlation of the rank vectors. Undefined inputs
// (length < 2 or zero rank variance) raise instead of returning 0.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// 10^(pkd_mut - pkd_wt): the Kd ratio between wild type and mutant.
double fold_change(double pkd_mut, double pkd_wt);

struct RankedRow {
  std::string variant_id;
  double model_score = 0.0;
  double binding_score = 0.0;                // pKd for neg_log_kd assays
  std::optional<double> pkd_wildtype;
};

struct PrecisionAtK {
  double value = 0.0;
  bool truncated = false;  // fewer than k rows; computed over all of them
};

// Fraction of the top-k rows by model_score (ties broken by ascending
// variant_id) whose fold change over wild type reaches threshold_fold.
// Enrichment-scored tables are refused: enrichment cannot give fold changes.
PrecisionAtK precision_at_k(std::vector<RankedRow> rows, int64_t k = 10,
                            double threshold_fold = 10.0,
                            bool enrichment_scores = false);

// Rank-statistic (Mann-Whitney) AUC with tie correction.
double roc_auc(const std::vector<int>& labels,
               const std::vector<double>& scores);

struct RocCurve {
  std::vector<double> threshold, tpr, fpr;  // one row per distinct score
  double auc = 0.0;
};
RocCurve roc_curve(const std::vector<int>& labels,
                   const std::vector<double>& scores);

struct PrCurve {
  std::vector<double> recall, precision;
  double average_precision = 0.0;  // step-interpolated sum
  bool single_class = false;
};
PrCurve pr_curve(const std::vector<int>& labels,
                 const std::vector<double>& scores);

struct ThermoContext {
  double gas_constant = 1.9872e-3;  // kcal / (mol K)
  double temperature = 298.15;      // K
};

// Delta G ~= R T ln(Kd), kcal/mol; negative for sub-molar Kd.
double delta_g_from_kd(double kd_molar, const ThermoContext& ctx = {});

struct AssayRows {
  std::string assay_id;
  std::vector<RankedRow> rows;
  bool enrichment_scores = false;
};

struct AssayReportRow {
  std::string assay_id;
  int64_t n = 0;
  std::optional<double> spearman;
  std::optional<double> precision_at_10;
  std::vector<std::string> flags;
};

struct AssayReport {
  std::vector<AssayReportRow> rows;
  AssayReportRow aggregate;  // unweighted mean across assays with values
};

AssayReport per_assay_report(const std::vector<AssayRows>& assays,
                             int64_t k = 10, double threshold_fold = 10.0);

// Emitters; columns exactly (assay_id, n, spearman, precision_at_10, flags).
std::string report_to_csv(const AssayReport& report);
std::string report_to_json(const AssayReport& report);
std::string roc_curve_to_csv(const RocCurve& curve);
std::string pr_curve_to_csv(const PrCurve& curve);

}  // namespace prefopt::evalkit
