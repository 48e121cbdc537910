#include "core/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "core/ioutil.hpp"

namespace prefopt::evalkit {

std::vector<double> fractional_ranks(const std::vector<double>& xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i + j)) / 2.0 + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw DimensionError("spearman: length mismatch " +
                         std::to_string(xs.size()) + " vs " +
                         std::to_string(ys.size()));
  if (xs.size() < 2)
    throw DomainError("spearman: need at least 2 observations");
  for (double v : xs)
    if (!std::isfinite(v)) throw DomainError("spearman: non-finite value");
  for (double v : ys)
    if (!std::isfinite(v)) throw DomainError("spearman: non-finite value");

  const std::vector<double> rx = fractional_ranks(xs);
  const std::vector<double> ry = fractional_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DomainError("spearman: zero rank variance, correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

double fold_change(double pkd_mut, double pkd_wt) {
  if (!std::isfinite(pkd_mut) || !std::isfinite(pkd_wt))
    throw DomainError("fold_change: non-finite pKd");
  return std::pow(10.0, pkd_mut - pkd_wt);
}

PrecisionAtK precision_at_k(std::vector<RankedRow> rows, int64_t k,
                            double threshold_fold, bool enrichment_scores) {
  if (enrichment_scores)
    throw DomainError(
        "precision_at_k: enrichment scores cannot express fold change");
  if (rows.empty()) throw DomainError("precision_at_k: empty table");
  if (k < 1) throw DomainError("precision_at_k: k must be >= 1");
  for (const RankedRow& r : rows)
    if (!r.pkd_wildtype.has_value())
      throw DomainError("precision_at_k: row '" + r.variant_id +
                        "' lacks pkd_wildtype");

  std::sort(rows.begin(), rows.end(), [](const RankedRow& a, const RankedRow& b) {
    if (a.model_score != b.model_score) return a.model_score > b.model_score;
    return a.variant_id < b.variant_id;
  });
  PrecisionAtK out;
  const size_t top = std::min<size_t>(static_cast<size_t>(k), rows.size());
  out.truncated = top < static_cast<size_t>(k);
  size_t hits = 0;
  for (size_t i = 0; i < top; ++i)
    if (fold_change(rows[i].binding_score, *rows[i].pkd_wildtype) >=
        threshold_fold)
      ++hits;
  out.value = static_cast<double>(hits) / static_cast<double>(top);
  return out;
}

namespace {

void check_labels(const std::vector<int>& labels,
                  const std::vector<double>& scores, const char* op) {
  if (labels.size() != scores.size())
    throw DimensionError(std::string(op) + ": labels and scores differ in length");
  if (labels.empty()) throw DomainError(std::string(op) + ": empty input");
  for (int l : labels)
    if (l != 0 && l != 1)
      throw DomainError(std::string(op) + ": labels must be 0/1");
  for (double s : scores)
    if (!std::isfinite(s))
      throw DomainError(std::string(op) + ": non-finite score");
}

}  // namespace

double roc_auc(const std::vector<int>& labels,
               const std::vector<double>& scores) {
  check_labels(labels, scores, "roc_auc");
  int64_t n_pos = 0;
  for (int l : labels) n_pos += l;
  const int64_t n_neg = static_cast<int64_t>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DomainError("roc_auc: needs both classes present");
  const std::vector<double> ranks = fractional_ranks(scores);
  double rank_sum = 0.0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) rank_sum += ranks[i];
  const double u = rank_sum - static_cast<double>(n_pos) *
                                  (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

RocCurve roc_curve(const std::vector<int>& labels,
                   const std::vector<double>& scores) {
  check_labels(labels, scores, "roc_curve");
  RocCurve out;
  out.auc = roc_auc(labels, scores);
  int64_t n_pos = 0;
  for (int l : labels) n_pos += l;
  const int64_t n_neg = static_cast<int64_t>(labels.size()) - n_pos;

  std::vector<size_t> order(labels.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]];
      fp += 1 - labels[order[j]];
      ++j;
    }
    out.threshold.push_back(scores[order[i]]);
    out.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    out.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
    i = j;
  }
  return out;
}

PrCurve pr_curve(const std::vector<int>& labels,
                 const std::vector<double>& scores) {
  check_labels(labels, scores, "pr_curve");
  int64_t total_pos = 0;
  for (int l : labels) total_pos += l;
  PrCurve out;
  if (total_pos == 0 ||
      total_pos == static_cast<int64_t>(labels.size())) {
    out.single_class = true;
  }
  if (total_pos == 0) {
    // no positives: precision identically 0, recall undefined; emit nothing
    out.average_precision = 0.0;
    return out;
  }

  std::vector<size_t> order(labels.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  int64_t tp = 0, seen = 0;
  double ap = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    int64_t group_tp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_tp += labels[order[j]];
      ++j;
    }
    const double recall_prev =
        static_cast<double>(tp) / static_cast<double>(total_pos);
    tp += group_tp;
    seen += static_cast<int64_t>(j - i);
    const double recall =
        static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(seen);
    out.recall.push_back(recall);
    out.precision.push_back(precision);
    ap += (recall - recall_prev) * precision;
    i = j;
  }
  out.average_precision = ap;
  return out;
}

double delta_g_from_kd(double kd_molar, const ThermoContext& ctx) {
  if (!(kd_molar > 0.0))
    throw DomainError("delta_g_from_kd: Kd must be positive molar");
  if (!(ctx.temperature > 0.0))
    throw DomainError("delta_g_from_kd: temperature must be positive");
  return ctx.gas_constant * ctx.temperature * std::log(kd_molar);
}

AssayReport per_assay_report(const std::vector<AssayRows>& assays, int64_t k,
                             double threshold_fold) {
  AssayReport report;
  double spearman_sum = 0.0, precision_sum = 0.0;
  int64_t spearman_n = 0, precision_n = 0;
  for (const AssayRows& assay : assays) {
    AssayReportRow row;
    row.assay_id = assay.assay_id;
    row.n = static_cast<int64_t>(assay.rows.size());
    if (assay.rows.size() < 2) {
      row.flags.push_back("too_few_variants");
    } else {
      std::vector<double> model, binding;
      for (const RankedRow& r : assay.rows) {
        model.push_back(r.model_score);
        binding.push_back(r.binding_score);
      }
      try {
        row.spearman = spearman(model, binding);
        spearman_sum += *row.spearman;
        ++spearman_n;
      } catch (const DomainError&) {
        row.flags.push_back("spearman_undefined");
      }
      if (assay.enrichment_scores) {
        row.flags.push_back("enrichment_excluded");
      } else {
        try {
          const PrecisionAtK p =
              precision_at_k(assay.rows, k, threshold_fold, false);
          row.precision_at_10 = p.value;
          precision_sum += p.value;
          ++precision_n;
          if (p.truncated) row.flags.push_back("fewer_than_k");
        } catch (const DomainError&) {
          row.flags.push_back("missing_wildtype");
        }
      }
    }
    report.rows.push_back(std::move(row));
  }
  report.aggregate.assay_id = "mean";
  report.aggregate.n = static_cast<int64_t>(assays.size());
  if (spearman_n > 0)
    report.aggregate.spearman = spearman_sum / static_cast<double>(spearman_n);
  if (precision_n > 0)
    report.aggregate.precision_at_10 =
        precision_sum / static_cast<double>(precision_n);
  return report;
}

namespace {

std::string join_flags(const std::vector<std::string>& flags) {
  std::string out;
  for (size_t i = 0; i < flags.size(); ++i) {
    if (i) out.push_back(';');
    out += flags[i];
  }
  return out;
}

std::string opt_str(const std::optional<double>& v) {
  return v ? io::format_double(*v) : std::string();
}

}  // namespace

std::string report_to_csv(const AssayReport& report) {
  std::ostringstream out;
  out << "assay_id,n,spearman,precision_at_10,flags\n";
  auto emit = [&](const AssayReportRow& row) {
    out << io::join_csv({row.assay_id, std::to_string(row.n),
                         opt_str(row.spearman), opt_str(row.precision_at_10),
                         join_flags(row.flags)})
        << "\n";
  };
  for (const AssayReportRow& row : report.rows) emit(row);
  emit(report.aggregate);
  return out.str();
}

std::string report_to_json(const AssayReport& report) {
  using nlohmann::json;
  auto row_json = [](const AssayReportRow& row) {
    json j{{"assay_id", row.assay_id}, {"n", row.n}, {"flags", row.flags}};
    j["spearman"] = row.spearman ? json(*row.spearman) : json(nullptr);
    j["precision_at_10"] =
        row.precision_at_10 ? json(*row.precision_at_10) : json(nullptr);
    return j;
  };
  json rows = json::array();
  for (const AssayReportRow& row : report.rows) rows.push_back(row_json(row));
  return json{{"assays", rows}, {"aggregate", row_json(report.aggregate)}}
      .dump(2);
}

std::string roc_curve_to_csv(const RocCurve& curve) {
  std::ostringstream out;
  out << "threshold,tpr,fpr\n";
  for (size_t i = 0; i < curve.threshold.size(); ++i)
    out << io::format_double(curve.threshold[i]) << ","
        << io::format_double(curve.tpr[i]) << ","
        << io::format_double(curve.fpr[i]) << "\n";
  return out.str();
}

std::string pr_curve_to_csv(const PrCurve& curve) {
  std::ostringstream out;
  out << "recall,precision\n";
  for (size_t i = 0; i < curve.recall.size(); ++i)
    out << io::format_double(curve.recall[i]) << ","
        << io::format_double(curve.precision[i]) << "\n";
  return out.str();
}

}  // namespace prefopt::evalkit
