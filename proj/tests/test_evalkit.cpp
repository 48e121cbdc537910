#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/evalkit.hpp"
#include "core/rng.hpp"
#include "oracles.hpp"

using namespace prefopt;
using namespace prefopt::evalkit;

TEST_CASE("spearman") {
  SUBCASE("strictly co-monotone pairs give 1.0") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {1, 4, 9, 16}) == doctest::Approx(1.0));
  }

  SUBCASE("exact reversal gives -1.0") {
    CHECK(spearman({1, 2, 3}, {5, 4, 3}) == doctest::Approx(-1.0));
  }

  SUBCASE("x=[1,2,3], y=[1,3,2] gives 0.5") {
    // oracle: Pearson of rank vectors [1,2,3] and [1,3,2]
    CHECK(oracles::spearman({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5));
    CHECK(spearman({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("undefined inputs raise instead of returning zero") {
    CHECK_THROWS_AS(spearman({1.0}, {2.0}), DomainError);
    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), DomainError);
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), DimensionError);
  }

  SUBCASE("ties use fractional ranks") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> xs, ys;
      for (int i = 0; i < 30; ++i) {
        xs.push_back(static_cast<double>(rng.uniform_int(8)));
        ys.push_back(rng.uniform(-1, 1));
      }
      try {
        CHECK(spearman(xs, ys) ==
              doctest::Approx(oracles::spearman(xs, ys)).epsilon(1e-12));
      } catch (const DomainError&) {
        // all-tied draw; undefined by contract
      }
    }
  }

  SUBCASE("invariant under strictly increasing transforms") {
    Rng rng(6);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> xs, ys;
      for (int i = 0; i < 20; ++i) {
        xs.push_back(rng.uniform(-2, 2));
        ys.push_back(rng.uniform(-2, 2));
      }
      const double base = spearman(xs, ys);
      std::vector<double> ex = xs, cube = xs, affine = ys;
      for (double& v : ex) v = std::exp(v);
      for (double& v : cube) v = v * v * v;
      for (double& v : affine) v = 3.0 * v + 7.0;
      CHECK(spearman(ex, ys) == base);
      CHECK(spearman(cube, ys) == base);
      CHECK(spearman(xs, affine) == base);
    }
  }
}

TEST_CASE("fold_change") {
  CHECK(fold_change(9.0, 8.0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(fold_change(8.0, 8.0) == 1.0);
  CHECK(fold_change(7.0, 8.0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(fold_change(std::nan(""), 8.0), DomainError);

  SUBCASE("reciprocity within 1e-12") {
    Rng rng(7);
    for (int rep = 0; rep < 100; ++rep) {
      const double a = rng.uniform(4, 12), b = rng.uniform(4, 12);
      CHECK(std::abs(fold_change(a, b) * fold_change(b, a) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("precision_at_k") {
  auto row = [](const std::string& id, double model, double pkd,
                double pkd_wt) {
    return RankedRow{id, model, pkd, pkd_wt};
  };

  SUBCASE("top-10 all at +1 pKd or more gives 1.0") {
    std::vector<RankedRow> rows;
    for (int i = 0; i < 10; ++i)
      rows.push_back(row("v" + std::to_string(i), 10.0 - i, 9.5, 8.0));
    for (int i = 10; i < 20; ++i)
      rows.push_back(row("v" + std::to_string(i), -1.0 * i, 8.0, 8.0));
    CHECK(precision_at_k(rows).value == 1.0);
  }

  SUBCASE("no improvement gives 0.0") {
    std::vector<RankedRow> rows;
    for (int i = 0; i < 12; ++i)
      rows.push_back(row("v" + std::to_string(i), static_cast<double>(i), 8.0, 8.0));
    CHECK(precision_at_k(rows).value == 0.0);
  }

  SUBCASE("constructed 20-row table matches the brute-force recount") {
    Rng rng(8);
    std::vector<RankedRow> rows;
    for (int i = 0; i < 20; ++i)
      rows.push_back(row("v" + std::to_string(i), rng.uniform(-1, 1),
                         8.0 + rng.uniform(-0.5, 1.6), 8.0));
    const auto result = precision_at_k(rows, 10, 10.0, false);
    // recount: sort desc by (model, id asc), count top 10 with pkd gain >= 1
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.model_score != b.model_score) return a.model_score > b.model_score;
      return a.variant_id < b.variant_id;
    });
    int hits = 0;
    for (int i = 0; i < 10; ++i)
      if (std::pow(10.0, rows[i].binding_score - 8.0) >= 10.0) ++hits;
    CHECK(result.value == doctest::Approx(hits / 10.0).epsilon(1e-15));
  }

  SUBCASE("fewer than k rows computes over all and flags") {
    std::vector<RankedRow> rows = {row("a", 1, 9.5, 8.0), row("b", 0, 8.0, 8.0)};
    const auto result = precision_at_k(rows, 10);
    CHECK(result.truncated);
    CHECK(result.value == 0.5);
  }

  SUBCASE("enrichment assays are refused") {
    std::vector<RankedRow> rows = {row("a", 1, 9.5, 8.0)};
    CHECK_THROWS_AS(precision_at_k(rows, 10, 10.0, true), DomainError);
  }

  SUBCASE("invariant under strictly increasing model-score transforms") {
    Rng rng(9);
    std::vector<RankedRow> rows;
    for (int i = 0; i < 25; ++i)
      rows.push_back(row("v" + std::to_string(i), rng.uniform(-1, 1),
                         8.0 + rng.uniform(0, 2), 8.0));
    const double base = precision_at_k(rows).value;
    auto transformed = rows;
    for (auto& r : transformed) r.model_score = std::exp(2.0 * r.model_score);
    CHECK(precision_at_k(transformed).value == base);
  }
}

TEST_CASE("roc_auc and curves") {
  SUBCASE("perfect separation gives AUC 1 and AP 1") {
    const std::vector<int> labels = {1, 1, 0, 0};
    const std::vector<double> scores = {4, 3, 2, 1};
    CHECK(roc_auc(labels, scores) == 1.0);
    CHECK(pr_curve(labels, scores).average_precision == 1.0);
  }

  SUBCASE("all-equal scores give AUC 0.5 by tie correction") {
    CHECK(roc_auc({1, 0, 1, 0, 0}, {2, 2, 2, 2, 2}) == 0.5);
  }

  SUBCASE("matches the O(n^2) pairwise oracle on random instances") {
    Rng rng(10);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<int> labels;
      std::vector<double> scores;
      for (int i = 0; i < 200; ++i) {
        labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
        // coarse grid scores force plenty of ties
        scores.push_back(static_cast<double>(rng.uniform_int(20)) / 4.0);
      }
      if (std::count(labels.begin(), labels.end(), 1) == 0 ||
          std::count(labels.begin(), labels.end(), 0) == 0)
        continue;
      CHECK(std::abs(roc_auc(labels, scores) -
                     oracles::pairwise_auc(labels, scores)) <= 1e-12);
      CHECK(std::abs(pr_curve(labels, scores).average_precision -
                     oracles::average_precision(labels, scores)) <= 1e-12);
    }
  }

  SUBCASE("single-class labels are an error for roc_auc, flagged for pr") {
    CHECK_THROWS_AS(roc_auc({1, 1}, {1.0, 2.0}), DomainError);
    CHECK(pr_curve({1, 1}, {1.0, 2.0}).single_class);
  }

  SUBCASE("complement symmetry for tie-free scores") {
    Rng rng(11);
    std::vector<int> labels;
    std::vector<double> scores;
    for (int i = 0; i < 50; ++i) {
      labels.push_back(i % 3 == 0 ? 1 : 0);
      scores.push_back(rng.uniform(-5, 5));
    }
    std::vector<double> neg = scores;
    for (double& v : neg) v = -v;
    CHECK(roc_auc(labels, scores) + roc_auc(labels, neg) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("roc curve endpoints reach (1,1)") {
    const auto curve = roc_curve({1, 0, 1, 0}, {4.0, 3.0, 2.0, 1.0});
    REQUIRE(!curve.tpr.empty());
    CHECK(curve.tpr.back() == 1.0);
    CHECK(curve.fpr.back() == 1.0);
    CHECK(curve.auc == 0.75);
  }
}

TEST_CASE("delta_g_from_kd") {
  CHECK(delta_g_from_kd(1.0) == 0.0);

  // oracle: R*T*ln(1e-9) with R=1.9872e-3, T=298.15
  const double expect = 1.9872e-3 * 298.15 * std::log(1e-9);
  CHECK(expect == doctest::Approx(-12.28).epsilon(1e-3));
  CHECK(delta_g_from_kd(1e-9) == doctest::Approx(expect).epsilon(1e-15));

  CHECK_THROWS_AS(delta_g_from_kd(0.0), DomainError);
  CHECK_THROWS_AS(delta_g_from_kd(-1.0), DomainError);

  SUBCASE("monotone in kd") {
    Rng rng(12);
    for (int rep = 0; rep < 50; ++rep) {
      const double a = std::exp(rng.uniform(-25, 2));
      const double b = a * (1.0 + rng.uniform(0.001, 10.0));
      CHECK(delta_g_from_kd(a) < delta_g_from_kd(b));
    }
  }
}

TEST_CASE("per_assay_report") {
  auto make_rows = [](int n, double rho_sign, uint64_t seed) {
    Rng rng(seed);
    std::vector<RankedRow> rows;
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(i);
      rows.push_back(
          {"v" + std::to_string(i), rho_sign * x + rng.uniform(0, 1e-9),
           8.0 + 0.1 * x, 8.0});
    }
    return rows;
  };

  SUBCASE("single assay: aggregate equals that assay") {
    AssayReport report =
        per_assay_report({{"a1", make_rows(10, 1.0, 1), false}});
    REQUIRE(report.rows.size() == 1);
    CHECK(*report.aggregate.spearman == *report.rows[0].spearman);
  }

  SUBCASE("two assays with rho 1 and 0 average to 0.5") {
    std::vector<RankedRow> perfect = make_rows(6, 1.0, 2);
    // alternating pattern with spearman exactly 0
    std::vector<RankedRow> zero;
    const std::vector<double> model = {1, 2, 3, 4};
    const std::vector<double> bind = {8.1, 8.3, 8.0, 8.2};
    for (int i = 0; i < 4; ++i)
      zero.push_back({"z" + std::to_string(i), model[i], bind[i], 8.0});
    AssayReport report = per_assay_report(
        {{"perfect", perfect, false}, {"zero", zero, false}});
    CHECK(*report.rows[0].spearman == doctest::Approx(1.0));
    CHECK(*report.rows[1].spearman == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(*report.aggregate.spearman == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("three-assay fixture matches metric-by-metric recomputation") {
    std::vector<AssayRows> assays = {{"a", make_rows(12, 1.0, 3), false},
                                     {"b", make_rows(9, -1.0, 4), false},
                                     {"c", make_rows(15, 1.0, 5), true}};
    AssayReport report = per_assay_report(assays);
    for (size_t i = 0; i < assays.size(); ++i) {
      std::vector<double> model, bind;
      for (const auto& r : assays[i].rows) {
        model.push_back(r.model_score);
        bind.push_back(r.binding_score);
      }
      CHECK(*report.rows[i].spearman ==
            doctest::Approx(oracles::spearman(model, bind)).epsilon(1e-12));
    }
    // enrichment assay excluded from precision but not from spearman
    CHECK(!report.rows[2].precision_at_10.has_value());
    CHECK(report.rows[2].spearman.has_value());
  }

  SUBCASE("assay with fewer than 2 variants is flagged with null metrics") {
    AssayReport report = per_assay_report({{"tiny", make_rows(1, 1.0, 6), false}});
    CHECK(!report.rows[0].spearman.has_value());
    CHECK(report.rows[0].flags ==
          std::vector<std::string>{"too_few_variants"});
  }

  SUBCASE("csv emitter uses the exact column set") {
    AssayReport report = per_assay_report({{"a1", make_rows(5, 1.0, 7), false}});
    const std::string csv = report_to_csv(report);
    CHECK(csv.rfind("assay_id,n,spearman,precision_at_10,flags\n", 0) == 0);
  }
}
