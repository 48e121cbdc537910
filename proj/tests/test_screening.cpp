#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "core/screening.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace prefopt;
using namespace prefopt::screen;

namespace {

CandidateScore cs(const std::string& id,
                  std::initializer_list<std::pair<const std::string, double>>
                      values) {
  CandidateScore c;
  c.variant_id = id;
  c.values = values;
  return c;
}

std::vector<MetricSpec> two_channel_specs() {
  return {{"seq_pll", Orientation::kHigherBetter, MetricStage::kStage1},
          {"ddg", Orientation::kLowerBetter, MetricStage::kStage1}};
}

// Counting wrapper to verify the pipeline's stage-ordering contract.
class CountingScorer : public Scorer {
 public:
  CountingScorer(std::shared_ptr<Scorer> inner) : inner_(std::move(inner)) {}
  std::string id() const override { return inner_->id(); }
  ScoreOutcome score(const std::vector<Candidate>& candidates,
                     const geom::BackboneStructure& structure) override {
    calls += 1;
    scored += static_cast<int64_t>(candidates.size());
    return inner_->score(candidates, structure);
  }
  int64_t calls = 0;
  int64_t scored = 0;

 private:
  std::shared_ptr<Scorer> inner_;
};

}  // namespace

TEST_CASE("stage1_filter") {
  SUBCASE("strictly best on both channels survives; cut is ceil(q*n)") {
    std::vector<CandidateScore> candidates;
    for (int i = 0; i < 10; ++i)
      candidates.push_back(cs("v" + std::to_string(i),
                              {{"seq_pll", static_cast<double>(i)},
                               {"ddg", static_cast<double>(-i)}}));
    // v9 has the best pll (9) and best ddg (-9)
    Stage1Result r = stage1_filter(candidates, two_channel_specs(), 0.2);
    REQUIRE(r.survivors.size() == 2);  // ceil(0.2*10) = 2 per channel
    CHECK(candidates[r.survivors[0]].variant_id == "v8");
    CHECK(candidates[r.survivors[1]].variant_id == "v9");
  }

  SUBCASE("quantile 1.0 keeps everyone") {
    std::vector<CandidateScore> candidates;
    for (int i = 0; i < 7; ++i)
      candidates.push_back(cs("v" + std::to_string(i),
                              {{"seq_pll", static_cast<double>(i)},
                               {"ddg", static_cast<double>(i % 3)}}));
    CHECK(stage1_filter(candidates, two_channel_specs(), 1.0).survivors.size() ==
          7);
  }

  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(stage1_filter({}, two_channel_specs(), 0.2), DomainError);
  }

  SUBCASE("fully tied channel passes everyone, flagged") {
    std::vector<CandidateScore> candidates;
    for (int i = 0; i < 5; ++i)
      candidates.push_back(cs("v" + std::to_string(i),
                              {{"seq_pll", 1.0},
                               {"ddg", static_cast<double>(i)}}));
    Stage1Result r = stage1_filter(candidates, two_channel_specs(), 0.4);
    CHECK(r.flags.size() == 1);
    // tied channel admits all; ddg channel cuts to ceil(0.4*5)=2
    CHECK(r.survivors.size() == 2);
  }

  SUBCASE("matches the brute-force set intersection on 200 random candidates") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<CandidateScore> candidates;
      std::vector<std::vector<double>> channels(2);
      for (int i = 0; i < 200; ++i) {
        const double pll = static_cast<double>(rng.uniform_int(40)) / 7.0;
        const double ddg = static_cast<double>(rng.uniform_int(40)) / 5.0 - 4.0;
        candidates.push_back(
            cs("v" + std::to_string(i), {{"seq_pll", pll}, {"ddg", ddg}}));
        channels[0].push_back(pll);
        channels[1].push_back(-ddg);  // orientation-normalized
      }
      const double q = rng.uniform(0.05, 1.0);
      Stage1Result r = stage1_filter(candidates, two_channel_specs(), q);
      std::set<size_t> got(r.survivors.begin(), r.survivors.end());
      CHECK(got == oracles::stage1_bruteforce(channels, q));
    }
  }

  SUBCASE("survivor set shrinks weakly as the quantile decreases") {
    Rng rng(32);
    std::vector<CandidateScore> candidates;
    for (int i = 0; i < 60; ++i)
      candidates.push_back(cs("v" + std::to_string(i),
                              {{"seq_pll", rng.uniform(-1, 1)},
                               {"ddg", rng.uniform(-1, 1)}}));
    size_t prev = 0;
    for (double q : {0.1, 0.25, 0.5, 0.75, 1.0}) {
      const size_t n = stage1_filter(candidates, two_channel_specs(), q)
                           .survivors.size();
      CHECK(n >= prev);
      prev = n;
    }
  }
}

TEST_CASE("pareto_front") {
  const std::vector<MetricSpec> metrics = {
      {"a", Orientation::kHigherBetter, MetricStage::kStage2},
      {"b", Orientation::kHigherBetter, MetricStage::kStage2}};

  SUBCASE("single candidate is its own front") {
    std::vector<CandidateScore> one = {cs("x", {{"a", 1.0}, {"b", 2.0}})};
    CHECK(pareto_front(one, metrics) == std::vector<size_t>{0});
  }

  SUBCASE("(1,1) is dominated by (2,2)") {
    std::vector<CandidateScore> pts = {cs("p", {{"a", 1.0}, {"b", 1.0}}),
                                       cs("q", {{"a", 2.0}, {"b", 2.0}})};
    const auto front = pareto_front(pts, metrics);
    REQUIRE(front.size() == 1);
    CHECK(pts[front[0]].variant_id == "q");
  }

  SUBCASE("exact duplicates are all retained") {
    std::vector<CandidateScore> pts = {cs("p", {{"a", 2.0}, {"b", 2.0}}),
                                       cs("q", {{"a", 2.0}, {"b", 2.0}}),
                                       cs("r", {{"a", 1.0}, {"b", 3.0}})};
    CHECK(pareto_front(pts, metrics).size() == 3);
  }

  SUBCASE("empty input gives empty output") {
    CHECK(pareto_front({}, metrics).empty());
  }

  SUBCASE("matches the brute-force oracle on 50 random 3-D points") {
    const std::vector<MetricSpec> m3 = {
        {"a", Orientation::kHigherBetter, MetricStage::kStage2},
        {"b", Orientation::kLowerBetter, MetricStage::kStage2},
        {"c", Orientation::kHigherBetter, MetricStage::kStage2}};
    Rng rng(33);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<CandidateScore> pts;
      std::vector<std::vector<double>> normalized;
      for (int i = 0; i < 50; ++i) {
        const double a = static_cast<double>(rng.uniform_int(6));
        const double b = static_cast<double>(rng.uniform_int(6));
        const double c = static_cast<double>(rng.uniform_int(6));
        pts.push_back(
            cs("v" + std::to_string(i), {{"a", a}, {"b", b}, {"c", c}}));
        normalized.push_back({a, -b, c});
      }
      const auto front = pareto_front(pts, m3);
      CHECK(std::set<size_t>(front.begin(), front.end()) ==
            oracles::pareto_bruteforce(normalized));
    }
  }

  SUBCASE("invariant under strictly increasing per-metric transforms") {
    Rng rng(34);
    std::vector<CandidateScore> pts;
    for (int i = 0; i < 40; ++i)
      pts.push_back(cs("v" + std::to_string(i),
                       {{"a", rng.uniform(-2, 2)}, {"b", rng.uniform(-2, 2)}}));
    const auto base = pareto_front(pts, metrics);
    std::vector<CandidateScore> transformed = pts;
    for (auto& c : transformed) {
      c.values["a"] = std::exp(c.values["a"]);
      c.values["b"] = std::atan(c.values["b"]);
    }
    CHECK(pareto_front(transformed, metrics) == base);
  }

  SUBCASE("adding a dominated candidate never changes the front") {
    Rng rng(35);
    std::vector<CandidateScore> pts;
    for (int i = 0; i < 20; ++i)
      pts.push_back(cs("v" + std::to_string(i),
                       {{"a", rng.uniform(0, 1)}, {"b", rng.uniform(0, 1)}}));
    const auto base = pareto_front(pts, metrics);
    std::set<std::string> base_ids;
    for (size_t i : base) base_ids.insert(pts[i].variant_id);
    pts.push_back(cs("zzz_dominated", {{"a", -1.0}, {"b", -1.0}}));
    const auto with_extra = pareto_front(pts, metrics);
    std::set<std::string> new_ids;
    for (size_t i : with_extra) new_ids.insert(pts[i].variant_id);
    CHECK(new_ids == base_ids);
  }
}

TEST_CASE("surrogate_scorers") {
  geom::BackboneStructure s = testutil::make_structure("sur", 10, 5, 70);
  const std::string wt = s.sequence();

  SUBCASE("same seed gives identical score tables") {
    ScorerRegistry r1 = surrogate_scorers(5, wt);
    ScorerRegistry r2 = surrogate_scorers(5, wt);
    Rng rng(71);
    std::vector<Candidate> candidates;
    for (int i = 0; i < 20; ++i) {
      std::string seq = wt;
      seq[static_cast<size_t>(rng.uniform_int(10))] =
          "ACDEFGHIKLMNPQRSTVWY"[rng.uniform_int(20)];
      candidates.push_back({"v" + std::to_string(i), seq});
    }
    for (const auto& [metric, scorer] : r1) {
      const ScoreOutcome a = scorer->score(candidates, s);
      const ScoreOutcome b = r2.at(metric)->score(candidates, s);
      CHECK(a.values == b.values);
      CHECK(a.failures.empty());
    }
  }

  SUBCASE("ddg of the wild type against itself is zero") {
    ScorerRegistry r = surrogate_scorers(5, wt);
    const ScoreOutcome out = r.at("ddg")->score({{"wt", wt}}, s);
    CHECK(out.values.at("wt") == 0.0);
  }

  SUBCASE("single substitution ddg equals the hidden energy delta") {
    DdgSurrogate ddg(99, wt);
    std::string mut = wt;
    mut[3] = wt[3] == 'A' ? 'W' : 'A';
    const ScoreOutcome out = ddg.score({{"m", mut}}, s);
    const double expect = ddg.hidden_energy(mut, s) - ddg.hidden_energy(wt, s);
    CHECK(out.values.at("m") == doctest::Approx(expect).epsilon(1e-15));
  }

  SUBCASE("length-mismatched candidates fail structurally") {
    ScorerRegistry r = surrogate_scorers(5, wt);
    const ScoreOutcome out = r.at("seq_pll")->score({{"bad", "ACD"}}, s);
    CHECK(out.values.empty());
    CHECK(out.failures.count("bad") == 1);
  }
}

TEST_CASE("run_pipeline") {
  geom::BackboneStructure s = testutil::make_structure("pipe", 12, 6, 80);
  const std::string wt = s.sequence();
  const std::vector<MetricSpec> specs = default_metric_specs();

  auto make_candidates = [&](int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<Candidate> out;
    std::set<std::string> seen;
    out.push_back({"wt", wt});
    seen.insert(wt);
    while (static_cast<int>(out.size()) < n) {
      std::string seq = wt;
      const int subs = 1 + static_cast<int>(rng.uniform_int(4));
      for (int m = 0; m < subs; ++m)
        seq[static_cast<size_t>(rng.uniform_int(12))] =
            "ACDEFGHIKLMNPQRSTVWY"[rng.uniform_int(20)];
      if (seen.insert(seq).second)
        out.push_back({"v" + std::to_string(out.size()), seq});
    }
    return out;
  };

  SUBCASE("stage-2 scorers see exactly the stage-1 survivors") {
    ScorerRegistry registry = surrogate_scorers(7, wt);
    std::map<std::string, std::shared_ptr<CountingScorer>> counters;
    for (auto& [metric, scorer] : registry) {
      auto counter = std::make_shared<CountingScorer>(scorer);
      counters[metric] = counter;
      registry[metric] = counter;
    }
    const auto candidates = make_candidates(120, 81);
    PipelineConfig cfg;
    PipelineResult result = run_pipeline(candidates, s, registry, specs, cfg);

    CHECK(counters.at("seq_pll")->scored == 120);
    CHECK(counters.at("ddg")->scored == 120);
    for (const char* metric : {"plddt", "delta_sasa", "mpnn_ll", "ptm", "iplddt"}) {
      CHECK(counters.at(metric)->scored == result.counts.stage1_survivors);
      CHECK(counters.at(metric)->calls == 1);
    }
    CHECK(result.counts.stage1_survivors <
          result.counts.candidates);
    CHECK(result.counts.panel >= 1);
  }

  SUBCASE("constant scorers tie everyone: all survive, flagged, full panel") {
    class ConstantScorer : public Scorer {
     public:
      std::string id() const override { return "const"; }
      ScoreOutcome score(const std::vector<Candidate>& candidates,
                         const geom::BackboneStructure&) override {
        ScoreOutcome out;
        for (const auto& c : candidates) out.values[c.variant_id] = 1.0;
        return out;
      }
    };
    ScorerRegistry registry;
    for (const MetricSpec& spec : specs)
      registry[spec.name] = std::make_shared<ConstantScorer>();
    const auto candidates = make_candidates(25, 82);
    PipelineResult result =
        run_pipeline(candidates, s, registry, specs, PipelineConfig{});
    CHECK(result.counts.stage1_survivors == 25);
    CHECK(result.counts.panel == 25);
    CHECK(result.flags.size() == 2);  // both stage-1 channels fully tied
  }

  SUBCASE("panel members are never dominated (oracle check)") {
    ScorerRegistry registry = surrogate_scorers(9, wt);
    const auto candidates = make_candidates(200, 83);
    PipelineResult result =
        run_pipeline(candidates, s, registry, specs, PipelineConfig{});
    REQUIRE(result.counts.panel >= 1);

    std::vector<MetricSpec> frontier;
    for (const MetricSpec& spec : specs)
      if (spec.stage != MetricStage::kReportOnly) frontier.push_back(spec);
    std::map<std::string, const CandidateScore*> by_id;
    for (const auto& c : result.table) by_id[c.variant_id] = &c;
    std::set<std::string> survivor_set(result.stage1_survivors.begin(),
                                       result.stage1_survivors.end());
    std::vector<std::vector<double>> pts;
    std::vector<std::string> ids;
    for (const std::string& id : result.stage1_survivors) {
      const CandidateScore& c = *by_id.at(id);
      std::vector<double> p;
      for (const MetricSpec& spec : frontier)
        p.push_back(spec.orientation == Orientation::kHigherBetter
                        ? c.values.at(spec.name)
                        : -c.values.at(spec.name));
      pts.push_back(std::move(p));
      ids.push_back(id);
    }
    const std::set<size_t> oracle_front = oracles::pareto_bruteforce(pts);
    std::set<std::string> oracle_ids;
    for (size_t i : oracle_front) oracle_ids.insert(ids[i]);
    CHECK(std::set<std::string>(result.panel.begin(), result.panel.end()) ==
          oracle_ids);
  }

  SUBCASE("deterministic across reruns") {
    ScorerRegistry r1 = surrogate_scorers(11, wt);
    ScorerRegistry r2 = surrogate_scorers(11, wt);
    const auto candidates = make_candidates(80, 84);
    PipelineResult a = run_pipeline(candidates, s, r1, specs, PipelineConfig{});
    PipelineResult b = run_pipeline(candidates, s, r2, specs, PipelineConfig{});
    CHECK(panel_to_json(a, specs, 1) == panel_to_json(b, specs, 1));
  }

  SUBCASE("scorer failures drop candidates with a logged reason") {
    ScorerRegistry registry = surrogate_scorers(13, wt);
    auto candidates = make_candidates(30, 85);
    candidates.push_back({"broken", "TOOSHORT"});
    PipelineResult result =
        run_pipeline(candidates, s, registry, specs, PipelineConfig{});
    REQUIRE(result.dropped.size() == 1);
    CHECK(result.dropped[0].variant_id == "broken");
    CHECK(result.dropped[0].reason.find("seq_pll") != std::string::npos);
  }
}

TEST_CASE("csv scorer ingests external metric values") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "prefopt_screen_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string path = (dir / "scores.csv").string();
  {
    std::ofstream out(path);
    out << "variant_id,metric,value\n";
    out << "v1,ddg,-2.5\n";
    out << "v2,ddg,1.25\n";
    out << "v1,plddt,80\n";
  }
  geom::BackboneStructure s = testutil::make_structure("csvs", 6, 0, 90);
  auto scorer = csv_scorer("ddg", path);
  const ScoreOutcome out = scorer->score({{"v1", "x"}, {"v2", "x"}, {"v3", "x"}}, s);
  CHECK(out.values.at("v1") == -2.5);
  CHECK(out.values.at("v2") == 1.25);
  CHECK(out.failures.count("v3") == 1);
  fs::remove_all(dir);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(validate_specs({{"a", Orientation::kHigherBetter,
                                   MetricStage::kStage1}}),
                  ConfigError);
  CHECK_THROWS_AS(
      validate_specs({{"ddg", Orientation::kHigherBetter, MetricStage::kStage1},
                      {"x", Orientation::kHigherBetter, MetricStage::kStage1}}),
      ConfigError);
  CHECK_NOTHROW(validate_specs(default_metric_specs()));
}
