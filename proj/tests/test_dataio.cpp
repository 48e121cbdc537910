#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "core/dataio.hpp"
#include "core/ioutil.hpp"
#include "core/vocab.hpp"

using namespace prefopt;
using namespace prefopt::data;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("prefopt_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

const char* kHeader =
    "assay_id,variant_id,heavy_chain_seq,antigen_seq,binding_score,score_type,"
    "structure_id";

}  // namespace

TEST_CASE("load_assays") {
  TempDir tmp;

  SUBCASE("well-formed 3-row file loads into one assay") {
    std::ofstream out(tmp.file("ok.csv"));
    out << kHeader << "\n";
    out << "a1,v1,ACDK,MW,1.5,neg_log_kd,s1\n";
    out << "a1,v2,ACDW,MW,0.5,neg_log_kd,s1\n";
    out << "a1,wt,ACDY,MW,1.0,neg_log_kd,s1\n";
    out.close();
    Dataset d = load_assays(tmp.file("ok.csv"));
    CHECK(d.records.size() == 3);
    REQUIRE(d.assays.size() == 1);
    CHECK(d.assays[0].assay_id == "a1");
    CHECK(d.assays[0].rows.size() == 3);
    CHECK(d.records[0].full_sequence() == "ACDKMW");
  }

  SUBCASE("unknown score_type names the line and field") {
    std::ofstream out(tmp.file("bad.csv"));
    out << kHeader << "\n";
    out << "a1,v1,ACDK,MW,1.5,kd_raw,s1\n";
    out.close();
    CHECK_THROWS_WITH_AS(
        load_assays(tmp.file("bad.csv")),
        doctest::Contains(":2: score_type: unknown value 'kd_raw'"),
        DataError);
  }

  SUBCASE("non-vocabulary letter and duplicate key abort with line numbers") {
    std::ofstream out(tmp.file("bad2.csv"));
    out << kHeader << "\n";
    out << "a1,v1,ACDB,MW,1.5,neg_log_kd,s1\n";
    out << "a1,v1,ACDK,MW,1.0,neg_log_kd,s1\n";
    out.close();
    try {
      load_assays(tmp.file("bad2.csv"));
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("2 invalid row(s)") != std::string::npos);
      CHECK(msg.find(":2: heavy_chain_seq") != std::string::npos);
      CHECK(msg.find(":3: duplicate key") != std::string::npos);
    }
  }

  SUBCASE("header mismatch is rejected") {
    std::ofstream out(tmp.file("hdr.csv"));
    out << "assay,variant\n";
    out.close();
    CHECK_THROWS_AS(load_assays(tmp.file("hdr.csv")), DataError);
  }

  SUBCASE("155,853 synthetic rows group into 11 assays with known counts") {
    // sizes span the benchmark's 40..65535 range and sum to 155,853
    const std::vector<int> sizes = {65535, 40,   30000, 20000, 15000, 10000,
                                    8000,  4000, 2000,  1000,  278};
    int total = 0;
    for (int n : sizes) total += n;
    REQUIRE(total == 155853);
    std::ofstream out(tmp.file("big.csv"));
    out << kHeader << "\n";
    for (size_t a = 0; a < sizes.size(); ++a)
      for (int v = 0; v < sizes[a]; ++v)
        out << "assay" << a << ",v" << v << ",ACDK,MW,"
            << (v % 97) * 0.25 << ",neg_log_kd,s" << a << "\n";
    out.close();
    Dataset d = load_assays(tmp.file("big.csv"));
    CHECK(d.records.size() == 155853);
    REQUIRE(d.assays.size() == 11);
    for (size_t a = 0; a < sizes.size(); ++a)
      CHECK(d.assays[a].rows.size() == static_cast<size_t>(sizes[a]));
  }

  SUBCASE("loader/emitter round trip is canonical") {
    std::ofstream out(tmp.file("rt.csv"));
    out << kHeader << "\n";
    out << "a1,v1,ACDK,MW,1.5,neg_log_kd,s1\n";
    out << "a2,v1,ACDW,MW,-0.25,log_enrichment,s2\n";
    out.close();
    Dataset d = load_assays(tmp.file("rt.csv"));
    const std::string emitted = dataset_to_csv(d);
    save_assays(d, tmp.file("rt2.csv"));
    Dataset d2 = load_assays(tmp.file("rt2.csv"));
    CHECK(dataset_to_csv(d2) == emitted);
    CHECK(d2.records.size() == d.records.size());
  }
}

TEST_CASE("split_supervised") {
  auto make_dataset = [](const std::vector<std::pair<std::string, int>>& spec) {
    std::vector<VariantRecord> records;
    for (const auto& [assay, n] : spec)
      for (int i = 0; i < n; ++i) {
        VariantRecord r;
        r.assay_id = assay;
        r.variant_id = "v" + std::to_string(i);
        r.heavy_chain_seq = "ACDK";
        r.antigen_seq = "MW";
        r.binding_score = i;
        r.structure_id = "s_" + assay;
        records.push_back(r);
      }
    return Dataset::from_records(std::move(records));
  };

  SUBCASE("n=100 splits 60/30/10 exactly") {
    Dataset d = make_dataset({{"a", 100}});
    DatasetSplit s = split_supervised(d, {0.6, 0.3, 0.1}, 1);
    CHECK(s.train.size() == 60);
    CHECK(s.test.size() == 30);
    CHECK(s.val.size() == 10);
  }

  SUBCASE("n=101 splits 60/30/11 under the floor rule") {
    Dataset d = make_dataset({{"a", 101}});
    DatasetSplit s = split_supervised(d, {0.6, 0.3, 0.1}, 1);
    CHECK(s.train.size() == 60);
    CHECK(s.test.size() == 30);
    CHECK(s.val.size() == 11);
  }

  SUBCASE("two seeds permute differently but size identically") {
    Dataset d = make_dataset({{"a", 50}, {"b", 40}});
    DatasetSplit s1 = split_supervised(d, {0.6, 0.3, 0.1}, 1);
    DatasetSplit s2 = split_supervised(d, {0.6, 0.3, 0.1}, 2);
    CHECK(s1.train.size() == s2.train.size());
    CHECK(s1.test.size() == s2.test.size());
    CHECK(s1.val.size() == s2.val.size());
    CHECK(s1.train != s2.train);
  }

  SUBCASE("assay with n < 3 goes entirely to train, flagged") {
    Dataset d = make_dataset({{"a", 2}, {"b", 10}});
    DatasetSplit s = split_supervised(d, {0.6, 0.3, 0.1}, 1);
    CHECK(s.flags.size() == 1);
    for (size_t i : d.assays[0].rows)
      CHECK(std::find(s.train.begin(), s.train.end(), i) != s.train.end());
  }

  SUBCASE("ratios must sum to one") {
    Dataset d = make_dataset({{"a", 10}});
    CHECK_THROWS_AS(split_supervised(d, {0.5, 0.3, 0.1}, 1), ConfigError);
  }

  SUBCASE("partition property over modes and seeds") {
    Dataset d = make_dataset({{"a", 17}, {"b", 3}, {"c", 41}});
    for (uint64_t seed : {1ull, 2ull, 77ull}) {
      DatasetSplit s = split_supervised(d, {0.6, 0.3, 0.1}, seed);
      std::set<size_t> all;
      for (const auto* part : {&s.train, &s.val, &s.test})
        for (size_t i : *part) CHECK(all.insert(i).second);
      CHECK(all.size() == d.size());
    }
  }

  SUBCASE("manifest round trip") {
    Dataset d = make_dataset({{"a", 20}, {"b", 9}});
    DatasetSplit s = split_supervised(d, {0.6, 0.3, 0.1}, 5);
    const std::string text = split_to_json(d, s);
    DatasetSplit back = split_from_json(d, text);
    CHECK(back.train == s.train);
    CHECK(back.val == s.val);
    CHECK(back.test == s.test);
  }
}

TEST_CASE("split_zero_shot") {
  std::vector<VariantRecord> records;
  for (int a = 0; a < 11; ++a)
    for (int i = 0; i < 20 + a; ++i) {
      VariantRecord r;
      r.assay_id = "assay" + std::to_string(a);
      r.variant_id = "v" + std::to_string(i);
      r.heavy_chain_seq = "ACDK";
      r.antigen_seq = "MW";
      r.binding_score = i;
      r.structure_id = "s" + std::to_string(a);
      records.push_back(r);
    }
  Dataset d = Dataset::from_records(std::move(records));

  SUBCASE("holdout assays land entirely in test") {
    const std::vector<std::string> holdout = {"assay1", "assay4", "assay7",
                                              "assay9"};
    DatasetSplit s = split_zero_shot(d, holdout, 3);
    std::set<std::string> holdout_set(holdout.begin(), holdout.end());
    size_t expected_test = 0;
    for (const AssayGroup& g : d.assays)
      if (holdout_set.count(g.assay_id)) expected_test += g.rows.size();
    CHECK(s.test.size() == expected_test);
    for (size_t i : s.test) CHECK(holdout_set.count(d.records[i].assay_id) == 1);
    for (size_t i : s.train)
      CHECK(holdout_set.count(d.records[i].assay_id) == 0);

    // leak check: no test structure appears in train
    std::set<std::string> train_structures;
    for (size_t i : s.train) train_structures.insert(d.records[i].structure_id);
    for (size_t i : s.test)
      CHECK(train_structures.count(d.records[i].structure_id) == 0);
  }

  SUBCASE("zero-shot requires at least one holdout") {
    CHECK_THROWS_AS(split_zero_shot(d, {}, 1), ConfigError);
  }

  SUBCASE("unknown holdout assay is an error") {
    CHECK_THROWS_AS(split_zero_shot(d, {"missing"}, 1), ConfigError);
  }

  SUBCASE("holdout of every assay leaves the train split empty") {
    std::vector<std::string> all;
    for (const AssayGroup& g : d.assays) all.push_back(g.assay_id);
    DatasetSplit s = split_zero_shot(d, all, 1);
    CHECK(s.train.empty());
  }
}

TEST_CASE("synth_generate") {
  SyntheticOracleConfig cfg;
  cfg.seed = 11;
  cfg.n_assays = 3;
  cfg.variants_per_assay = 40;
  cfg.sequence_length = 12;
  cfg.antigen_length = 6;
  cfg.noise_sd = 0.0;

  SUBCASE("deterministic for a fixed seed") {
    SynthResult a = synth_generate(cfg);
    SynthResult b = synth_generate(cfg);
    CHECK(dataset_to_csv(a.dataset) == dataset_to_csv(b.dataset));
    CHECK(geom::structure_to_json(a.structures[0]) ==
          geom::structure_to_json(b.structures[0]));
  }

  SUBCASE("scores equal independent recomputation from the hidden weights") {
    SynthResult r = synth_generate(cfg);
    const model::Vocabulary& vocab = model::Vocabulary::instance();
    for (size_t a = 0; a < r.structures.size(); ++a) {
      const SyntheticOracle& oracle = r.oracles[a];
      for (size_t row : r.dataset.assays[a].rows) {
        const VariantRecord& rec = r.dataset.records[row];
        const std::string seq = rec.full_sequence();
        double energy = 0.0;
        for (size_t i = 0; i < seq.size(); ++i)
          energy += oracle.position_energy()[i][static_cast<size_t>(
              vocab.index_of(seq[i]))];
        for (const auto& [i, j] : oracle.contacts())
          energy +=
              oracle.pair_energy()[static_cast<size_t>(vocab.index_of(
                  seq[static_cast<size_t>(i)]))][static_cast<size_t>(
                  vocab.index_of(seq[static_cast<size_t>(j)]))];
        CHECK(rec.binding_score == doctest::Approx(-energy).epsilon(1e-12));
        CHECK(oracle.score(seq) == doctest::Approx(-energy).epsilon(1e-12));
      }
    }
  }

  SUBCASE("noise_sd=0 gives duplicate sequences identical scores") {
    SynthResult r = synth_generate(cfg);
    std::map<std::string, double> seen;
    for (size_t row : r.dataset.assays[0].rows) {
      const VariantRecord& rec = r.dataset.records[row];
      auto [it, inserted] =
          seen.emplace(rec.full_sequence(), rec.binding_score);
      if (!inserted) CHECK(it->second == rec.binding_score);
    }
  }

  SUBCASE("structures parse, have two chains, and contacts exist") {
    SynthResult r = synth_generate(cfg);
    for (const auto& s : r.structures) {
      CHECK(s.size() == 18);
      CHECK(s.chain_spans().size() == 2);
      CHECK(s.chain_spans()[0].chain_id == "H");
    }
    for (const auto& oracle : r.oracles) CHECK(!oracle.contacts().empty());
  }

  SUBCASE("variants stay within max_mutations of the wild type") {
    SynthResult r = synth_generate(cfg);
    for (const AssayGroup& g : r.dataset.assays) {
      const std::string wt =
          r.dataset.records[g.rows[0]].heavy_chain_seq;  // first row is wt
      for (size_t row : g.rows) {
        const std::string& heavy = r.dataset.records[row].heavy_chain_seq;
        int hamming = 0;
        for (size_t i = 0; i < heavy.size(); ++i)
          hamming += heavy[i] != wt[i];
        CHECK(hamming <= cfg.max_mutations);
      }
    }
  }
}

TEST_CASE("structure store") {
  TempDir tmp;
  SyntheticOracleConfig cfg;
  cfg.n_assays = 2;
  cfg.variants_per_assay = 2;
  cfg.sequence_length = 6;
  cfg.antigen_length = 4;
  SynthResult r = synth_generate(cfg);
  for (const auto& s : r.structures)
    geom::save_structure(s, tmp.file(s.id + ".json"));
  StructureStore store = StructureStore::from_dir(tmp.path.string());
  CHECK(store.by_id.size() == 2);
  CHECK(store.get("synth-struct-0").size() == 10);
  CHECK_THROWS_AS(store.get("nope"), DataError);
}
