#include "core/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/ioutil.hpp"
#include "core/vocab.hpp"

namespace prefopt::data {

using nlohmann::json;

ScoreType score_type_from_string(const std::string& s) {
  if (s == "neg_log_kd") return ScoreType::kNegLogKd;
  if (s == "log_enrichment") return ScoreType::kLogEnrichment;
  throw DataError("unknown score_type '" + s +
                  "' (expected neg_log_kd or log_enrichment)");
}

std::string score_type_to_string(ScoreType t) {
  return t == ScoreType::kNegLogKd ? "neg_log_kd" : "log_enrichment";
}

const std::array<const char*, 7> kAssayCsvHeader = {
    "assay_id",      "variant_id", "heavy_chain_seq", "antigen_seq",
    "binding_score", "score_type", "structure_id"};

namespace {

void check_sequence_letters(const std::string& seq, const std::string& what,
                            std::vector<std::string>* errors) {
  const std::string& letters = model::Vocabulary::residue_letters();
  for (char c : seq) {
    if (letters.find(c) == std::string::npos) {
      errors->push_back(what + ": letter '" + std::string(1, c) +
                        "' not in the residue vocabulary");
      return;
    }
  }
  if (seq.empty()) errors->push_back(what + ": empty sequence");
}

}  // namespace

Dataset Dataset::from_records(std::vector<VariantRecord> records) {
  Dataset d;
  d.records = std::move(records);
  std::map<std::string, size_t> assay_pos;
  std::set<std::pair<std::string, std::string>> keys;
  for (size_t i = 0; i < d.records.size(); ++i) {
    const VariantRecord& r = d.records[i];
    if (!keys.emplace(r.assay_id, r.variant_id).second)
      throw DataError("duplicate (assay_id, variant_id) = (" + r.assay_id +
                      ", " + r.variant_id + ")");
    auto it = assay_pos.find(r.assay_id);
    if (it == assay_pos.end()) {
      assay_pos.emplace(r.assay_id, d.assays.size());
      d.assays.push_back({r.assay_id, {i}});
    } else {
      d.assays[it->second].rows.push_back(i);
    }
  }
  return d;
}

const AssayGroup* Dataset::find_assay(const std::string& assay_id) const {
  for (const AssayGroup& g : assays)
    if (g.assay_id == assay_id) return &g;
  return nullptr;
}

Dataset load_assays(const std::string& csv_path) {
  const io::CsvTable table = io::read_csv(
      csv_path,
      std::vector<std::string>(kAssayCsvHeader.begin(), kAssayCsvHeader.end()));

  std::vector<VariantRecord> records;
  std::vector<std::string> errors;
  std::set<std::pair<std::string, std::string>> keys;
  records.reserve(table.rows.size());
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::string where = csv_path + ":" + std::to_string(i + 2);
    VariantRecord r;
    r.assay_id = f[0];
    r.variant_id = f[1];
    r.heavy_chain_seq = f[2];
    r.antigen_seq = f[3];
    if (r.assay_id.empty()) errors.push_back(where + ": empty assay_id");
    if (r.variant_id.empty()) errors.push_back(where + ": empty variant_id");
    check_sequence_letters(r.heavy_chain_seq, where + ": heavy_chain_seq",
                           &errors);
    check_sequence_letters(r.antigen_seq, where + ": antigen_seq", &errors);
    try {
      r.binding_score = io::parse_double(f[4], where + ": binding_score");
      if (!std::isfinite(r.binding_score))
        errors.push_back(where + ": binding_score not finite");
    } catch (const DataError& e) {
      errors.push_back(e.what());
    }
    try {
      r.score_type = score_type_from_string(f[5]);
    } catch (const DataError&) {
      errors.push_back(where + ": score_type: unknown value '" + f[5] + "'");
    }
    r.structure_id = f[6];
    if (r.structure_id.empty()) errors.push_back(where + ": empty structure_id");
    if (!keys.emplace(r.assay_id, r.variant_id).second)
      errors.push_back(where + ": duplicate key (" + r.assay_id + ", " +
                       r.variant_id + ")");
    records.push_back(std::move(r));
  }
  if (!errors.empty()) {
    std::string msg = csv_path + ": " + std::to_string(errors.size()) +
                      " invalid row(s), load aborted";
    const size_t show = std::min<size_t>(errors.size(), 20);
    for (size_t i = 0; i < show; ++i) msg += "\n  " + errors[i];
    throw DataError(msg);
  }
  return Dataset::from_records(std::move(records));
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::ostringstream out;
  out << io::join_csv(std::vector<std::string>(kAssayCsvHeader.begin(),
                                               kAssayCsvHeader.end()))
      << "\n";
  for (const AssayGroup& g : dataset.assays) {
    for (size_t i : g.rows) {
      const VariantRecord& r = dataset.records[i];
      out << io::join_csv({r.assay_id, r.variant_id, r.heavy_chain_seq,
                           r.antigen_seq, io::format_double(r.binding_score),
                           score_type_to_string(r.score_type), r.structure_id})
          << "\n";
    }
  }
  return out.str();
}

void save_assays(const Dataset& dataset, const std::string& csv_path) {
  io::write_file(csv_path, dataset_to_csv(dataset));
}

namespace {

void check_partition(const Dataset& dataset, const DatasetSplit& split) {
  std::vector<char> seen(dataset.size(), 0);
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (size_t i : *part) {
      if (i >= dataset.size() || seen[i])
        throw UsageError("split is not a partition of the dataset");
      seen[i] = 1;
    }
  }
  for (char c : seen)
    if (!c) throw UsageError("split is not a partition of the dataset");
}

}  // namespace

DatasetSplit split_supervised(const Dataset& dataset,
                              std::array<double, 3> ratios, uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  for (double r : ratios)
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  if (dataset.size() == 0) throw DomainError("split: empty dataset");

  DatasetSplit split;
  split.mode = SplitMode::kSupervised;
  split.seed = seed;
  Rng root(seed);
  for (size_t a = 0; a < dataset.assays.size(); ++a) {
    const AssayGroup& g = dataset.assays[a];
    std::vector<size_t> rows = g.rows;
    if (rows.size() < 3) {
      split.flags.push_back("assay " + g.assay_id +
                            ": fewer than 3 variants, all rows to train");
      split.train.insert(split.train.end(), rows.begin(), rows.end());
      continue;
    }
    Rng rng = root.fork("assay", a);
    rng.shuffle(rows);
    const size_t n = rows.size();
    const size_t n_train =
        static_cast<size_t>(std::floor(ratios[0] * static_cast<double>(n)));
    const size_t n_test =
        static_cast<size_t>(std::floor(ratios[1] * static_cast<double>(n)));
    for (size_t i = 0; i < n; ++i) {
      if (i < n_train)
        split.train.push_back(rows[i]);
      else if (i < n_train + n_test)
        split.test.push_back(rows[i]);
      else
        split.val.push_back(rows[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  check_partition(dataset, split);
  return split;
}

DatasetSplit split_zero_shot(const Dataset& dataset,
                             const std::vector<std::string>& holdout_assays,
                             uint64_t seed) {
  if (holdout_assays.empty())
    throw ConfigError("zero_shot split requires at least one holdout assay");
  std::set<std::string> holdout;
  for (const std::string& a : holdout_assays) {
    if (dataset.find_assay(a) == nullptr)
      throw ConfigError("unknown holdout assay id '" + a + "'");
    holdout.insert(a);
  }

  DatasetSplit split;
  split.mode = SplitMode::kZeroShot;
  split.seed = seed;
  split.holdout_assays.assign(holdout.begin(), holdout.end());
  Rng root(seed);
  for (size_t a = 0; a < dataset.assays.size(); ++a) {
    const AssayGroup& g = dataset.assays[a];
    if (holdout.count(g.assay_id)) {
      split.test.insert(split.test.end(), g.rows.begin(), g.rows.end());
      continue;
    }
    std::vector<size_t> rows = g.rows;
    Rng rng = root.fork("assay", a);
    rng.shuffle(rows);
    const size_t n_train =
        static_cast<size_t>(std::floor(0.85 * static_cast<double>(rows.size())));
    for (size_t i = 0; i < rows.size(); ++i) {
      if (i < n_train)
        split.train.push_back(rows[i]);
      else
        split.val.push_back(rows[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  check_partition(dataset, split);
  return split;
}

namespace {

std::string record_key(const VariantRecord& r) {
  return r.assay_id + ":" + r.variant_id;
}

json ids_json(const Dataset& dataset, const std::vector<size_t>& rows) {
  json out = json::array();
  for (size_t i : rows) out.push_back(record_key(dataset.records[i]));
  return out;
}

}  // namespace

std::string split_to_json(const Dataset& dataset, const DatasetSplit& split) {
  json j{{"mode", split.mode == SplitMode::kSupervised ? "supervised"
                                                       : "zero_shot"},
         {"seed", split.seed},
         {"holdout_assays", split.holdout_assays},
         {"train", ids_json(dataset, split.train)},
         {"val", ids_json(dataset, split.val)},
         {"test", ids_json(dataset, split.test)},
         {"flags", split.flags}};
  return j.dump(2);
}

DatasetSplit split_from_json(const Dataset& dataset, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("split manifest: invalid JSON: ") + e.what());
  }
  std::map<std::string, size_t> by_key;
  for (size_t i = 0; i < dataset.records.size(); ++i)
    by_key[record_key(dataset.records[i])] = i;

  DatasetSplit split;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "supervised")
    split.mode = SplitMode::kSupervised;
  else if (mode == "zero_shot")
    split.mode = SplitMode::kZeroShot;
  else
    throw DataError("split manifest: unknown mode '" + mode + "'");
  split.seed = j.at("seed").get<uint64_t>();
  if (j.contains("holdout_assays"))
    split.holdout_assays =
        j["holdout_assays"].get<std::vector<std::string>>();
  auto read_part = [&](const char* key, std::vector<size_t>* out) {
    for (const json& id : j.at(key)) {
      const std::string k = id.get<std::string>();
      auto it = by_key.find(k);
      if (it == by_key.end())
        throw DataError("split manifest: id '" + k + "' not in the dataset");
      out->push_back(it->second);
    }
  };
  read_part("train", &split.train);
  read_part("val", &split.val);
  read_part("test", &split.test);
  check_partition(dataset, split);
  return split;
}

// --- synthetic oracle ------------------------------------------------------

void SyntheticOracleConfig::validate() const {
  if (n_assays < 1 || variants_per_assay < 1)
    throw ConfigError("synth: n_assays and variants_per_assay must be >= 1");
  if (sequence_length < 4 || antigen_length < 0)
    throw ConfigError("synth: sequence_length must be >= 4");
  if (max_mutations < 1 || max_mutations > sequence_length)
    throw ConfigError("synth: max_mutations must be in [1, sequence_length]");
  if (noise_sd < 0.0) throw ConfigError("synth: noise_sd must be >= 0");
}

SyntheticOracle::SyntheticOracle(const geom::BackboneStructure& structure,
                                 Rng rng) {
  const size_t n = structure.size();
  position_energy_.resize(n);
  for (auto& row : position_energy_)
    for (double& v : row) v = rng.gaussian(0.0, 1.0);
  for (auto& row : pair_energy_)
    for (double& v : row) v = rng.gaussian(0.0, 0.05);
  // symmetric pair table
  for (size_t a = 0; a < 21; ++a)
    for (size_t b = 0; b < a; ++b) pair_energy_[a][b] = pair_energy_[b][a];

  constexpr double kContactCutoff = 8.0;  // angstroms, CA-CA
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 3; j < n; ++j)
      if ((structure.residues[i].ca - structure.residues[j].ca).norm() <
          kContactCutoff)
        contacts_.emplace_back(static_cast<int64_t>(i),
                               static_cast<int64_t>(j));
}

double SyntheticOracle::score(const std::string& full_sequence) const {
  if (full_sequence.size() != position_energy_.size())
    throw DimensionError("oracle: sequence length " +
                         std::to_string(full_sequence.size()) +
                         " does not match structure with " +
                         std::to_string(position_energy_.size()) +
                         " residues");
  const model::Vocabulary& vocab = model::Vocabulary::instance();
  double energy = 0.0;
  for (size_t i = 0; i < full_sequence.size(); ++i)
    energy += position_energy_[i][static_cast<size_t>(
        vocab.index_of(full_sequence[i]))];
  for (const auto& [i, j] : contacts_)
    energy += pair_energy_[static_cast<size_t>(
        vocab.index_of(full_sequence[static_cast<size_t>(i)]))]
                          [static_cast<size_t>(vocab.index_of(
                              full_sequence[static_cast<size_t>(j)]))];
  return -energy;
}

SynthResult synth_generate(const SyntheticOracleConfig& config) {
  config.validate();
  SynthResult out;
  std::vector<VariantRecord> records;
  Rng root(config.seed);
  const std::string canonical = "ACDEFGHIKLMNPQRSTVWY";
  const double deg = M_PI / 180.0;

  for (int64_t a = 0; a < config.n_assays; ++a) {
    Rng rng = root.fork("assay", static_cast<uint64_t>(a));
    const std::string assay_id = "synth" + std::to_string(a);
    const std::string structure_id = "synth-struct-" + std::to_string(a);

    auto torsions = [&](int64_t n) {
      std::vector<geom::ResidueTorsions> t(static_cast<size_t>(n));
      for (auto& x : t) {
        x.phi = (-57.0 + 30.0 * rng.uniform(-1, 1)) * deg;
        x.psi = (-47.0 + 30.0 * rng.uniform(-1, 1)) * deg;
        x.omega = (180.0 + 6.0 * rng.uniform(-1, 1)) * deg;
      }
      return t;
    };
    auto sequence = [&](int64_t n) {
      std::string s;
      for (int64_t i = 0; i < n; ++i)
        s.push_back(canonical[static_cast<size_t>(rng.uniform_int(20))]);
      return s;
    };

    const std::string heavy_wt = sequence(config.sequence_length);
    const std::string antigen = sequence(std::max<int64_t>(config.antigen_length, 0));

    geom::BackboneStructure structure;
    structure.id = structure_id;
    for (auto& r :
         geom::build_chain("H", heavy_wt, torsions(config.sequence_length)))
      structure.residues.push_back(r);
    if (!antigen.empty()) {
      for (auto& r : geom::build_chain("Z", antigen,
                                       torsions(config.antigen_length),
                                       {30.0, 8.0, 5.0}))
        structure.residues.push_back(r);
    }
    structure.canonicalize();

    SyntheticOracle oracle(structure, rng.fork("oracle"));

    Rng noise_rng = rng.fork("noise");
    Rng mut_rng = rng.fork("mutations");
    auto add_record = [&](const std::string& variant_id,
                          const std::string& heavy) {
      VariantRecord r;
      r.assay_id = assay_id;
      r.variant_id = variant_id;
      r.heavy_chain_seq = heavy;
      r.antigen_seq = antigen;
      r.score_type = ScoreType::kNegLogKd;
      r.structure_id = structure_id;
      const double noise =
          config.noise_sd > 0.0 ? noise_rng.gaussian(0.0, config.noise_sd) : 0.0;
      r.binding_score = oracle.score(heavy + antigen) + noise;
      records.push_back(std::move(r));
    };

    add_record("wt", heavy_wt);
    for (int64_t v = 1; v < config.variants_per_assay; ++v) {
      std::string heavy = heavy_wt;
      const int64_t subs = 1 + mut_rng.uniform_int(config.max_mutations);
      std::set<int64_t> positions;
      while (static_cast<int64_t>(positions.size()) < subs)
        positions.insert(mut_rng.uniform_int(config.sequence_length));
      for (int64_t p : positions) {
        char replacement;
        do {
          replacement = canonical[static_cast<size_t>(mut_rng.uniform_int(20))];
        } while (replacement == heavy[static_cast<size_t>(p)]);
        heavy[static_cast<size_t>(p)] = replacement;
      }
      char buf[16];
      std::snprintf(buf, sizeof(buf), "v%06lld", static_cast<long long>(v));
      add_record(buf, heavy);
    }

    out.structures.push_back(std::move(structure));
    out.oracles.push_back(std::move(oracle));
  }
  out.dataset = Dataset::from_records(std::move(records));
  return out;
}

void StructureStore::add(geom::BackboneStructure s) {
  const std::string id = s.id;
  if (!by_id.emplace(id, std::move(s)).second)
    throw DataError("duplicate structure id '" + id + "'");
}

const geom::BackboneStructure& StructureStore::get(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw DataError("unknown structure id '" + id + "'");
  return it->second;
}

StructureStore StructureStore::from_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  StructureStore store;
  if (!fs::is_directory(dir))
    throw IoError("structure directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& p : files) store.add(geom::load_structure(p.string()));
  return store;
}

}  // namespace prefopt::data
