#include "prefopt.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include <json.hpp>

#include "core/dataio.hpp"
#include "core/evalkit.hpp"
#include "core/ioutil.hpp"
#include "core/model.hpp"
#include "core/paratope.hpp"
#include "core/preference.hpp"
#include "core/screening.hpp"
#include "core/structure.hpp"
#include "core/trainer.hpp"

using nlohmann::json;
using namespace prefopt;

struct prefopt_model {
  model::Model impl;
};

struct prefopt_dataset {
  data::Dataset impl;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_error_code;

void clear_error() {
  g_last_error.clear();
  g_last_error_code.clear();
}

int status_of(const Error& e) {
  const std::string& code = e.code();
  if (code.rfind("CFG", 0) == 0) return PREFOPT_ERR_CONFIG;
  if (code.rfind("DATA", 0) == 0) return PREFOPT_ERR_DATA;
  if (code.rfind("DIM", 0) == 0) return PREFOPT_ERR_DIMENSION;
  if (code.rfind("DOM", 0) == 0) return PREFOPT_ERR_DOMAIN;
  if (code.rfind("IO", 0) == 0) return PREFOPT_ERR_IO;
  if (code.rfind("NUM", 0) == 0) return PREFOPT_ERR_NUMERIC;
  if (code.rfind("TRN", 0) == 0) return PREFOPT_ERR_TRAIN;
  if (code.rfind("USE", 0) == 0) return PREFOPT_ERR_USAGE;
  return PREFOPT_ERR_INTERNAL;
}

template <typename Fn>
int wrap(Fn&& fn) {
  clear_error();
  try {
    fn();
    return PREFOPT_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    g_last_error_code = e.code();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    g_last_error_code = "INT001";
    return PREFOPT_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  if (p == nullptr)
    throw UsageError(std::string("null argument: ") + name);
}

json parse_config(const char* config_json) {
  if (config_json == nullptr || config_json[0] == '\0') return json::object();
  try {
    json j = json::parse(config_json);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) ok = ok || it.key() == key;
    if (!ok)
      throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number())
    throw ConfigError(std::string("config key '") + key + "' must be a number");
  return j.at(key).get<double>();
}

int64_t get_int(const json& j, const char* key, int64_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer())
    throw ConfigError(std::string("config key '") + key +
                      "' must be an integer");
  return j.at(key).get<int64_t>();
}

uint64_t get_seed(const json& j, const char* key, uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_unsigned() && !j.at(key).is_number_integer())
    throw ConfigError(std::string("config key '") + key +
                      "' must be an integer");
  return j.at(key).get<uint64_t>();
}

std::string get_str(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string())
    throw ConfigError(std::string("config key '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

data::DatasetSplit split_from_config(const data::Dataset& dataset,
                                     const json& cfg, uint64_t default_seed) {
  check_keys(cfg, {"mode", "seed", "ratios", "holdout_assays"}, "split");
  const std::string mode = get_str(cfg, "mode", "supervised");
  const uint64_t seed = get_seed(cfg, "seed", default_seed);
  if (mode == "supervised") {
    std::array<double, 3> ratios = {0.6, 0.3, 0.1};
    if (cfg.contains("ratios")) {
      const auto r = cfg.at("ratios").get<std::vector<double>>();
      if (r.size() != 3)
        throw ConfigError("split.ratios must have 3 entries (train,test,val)");
      ratios = {r[0], r[1], r[2]};
    }
    return data::split_supervised(dataset, ratios, seed);
  }
  if (mode == "zero_shot") {
    if (!cfg.contains("holdout_assays"))
      throw ConfigError("zero_shot split requires holdout_assays");
    return data::split_zero_shot(
        dataset, cfg.at("holdout_assays").get<std::vector<std::string>>(),
        seed);
  }
  throw ConfigError("split.mode must be supervised|zero_shot, got '" + mode +
                    "'");
}

trainer::FreezeMask freeze_from_string(const model::Model& m,
                                       const std::string& freeze) {
  if (freeze == "encoder") return trainer::FreezeMask::encoder_frozen(m);
  if (freeze == "none") return trainer::FreezeMask::none();
  throw ConfigError("freeze must be 'encoder' or 'none', got '" + freeze + "'");
}

}  // namespace

extern "C" {

const char* prefopt_version(void) { return "0.1.0"; }

const char* prefopt_last_error(void) { return g_last_error.c_str(); }

const char* prefopt_last_error_code(void) { return g_last_error_code.c_str(); }

/* --- data ------------------------------------------------------------------ */

int prefopt_synth(const char* config_json, const char* out_dir) {
  return wrap([&] {
    require_arg(out_dir, "out_dir");
    const json cfg = parse_config(config_json);
    check_keys(cfg,
               {"seed", "n_assays", "variants_per_assay", "sequence_length",
                "antigen_length", "max_mutations", "noise_sd"},
               "synth");
    data::SyntheticOracleConfig scfg;
    scfg.seed = get_seed(cfg, "seed", 0);
    scfg.n_assays = get_int(cfg, "n_assays", scfg.n_assays);
    scfg.variants_per_assay =
        get_int(cfg, "variants_per_assay", scfg.variants_per_assay);
    scfg.sequence_length = get_int(cfg, "sequence_length", scfg.sequence_length);
    scfg.antigen_length = get_int(cfg, "antigen_length", scfg.antigen_length);
    scfg.max_mutations = get_int(cfg, "max_mutations", scfg.max_mutations);
    scfg.noise_sd = get_num(cfg, "noise_sd", scfg.noise_sd);

    const data::SynthResult result = data::synth_generate(scfg);

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "structures");
    data::save_assays(result.dataset,
                      (fs::path(out_dir) / "assays.csv").string());
    for (const auto& s : result.structures)
      geom::save_structure(
          s, (fs::path(out_dir) / "structures" / (s.id + ".json")).string());

    // hidden oracle weights, for reproducibility and downstream verification
    json oracle_doc = json::array();
    for (size_t a = 0; a < result.oracles.size(); ++a) {
      const data::SyntheticOracle& oracle = result.oracles[a];
      json contacts = json::array();
      for (const auto& [i, j] : oracle.contacts())
        contacts.push_back({i, j});
      json pos = json::array();
      for (const auto& row : oracle.position_energy())
        pos.push_back(std::vector<double>(row.begin(), row.end()));
      json pair = json::array();
      for (const auto& row : oracle.pair_energy())
        pair.push_back(std::vector<double>(row.begin(), row.end()));
      oracle_doc.push_back(
          {{"assay_id", result.dataset.assays[a].assay_id},
           {"structure_id", result.structures[a].id},
           {"contacts", contacts},
           {"position_energy", pos},
           {"pair_energy", pair}});
    }
    io::write_file((fs::path(out_dir) / "oracle.json").string(),
                   json{{"assays", oracle_doc}}.dump(2) + "\n");
  });
}

int prefopt_dataset_load(const char* assays_csv, prefopt_dataset** out) {
  return wrap([&] {
    require_arg(assays_csv, "assays_csv");
    require_arg(out, "out");
    auto handle = std::make_unique<prefopt_dataset>(
        prefopt_dataset{data::load_assays(assays_csv)});
    *out = handle.release();
  });
}

void prefopt_dataset_free(prefopt_dataset* dataset) { delete dataset; }

int prefopt_dataset_num_records(const prefopt_dataset* dataset, uint64_t* out) {
  return wrap([&] {
    require_arg(dataset, "dataset");
    require_arg(out, "out");
    *out = dataset->impl.size();
  });
}

int prefopt_dataset_num_assays(const prefopt_dataset* dataset, uint64_t* out) {
  return wrap([&] {
    require_arg(dataset, "dataset");
    require_arg(out, "out");
    *out = dataset->impl.assays.size();
  });
}

int prefopt_split(const prefopt_dataset* dataset, const char* config_json,
                  const char* out_manifest_path) {
  return wrap([&] {
    require_arg(dataset, "dataset");
    require_arg(out_manifest_path, "out_manifest_path");
    const json cfg = parse_config(config_json);
    const data::DatasetSplit split = split_from_config(dataset->impl, cfg, 0);
    io::write_file(out_manifest_path,
                   data::split_to_json(dataset->impl, split) + "\n");
  });
}

/* --- model ------------------------------------------------------------------ */

int prefopt_model_create(const char* config_json, uint64_t seed,
                         prefopt_model** out) {
  return wrap([&] {
    require_arg(out, "out");
    const json cfg = parse_config(config_json);
    check_keys(cfg, {"d", "heads", "k_neighbors"}, "model");
    model::ModelConfig mc;
    mc.d = get_int(cfg, "d", mc.d);
    mc.heads = get_int(cfg, "heads", mc.heads);
    mc.k_neighbors = get_int(cfg, "k_neighbors", mc.k_neighbors);
    auto handle =
        std::make_unique<prefopt_model>(prefopt_model{model::Model(mc, seed)});
    *out = handle.release();
  });
}

int prefopt_model_load(const char* checkpoint_path, prefopt_model** out) {
  return wrap([&] {
    require_arg(checkpoint_path, "checkpoint_path");
    require_arg(out, "out");
    trainer::LoadedCheckpoint loaded = trainer::checkpoint_load(checkpoint_path);
    auto handle = std::make_unique<prefopt_model>(
        prefopt_model{std::move(loaded.model)});
    *out = handle.release();
  });
}

int prefopt_model_save(const prefopt_model* model, const char* checkpoint_path) {
  return wrap([&] {
    require_arg(model, "model");
    require_arg(checkpoint_path, "checkpoint_path");
    trainer::CheckpointMeta meta;
    meta.dims = model->impl.config();
    meta.seed = model->impl.init_seed();
    trainer::checkpoint_save(checkpoint_path, model->impl, meta, nullptr);
  });
}

void prefopt_model_free(prefopt_model* model) { delete model; }

int prefopt_model_dims(const prefopt_model* model, int64_t* d, int64_t* heads,
                       int64_t* k_neighbors, int64_t* vocab) {
  return wrap([&] {
    require_arg(model, "model");
    const model::ModelConfig& cfg = model->impl.config();
    if (d != nullptr) *d = cfg.d;
    if (heads != nullptr) *heads = cfg.heads;
    if (k_neighbors != nullptr) *k_neighbors = cfg.k_neighbors;
    if (vocab != nullptr) *vocab = cfg.vocab_size;
  });
}

int prefopt_trainable_fraction(const prefopt_model* model, const char* freeze,
                               double* out) {
  return wrap([&] {
    require_arg(model, "model");
    require_arg(freeze, "freeze");
    require_arg(out, "out");
    *out = trainer::trainable_fraction(
        model->impl, freeze_from_string(model->impl, freeze));
  });
}

int prefopt_loglik(const prefopt_model* model, const char* structure_json_path,
                   const char* sequence, const char* score_span,
                   double* sum_ll, double* mean_ll) {
  return wrap([&] {
    require_arg(model, "model");
    require_arg(structure_json_path, "structure_json_path");
    require_arg(sequence, "sequence");
    const geom::BackboneStructure s = geom::load_structure(structure_json_path);
    const model::ScoreSpan span = model::score_span_from_string(
        score_span == nullptr ? "full" : score_span);
    ad::Tape tape(/*recording=*/false);
    const model::LogLik ll =
        model->impl.sequence_loglik(tape, s, sequence, span);
    if (sum_ll != nullptr) *sum_ll = ll.sum();
    if (mean_ll != nullptr) *mean_ll = ll.mean();
  });
}

/* --- train ------------------------------------------------------------------ */

int prefopt_train(prefopt_model* model, const prefopt_dataset* dataset,
                  const char* structures_dir, const char* config_json,
                  const char* out_dir) {
  return wrap([&] {
    require_arg(model, "model");
    require_arg(dataset, "dataset");
    require_arg(structures_dir, "structures_dir");
    require_arg(out_dir, "out_dir");
    const json cfg = parse_config(config_json);
    check_keys(cfg,
               {"objective", "epochs", "batch_size", "beta", "gamma",
                "delta_min", "pair_gap_max", "max_pairs", "max_val_pairs",
                "seed", "lr", "adam_beta1", "adam_beta2", "adam_eps",
                "weight_decay", "clip_norm", "score_span", "eval_every",
                "freeze", "resume_from", "split"},
               "train");

    trainer::TrainConfig tc;
    tc.objective =
        trainer::objective_from_string(get_str(cfg, "objective", "simpo"));
    tc.epochs = get_int(cfg, "epochs", tc.epochs);
    tc.batch_size = get_int(cfg, "batch_size", tc.batch_size);
    tc.hp.beta = get_num(cfg, "beta", tc.hp.beta);
    tc.hp.gamma = get_num(cfg, "gamma", tc.hp.gamma);
    tc.delta_min = get_num(cfg, "delta_min", tc.delta_min);
    tc.pair_gap_max = get_num(cfg, "pair_gap_max", tc.pair_gap_max);
    tc.max_pairs = get_int(cfg, "max_pairs", tc.max_pairs);
    tc.max_val_pairs = get_int(cfg, "max_val_pairs", tc.max_val_pairs);
    tc.seed = get_seed(cfg, "seed", 0);
    tc.optimizer.lr = get_num(cfg, "lr", tc.optimizer.lr);
    tc.optimizer.beta1 = get_num(cfg, "adam_beta1", tc.optimizer.beta1);
    tc.optimizer.beta2 = get_num(cfg, "adam_beta2", tc.optimizer.beta2);
    tc.optimizer.eps = get_num(cfg, "adam_eps", tc.optimizer.eps);
    tc.optimizer.weight_decay =
        get_num(cfg, "weight_decay", tc.optimizer.weight_decay);
    tc.clip_norm = get_num(cfg, "clip_norm", tc.clip_norm);
    tc.span =
        model::score_span_from_string(get_str(cfg, "score_span", "full"));
    tc.eval_every = get_int(cfg, "eval_every", tc.eval_every);
    tc.checkpoint_dir = out_dir;

    const trainer::FreezeMask mask =
        freeze_from_string(model->impl, get_str(cfg, "freeze", "encoder"));

    const data::DatasetSplit split = split_from_config(
        dataset->impl, cfg.contains("split") ? cfg.at("split") : json::object(),
        tc.seed);
    const data::StructureStore store =
        data::StructureStore::from_dir(structures_dir);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    io::write_file((fs::path(out_dir) / "split_manifest.json").string(),
                   data::split_to_json(dataset->impl, split) + "\n");

    trainer::TrainInputs inputs{&dataset->impl, &split, &store};
    const trainer::TrainResult result =
        trainer::train(model->impl, inputs, tc, mask,
                       get_str(cfg, "resume_from", ""));
    io::write_file((fs::path(out_dir) / "metrics.csv").string(),
                   trainer::metrics_to_csv(result.metrics));
    if (!result.warnings.empty()) {
      std::string text;
      for (const std::string& w : result.warnings) text += w + "\n";
      io::write_file((fs::path(out_dir) / "warnings.txt").string(), text);
    }
  });
}

/* --- score / eval ------------------------------------------------------------ */

int prefopt_score(const prefopt_model* model, const prefopt_dataset* dataset,
                  const char* structures_dir, const char* config_json,
                  const char* out_csv) {
  return wrap([&] {
    require_arg(model, "model");
    require_arg(dataset, "dataset");
    require_arg(structures_dir, "structures_dir");
    require_arg(out_csv, "out_csv");
    const json cfg = parse_config(config_json);
    check_keys(cfg, {"score_span", "score_metric", "wildtype_variant_id"},
               "score");
    const model::ScoreSpan span =
        model::score_span_from_string(get_str(cfg, "score_span", "full"));
    const std::string metric = get_str(cfg, "score_metric", "mean_ll");
    if (metric != "mean_ll" && metric != "sum_ll")
      throw ConfigError("score_metric must be mean_ll or sum_ll");
    const std::string wt_id = get_str(cfg, "wildtype_variant_id", "wt");

    const data::StructureStore store =
        data::StructureStore::from_dir(structures_dir);
    model::StructureCache cache;

    std::ostringstream out;
    out << "assay_id,variant_id,model_score,binding_score,score_type,"
           "pkd_wildtype\n";
    for (const data::AssayGroup& g : dataset->impl.assays) {
      std::string pkd_wt;
      for (size_t i : g.rows) {
        const data::VariantRecord& r = dataset->impl.records[i];
        if (r.variant_id == wt_id &&
            r.score_type == data::ScoreType::kNegLogKd)
          pkd_wt = io::format_double(r.binding_score);
      }
      for (size_t i : g.rows) {
        const data::VariantRecord& r = dataset->impl.records[i];
        ad::Tape tape(/*recording=*/false);
        const model::LogLik ll = model->impl.sequence_loglik(
            tape, store.get(r.structure_id), r.full_sequence(), span, &cache);
        const double score = metric == "mean_ll" ? ll.mean() : ll.sum();
        out << io::join_csv({r.assay_id, r.variant_id,
                             io::format_double(score),
                             io::format_double(r.binding_score),
                             data::score_type_to_string(r.score_type), pkd_wt})
            << "\n";
      }
    }
    io::write_file(out_csv, out.str());
  });
}

int prefopt_eval(const char* scores_csv, const char* config_json,
                 const char* out_report_csv, const char* out_report_json) {
  return wrap([&] {
    require_arg(scores_csv, "scores_csv");
    const json cfg = parse_config(config_json);
    check_keys(cfg, {"k", "threshold_fold"}, "eval");
    const int64_t k = get_int(cfg, "k", 10);
    const double threshold = get_num(cfg, "threshold_fold", 10.0);

    const io::CsvTable table = io::read_csv(
        scores_csv, {"assay_id", "variant_id", "model_score", "binding_score",
                     "score_type", "pkd_wildtype"});
    std::vector<evalkit::AssayRows> assays;
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < table.rows.size(); ++i) {
      const auto& f = table.rows[i];
      const std::string where = std::string(scores_csv) + ":" +
                                std::to_string(i + 2);
      auto it = index.find(f[0]);
      if (it == index.end()) {
        index.emplace(f[0], assays.size());
        assays.push_back({f[0], {}, false});
        it = index.find(f[0]);
      }
      evalkit::AssayRows& assay = assays[it->second];
      evalkit::RankedRow row;
      row.variant_id = f[1];
      row.model_score = io::parse_double(f[2], where + ": model_score");
      row.binding_score = io::parse_double(f[3], where + ": binding_score");
      if (data::score_type_from_string(f[4]) ==
          data::ScoreType::kLogEnrichment)
        assay.enrichment_scores = true;
      if (!f[5].empty())
        row.pkd_wildtype = io::parse_double(f[5], where + ": pkd_wildtype");
      assay.rows.push_back(std::move(row));
    }
    const evalkit::AssayReport report =
        evalkit::per_assay_report(assays, k, threshold);
    if (out_report_csv != nullptr)
      io::write_file(out_report_csv, evalkit::report_to_csv(report));
    if (out_report_json != nullptr)
      io::write_file(out_report_json, evalkit::report_to_json(report) + "\n");
  });
}

/* --- generate / screen -------------------------------------------------------- */

int prefopt_generate(const prefopt_model* model,
                     const char* structure_json_path, const char* config_json,
                     const char* out_csv) {
  return wrap([&] {
    require_arg(model, "model");
    require_arg(structure_json_path, "structure_json_path");
    require_arg(out_csv, "out_csv");
    const json cfg = parse_config(config_json);
    check_keys(cfg,
               {"seed", "count", "max_subs", "temperature", "region",
                "positions"},
               "generate");
    const geom::BackboneStructure s = geom::load_structure(structure_json_path);
    const std::string wildtype = s.sequence();

    std::vector<int64_t> mask;
    if (cfg.contains("positions")) {
      if (cfg.contains("region"))
        throw ConfigError("generate: give either positions or region");
      mask = cfg.at("positions").get<std::vector<int64_t>>();
    } else if (cfg.contains("region")) {
      const json& region = cfg.at("region");
      check_keys(region, {"chain_id", "begin_index", "end_index"},
                 "generate.region");
      const std::string chain = region.at("chain_id").get<std::string>();
      const int64_t begin = region.at("begin_index").get<int64_t>();
      const int64_t end = region.at("end_index").get<int64_t>();
      for (size_t i = 0; i < s.residues.size(); ++i)
        if (s.residues[i].chain_id == chain && s.residues[i].index >= begin &&
            s.residues[i].index <= end)
          mask.push_back(static_cast<int64_t>(i));
      if (mask.empty())
        throw ConfigError("generate: region selects no residues");
    } else {
      throw ConfigError("generate: positions or region required");
    }

    model::GenerateConfig gc;
    gc.seed = get_seed(cfg, "seed", 0);
    gc.count = get_int(cfg, "count", 1);
    gc.max_subs = get_int(cfg, "max_subs", 5);
    gc.temperature = get_num(cfg, "temperature", 1.0);

    const model::GenerateResult result =
        model::generate_variants(model->impl, s, wildtype, mask, gc);

    std::ostringstream out;
    out << "variant_id,sequence,num_subs,positions\n";
    for (size_t i = 0; i < result.variants.size(); ++i) {
      const model::GeneratedVariant& v = result.variants[i];
      std::string positions;
      for (size_t p = 0; p < v.positions.size(); ++p) {
        if (p) positions.push_back(';');
        positions += std::to_string(v.positions[p]);
      }
      char id[16];
      std::snprintf(id, sizeof(id), "g%06zu", i);
      out << io::join_csv({id, v.sequence,
                           std::to_string(v.positions.size()), positions})
          << "\n";
    }
    io::write_file(out_csv, out.str());
    if (result.exhausted)
      io::write_file(std::string(out_csv) + ".flags",
                     "exhausted: fewer distinct variants reachable than "
                     "requested\n");
  });
}

int prefopt_screen(const char* variants_csv, const char* structure_json_path,
                   const char* config_json, const char* out_panel_json,
                   const char* out_table_csv) {
  return wrap([&] {
    require_arg(variants_csv, "variants_csv");
    require_arg(structure_json_path, "structure_json_path");
    require_arg(out_panel_json, "out_panel_json");
    const json cfg = parse_config(config_json);
    check_keys(cfg, {"seed", "quantile", "wildtype", "external"}, "screen");
    const geom::BackboneStructure s = geom::load_structure(structure_json_path);
    const std::string wildtype = get_str(cfg, "wildtype", s.sequence());

    const io::CsvTable table = io::read_csv(
        variants_csv, {"variant_id", "sequence", "num_subs", "positions"});
    std::vector<screen::Candidate> candidates;
    for (const auto& f : table.rows) candidates.push_back({f[0], f[1]});

    screen::PipelineConfig pc;
    pc.seed = get_seed(cfg, "seed", 0);
    pc.quantile = get_num(cfg, "quantile", 0.2);

    screen::ScorerRegistry registry =
        screen::surrogate_scorers(pc.seed, wildtype);
    if (cfg.contains("external")) {
      for (auto it = cfg.at("external").begin(); it != cfg.at("external").end();
           ++it)
        registry[it.key()] =
            screen::csv_scorer(it.key(), it.value().get<std::string>());
    }

    const std::vector<screen::MetricSpec> specs =
        screen::default_metric_specs();
    const screen::PipelineResult result =
        screen::run_pipeline(candidates, s, registry, specs, pc);

    uint64_t fingerprint = 1469598103934665603ull;
    for (unsigned char c : cfg.dump()) {
      fingerprint ^= c;
      fingerprint *= 1099511628211ull;
    }
    io::write_file(out_panel_json,
                   screen::panel_to_json(result, specs, fingerprint) + "\n");
    if (out_table_csv != nullptr)
      io::write_file(out_table_csv, screen::score_table_to_csv(result, specs));
  });
}

/* --- paratope ------------------------------------------------------------------ */

int prefopt_paratope(const prefopt_model* model, const char* labels_csv,
                     const char* structures_dir, const char* config_json,
                     const char* out_dir) {
  return wrap([&] {
    require_arg(model, "model");
    require_arg(labels_csv, "labels_csv");
    require_arg(structures_dir, "structures_dir");
    require_arg(out_dir, "out_dir");
    const json cfg = parse_config(config_json);
    check_keys(cfg, {"hidden", "epochs", "lr", "seed", "test_fraction"},
               "paratope");

    const data::StructureStore store =
        data::StructureStore::from_dir(structures_dir);
    std::vector<paratope::LabeledAntibody> labeled =
        paratope::load_labels(labels_csv, store);
    if (labeled.size() < 2)
      throw DomainError("paratope: need at least 2 labeled antibodies");

    const uint64_t seed = get_seed(cfg, "seed", 0);
    const double test_fraction = get_num(cfg, "test_fraction", 0.3);
    if (!(test_fraction > 0.0) || test_fraction >= 1.0)
      throw ConfigError("paratope: test_fraction must be in (0,1)");
    Rng rng(seed);
    rng.shuffle(labeled);
    const size_t n_test = std::max<size_t>(
        1, static_cast<size_t>(std::floor(test_fraction *
                                          static_cast<double>(labeled.size()))));
    std::vector<paratope::LabeledAntibody> test_set(labeled.begin(),
                                                    labeled.begin() + n_test);
    std::vector<paratope::LabeledAntibody> train_set(labeled.begin() + n_test,
                                                     labeled.end());

    paratope::ParatopeHead head = paratope::ParatopeHead::create(
        model->impl.config().d, get_int(cfg, "hidden", 64),
        Rng(seed).fork("head").seed());
    paratope::HeadTrainConfig hc;
    hc.epochs = get_int(cfg, "epochs", hc.epochs);
    hc.optimizer.lr = get_num(cfg, "lr", hc.optimizer.lr);
    hc.seed = seed;

    model::StructureCache cache;
    const paratope::HeadTrainResult train_result =
        paratope::train_head(model->impl, head, train_set, hc, &cache);
    const paratope::HeadEvaluation eval =
        paratope::evaluate_head(model->impl, head, test_set, &cache);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    int64_t n_train_residues = 0;
    for (const auto& ab : train_set)
      for (int l : ab.labels) n_train_residues += l >= 0;
    io::write_file((fs::path(out_dir) / "metrics.json").string(),
                   json{{"roc_auc", eval.roc_auc},
                        {"average_precision", eval.average_precision},
                        {"n_train_residues", n_train_residues},
                        {"n_test_residues", eval.n_residues},
                        {"final_train_bce", train_result.loss_curve.back()}}
                           .dump(2) +
                       "\n");
    io::write_file((fs::path(out_dir) / "roc.csv").string(),
                   evalkit::roc_curve_to_csv(eval.roc));
    io::write_file((fs::path(out_dir) / "pr.csv").string(),
                   evalkit::pr_curve_to_csv(eval.pr));
    std::ostringstream curve;
    curve << "epoch,bce\n";
    for (size_t e = 0; e < train_result.loss_curve.size(); ++e)
      curve << e << "," << io::format_double(train_result.loss_curve[e]) << "\n";
    io::write_file((fs::path(out_dir) / "loss_curve.csv").string(),
                   curve.str());
  });
}

}  // extern "C"
