/*
 * prefopt - structure-conditioned sequence scoring with preference-optimized
 * decoding, plus evaluation and two-stage screening utilities.
 *
 * C interface to the shared library. All functions return PREFOPT_OK (0) on
 * success or a nonzero status; prefopt_last_error() / _last_error_code()
 * describe the most recent failure on the calling thread. Configuration is
 * passed as JSON text; unknown keys are rejected. Opaque handles must be
 * released with their matching _free function.
 */
#ifndef PREFOPT_H
#define PREFOPT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  PREFOPT_OK = 0,
  PREFOPT_ERR_CONFIG = 1,
  PREFOPT_ERR_DATA = 2,
  PREFOPT_ERR_DIMENSION = 3,
  PREFOPT_ERR_DOMAIN = 4,
  PREFOPT_ERR_IO = 5,
  PREFOPT_ERR_NUMERIC = 6,
  PREFOPT_ERR_TRAIN = 7,
  PREFOPT_ERR_USAGE = 8,
  PREFOPT_ERR_INTERNAL = 9
};

const char* prefopt_version(void);

/* Message and short stable code ("CFG003", "DATA001", ...) of the last
 * failure on this thread; empty strings when the last call succeeded. */
const char* prefopt_last_error(void);
const char* prefopt_last_error_code(void);

typedef struct prefopt_model prefopt_model;
typedef struct prefopt_dataset prefopt_dataset;

/* --- data ---------------------------------------------------------------- */

/* Generates a synthetic benchmark into out_dir: assays.csv, structures/
 * (one JSON per assay) and oracle.json. Config keys: seed, n_assays,
 * variants_per_assay, sequence_length, antigen_length, max_mutations,
 * noise_sd. */
int prefopt_synth(const char* config_json, const char* out_dir);

int prefopt_dataset_load(const char* assays_csv, prefopt_dataset** out);
void prefopt_dataset_free(prefopt_dataset* dataset);
int prefopt_dataset_num_records(const prefopt_dataset* dataset, uint64_t* out);
int prefopt_dataset_num_assays(const prefopt_dataset* dataset, uint64_t* out);

/* Writes a split manifest JSON. Config keys: mode ("supervised"|"zero_shot"),
 * seed, ratios ([train,test,val], supervised), holdout_assays (zero_shot). */
int prefopt_split(const prefopt_dataset* dataset, const char* config_json,
                  const char* out_manifest_path);

/* --- model --------------------------------------------------------------- */

/* Config keys: d, heads, k_neighbors (all optional, defaults 64/4/8). */
int prefopt_model_create(const char* config_json, uint64_t seed,
                         prefopt_model** out);
int prefopt_model_load(const char* checkpoint_path, prefopt_model** out);
int prefopt_model_save(const prefopt_model* model, const char* checkpoint_path);
void prefopt_model_free(prefopt_model* model);
int prefopt_model_dims(const prefopt_model* model, int64_t* d, int64_t* heads,
                       int64_t* k_neighbors, int64_t* vocab);

/* freeze: "encoder" (default partition) or "none". */
int prefopt_trainable_fraction(const prefopt_model* model, const char* freeze,
                               double* out);

/* Log-likelihood of a sequence under the model conditioned on a structure
 * file. score_span: "full" or "antibody_only". */
int prefopt_loglik(const prefopt_model* model, const char* structure_json_path,
                   const char* sequence, const char* score_span,
                   double* sum_ll, double* mean_ll);

/* --- operations ----------------------------------------------------------- */

/* Trains in place. Writes metrics.csv, split_manifest.json and epoch/best/
 * final checkpoints into out_dir. Config keys: objective (nll|dpo|simpo),
 * epochs, batch_size, beta, gamma, delta_min, pair_gap_max, max_pairs,
 * max_val_pairs, seed, lr, adam_beta1, adam_beta2, adam_eps, weight_decay,
 * clip_norm, score_span, eval_every, freeze ("encoder"|"none"), resume_from,
 * split {...}. */
int prefopt_train(prefopt_model* model, const prefopt_dataset* dataset,
                  const char* structures_dir, const char* config_json,
                  const char* out_dir);

/* Scores every record; writes CSV with header
 * assay_id,variant_id,model_score,binding_score,score_type,pkd_wildtype.
 * Config keys: score_span, score_metric (mean_ll|sum_ll),
 * wildtype_variant_id. */
int prefopt_score(const prefopt_model* model, const prefopt_dataset* dataset,
                  const char* structures_dir, const char* config_json,
                  const char* out_csv);

/* Ranking metrics from a scores CSV (format as prefopt_score). Config keys:
 * k, threshold_fold. Emits the per-assay report as CSV and JSON. */
int prefopt_eval(const char* scores_csv, const char* config_json,
                 const char* out_report_csv, const char* out_report_json);

/* Samples constrained variants of the structure's own sequence. Config keys:
 * seed, count, max_subs, temperature, region {chain_id, begin_index,
 * end_index} or positions [..]. Writes variant_id,sequence,num_subs,positions
 * rows. */
int prefopt_generate(const prefopt_model* model,
                     const char* structure_json_path, const char* config_json,
                     const char* out_csv);

/* Two-stage screen of a variants CSV (format as prefopt_generate output)
 * against a structure. Config keys: seed, quantile, wildtype (defaults to
 * the structure's own sequence), external {metric: scores_csv_path, ...}.
 * Writes the panel JSON and the full score table CSV. */
int prefopt_screen(const char* variants_csv, const char* structure_json_path,
                   const char* config_json, const char* out_panel_json,
                   const char* out_table_csv);

/* Trains and evaluates the frozen-base per-residue binding-site head.
 * Config keys: hidden, epochs, lr, seed, test_fraction. Writes metrics.json,
 * roc.csv, pr.csv and loss_curve.csv into out_dir. */
int prefopt_paratope(const prefopt_model* model, const char* labels_csv,
                     const char* structures_dir, const char* config_json,
                     const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* PREFOPT_H */
